#pragma once

#include <string>

#include <json.hpp>

#include "branchlab/limits.hpp"
#include "branchlab/semigroup.hpp"
#include "branchlab/simulator.hpp"
#include "branchlab/spectral.hpp"

namespace branchlab {

using ordered_json = nlohmann::ordered_json;

ordered_json report_json(const TheoremReport& rep);
std::string report_csv(const TheoremReport& rep);

ordered_json estimate_json(const McEstimate& est);
ordered_json assumptions_json(const AssumptionReport& rep, const EigenTriple& triple);
std::string mixing_csv(const MixingProfile& profile);

// Run manifest: config hash, seed, version, produced artifacts.
ordered_json manifest_json(const std::string& config_sha256, std::uint64_t seed, int threads,
                           const std::string& command,
                           const std::vector<std::string>& outputs);

// %.17g rendering used by every CSV writer.
std::string num17(double v);

}  // namespace branchlab
