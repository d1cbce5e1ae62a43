#pragma once

#include <string>

namespace branchlab {

// Hex digest of the SHA-256 hash of `data`.
std::string sha256_hex(const std::string& data);

}  // namespace branchlab
