#include "branchlab/config.hpp"

#include <set>

#include "branchlab/errors.hpp"

namespace branchlab {

namespace {

void require_keys(const json& obj, const std::set<std::string>& allowed,
                  const std::string& where) {
  if (!obj.is_object()) throw SchemaError(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (allowed.count(key) == 0)
      throw SchemaError("unknown field \"" + key + "\" in " + where);
  }
}

const json& require(const json& obj, const std::string& key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError("missing field \"" + key + "\" in " + where);
  return *it;
}

double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) throw SchemaError(where + " must be a number");
  return v.get<double>();
}

int as_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw SchemaError(where + " must be an integer");
  return v.get<int>();
}

Vec as_vec(const json& v, size_t n, const std::string& where) {
  if (!v.is_array() || v.size() != n)
    throw SchemaError(where + " must be an array of length " + std::to_string(n));
  Vec out;
  out.reserve(n);
  for (const auto& x : v) out.push_back(as_number(x, where + " entry"));
  return out;
}

Matrix as_matrix(const json& v, int n, const std::string& where) {
  if (!v.is_array() || static_cast<int>(v.size()) != n)
    throw SchemaError(where + " must be an n x n array");
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) {
    const Vec row = as_vec(v[i], static_cast<size_t>(n), where + " row");
    for (int j = 0; j < n; ++j) m(i, j) = row[j];
  }
  return m;
}

std::vector<int> as_indices(const json& v, int n, const std::string& where) {
  if (!v.is_array()) throw SchemaError(where + " must be an array");
  std::vector<int> out;
  for (const auto& x : v) {
    const int idx = as_int(x, where + " entry");
    if (idx < 0 || idx >= n) throw SchemaError(where + " index out of range");
    out.push_back(idx);
  }
  return out;
}

BranchingModel parse_bmp(const json& doc) {
  require_keys(doc, {"kind", "n", "labels", "motion", "branch_rate", "offspring"}, "model");
  BranchingModel m;
  m.space.n = as_int(require(doc, "n", "model"), "model.n");
  if (m.space.n < 1) throw SchemaError("model.n must be at least 1");
  if (doc.contains("labels")) {
    for (const auto& l : doc["labels"]) m.space.labels.push_back(l.get<std::string>());
  }
  m.motion = as_matrix(require(doc, "motion", "model"), m.space.n, "model.motion");
  m.branch_rate = as_vec(require(doc, "branch_rate", "model"),
                         static_cast<size_t>(m.space.n), "model.branch_rate");
  const json& off = require(doc, "offspring", "model");
  if (!off.is_array() || static_cast<int>(off.size()) != m.space.n)
    throw SchemaError("model.offspring must hold one atom list per type");
  m.offspring.resize(m.space.n);
  for (int x = 0; x < m.space.n; ++x) {
    for (const auto& atom : off[x]) {
      require_keys(atom, {"prob", "children"}, "offspring atom");
      OffspringAtom a;
      a.prob = as_number(require(atom, "prob", "offspring atom"), "atom prob");
      a.children = as_indices(require(atom, "children", "offspring atom"), m.space.n,
                              "atom children");
      m.offspring[x].push_back(std::move(a));
    }
  }
  return m;
}

SuperModel parse_sp(const json& doc) {
  require_keys(doc,
               {"kind", "n", "labels", "motion", "drift", "diffusion", "jumps", "branch_rate",
                "nonlocal_mean", "nonlocal_atoms"},
               "model");
  SuperModel m;
  m.space.n = as_int(require(doc, "n", "model"), "model.n");
  if (m.space.n < 1) throw SchemaError("model.n must be at least 1");
  if (doc.contains("labels")) {
    for (const auto& l : doc["labels"]) m.space.labels.push_back(l.get<std::string>());
  }
  const size_t n = static_cast<size_t>(m.space.n);
  m.motion = as_matrix(require(doc, "motion", "model"), m.space.n, "model.motion");
  m.drift = as_vec(require(doc, "drift", "model"), n, "model.drift");
  m.diffusion = as_vec(require(doc, "diffusion", "model"), n, "model.diffusion");
  m.branch_rate = as_vec(require(doc, "branch_rate", "model"), n, "model.branch_rate");
  m.nonlocal_mean =
      as_matrix(require(doc, "nonlocal_mean", "model"), m.space.n, "model.nonlocal_mean");
  const json& jumps = require(doc, "jumps", "model");
  if (!jumps.is_array() || jumps.size() != n)
    throw SchemaError("model.jumps must hold one atom list per type");
  m.jumps.resize(n);
  for (size_t x = 0; x < n; ++x) {
    for (const auto& atom : jumps[x]) {
      require_keys(atom, {"weight", "size"}, "jump atom");
      m.jumps[x].push_back(JumpAtom{as_number(require(atom, "weight", "jump atom"), "weight"),
                                    as_number(require(atom, "size", "jump atom"), "size")});
    }
  }
  const json& nl = require(doc, "nonlocal_atoms", "model");
  if (!nl.is_array() || nl.size() != n)
    throw SchemaError("model.nonlocal_atoms must hold one atom list per type");
  m.nonlocal_atoms.resize(n);
  for (size_t x = 0; x < n; ++x) {
    for (const auto& atom : nl[x]) {
      require_keys(atom, {"weight", "measure"}, "nonlocal atom");
      MassAtom a;
      a.weight = as_number(require(atom, "weight", "nonlocal atom"), "weight");
      a.measure = as_vec(require(atom, "measure", "nonlocal atom"), n, "measure");
      m.nonlocal_atoms[x].push_back(std::move(a));
    }
  }
  return m;
}

ImmAny parse_immigration(const json& doc, int n) {
  const std::string kind = require(doc, "kind", "immigration").get<std::string>();
  if (kind == "bmp") {
    require_keys(doc, {"kind", "rate", "atoms", "heavy_tail"}, "immigration");
    ImmigrationLaw law;
    law.rate = as_number(require(doc, "rate", "immigration"), "immigration.rate");
    if (doc.contains("heavy_tail")) {
      const json& ht = doc["heavy_tail"];
      require_keys(ht, {"p", "type_index"}, "immigration.heavy_tail");
      const int idx = as_int(require(ht, "type_index", "heavy_tail"), "type_index");
      if (idx < 0 || idx >= n) throw SchemaError("heavy_tail.type_index out of range");
      law.heavy_tail = make_heavy_tail(as_number(require(ht, "p", "heavy_tail"), "p"), idx);
      if (doc.contains("atoms") && !doc["atoms"].empty())
        throw SchemaError("immigration law cannot carry both atoms and a heavy tail");
      return law;
    }
    for (const auto& atom : require(doc, "atoms", "immigration")) {
      require_keys(atom, {"prob", "arrivals"}, "immigration atom");
      ImmigrationAtom a;
      a.prob = as_number(require(atom, "prob", "immigration atom"), "prob");
      a.arrivals = as_indices(require(atom, "arrivals", "immigration atom"), n, "arrivals");
      law.atoms.push_back(std::move(a));
    }
    return law;
  }
  if (kind == "sp") {
    require_keys(doc, {"kind", "drift", "jumps"}, "immigration");
    SpImmigrationLaw law;
    law.drift = as_vec(require(doc, "drift", "immigration"), static_cast<size_t>(n), "drift");
    if (doc.contains("jumps")) {
      for (const auto& atom : doc["jumps"]) {
        require_keys(atom, {"weight", "measure"}, "immigration atom");
        MassAtom a;
        a.weight = as_number(require(atom, "weight", "immigration atom"), "weight");
        a.measure = as_vec(require(atom, "measure", "immigration atom"),
                           static_cast<size_t>(n), "measure");
        law.jumps.push_back(std::move(a));
      }
    }
    return law;
  }
  throw SchemaError("immigration.kind must be \"bmp\" or \"sp\"");
}

const std::set<std::string>& experiment_keys(const std::string& kind) {
  static const std::set<std::string> check = {"kind", "delta_grid", "random_starts", "seed"};
  static const std::set<std::string> solve = {"kind",        "target", "g0",
                                              "f0",          "f",      "theta",
                                              "horizon",     "checkpoints", "tail_tol",
                                              "force_horizon", "t"};
  static const std::set<std::string> simulate = {"kind", "estimator", "init",        "t",
                                                 "n",    "theta",     "f",           "conditional",
                                                 "horizon", "checkpoints", "population_cap"};
  static const std::set<std::string> verify = {"kind",     "theorem",  "mu",    "mu_mass",
                                               "f",        "theta_grid", "schedule", "tolerance",
                                               "with_mc",  "mc_n",     "mc_t"};
  if (kind == "check") return check;
  if (kind == "solve") return solve;
  if (kind == "simulate") return simulate;
  if (kind == "verify") return verify;
  throw SchemaError("experiment.kind must be one of check|solve|simulate|verify");
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  require_keys(doc, {"id", "model", "immigration", "experiment"}, "config");
  ExperimentConfig cfg;
  if (doc.contains("id")) cfg.id = doc["id"].get<std::string>();
  const json& model = require(doc, "model", "config");
  const std::string kind = require(model, "kind", "model").get<std::string>();
  if (kind == "bmp")
    cfg.model = parse_bmp(model);
  else if (kind == "sp")
    cfg.model = parse_sp(model);
  else
    throw SchemaError("model.kind must be \"bmp\" or \"sp\"");
  const int n = space_dim(cfg.model);
  if (doc.contains("immigration")) cfg.immigration = parse_immigration(doc["immigration"], n);

  const json& exp = require(doc, "experiment", "config");
  cfg.kind = require(exp, "kind", "experiment").get<std::string>();
  require_keys(exp, experiment_keys(cfg.kind), "experiment");
  cfg.params = ordered_json::object();
  for (const auto& [key, value] : exp.items())
    if (key != "kind") cfg.params[key] = value;

  // structural validation up front; semantic checks happen in the modules
  const auto diagnostics =
      std::visit([](const auto& mm) { return validate(mm); }, cfg.model);
  if (!admissible(diagnostics)) {
    std::string joined;
    for (const auto& d : diagnostics) {
      if (d.rfind("warning:", 0) == 0) continue;
      if (!joined.empty()) joined += "; ";
      joined += d;
    }
    throw SchemaError("invalid model: " + joined);
  }
  if (cfg.immigration) {
    const auto idiag = std::visit([n](const auto& law) { return validate(law, n); },
                                  *cfg.immigration);
    if (!admissible(idiag)) throw SchemaError("invalid immigration law: " + idiag.front());
  }
  return cfg;
}

ExperimentConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& err) {
    throw SchemaError(std::string("config is not valid JSON: ") + err.what());
  }
  return parse_config(doc);
}

namespace {

ordered_json dump_model(const ModelAny& model) {
  ordered_json out;
  if (std::holds_alternative<BranchingModel>(model)) {
    const auto& m = std::get<BranchingModel>(model);
    out["kind"] = "bmp";
    out["n"] = m.space.n;
    if (!m.space.labels.empty()) out["labels"] = m.space.labels;
    out["motion"] = ordered_json::array();
    for (int i = 0; i < m.space.n; ++i) {
      ordered_json row = ordered_json::array();
      for (int j = 0; j < m.space.n; ++j) row.push_back(m.motion(i, j));
      out["motion"].push_back(row);
    }
    out["branch_rate"] = m.branch_rate;
    out["offspring"] = ordered_json::array();
    for (const auto& atoms : m.offspring) {
      ordered_json list = ordered_json::array();
      for (const auto& a : atoms)
        list.push_back(ordered_json{{"prob", a.prob}, {"children", a.children}});
      out["offspring"].push_back(list);
    }
    return out;
  }
  const auto& m = std::get<SuperModel>(model);
  out["kind"] = "sp";
  out["n"] = m.space.n;
  if (!m.space.labels.empty()) out["labels"] = m.space.labels;
  out["motion"] = ordered_json::array();
  for (int i = 0; i < m.space.n; ++i) {
    ordered_json row = ordered_json::array();
    for (int j = 0; j < m.space.n; ++j) row.push_back(m.motion(i, j));
    out["motion"].push_back(row);
  }
  out["drift"] = m.drift;
  out["diffusion"] = m.diffusion;
  out["jumps"] = ordered_json::array();
  for (const auto& atoms : m.jumps) {
    ordered_json list = ordered_json::array();
    for (const auto& a : atoms)
      list.push_back(ordered_json{{"weight", a.weight}, {"size", a.size}});
    out["jumps"].push_back(list);
  }
  out["branch_rate"] = m.branch_rate;
  out["nonlocal_mean"] = ordered_json::array();
  for (int i = 0; i < m.space.n; ++i) {
    ordered_json row = ordered_json::array();
    for (int j = 0; j < m.space.n; ++j) row.push_back(m.nonlocal_mean(i, j));
    out["nonlocal_mean"].push_back(row);
  }
  out["nonlocal_atoms"] = ordered_json::array();
  for (const auto& atoms : m.nonlocal_atoms) {
    ordered_json list = ordered_json::array();
    for (const auto& a : atoms)
      list.push_back(ordered_json{{"weight", a.weight}, {"measure", a.measure}});
    out["nonlocal_atoms"].push_back(list);
  }
  return out;
}

ordered_json dump_immigration(const ImmAny& imm) {
  ordered_json out;
  if (std::holds_alternative<ImmigrationLaw>(imm)) {
    const auto& law = std::get<ImmigrationLaw>(imm);
    out["kind"] = "bmp";
    out["rate"] = law.rate;
    if (law.heavy_tail) {
      out["heavy_tail"] =
          ordered_json{{"p", law.heavy_tail->p}, {"type_index", law.heavy_tail->type_index}};
    } else {
      out["atoms"] = ordered_json::array();
      for (const auto& a : law.atoms)
        out["atoms"].push_back(ordered_json{{"prob", a.prob}, {"arrivals", a.arrivals}});
    }
    return out;
  }
  const auto& law = std::get<SpImmigrationLaw>(imm);
  out["kind"] = "sp";
  out["drift"] = law.drift;
  out["jumps"] = ordered_json::array();
  for (const auto& a : law.jumps)
    out["jumps"].push_back(ordered_json{{"weight", a.weight}, {"measure", a.measure}});
  return out;
}

}  // namespace

ordered_json serialize(const ExperimentConfig& config) {
  ordered_json out;
  out["id"] = config.id;
  out["model"] = dump_model(config.model);
  if (config.immigration) out["immigration"] = dump_immigration(*config.immigration);
  ordered_json exp;
  exp["kind"] = config.kind;
  for (const auto& [key, value] : config.params.items()) exp[key] = value;
  out["experiment"] = exp;
  return out;
}

}  // namespace branchlab
