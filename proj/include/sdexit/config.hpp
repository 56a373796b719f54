#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdexit/grid.hpp"
#include "sdexit/sde.hpp"

namespace sdexit {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Initial conditions: either an explicit list or a lattice of points inside
/// the eddy (evenly strided to exactly `members` starts, optionally shrunk
/// toward the cell's stagnation point).
struct InitialSpec {
  std::vector<std::vector<double>> list;
  bool eddy_lattice = false;
  int members = 0;
  int nx = 0, ny = 0;
  double shrink = 1.0;
};

struct ModelConfig {
  std::string name;       // jet-additive | jet-multiplicative | linear3d | lorenz
  double noise = 0.0;     // sigma for jets, epsilon for the 3-d systems
  double jet_amplitude = 0.01;
  double jet_beta = 1.0 / 3.0;

  int state_dim() const { return name.rfind("jet", 0) == 0 ? 2 : 3; }
  JetParams jet() const { return JetParams{jet_amplitude, jet_beta}; }
};

struct SimulateConfig {
  double dt = 0.01;
  int steps = 20000;
  std::uint64_t seed = 1;
  InitialSpec initials;
};

struct BasisConfig {
  int degree = 5;
  std::vector<std::string> noise;  // "additive" | "multiplicative" per channel
};

struct LearnBlockConfig {
  double threshold = 0.0;
  int max_sweeps = 10;
  double crosstalk_tol = 1e-2;
};

struct DomainConfig {
  std::string kind;  // eddy2d | cuboid3d
  int resolution = 256;
  std::array<double, 2> reference{-0.2, 0.8};
  std::vector<std::array<double, 2>> bounds;  // cuboid, one [lo,hi] per axis
  std::array<int, 3> resolution3{64, 64, 64};
};

struct SolveBlockConfig {
  std::vector<std::string> problems{"mrt", "escape"};
  std::vector<std::string> gammas;
  double tol = 1e-10;
  int max_iter = 4000;
  double ellipticity_threshold = 1e-3;
};

struct OracleBlockConfig {
  std::size_t paths = 10000;
  double dt = 1e-4;
  double horizon = 10.0;
  std::size_t probe_points = 10;
  std::uint64_t seed = 2025;
  bool check_dt = false;
};

struct RunConfig {
  ModelConfig model;
  SimulateConfig simulate;
  BasisConfig basis;
  LearnBlockConfig learn;
  DomainConfig domain;
  SolveBlockConfig solve;
  OracleBlockConfig oracle;
  std::string output = "out";

  void validate() const;
};

namespace detail {

using nlohmann::json;

inline json to_json(const RunConfig& c) {
  json j;
  j["model"] = {{"name", c.model.name},
                {"noise", c.model.noise},
                {"jet_amplitude", c.model.jet_amplitude},
                {"jet_beta", c.model.jet_beta}};
  json init;
  if (c.simulate.initials.eddy_lattice) {
    init = {{"eddy_lattice",
             {{"members", c.simulate.initials.members},
              {"nx", c.simulate.initials.nx},
              {"ny", c.simulate.initials.ny},
              {"shrink", c.simulate.initials.shrink}}}};
  } else {
    init = {{"list", c.simulate.initials.list}};
  }
  j["simulate"] = {{"dt", c.simulate.dt},
                   {"steps", c.simulate.steps},
                   {"seed", c.simulate.seed},
                   {"initials", init}};
  j["basis"] = {{"state_dim", c.model.state_dim()}, {"degree", c.basis.degree}, {"noise", c.basis.noise}};
  j["learn"] = {{"threshold", c.learn.threshold},
                {"max_sweeps", c.learn.max_sweeps},
                {"crosstalk_tol", c.learn.crosstalk_tol}};
  json dom;
  dom["kind"] = c.domain.kind;
  if (c.domain.kind == "eddy2d") {
    dom["resolution"] = c.domain.resolution;
    dom["reference"] = c.domain.reference;
  } else {
    dom["bounds"] = c.domain.bounds;
    dom["resolution"] = c.domain.resolution3;
  }
  j["domain"] = dom;
  j["solve"] = {{"problems", c.solve.problems},
                {"gammas", c.solve.gammas},
                {"tol", c.solve.tol},
                {"max_iter", c.solve.max_iter},
                {"ellipticity_threshold", c.solve.ellipticity_threshold}};
  j["oracle"] = {{"paths", c.oracle.paths},
                 {"dt", c.oracle.dt},
                 {"horizon", c.oracle.horizon},
                 {"probe_points", c.oracle.probe_points},
                 {"seed", c.oracle.seed},
                 {"check_dt", c.oracle.check_dt}};
  j["output"] = c.output;
  return j;
}

inline RunConfig from_json(const json& j) {
  RunConfig c;
  try {
    const auto& jm = j.at("model");
    c.model.name = jm.at("name").get<std::string>();
    c.model.noise = jm.at("noise").get<double>();
    c.model.jet_amplitude = jm.value("jet_amplitude", 0.01);
    c.model.jet_beta = jm.value("jet_beta", 1.0 / 3.0);

    const auto& js = j.at("simulate");
    c.simulate.dt = js.at("dt").get<double>();
    c.simulate.steps = js.at("steps").get<int>();
    c.simulate.seed = js.at("seed").get<std::uint64_t>();
    const auto& ji = js.at("initials");
    if (ji.contains("list")) {
      c.simulate.initials.list = ji.at("list").get<std::vector<std::vector<double>>>();
    } else if (ji.contains("eddy_lattice")) {
      const auto& jl = ji.at("eddy_lattice");
      c.simulate.initials.eddy_lattice = true;
      c.simulate.initials.members = jl.at("members").get<int>();
      c.simulate.initials.nx = jl.at("nx").get<int>();
      c.simulate.initials.ny = jl.at("ny").get<int>();
      c.simulate.initials.shrink = jl.value("shrink", 1.0);
    } else {
      throw ConfigError("simulate.initials needs 'list' or 'eddy_lattice'");
    }

    const auto& jb = j.at("basis");
    c.basis.degree = jb.at("degree").get<int>();
    c.basis.noise = jb.at("noise").get<std::vector<std::string>>();

    if (j.contains("learn")) {
      const auto& jl = j.at("learn");
      c.learn.threshold = jl.value("threshold", 0.0);
      c.learn.max_sweeps = jl.value("max_sweeps", 10);
      c.learn.crosstalk_tol = jl.value("crosstalk_tol", 1e-2);
    }

    const auto& jd = j.at("domain");
    c.domain.kind = jd.at("kind").get<std::string>();
    if (c.domain.kind == "eddy2d") {
      c.domain.resolution = jd.at("resolution").get<int>();
      c.domain.reference = jd.at("reference").get<std::array<double, 2>>();
    } else if (c.domain.kind == "cuboid3d") {
      c.domain.bounds = jd.at("bounds").get<std::vector<std::array<double, 2>>>();
      c.domain.resolution3 = jd.at("resolution").get<std::array<int, 3>>();
    } else {
      throw ConfigError("domain.kind must be eddy2d or cuboid3d");
    }

    const auto& jv = j.at("solve");
    c.solve.problems = jv.at("problems").get<std::vector<std::string>>();
    c.solve.gammas = jv.at("gammas").get<std::vector<std::string>>();
    c.solve.tol = jv.value("tol", 1e-10);
    c.solve.max_iter = jv.value("max_iter", 4000);
    c.solve.ellipticity_threshold = jv.value("ellipticity_threshold", 1e-3);

    if (j.contains("oracle")) {
      const auto& jo = j.at("oracle");
      c.oracle.paths = jo.value("paths", std::size_t{10000});
      c.oracle.dt = jo.value("dt", 1e-4);
      c.oracle.horizon = jo.value("horizon", 10.0);
      c.oracle.probe_points = jo.value("probe_points", std::size_t{10});
      c.oracle.seed = jo.value("seed", std::uint64_t{2025});
      c.oracle.check_dt = jo.value("check_dt", false);
    }
    c.output = j.value("output", std::string("out"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace detail

inline void RunConfig::validate() const {
  if (model.name != "jet-additive" && model.name != "jet-multiplicative" &&
      model.name != "linear3d" && model.name != "lorenz")
    throw ConfigError("unknown model '" + model.name + "'");
  if (!(simulate.dt > 0.0) || simulate.steps < 1) throw ConfigError("bad simulate block");
  if (!simulate.initials.eddy_lattice && simulate.initials.list.empty())
    throw ConfigError("simulate.initials is empty");
  if (simulate.initials.eddy_lattice && model.state_dim() != 2)
    throw ConfigError("eddy_lattice initials require a 2-d model");
  for (const auto& p : simulate.initials.list)
    if (static_cast<int>(p.size()) != model.state_dim())
      throw ConfigError("initial condition dimension mismatch");
  if (static_cast<int>(basis.noise.size()) != model.state_dim())
    throw ConfigError("basis.noise must list one entry per channel");
  for (const auto& kind : basis.noise)
    if (kind != "additive" && kind != "multiplicative")
      throw ConfigError("basis.noise entries must be additive|multiplicative");
  const bool eddy = domain.kind == "eddy2d";
  if (eddy != (model.state_dim() == 2)) throw ConfigError("domain kind does not match model dimension");
  if (!eddy && domain.bounds.size() != 3) throw ConfigError("cuboid bounds must list one [lo,hi] per axis");
  std::vector<std::string> names = eddy
      ? std::vector<std::string>{"crest", "trough"}
      : std::vector<std::string>{"xlo", "xhi", "ylo", "yhi", "zlo", "zhi"};
  for (const auto& g : solve.gammas) {
    if (g == "all") continue;
    bool found = false;
    for (const auto& n : names) found = found || n == g;
    if (!found) throw ConfigError("solve.gammas references unknown boundary component '" + g + "'");
  }
  for (const auto& p : solve.problems)
    if (p != "mrt" && p != "escape") throw ConfigError("solve.problems entries must be mrt|escape");
}

inline RunConfig read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return detail::from_json(j);
}

inline void write_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file: " + path.string());
  out << detail::to_json(config).dump(2) << "\n";
}

}  // namespace sdexit
