#pragma once

// Strict plain-text experiment configuration.
//
//   # comment
//   experiment = transform
//   [grid]
//   dim = 1
//   n = 256
//
// Top-level keys precede the first block.  Lists are comma separated.  Every
// key must be consumed by the chosen experiment; anything else is an error.

#include "qkin/averaging.hpp"
#include "qkin/dynamics.hpp"
#include "qkin/error.hpp"
#include "qkin/purity.hpp"
#include "qkin/qhd.hpp"
#include "qkin/states.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace qkin {

struct ConfigEntry {
  std::string value;
  int line = 0;
};

struct ConfigBlock {
  std::string name; ///< empty for the top level
  int line = 0;
  std::map<std::string, ConfigEntry> entries;
};

/// Parsed key/value document, blocks in file order.
struct ConfigDocument {
  std::vector<ConfigBlock> blocks;

  const ConfigBlock* find(std::string_view name) const {
    for (const auto& b : blocks)
      if (b.name == name) return &b;
    return nullptr;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline bool valid_identifier(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  return true;
}

} // namespace detail

inline ConfigDocument parse_config_document(std::string_view text) {
  ConfigDocument doc;
  doc.blocks.push_back({"", 0, {}});
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    const std::string where = "line " + std::to_string(line);
    if (s.front() == '[') {
      if (s.back() != ']') throw config_error(where + ": malformed block header '" + s + "'");
      const std::string name = detail::trim(std::string_view(s).substr(1, s.size() - 2));
      if (!detail::valid_identifier(name)) throw config_error(where + ": invalid block name '" + name + "'");
      if (doc.find(name)) throw config_error(where + ": duplicate block [" + name + "]");
      doc.blocks.push_back({name, line, {}});
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw config_error(where + ": expected 'key = value', got '" + s + "'");
    const std::string key = detail::trim(std::string_view(s).substr(0, eq));
    const std::string value = detail::trim(std::string_view(s).substr(eq + 1));
    if (!detail::valid_identifier(key)) throw config_error(where + ": invalid key '" + key + "'");
    if (value.empty()) throw config_error(where + ": key '" + key + "' has no value");
    auto& block = doc.blocks.back();
    if (!block.entries.emplace(key, ConfigEntry{value, line}).second)
      throw config_error(where + ": duplicate key '" + key + "'" +
                         (block.name.empty() ? std::string() : " in [" + block.name + "]"));
  }
  return doc;
}

/// Typed, consumption-tracking view of one block.
class BlockReader {
public:
  BlockReader(const ConfigBlock* block, std::string name) : block_(block), name_(std::move(name)) {}

  bool present() const { return block_ != nullptr; }
  bool has(const std::string& key) const { return block_ && block_->entries.count(key); }

  std::string text(const std::string& key) {
    const auto* e = entry(key);
    if (!e) throw config_error("missing required key '" + key + "' in " + where());
    return e->value;
  }
  std::string text(const std::string& key, const std::string& fallback) {
    return has(key) ? text(key) : fallback;
  }

  double number(const std::string& key) { return to_number(key, text(key)); }
  double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

  int integer(const std::string& key) {
    const double v = number(key);
    if (v != std::floor(v) || std::abs(v) > 1e9)
      throw config_error("key '" + key + "' in " + where() + " must be an integer");
    return static_cast<int>(v);
  }
  int integer(const std::string& key, int fallback) { return has(key) ? integer(key) : fallback; }

  std::vector<double> list(const std::string& key) {
    const std::string v = text(key);
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= v.size()) {
      const auto comma = v.find(',', start);
      const std::string item = detail::trim(std::string_view(v).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (item.empty()) throw config_error("empty list item in key '" + key + "' in " + where());
      out.push_back(to_number(key, item));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return out;
  }
  std::vector<double> list(const std::string& key, std::size_t expected) {
    auto v = list(key);
    if (v.size() != expected)
      throw config_error("key '" + key + "' in " + where() + " needs " + std::to_string(expected) + " values, got " +
                         std::to_string(v.size()));
    return v;
  }

  std::string choice(const std::string& key, std::initializer_list<const char*> options) {
    const std::string v = text(key);
    std::string all;
    for (const char* o : options) {
      if (v == o) return v;
      all += (all.empty() ? "" : ", ") + std::string(o);
    }
    throw config_error("key '" + key + "' in " + where() + " must be one of {" + all + "}, got '" + v + "'");
  }

  bool flag(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    return choice(key, {"true", "false"}) == "true";
  }

  /// Rejects every key that was not read.
  void finish() const {
    if (!block_) return;
    for (const auto& [key, e] : block_->entries)
      if (!used_.count(key))
        throw config_error("unknown key '" + key + "' in " + where() + " (line " + std::to_string(e.line) + ")");
  }

  std::string where() const { return name_.empty() ? std::string("top level") : "[" + name_ + "]"; }

private:
  const ConfigEntry* entry(const std::string& key) {
    if (!block_) return nullptr;
    const auto it = block_->entries.find(key);
    if (it == block_->entries.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }

  double to_number(const std::string& key, const std::string& s) const {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
      throw config_error("key '" + key + "' in " + where() + " is not a finite number: '" + s + "'");
    return v;
  }

  const ConfigBlock* block_;
  std::string name_;
  std::set<std::string> used_;
};

// ---------------------------------------------------------------------------

enum class ExperimentKind { transform, evolve, sweep_quantum, sweep_semiclassical, purity, qhd, monokinetic, classical };

inline const char* describe(ExperimentKind k) {
  switch (k) {
  case ExperimentKind::transform: return "transform";
  case ExperimentKind::evolve: return "evolve";
  case ExperimentKind::sweep_quantum: return "sweep-quantum";
  case ExperimentKind::sweep_semiclassical: return "sweep-semiclassical";
  case ExperimentKind::purity: return "purity";
  case ExperimentKind::qhd: return "qhd";
  case ExperimentKind::monokinetic: return "monokinetic";
  case ExperimentKind::classical: return "classical";
  }
  return "?";
}

enum class Solver { schrodinger, von_neumann, wigner };

struct GridSpec {
  int dim = 1;
  int n = 0;
  double length = 0.0;
  int n_v = 0; ///< 0 when the experiment needs no velocity grid

  PhaseGrid grid() const {
    PhaseGrid g;
    for (int j = 0; j < dim; ++j) g.x.push_back(GridAxis::centered(n, length));
    return g;
  }
  std::vector<GridAxis> v_axes(double hbar) const {
    return std::vector<GridAxis>(static_cast<std::size_t>(dim), velocity_axis_for(GridAxis::centered(n, length), hbar, n_v));
  }
};

struct OutputSpec {
  std::string directory = "qkin-out";
  bool csv = true;
  bool json = true;
  bool binary = false;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::transform;
  GridSpec grid;
  PhysicalParams params; ///< hbar unused by hbar-sweep experiments
  StateRecipe state;
  Potential potential;
  Solver solver = Solver::schrodinger;
  EvolutionConfig evolution;
  std::vector<double> hbars;
  SweepConfig sweep;
  PurityThresholds purity;
  double qhd_floor = 1e-6;
  MonokineticConfig monokinetic;
  ClassicalConfig classical;
  OutputSpec output;

  /// (block, key, value) for every entry, in file order.
  std::vector<std::array<std::string, 3>> echo;
  /// Tolerance keys left at their defaults.
  std::vector<std::pair<std::string, double>> defaults;
};

namespace detail {

struct Needs {
  bool grid = false, physics = false, hbar = false, state = false, potential = false, evolution = false,
       averaging = false, n_v = false;
  std::set<std::string> optional;
};

inline Needs needs_of(ExperimentKind k) {
  using E = ExperimentKind;
  Needs n;
  switch (k) {
  case E::transform: n.grid = n.physics = n.hbar = n.state = n.n_v = true; break;
  case E::evolve: n.grid = n.physics = n.hbar = n.state = n.potential = n.evolution = true; break;
  case E::sweep_quantum:
  case E::sweep_semiclassical: n.grid = n.physics = n.state = n.potential = n.averaging = true; break;
  case E::purity:
    n.grid = n.physics = n.hbar = n.state = n.n_v = true;
    n.optional = {"purity"};
    break;
  case E::qhd:
    n.grid = n.physics = n.hbar = n.state = n.potential = n.evolution = true;
    n.optional = {"qhd"};
    break;
  case E::monokinetic:
    n.grid = n.physics = n.state = n.averaging = true;
    n.optional = {"monokinetic"};
    break;
  case E::classical: n.averaging = true; n.optional = {"classical"}; break;
  }
  return n;
}

inline std::vector<double> coords_or_zero(BlockReader& r, const std::string& key, int d) {
  return r.has(key) ? r.list(key, static_cast<std::size_t>(d)) : std::vector<double>(static_cast<std::size_t>(d), 0.0);
}

inline BasisRecipe read_basis(BlockReader& r, int d) {
  BasisRecipe b;
  const auto kind = r.choice("basis", {"harmonic", "shifted_gaussians"});
  b.center = r.list("center", static_cast<std::size_t>(d));
  if (kind == "harmonic") {
    b.kind = BasisRecipe::Kind::harmonic;
    b.omega = r.number("omega");
  } else {
    b.kind = BasisRecipe::Kind::shifted_gaussians;
    b.sigma = r.number("sigma");
    b.spacing = r.number("spacing");
  }
  return b;
}

inline StateRecipe read_state(BlockReader& r, int d) {
  StateRecipe s;
  using K = StateRecipe::Kind;
  const auto kind = r.choice("kind", {"gaussian", "coherent", "cat", "wkb", "admissible_mixture",
                                      "harmonic_eigenbasis_mixture"});
  const auto dd = static_cast<std::size_t>(d);
  if (kind == "gaussian") {
    s.kind = K::gaussian;
    s.x0 = r.list("x0", dd);
    s.p0 = r.list("p0", dd);
    s.sigma = r.number("sigma");
  } else if (kind == "coherent") {
    s.kind = K::coherent;
    s.x0 = r.list("x0", dd);
    s.p0 = r.list("p0", dd);
    s.omega = r.number("omega");
  } else if (kind == "cat") {
    s.kind = K::cat;
    s.x0 = r.list("x0", dd);
    s.separation = r.number("separation");
    s.sigma = r.number("sigma");
    s.relative_phase = r.number("relative_phase", 0.0);
  } else if (kind == "wkb") {
    s.kind = K::wkb;
    auto& a = s.amplitude;
    a.kind = r.choice("amplitude", {"gaussian", "oscillating_gaussian"}) == "gaussian"
                 ? AmplitudeProfile::Kind::gaussian
                 : AmplitudeProfile::Kind::oscillating_gaussian;
    a.center = r.list("center", dd);
    a.sigma = r.number("sigma");
    if (a.kind == AmplitudeProfile::Kind::oscillating_gaussian) {
      a.oscillation_amplitude = r.number("oscillation_amplitude");
      a.oscillation_scale = r.number("oscillation_scale");
    }
    auto& p = s.phase;
    const auto phase = r.choice("phase", {"zero", "linear", "sine", "focusing"});
    if (phase == "zero") p.kind = PhaseProfile::Kind::zero;
    if (phase == "linear") {
      p.kind = PhaseProfile::Kind::linear;
      p.momentum = r.list("momentum", dd);
    }
    if (phase == "sine") {
      p.kind = PhaseProfile::Kind::sine;
      p.amplitude = r.number("phase_amplitude");
      p.wavenumber = r.number("wavenumber");
    }
    if (phase == "focusing") {
      p.kind = PhaseProfile::Kind::focusing;
      p.focus_time = r.number("focus_time");
      p.center = coords_or_zero(r, "focus_center", d);
    }
  } else if (kind == "admissible_mixture") {
    s.kind = K::admissible_mixture;
    s.basis = read_basis(r, d);
  } else {
    s.kind = K::harmonic_eigenbasis_mixture;
    s.basis = read_basis(r, d);
    s.weights = r.list("weights");
  }
  return s;
}

inline Potential read_potential(BlockReader& r, int d, double mass) {
  Potential V;
  V.mass = mass;
  const auto dd = static_cast<std::size_t>(d);
  const auto kind = r.choice("kind", {"zero", "harmonic", "cosine", "barrier", "linear"});
  if (kind == "zero") V.kind = Potential::Kind::zero;
  if (kind == "harmonic") {
    V.kind = Potential::Kind::harmonic;
    V.omega = r.number("omega");
    V.center = r.list("center", dd);
  }
  if (kind == "cosine") {
    V.kind = Potential::Kind::cosine;
    V.amplitude = r.number("amplitude");
    V.wavevector = r.list("wavevector", dd);
  }
  if (kind == "barrier") {
    V.kind = Potential::Kind::barrier;
    V.amplitude = r.number("amplitude");
    V.center = r.list("center", dd);
    V.width = r.number("width");
    V.smoothing = r.number("smoothing");
  }
  if (kind == "linear") {
    V.kind = Potential::Kind::linear;
    V.slope = r.list("slope", dd);
  }
  return V;
}

inline TestFunction read_test_function(BlockReader& r, std::vector<std::pair<std::string, double>>& defaults) {
  TestFunction t;
  const auto kind = r.text("test", "gaussian");
  if (!r.has("test")) defaults.emplace_back("averaging.test=gaussian", 1.0);
  if (kind == "gaussian") {
    t.kind = TestFunction::Kind::gaussian;
    t.width = r.number("width", 1.0);
  } else if (kind == "bump") {
    t.kind = TestFunction::Kind::bump;
    t.radius = r.number("radius");
    t.transition = r.number("transition");
  } else {
    throw config_error("key 'test' in [averaging] must be one of {gaussian, bump}, got '" + kind + "'");
  }
  return t;
}

inline double tolerance(BlockReader& r, const std::string& key, double fallback,
                        std::vector<std::pair<std::string, double>>& defaults, const std::string& block) {
  if (r.has(key)) return r.number(key);
  defaults.emplace_back(block + "." + key, fallback);
  return fallback;
}

} // namespace detail

/// Schema and invariant checks; no state is built here.
inline ExperimentConfig parse_config(std::string_view text) {
  const ConfigDocument doc = parse_config_document(text);
  ExperimentConfig cfg;
  for (const auto& b : doc.blocks)
    for (const auto& [k, e] : b.entries) cfg.echo.push_back({b.name, k, e.value});

  BlockReader top(&doc.blocks.front(), "");
  const auto kind = top.choice("experiment", {"transform", "evolve", "sweep-quantum", "sweep-semiclassical", "purity",
                                              "qhd", "monokinetic", "classical"});
  top.finish();
  using E = ExperimentKind;
  const std::map<std::string, E> kinds{{"transform", E::transform},
                                       {"evolve", E::evolve},
                                       {"sweep-quantum", E::sweep_quantum},
                                       {"sweep-semiclassical", E::sweep_semiclassical},
                                       {"purity", E::purity},
                                       {"qhd", E::qhd},
                                       {"monokinetic", E::monokinetic},
                                       {"classical", E::classical}};
  cfg.kind = kinds.at(kind);
  const auto need = detail::needs_of(cfg.kind);

  // Block presence.
  std::set<std::string> allowed{"output"};
  auto require = [&](bool needed, const char* name) {
    if (!needed) return;
    allowed.insert(name);
    if (!doc.find(name)) throw config_error("experiment '" + kind + "' requires block [" + name + "]");
  };
  require(need.grid, "grid");
  require(need.physics, "physics");
  require(need.state, "state");
  require(need.potential, "potential");
  require(need.evolution, "evolution");
  require(need.averaging, "averaging");
  for (const auto& o : need.optional) allowed.insert(o);
  for (std::size_t i = 1; i < doc.blocks.size(); ++i)
    if (!allowed.count(doc.blocks[i].name))
      throw config_error("block [" + doc.blocks[i].name + "] (line " + std::to_string(doc.blocks[i].line) +
                         ") is not used by experiment '" + kind + "'");

  std::vector<BlockReader> readers;
  auto reader = [&](const char* name) -> BlockReader& {
    readers.emplace_back(doc.find(name), name);
    return readers.back();
  };
  readers.reserve(12);

  if (need.grid) {
    auto& r = reader("grid");
    cfg.grid.dim = r.integer("dim");
    if (cfg.grid.dim < 1 || cfg.grid.dim > 2) throw config_error("key 'dim' in [grid] must be 1 or 2");
    cfg.grid.n = r.integer("n");
    cfg.grid.length = r.number("length");
    if (need.n_v || (need.evolution && r.has("n_v"))) cfg.grid.n_v = r.integer("n_v");
    if (!(cfg.grid.length > 0.0)) throw config_error("key 'length' in [grid] must be positive");
    if (cfg.grid.n < 8 || cfg.grid.n % 2) throw config_error("key 'n' in [grid] must be even and >= 8");
    if ((need.n_v || cfg.grid.n_v) && (cfg.grid.n_v < 8 || cfg.grid.n_v % 2))
      throw config_error("key 'n_v' in [grid] must be even and >= 8");
  }
  if (need.physics) {
    auto& r = reader("physics");
    cfg.params.mass = r.number("mass");
    if (!(cfg.params.mass > 0.0)) throw config_error("key 'mass' in [physics] must be positive");
    if (need.hbar) {
      cfg.params.hbar = r.number("hbar");
      if (!(cfg.params.hbar > 0.0 && cfg.params.hbar <= 1.0))
        throw config_error("key 'hbar' in [physics] must lie in (0, 1]");
    }
  }
  if (need.state) cfg.state = detail::read_state(reader("state"), cfg.grid.dim);
  if (need.potential) cfg.potential = detail::read_potential(reader("potential"), cfg.grid.dim, cfg.params.mass);
  if (need.evolution) {
    auto& r = reader("evolution");
    const auto solver = cfg.kind == E::qhd ? r.choice("solver", {"schrodinger"})
                                           : r.choice("solver", {"schrodinger", "von_neumann", "wigner"});
    cfg.solver = solver == "schrodinger" ? Solver::schrodinger : solver == "wigner" ? Solver::wigner : Solver::von_neumann;
    cfg.evolution.dt = r.number("dt");
    cfg.evolution.n_steps = r.integer("n_steps");
    cfg.evolution.record_stride = r.integer("record_stride");
    cfg.evolution.store_states = cfg.kind == E::qhd;
    cfg.evolution.store_fields = cfg.solver == Solver::wigner;
    if (cfg.solver == Solver::wigner && cfg.grid.n_v == 0) throw config_error("solver 'wigner' needs key 'n_v' in [grid]");
    try {
      cfg.evolution.validate();
    } catch (const precondition_error& e) {
      throw config_error(std::string("[evolution]: ") + e.what());
    }
  }
  if (need.averaging) {
    auto& r = reader("averaging");
    if (cfg.kind != E::classical) {
      cfg.hbars = r.list("hbar");
      for (std::size_t i = 1; i < cfg.hbars.size(); ++i)
        if (!(cfg.hbars[i] < cfg.hbars[i - 1]))
          throw config_error("key 'hbar' in [averaging] must be sorted strictly descending");
      for (double h : cfg.hbars)
        if (!(h > 0.0 && h <= 1.0)) throw config_error("key 'hbar' in [averaging]: values must lie in (0, 1]");
      if (cfg.hbars.size() < 5) throw config_error("key 'hbar' in [averaging] needs at least 5 values");
    }
    if (cfg.kind == E::sweep_quantum || cfg.kind == E::sweep_semiclassical) {
      if (cfg.hbars.front() / cfg.hbars.back() < 16.0 * (1.0 - 1e-12))
        throw config_error("key 'hbar' in [averaging] must span at least a factor 16");
      auto& s = cfg.sweep;
      s.s_list = r.has("s") ? r.list("s") : std::vector<double>{cfg.kind == E::sweep_quantum ? 0.5 : 0.25};
      if (!r.has("s")) cfg.defaults.emplace_back("averaging.s", s.s_list.front());
      s.test = detail::read_test_function(r, cfg.defaults);
      s.window = r.number("window");
      s.n_times = r.integer("n_times");
      s.dt_max = r.number("dt_max");
      s.taper = r.choice("taper", {"hann", "none"}) == "hann" ? Taper::hann : Taper::none;
      try {
        s.validate();
      } catch (const precondition_error& e) {
        throw config_error(std::string("[averaging]: ") + e.what());
      }
    }
    if (cfg.kind == E::classical) {
      auto& c = cfg.classical;
      c.test = detail::read_test_function(r, cfg.defaults);
      c.s = r.number("s");
      if (!(c.s >= 0.0)) throw config_error("key 's' in [averaging] must be nonnegative");
    }
  }

  if (cfg.kind == E::purity) {
    auto& r = reader("purity");
    cfg.purity.pure = detail::tolerance(r, "pure_threshold", cfg.purity.pure, cfg.defaults, "purity");
    cfg.purity.mixed = detail::tolerance(r, "mixed_threshold", cfg.purity.mixed, cfg.defaults, "purity");
    cfg.purity.floor_rel = detail::tolerance(r, "floor", cfg.purity.floor_rel, cfg.defaults, "purity");
    if (!(cfg.purity.pure > 0.0 && cfg.purity.pure <= cfg.purity.mixed && cfg.purity.floor_rel > 0.0))
      throw config_error("[purity]: need 0 < pure_threshold <= mixed_threshold and floor > 0");
  }
  if (cfg.kind == E::qhd) {
    auto& r = reader("qhd");
    cfg.qhd_floor = detail::tolerance(r, "floor", 1e-6, cfg.defaults, "qhd");
    if (!(cfg.qhd_floor > 0.0)) throw config_error("key 'floor' in [qhd] must be positive");
  }
  if (cfg.kind == E::monokinetic) {
    auto& r = reader("monokinetic");
    cfg.monokinetic.test_width = detail::tolerance(r, "test_width", 1.0, cfg.defaults, "monokinetic");
    cfg.monokinetic.floor_rel = detail::tolerance(r, "floor", 1e-6, cfg.defaults, "monokinetic");
    if (!(cfg.monokinetic.test_width > 0.0 && cfg.monokinetic.floor_rel > 0.0))
      throw config_error("[monokinetic]: test_width and floor must be positive");
  }
  if (cfg.kind == E::classical) {
    auto& r = reader("classical");
    auto& c = cfg.classical;
    if (!r.present()) throw config_error("experiment 'classical' requires block [classical]");
    c.profile = r.choice("profile", {"smooth_gaussian", "smoothed_jump"}) == "smooth_gaussian"
                    ? ClassicalConfig::Profile::smooth_gaussian
                    : ClassicalConfig::Profile::smoothed_jump;
    c.map = r.choice("velocity_map", {"identity", "relativistic"}) == "identity" ? VelocityMap::identity
                                                                                 : VelocityMap::relativistic;
    c.length = r.number("length");
    c.v_length = r.number("v_length");
    c.n_v = r.integer("n_v");
    c.n_x = r.integer("n_x");
    c.n_t = r.integer("n_t");
    c.window = r.number("window");
    c.levels = r.integer("levels");
    if (c.profile == ClassicalConfig::Profile::smoothed_jump) c.plateau = r.number("plateau");
    c.taper = r.choice("taper", {"hann", "none"}) == "hann" ? Taper::hann : Taper::none;
    if (!(c.length > 0.0 && c.v_length > 0.0 && c.window > 0.0))
      throw config_error("[classical]: length, v_length and window must be positive");
    try {
      c.validate();
    } catch (const precondition_error& e) {
      throw config_error(std::string("[classical]: ") + e.what());
    }
  }

  {
    auto& r = reader("output");
    cfg.output.directory = r.text("directory", cfg.output.directory);
    if (r.has("formats")) {
      const std::string f = r.text("formats");
      cfg.output.csv = cfg.output.json = cfg.output.binary = false;
      std::istringstream in(f);
      std::string item;
      while (std::getline(in, item, ',')) {
        item = detail::trim(item);
        if (item == "csv") cfg.output.csv = true;
        else if (item == "json") cfg.output.json = true;
        else if (item == "binary") cfg.output.binary = true;
        else throw config_error("key 'formats' in [output]: unknown format '" + item + "'");
      }
    }
  }

  for (const auto& r : readers) r.finish();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

} // namespace qkin
