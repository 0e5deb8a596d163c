#pragma once

// Emitters: CSV tables, JSON reports, raw field dumps and SHA-256 digests.

#include "qkin/averaging.hpp"
#include "qkin/purity.hpp"
#include "qkin/qhd.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace qkin {

using json = nlohmann::json;

/// Shortest round-trip-safe rendering used by every CSV column.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// In-memory CSV table; bytes depend only on the values written.
class CsvTable {
public:
  explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {
    for (std::size_t i = 0; i < columns_.size(); ++i) out_ << (i ? "," : "") << columns_[i];
    out_ << '\n';
  }

  CsvTable& row(const std::vector<double>& values) {
    if (values.size() != columns_.size()) throw precondition_error("csv_row", "column count mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << format_double(values[i]);
    out_ << '\n';
    ++rows_;
    return *this;
  }

  std::string str() const { return out_.str(); }
  std::size_t rows() const { return rows_; }
  const std::vector<std::string>& columns() const { return columns_; }

private:
  std::vector<std::string> columns_;
  std::ostringstream out_;
  std::size_t rows_ = 0;
};

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw numerical_error("sha256", "digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

/// Plain-text header followed by little-endian float64 samples, slices back to back.
inline std::string field_dump(const std::vector<const RealField*>& stack, const std::vector<double>& times = {}) {
  if (stack.empty()) throw precondition_error("field_dump", "empty stack");
  std::ostringstream h;
  h << "qkin-field 1\nformat float64-le row-major\nrank " << stack.front()->rank() << '\n';
  for (const auto& a : stack.front()->axes())
    h << "axis " << a.label << ' ' << a.grid.n_points << ' ' << format_double(a.grid.offset) << ' '
      << format_double(a.grid.length) << '\n';
  h << "slices " << stack.size() << '\n';
  if (!times.empty()) {
    h << "times";
    for (double t : times) h << ' ' << format_double(t);
    h << '\n';
  }
  h << "end\n";
  std::string out = h.str();
  for (const auto* f : stack) {
    if (!f->same_shape(*stack.front())) throw precondition_error("field_dump", "slices differ in shape");
    const auto* p = reinterpret_cast<const char*>(f->storage().data());
    out.append(p, f->size() * sizeof(double));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON views.

inline json to_json(const SlopeFit& f) { return {{"slope", f.slope}, {"intercept", f.intercept}, {"flat", f.flat}}; }

inline json to_json(const SobolevEstimate& e) {
  return {{"s", e.s}, {"value", e.value}, {"top_octave", e.top_octave}, {"window", e.window}, {"grid", e.grid}};
}

inline json to_json(const SweepReport& r) {
  json legs = json::array();
  for (const auto& l : r.legs) {
    json est = json::array();
    for (const auto& e : l.estimates) est.push_back(to_json(e));
    legs.push_back({{"hbar", l.hbar}, {"rank", l.rank}, {"purity", l.purity}, {"substeps", l.substeps}, {"estimates", est}});
  }
  json fits = json::array();
  for (const auto& f : r.fits) fits.push_back(to_json(f));
  return {{"kind", r.kind},
          {"s_list", r.s_list},
          {"scale_exponent", r.scale_exponent},
          {"norm", r.norm},
          {"scaled_norm", r.scaled_norm},
          {"fit", to_json(r.fit)},
          {"fits", fits},
          {"ratio", r.ratio},
          {"bound_constant", r.bound_constant},
          {"bound_violations", r.bound_violations},
          {"potential_linf", r.potential_linf},
          {"potential_lipschitz", r.potential_lipschitz},
          {"window", r.window},
          {"test_function", r.test_function},
          {"valid", r.valid},
          {"failure", r.failure},
          {"legs", legs}};
}

inline json to_json(const CharResidual& r) {
  return {{"r1", r.r1},
          {"r2", r.r2},
          {"support_fraction", r.support_fraction},
          {"floor", r.floor},
          {"reliable", r.reliable},
          {"max_residual", r.max_residual()}};
}

inline json to_json(const PurityVerdict& v) {
  return {{"verdict", describe(v.verdict)},
          {"max_residual", v.max_residual},
          {"thresholds", {{"pure", v.thresholds.pure}, {"mixed", v.thresholds.mixed}, {"floor", v.thresholds.floor_rel}}},
          {"residual", to_json(v.residual)}};
}

inline json to_json(const QhdResiduals& r) {
  return {{"time", r.time},
          {"continuity", r.continuity},
          {"euler_conservation", r.euler_conservation},
          {"euler_pressure_form", r.euler_pressure_form},
          {"euler_bohm_form", r.euler_bohm_form},
          {"form_equivalence", r.form_equivalence},
          {"grad_identity", r.grad_identity},
          {"mask_fraction", r.mask_fraction},
          {"near_vacuum", r.near_vacuum},
          {"max_residual", r.max_residual()}};
}

inline json to_json(const MonokineticReport& r) {
  json legs = json::array();
  for (const auto& l : r.legs)
    legs.push_back({{"hbar", l.hbar},
                    {"variance", l.variance},
                    {"hypothesis", l.hypothesis},
                    {"grad_energy", l.grad_energy},
                    {"rho2_P", l.rho2_P},
                    {"rho2_TrPi", l.rho2_TrPi}});
  return {{"legs", legs},
          {"variance_fit", to_json(r.variance_fit)},
          {"hypothesis_fit", to_json(r.hypothesis_fit)},
          {"grad_energy_fit", to_json(r.grad_energy_fit)},
          {"rho2_P_fit", to_json(r.rho2_P_fit)},
          {"rho2_TrPi_fit", to_json(r.rho2_TrPi_fit)},
          {"chain_agrees", r.chain_agrees},
          {"test_width", r.test_width}};
}

inline json to_json(const ClassicalRegularity& r) {
  return {{"f", to_json(r.f)},
          {"average", to_json(r.average)},
          {"f_tail", r.f_tail},
          {"average_tail", r.average_tail},
          {"f_ratio", r.f_ratio},
          {"average_ratio", r.average_ratio},
          {"max_shift", r.max_shift},
          {"f_stable", r.f_stable},
          {"average_stable", r.average_stable}};
}

// ---------------------------------------------------------------------------

/// Collects artifacts in memory and writes them in one deterministic pass.
class Emitter {
public:
  struct Artifact {
    std::string name;
    std::string stage;
    std::string bytes;
  };

  void add(std::string name, std::string stage, std::string bytes) {
    for (const auto& a : artifacts_)
      if (a.name == name) throw precondition_error("emitter", "duplicate artifact " + name);
    artifacts_.push_back({std::move(name), std::move(stage), std::move(bytes)});
  }
  void add_json(std::string name, std::string stage, const json& j) { add(std::move(name), std::move(stage), j.dump(2) + "\n"); }

  const std::vector<Artifact>& artifacts() const { return artifacts_; }

  const Artifact* find(std::string_view name) const {
    for (const auto& a : artifacts_)
      if (a.name == name) return &a;
    return nullptr;
  }

  /// Writes every artifact under `dir`; returns name -> {stage, bytes, sha256}.
  json write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    json files = json::array();
    for (const auto& a : artifacts_) {
      const auto path = dir / a.name;
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      if (!out) throw numerical_error("emit", "cannot open " + path.string());
      out.write(a.bytes.data(), static_cast<std::streamsize>(a.bytes.size()));
      if (!out) throw numerical_error("emit", "write failed for " + path.string());
      files.push_back({{"name", a.name}, {"stage", a.stage}, {"bytes", a.bytes.size()}, {"sha256", sha256_hex(a.bytes)}});
    }
    return files;
  }

private:
  std::vector<Artifact> artifacts_;
};

} // namespace qkin
