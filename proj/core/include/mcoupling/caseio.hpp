#pragma once

#include "mcoupling/coupling.hpp"
#include "mcoupling/grid.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mcoupling::caseio {

inline constexpr int kSchemaVersion = 1;

/// A case on disk: the network plus optional mechanism settings and
/// per-area reporting overrides (cost scale factors).
struct CaseFile {
  int version = kSchemaVersion;
  Network network;
  std::optional<MechanismConfig> mechanism;
  std::map<AreaId, double> reporting;

  /// One scale factor per area in network order, 1 where no override exists.
  std::vector<double> cost_scale() const;

  friend bool operator==(const CaseFile&, const CaseFile&) = default;
};

class CaseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public CaseError {
 public:
  using CaseError::CaseError;
};

class IoError : public CaseError {
 public:
  using CaseError::CaseError;
};

class ValidationError : public CaseError {
 public:
  explicit ValidationError(std::vector<Violation> violations);
  const std::vector<Violation>& violations() const { return violations_; }

 private:
  std::vector<Violation> violations_;
};

/// Parses JSON text. With `check` set, runs validate() and throws
/// ValidationError when it reports anything.
CaseFile parse(const std::string& text, bool check = true);
CaseFile load(const std::filesystem::path& path, bool check = true);

/// Pretty-printed JSON; parse(dump(c)) == c.
std::string dump(const CaseFile& file);
void save(const std::filesystem::path& path, const CaseFile& file);

/// Cost curve F(P) = fuel_price * HR(P) * P / 1000 ($/h) for a heat rate in
/// Btu/kWh and a fuel price in $/MBtu, fitted by least squares. The quadratic
/// coefficient is held at `c2_floor` when fewer than three points are given or
/// the free fit is not strictly convex.
QuadraticCost fit_heat_rate(double fuel_price, std::span<const std::pair<double, double>> points,
                            double c2_floor = 1e-3);

/// Three-area RTS-96 with the modified 116-117 and 203-224 limits and the
/// five tielines of the coupling study.
Network rts_three_area();

/// rts_three_area() with the mechanism settings of the study (mu0 = 50,
/// beta = 0.3, log schedule).
CaseFile rts_case();

/// Random connected multi-area case, reproducible from `seed`, with at least
/// 20% generation margin per area and every area feasible on its own.
Network synth(std::uint64_t seed, int areas, int buses_per_area, int tielines);

}  // namespace mcoupling::caseio
