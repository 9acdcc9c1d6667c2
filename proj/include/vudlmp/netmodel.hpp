#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace vudlmp {

using Complex = std::complex<double>;
using Phase3 = std::array<double, 3>;

inline constexpr int kNumPhases = 3;
inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

/// Malformed network or config document.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Document parsed, but a declared invariant does not hold. The message names
/// the offending element.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class UnbalanceMode { kNone, kHard, kSoft };

/// What the soft penalty multiplies: the squared factor f (default) or VUF itself.
enum class PenaltyOn { kSquared, kVuf };

struct UnbalanceConfig {
  UnbalanceMode mode = UnbalanceMode::kNone;
  double vuf_limit_pct = 0.0;   // hard mode bound on VUF, percent
  double penalty_weight = 0.0;  // soft mode, EUR/h per squared percent
  PenaltyOn penalty_on = PenaltyOn::kSquared;
  std::vector<std::string> buses;  // subset where the unbalance term applies
};

struct BusSpec {
  std::string id;
  double vmin = 0.9;
  double vmax = 1.1;
};

// All electrical quantities below are per-unit once inside a NetworkSpec.
struct LineSpec {
  std::string from;
  std::string to;
  Eigen::Matrix3cd z = Eigen::Matrix3cd::Zero();
  double s_rating = kUnbounded;  // per-phase apparent power limit
};

struct LoadSpec {
  std::string bus;
  Phase3 p{0.0, 0.0, 0.0};
  Phase3 q{0.0, 0.0, 0.0};
};

struct GenSpec {
  std::string bus;
  std::array<bool, 3> phases{true, true, true};
  Phase3 pmin{0.0, 0.0, 0.0};
  Phase3 pmax{0.0, 0.0, 0.0};
  Phase3 qmin{0.0, 0.0, 0.0};
  Phase3 qmax{0.0, 0.0, 0.0};
  double marginal_cost = 0.0;  // EUR/kWh
  bool is_substation = false;
  bool balanced = false;  // three-phase unit with equal output on every phase
};

/// Immutable three-phase network in per-unit. Build through load_network() or
/// finalize_network(), both of which validate every invariant.
struct NetworkSpec {
  double base_kva = 1.0;      // per-phase base power
  double base_volt_ln = 1.0;  // line-to-neutral base voltage
  std::vector<BusSpec> buses;
  std::vector<LineSpec> lines;
  std::vector<LoadSpec> loads;
  std::vector<GenSpec> gens;
  std::string substation_bus;
  UnbalanceConfig unbalance;

  // Derived on finalize.
  std::unordered_map<std::string, int> bus_lookup;
  int substation_index = -1;

  [[nodiscard]] int bus_index(const std::string& id) const;
  [[nodiscard]] std::size_t num_buses() const { return buses.size(); }
  [[nodiscard]] double base_impedance_ohm() const {
    return base_volt_ln * base_volt_ln / (base_kva * 1000.0);
  }
  /// Marginal cost of the substation source, EUR/kWh.
  [[nodiscard]] double substation_cost() const;
  /// Indices of buses in the unbalance subset, in file order.
  [[nodiscard]] std::vector<int> vuf_bus_indices() const;
};

// Per-unit helpers. Both throw std::invalid_argument on a nonpositive base.
double to_per_unit(double value, double base);
double from_per_unit(double value_pu, double base);

/// Checks the invariants of an in-memory network (already per-unit) and fills
/// the derived lookup tables. Throws ValidationError.
void finalize_network(NetworkSpec& net);

NetworkSpec parse_network(const std::string& json_text);
NetworkSpec load_network(const std::filesystem::path& path);

/// Serializes back to the SI-unit JSON schema accepted by parse_network().
std::string serialize_network(const NetworkSpec& net);

UnbalanceMode parse_mode(const std::string& s);
std::string to_string(UnbalanceMode mode);
PenaltyOn parse_penalty_on(const std::string& s);
std::string to_string(PenaltyOn p);

}  // namespace vudlmp
