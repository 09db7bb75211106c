#pragma once

// Network ground truth: node state, geometry, the first-order radio model
// and the seeded random stream shared by every stochastic operation.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace optleach {

// Error hierarchy. Everything thrown by the library derives from Error so
// callers (CLI, bindings) can map categories to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SetupError : public Error {
 public:
  using Error::Error;
};

class AssumptionViolation : public Error {
 public:
  using Error::Error;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

double euclidean_distance(Vec2 a, Vec2 b) noexcept;

enum class Role { Member, ClusterHead, Sink };

const char* to_string(Role role) noexcept;

struct NodeState {
  int id = 0;
  Vec2 position;
  double e_res = 0.0;
  double e_0 = 0.0;
  bool alive = true;
  Role role = Role::Member;
};

struct FieldDims {
  double width = 200.0;
  double height = 200.0;
};

struct EnergyModel {
  double e_elec = 50e-9;       // J/bit
  double e_amp = 100e-12;      // J/bit/m^gamma
  double path_loss_exp = 2.0;  // 2 or 4
  int packet_bits = 4000;

  void validate() const;
};

// Energy to push `bits` over `distance` metres: bits * (e_elec + e_amp * d^gamma).
double tx_energy(const EnergyModel& model, double bits, double distance);
// Energy to receive `bits`: bits * e_elec.
double rx_energy(const EnergyModel& model, double bits);

// Removes `amount` joules, clamping at zero. A node whose energy falls below
// `death_threshold` is marked dead. Draining a dead node returns it unchanged.
NodeState drain(const NodeState& node, double amount, double death_threshold = 0.0);

struct Network {
  std::vector<NodeState> nodes;  // ids equal indices
  NodeState sink;
  FieldDims field;

  int alive_count() const noexcept;
  int dead_count() const noexcept;
  // Sum of residual energy over non-sink nodes.
  double total_energy() const noexcept;
  const NodeState& node(int id) const { return id == sink.id ? sink : nodes.at(id); }
};

// True when every alive node is reachable from every other through links
// no longer than `range`.
bool is_connected(const Network& net, double range);

// Deterministic generator. split() derives an independent child stream from
// the construction seed only, so the child does not depend on how many
// values the parent has already produced.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  Rng split(std::uint64_t stream) const;

  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double normal(double mean = 0.0, double stddev = 1.0);
  std::size_t index(std::size_t n);  // uniform in [0, n)

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace optleach
