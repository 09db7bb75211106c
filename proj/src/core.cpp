#include "optleach/core.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace optleach {

double euclidean_distance(Vec2 a, Vec2 b) noexcept {
  return std::hypot(a.x - b.x, a.y - b.y);
}

const char* to_string(Role role) noexcept {
  switch (role) {
    case Role::Member:
      return "member";
    case Role::ClusterHead:
      return "cluster-head";
    case Role::Sink:
      return "sink";
  }
  return "unknown";
}

void EnergyModel::validate() const {
  if (!(e_elec > 0.0) || !(e_amp > 0.0) || !(path_loss_exp > 0.0) || packet_bits <= 0) {
    throw DomainError("energy model coefficients must be strictly positive");
  }
}

double tx_energy(const EnergyModel& model, double bits, double distance) {
  if (bits < 0.0 || distance < 0.0) {
    throw DomainError("tx_energy: negative bits or distance");
  }
  const double d2 = distance * distance;
  const double path = model.path_loss_exp == 2.0   ? d2
                      : model.path_loss_exp == 4.0 ? d2 * d2
                                                   : std::pow(distance, model.path_loss_exp);
  return bits * (model.e_elec + model.e_amp * path);
}

double rx_energy(const EnergyModel& model, double bits) {
  if (bits < 0.0) {
    throw DomainError("rx_energy: negative bits");
  }
  return bits * model.e_elec;
}

NodeState drain(const NodeState& node, double amount, double death_threshold) {
  if (amount < 0.0) {
    throw DomainError("drain: negative amount");
  }
  if (!node.alive) {
    return node;
  }
  NodeState out = node;
  out.e_res = std::max(0.0, node.e_res - amount);
  // With a zero threshold an exhausted node is dead even though 0 >= 0.
  out.alive = out.e_res > 0.0 && out.e_res >= death_threshold;
  return out;
}

int Network::alive_count() const noexcept {
  return static_cast<int>(std::count_if(nodes.begin(), nodes.end(),
                                        [](const NodeState& n) { return n.alive; }));
}

int Network::dead_count() const noexcept {
  return static_cast<int>(nodes.size()) - alive_count();
}

double Network::total_energy() const noexcept {
  double sum = 0.0;
  for (const auto& n : nodes) {
    sum += n.e_res;
  }
  return sum;
}

bool is_connected(const Network& net, double range) {
  std::vector<int> alive;
  for (const auto& n : net.nodes) {
    if (n.alive) {
      alive.push_back(n.id);
    }
  }
  if (alive.size() <= 1) {
    return true;
  }
  std::vector<char> seen(net.nodes.size(), 0);
  std::queue<int> frontier;
  frontier.push(alive.front());
  seen[alive.front()] = 1;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int v : alive) {
      if (!seen[v] &&
          euclidean_distance(net.nodes[u].position, net.nodes[v].position) <= range) {
        seen[v] = 1;
        ++reached;
        frontier.push(v);
      }
    }
  }
  return reached == alive.size();
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

Rng Rng::split(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream ^ 0xD1B54A32D192ED03ULL)));
}

double Rng::uniform() {
  return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
}

double Rng::uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

double Rng::normal(double mean, double stddev) {
  return mean + stddev * normal_(engine_);
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) {
    throw DomainError("Rng::index: empty range");
  }
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

}  // namespace optleach
