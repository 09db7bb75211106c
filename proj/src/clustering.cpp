#include "optleach/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace optleach {

double RssiModel::rssi(double distance) const {
  return p0_dbm - 10.0 * path_loss_n * std::log10(std::max(distance, 1e-9) / d0);
}

double RssiModel::invert(double rssi_dbm) const {
  return d0 * std::pow(10.0, (p0_dbm - rssi_dbm) / (10.0 * path_loss_n));
}

void ChElectionParams::validate() const {
  if (!(p > 0.0 && p <= 1.0)) {
    throw DomainError("election p must lie in (0, 1]");
  }
  if (r < 0) {
    throw DomainError("election round counter must be non-negative");
  }
  if (!(campaign_threshold >= 0.0 && campaign_threshold <= 1.0)) {
    throw DomainError("campaign threshold must lie in [0, 1]");
  }
}

void VoronoiParams::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw DomainError("voronoi alpha must lie in [0, 1]");
  }
  if (!(tol > 0.0) || max_iter < 1) {
    throw DomainError("voronoi tol must be positive and max_iter >= 1");
  }
  if (radius_floor < 0.0 || radius_floor > 1.0) {
    throw DomainError("voronoi radius_floor must lie in [0, 1]");
  }
}

std::vector<int> ClusterLayout::members(int cluster) const {
  std::vector<int> out;
  for (std::size_t id = 0; id < assignment.size(); ++id) {
    if (assignment[id] == cluster) {
      out.push_back(static_cast<int>(id));
    }
  }
  return out;
}

std::vector<double> approximate_distances(const Network& net, const RssiModel& model, Rng& rng) {
  std::vector<double> out(net.nodes.size(), -1.0);
  for (const auto& n : net.nodes) {
    if (!n.alive) {
      continue;
    }
    const double truth = euclidean_distance(n.position, net.sink.position);
    double reading = model.rssi(truth);
    if (model.noise_db > 0.0) {
      reading += rng.normal(0.0, model.noise_db);
    }
    out[n.id] = model.noise_db > 0.0 ? model.invert(reading) : truth;
  }
  return out;
}

double ch_threshold(double p, int r, double e_res, double e_0) {
  if (!(p > 0.0 && p <= 1.0) || !(e_0 > 0.0) || r < 0) {
    throw DomainError("ch_threshold: require 0 < p <= 1, e_0 > 0, r >= 0");
  }
  const int cluster_size = static_cast<int>(std::ceil(1.0 / p - 1e-12));
  const double denom = 1.0 - p * static_cast<double>(r % cluster_size);
  if (!(denom > 0.0)) {
    throw ElectionDegenerate("ch_threshold: denominator vanished; reset the election counter");
  }
  return p / denom * (e_res / e_0);
}

std::vector<int> select_cluster_heads(ClusterLayout& layout, const Network& net,
                                      ChElectionParams& params, std::vector<std::string>* log) {
  params.validate();
  ClusterLayout next;
  std::vector<int> remap(layout.heads.size(), -1);
  for (int c = 0; c < layout.cluster_count(); ++c) {
    int best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t id = 0; id < layout.assignment.size(); ++id) {
      if (layout.assignment[id] != c || !net.nodes[id].alive) {
        continue;
      }
      const auto& node = net.nodes[id];
      const double score = ch_threshold(params.p, params.r, node.e_res, node.e_0);
      // Ascending id scan keeps the lowest id on ties.
      if (score > best_score) {
        best_score = score;
        best = static_cast<int>(id);
      }
    }
    if (best < 0) {
      if (log) {
        log->push_back("cluster " + std::to_string(c) + " dissolved: no alive nodes");
      }
      continue;
    }
    remap[c] = next.cluster_count();
    next.heads.push_back(best);
    next.radius.push_back(c < static_cast<int>(layout.radius.size()) ? layout.radius[c] : 1.0);
  }
  next.assignment.assign(layout.assignment.size(), -1);
  for (std::size_t id = 0; id < layout.assignment.size(); ++id) {
    const int c = layout.assignment[id];
    if (c >= 0 && net.nodes[id].alive) {
      next.assignment[id] = remap[c];
    }
  }
  ++params.r;
  layout = std::move(next);
  return layout.heads;
}

bool campaign_trigger(Rng& rng, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw DomainError("campaign_trigger: threshold must lie in [0, 1]");
  }
  return rng.uniform() < threshold;
}

double cluster_radius(double d, double d_max, double d_min, double alpha) {
  if (!(d_max > d_min)) {
    throw GeometryDegenerate("cluster_radius: d_max must exceed d_min");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw DomainError("cluster_radius: alpha must lie in [0, 1]");
  }
  const double clamped = std::clamp(d, d_min, d_max);
  return 1.0 - alpha * (d_max - clamped) / (d_max - d_min);
}

std::vector<int> voronoi_partition(const std::vector<VoronoiSite>& sites,
                                   const std::vector<PlacedNode>& nodes, double radius_floor) {
  if (sites.empty()) {
    throw DomainError("voronoi_partition: no sites");
  }
  std::vector<int> out(nodes.size(), 0);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    int best = -1;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < sites.size(); ++s) {
      if (sites[s].head_id == nodes[k].id) {
        best = static_cast<int>(s);
        break;
      }
      const double r = std::max(sites[s].radius, radius_floor);
      const double d = euclidean_distance(nodes[k].position, sites[s].position);
      const double cost = r > 0.0 ? d / r : std::numeric_limits<double>::infinity();
      if (best < 0 || cost < best_cost ||
          (cost == best_cost && sites[s].head_id < sites[best].head_id)) {
        best = static_cast<int>(s);
        best_cost = cost;
      }
    }
    out[k] = best;
  }
  return out;
}

namespace {

struct DistanceRange {
  double lo = 0.0;
  double hi = 0.0;
};

DistanceRange alive_range(const Network& net, const std::vector<double>& est_dist) {
  DistanceRange r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& n : net.nodes) {
    if (n.alive && est_dist[n.id] >= 0.0) {
      r.lo = std::min(r.lo, est_dist[n.id]);
      r.hi = std::max(r.hi, est_dist[n.id]);
    }
  }
  return r;
}

}  // namespace

std::vector<double> layout_radii(const ClusterLayout& layout, const Network& net,
                                 const std::vector<double>& est_dist, double alpha) {
  const DistanceRange range = alive_range(net, est_dist);
  std::vector<double> radii(layout.heads.size(), 1.0);
  if (!(range.hi > range.lo)) {
    return radii;  // degenerate geometry: uniform radius
  }
  for (std::size_t c = 0; c < layout.heads.size(); ++c) {
    radii[c] = cluster_radius(est_dist[layout.heads[c]], range.hi, range.lo, alpha);
  }
  return radii;
}

void repartition(ClusterLayout& layout, const Network& net, double radius_floor) {
  std::vector<VoronoiSite> sites;
  sites.reserve(layout.heads.size());
  for (std::size_t c = 0; c < layout.heads.size(); ++c) {
    sites.push_back({layout.heads[c], net.nodes[layout.heads[c]].position, layout.radius[c]});
  }
  std::vector<PlacedNode> placed;
  for (const auto& n : net.nodes) {
    if (n.alive) {
      placed.push_back({n.id, n.position});
    }
  }
  layout.assignment.assign(net.nodes.size(), -1);
  if (sites.empty()) {
    return;
  }
  const auto cells = voronoi_partition(sites, placed, radius_floor);
  for (std::size_t k = 0; k < placed.size(); ++k) {
    layout.assignment[placed[k].id] = cells[k];
  }
}

AlphaConvergence converge_alpha(const Network& net, ClusterLayout layout,
                                const std::vector<double>& est_dist, const VoronoiParams& params) {
  params.validate();
  AlphaConvergence out;
  if (layout.heads.empty()) {
    throw DomainError("converge_alpha: layout has no cluster heads");
  }
  double e_res = 0.0;
  double e_0 = 0.0;
  for (const auto& n : net.nodes) {
    e_res += n.e_res;
    e_0 += n.e_0;
  }
  const double energy_fraction = e_0 > 0.0 ? e_res / e_0 : 0.0;
  const double clusters = static_cast<double>(layout.heads.size());

  double alpha = params.alpha;
  for (int it = 1; it <= params.max_iter; ++it) {
    layout.radius = layout_radii(layout, net, est_dist, alpha);
    repartition(layout, net, params.radius_floor);
    out.trace.push_back(alpha);
    out.iterations = it;

    // (sum E / sum R) normalised by its value with full energy and unit radii.
    const double radius_sum = std::accumulate(layout.radius.begin(), layout.radius.end(), 0.0);
    const double next = radius_sum > 0.0
                            ? std::clamp(energy_fraction * clusters / radius_sum, 0.0, 1.0)
                            : 1.0;
    if (std::abs(next - alpha) < params.tol) {
      out.converged = true;
      break;
    }
    if (it < params.max_iter) {
      alpha = next;
    }
  }
  out.alpha = alpha;
  out.layout = std::move(layout);
  return out;
}

ClusterLayout initial_layout(const Network& net, const std::vector<double>& est_dist, int ch_count,
                             const VoronoiParams& params, Rng& rng) {
  std::vector<int> alive;
  for (const auto& n : net.nodes) {
    if (n.alive) {
      alive.push_back(n.id);
    }
  }
  if (alive.empty()) {
    throw DomainError("initial_layout: no alive nodes");
  }
  const int k = std::clamp(ch_count, 1, static_cast<int>(alive.size()));

  // 1-D k-means on estimated distances, centres seeded at evenly spaced quantiles.
  std::vector<int> sorted = alive;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [&](int a, int b) { return est_dist[a] < est_dist[b]; });
  std::vector<double> centres(k);
  for (int g = 0; g < k; ++g) {
    const std::size_t q = (2 * g + 1) * sorted.size() / (2 * k);
    centres[g] = est_dist[sorted[std::min(q, sorted.size() - 1)]];
  }
  std::vector<int> group(net.nodes.size(), -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (int id : alive) {
      int best = 0;
      for (int g = 1; g < k; ++g) {
        if (std::abs(est_dist[id] - centres[g]) < std::abs(est_dist[id] - centres[best])) {
          best = g;
        }
      }
      if (group[id] != best) {
        group[id] = best;
        changed = true;
      }
    }
    std::vector<double> sum(k, 0.0);
    std::vector<int> count(k, 0);
    for (int id : alive) {
      sum[group[id]] += est_dist[id];
      ++count[group[id]];
    }
    for (int g = 0; g < k; ++g) {
      if (count[g] > 0) {
        centres[g] = sum[g] / count[g];
      }
    }
    if (!changed) {
      break;
    }
  }

  // Empty groups can appear with duplicated distances; fill them from the
  // largest groups so exactly k distinct heads are drawn.
  std::vector<std::vector<int>> groups(k);
  for (int id : alive) {
    groups[group[id]].push_back(id);
  }
  for (auto& g : groups) {
    if (!g.empty()) {
      continue;
    }
    auto donor = std::max_element(groups.begin(), groups.end(),
                                  [](const auto& a, const auto& b) { return a.size() < b.size(); });
    g.push_back(donor->back());
    donor->pop_back();
  }

  ClusterLayout layout;
  for (const auto& g : groups) {
    layout.heads.push_back(g[rng.index(g.size())]);
  }
  layout.radius = layout_radii(layout, net, est_dist, params.alpha);
  repartition(layout, net, params.radius_floor);
  return layout;
}

}  // namespace optleach
