#pragma once

// Centralised CH/sink hierarchy: RSSI distance estimates, energy-weighted
// cluster-head election and radius-weighted Voronoi cluster boundaries.

#include <string>
#include <vector>

#include "optleach/core.hpp"

namespace optleach {

class ElectionDegenerate : public Error {
 public:
  using Error::Error;
};

class GeometryDegenerate : public Error {
 public:
  using Error::Error;
};

// Log-distance path loss: rssi(d) = p0_dbm - 10 * n * log10(d / d0).
struct RssiModel {
  double p0_dbm = -40.0;
  double d0 = 1.0;
  double path_loss_n = 2.0;
  double noise_db = 0.0;  // std-dev of Gaussian noise on the dB reading

  double rssi(double distance) const;
  double invert(double rssi_dbm) const;
};

struct ChElectionParams {
  double p = 0.1;  // reciprocal of nodes per cluster
  int r = 0;       // number of re-elections so far
  double campaign_threshold = 0.8;

  void validate() const;
};

struct VoronoiParams {
  double alpha = 0.5;
  double tol = 1e-3;
  int max_iter = 50;
  // Lower bound applied to R_c inside the assignment metric so a cluster
  // of radius zero still owns its head.
  double radius_floor = 0.5;

  void validate() const;
};

struct ClusterLayout {
  std::vector<int> heads;       // head node id per cluster
  std::vector<double> radius;   // normalised R_c per cluster
  std::vector<int> assignment;  // node id -> cluster index, -1 when unassigned

  int cluster_count() const noexcept { return static_cast<int>(heads.size()); }
  std::vector<int> members(int cluster) const;
};

// Estimated node -> sink distance from a simulated RSSI reading. Entries
// for dead nodes are -1.
std::vector<double> approximate_distances(const Network& net, const RssiModel& model, Rng& rng);

// Election score, with 1/p taken as the integer cluster size ceil(1/p).
double ch_threshold(double p, int r, double e_res, double e_0);

// Per cluster, promotes the alive node with the largest score (ties: lowest
// id). Clusters without alive nodes are dissolved. Increments params.r.
std::vector<int> select_cluster_heads(ClusterLayout& layout, const Network& net,
                                      ChElectionParams& params,
                                      std::vector<std::string>* log = nullptr);

bool campaign_trigger(Rng& rng, double threshold);

// R_c = 1 - alpha * (d_max - d) / (d_max - d_min).
double cluster_radius(double d, double d_max, double d_min, double alpha);

struct VoronoiSite {
  int head_id = 0;
  Vec2 position;
  double radius = 1.0;
};

struct PlacedNode {
  int id = 0;
  Vec2 position;
};

// Multiplicatively weighted assignment: node -> site minimising
// d(node, site) / radius. Ties go to the lowest head id and every head is
// assigned to its own site. Returns one site index per node.
std::vector<int> voronoi_partition(const std::vector<VoronoiSite>& sites,
                                   const std::vector<PlacedNode>& nodes,
                                   double radius_floor = 0.0);

// Normalised radii for the current heads given estimated sink distances.
std::vector<double> layout_radii(const ClusterLayout& layout, const Network& net,
                                 const std::vector<double>& est_dist, double alpha);

// Re-partitions every alive node among the current heads using the given radii.
void repartition(ClusterLayout& layout, const Network& net, double radius_floor);

struct AlphaConvergence {
  double alpha = 0.0;
  ClusterLayout layout;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // alpha used at each iteration
};

AlphaConvergence converge_alpha(const Network& net, ClusterLayout layout,
                                const std::vector<double>& est_dist,
                                const VoronoiParams& params);

// Start-up clustering: k-means over estimated sink distances into `ch_count`
// groups, one random head per group, then a weighted Voronoi partition.
ClusterLayout initial_layout(const Network& net, const std::vector<double>& est_dist,
                             int ch_count, const VoronoiParams& params, Rng& rng);

}  // namespace optleach
