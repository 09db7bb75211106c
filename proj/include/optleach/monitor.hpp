#pragma once

// Event monitoring: Gaussian-Bernoulli RBM stack (DBN) trained with
// contrastive divergence, a topic sampler, and a CF-tree clusterer that
// turns DBN features into event decisions.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "optleach/core.hpp"

namespace optleach {

class TrainingDivergence : public Error {
 public:
  using Error::Error;
};

class NotReady : public Error {
 public:
  using Error::Error;
};

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class VisibleKind : std::uint8_t { Gaussian = 0, Bernoulli = 1 };

struct RbmLayerParams {
  Mat W;       // D x F
  Vec a;       // hidden biases, F
  Vec b;       // visible biases, D
  Vec sigma2;  // visible variances, D (ignored for Bernoulli visibles)
  VisibleKind visible = VisibleKind::Gaussian;

  int visible_size() const noexcept { return static_cast<int>(b.size()); }
  int hidden_size() const noexcept { return static_cast<int>(a.size()); }
  void validate() const;

  // W ~ Normal(0, 0.01^2), biases 0, sigma2 = 1.
  static RbmLayerParams init(int d, int f, VisibleKind kind, Rng& rng);
};

double rbm_energy(const Vec& v, const Vec& h, const RbmLayerParams& p);

Vec p_h_given_v(const Vec& v, const RbmLayerParams& p);
Vec mean_v_given_h(const Vec& h, const RbmLayerParams& p);
Vec sample_v_given_h(const Vec& h, const RbmLayerParams& p, Rng& rng);
Vec sample_bernoulli(const Vec& prob, Rng& rng);

struct GibbsSample {
  Vec v;
  Vec h;  // hidden sample that produced v
};

// T full steps h ~ p(h|v), v ~ p(v|h), starting from v0.
GibbsSample gibbs_chain(const Vec& v0, const RbmLayerParams& p, int t_steps, Rng& rng);

// Exact enumeration over hidden states; refuses more than 12 hidden units.
// Gaussian visibles only. Batch rows are items.
constexpr int kMaxEnumerableHidden = 12;
double log_partition(const RbmLayerParams& p);
double log_likelihood(const Mat& batch, const RbmLayerParams& p);  // mean over rows
Mat log_likelihood_grad(const Mat& batch, const RbmLayerParams& p);
// Exact marginal P(h_j = 1) under the model.
Vec exact_hidden_marginals(const RbmLayerParams& p);

struct CdConfig {
  double lr = 0.01;
  int t_steps = 1;
  int batch = 32;
  int epochs = 10;

  void validate() const;
};

// Batch averages of the CD statistics. For Gaussian visibles v enters as v / sigma
// in vh and as (v - b) / sigma^2 in v.
struct RbmStats {
  Mat vh;
  Vec v;
  Vec h;
};

RbmStats data_statistics(const Mat& batch, const RbmLayerParams& p);
RbmStats chain_statistics(const Mat& batch, const RbmLayerParams& p, int t_steps, Rng& rng);

struct RbmDelta {
  Mat dW;
  Vec da;
  Vec db;
};

RbmDelta cd_delta(const RbmStats& data, const RbmStats& chain, double lr);
// Throws TrainingDivergence when the result is not finite.
void apply_delta(RbmLayerParams& p, const RbmDelta& delta);
RbmLayerParams cd_update(const Mat& batch, const RbmLayerParams& p, const CdConfig& cfg, Rng& rng);

// Mean squared error between rows and their one-step mean-field reconstruction.
double reconstruction_error(const Mat& data, const RbmLayerParams& p);

struct DbnStack {
  std::vector<int> layer_sizes;  // input, h1, h2, h3
  std::vector<RbmLayerParams> layers;
  Vec input_mean;
  Vec input_scale;
  Mat readout_W;  // classes x h3
  Vec readout_b;
  std::uint64_t seed = 0;
  int epoch = 0;
  bool trained = false;

  int n_classes() const noexcept { return static_cast<int>(readout_b.size()); }
  Vec standardize(const Vec& x) const;
  Mat standardize(const Mat& x) const;
  // Deterministic mean activations of the top hidden layer.
  Vec features(const Vec& reading) const;
  Mat features(const Mat& readings) const;
  Vec class_probabilities(const Vec& reading) const;
  void validate() const;
};

struct TrainCurve {
  std::vector<std::vector<double>> reconstruction;  // per layer, per epoch
};

// Greedy layerwise CD pretraining; layer k trains on layer k-1 probabilities.
DbnStack train_dbn(const Mat& data, const std::vector<int>& layer_sizes, const CdConfig& cfg,
                   std::uint64_t seed, TrainCurve* curve = nullptr);

struct DbnGradient {
  std::vector<Mat> dW;
  std::vector<Vec> da;
  Mat dR;
  Vec dc;
};

// Mean softmax cross-entropy of the read-out; rows are raw readings.
double readout_loss(const DbnStack& dbn, const Mat& data, const std::vector<int>& labels,
                    DbnGradient* grad = nullptr);

// Backpropagation through the read-out and every layer. Rows are raw readings.
DbnStack fine_tune(const DbnStack& dbn, const Mat& data, const std::vector<int>& labels,
                   double lr, int epochs, std::vector<double>* losses = nullptr);

struct TopicItem {
  int feature = 0;
  int row = 0;
};

struct TopicState {
  int n_topics = 1;
  double theta = 0.0;
  double gamma = 0.0;
  std::vector<TopicItem> items;
  std::vector<int> z;
  std::vector<std::vector<int>> n_feature;  // [feature][topic]
  std::vector<std::vector<int>> n_row;      // [row][topic]

  static TopicState create(int n_topics, double theta, double gamma,
                           std::vector<TopicItem> items, int n_features, int n_rows, Rng& rng);
  void recount(std::vector<std::vector<int>>& feature,
               std::vector<std::vector<int>>& row) const;
};

// Conditional over topics for item j, with j's own assignment left out.
std::vector<double> topic_probabilities(int j, const TopicState& state, bool* fell_back = nullptr);
int topic_sample(int j, TopicState& state, Rng& rng, std::vector<std::string>* log = nullptr);

struct CfEntry {
  long n = 0;
  Vec ls;
  double ss = 0.0;

  static CfEntry of(const Vec& x);
  void merge(const CfEntry& other);
  Vec centroid() const;
  double radius() const;
};

struct LeafCluster {
  int id = 0;
  CfEntry cf;
  std::map<int, long> labels;

  int majority_label() const;  // -1 when unlabelled
};

class CfTree {
 public:
  CfTree(int dim, double threshold, int branching = 8);
  ~CfTree();
  CfTree(CfTree&&) noexcept;
  CfTree& operator=(CfTree&&) noexcept;

  // Returns the id of the leaf cluster that absorbed the point.
  int insert(const Vec& x, int label = -1);

  int dim() const noexcept { return dim_; }
  double threshold() const noexcept { return threshold_; }
  int branching() const noexcept { return branching_; }
  std::vector<LeafCluster> leaves() const;
  int leaf_count() const noexcept { return leaf_count_; }
  int height() const;
  // Every internal entry equals the merge of its child entries, and no node
  // holds more than `branching` entries.
  bool check_structure() const;

 private:
  struct Node;
  std::unique_ptr<Node> root_;
  int dim_;
  double threshold_;
  int branching_;
  int leaf_count_ = 0;
};

struct EventDecision {
  int label = -1;
  double confidence = 0.0;
  int leaf = -1;
};

// Nearest leaf centroid; confidence is the inverse-distance weight over the top two.
EventDecision nearest_leaf(const std::vector<LeafCluster>& leaves, const Vec& point);
EventDecision classify_event(const DbnStack& dbn, const CfTree& tree, const Vec& reading);

struct EventBenchmark {
  Mat readings;  // rows
  std::vector<int> labels;
};

// Two event classes observed as noisy RSSI vectors at a ring of sensors.
EventBenchmark make_event_benchmark(int n_readings, int n_sensors, std::uint64_t seed);

struct PipelineConfig {
  std::vector<int> hidden{12, 12, 12};
  CdConfig cd{0.05, 1, 32, 20};
  double fine_tune_lr = 2.0;
  int fine_tune_epochs = 300;
  double dbn_threshold = 0.05;
  double raw_threshold = 1.0;
  int branching = 8;
  double test_fraction = 0.2;
};

struct PipelineResult {
  double dbn_error = 0.0;
  double birch_error = 0.0;
  int dbn_leaves = 0;
  int birch_leaves = 0;
};

// Paired evaluation of DBN+CF-tree against a CF-tree on standardised readings,
// on one seeded train/test split.
PipelineResult evaluate_pipelines(const EventBenchmark& bench, const PipelineConfig& cfg,
                                  std::uint64_t split_seed);

// Flat little-endian binary: magic, layer sizes, seed, epoch, then row-major arrays.
void save_checkpoint(const DbnStack& dbn, std::ostream& out);
DbnStack load_checkpoint(std::istream& in);
void save_checkpoint(const DbnStack& dbn, const std::string& path);
DbnStack load_checkpoint(const std::string& path);

}  // namespace optleach
