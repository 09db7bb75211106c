#include "optleach/monitor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>

#include "optleach/clustering.hpp"

namespace optleach {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

Vec sigmoid(const Vec& x) { return x.unaryExpr([](double t) { return sigmoid(t); }); }

Mat sigmoid(const Mat& x) { return x.unaryExpr([](double t) { return sigmoid(t); }); }

double log_sum_exp(const std::vector<double>& xs) {
  const double m = *std::max_element(xs.begin(), xs.end());
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

Vec sigma_of(const RbmLayerParams& p) { return p.sigma2.cwiseSqrt(); }

// Visible input as seen by the hidden layer: v / sigma for Gaussian units.
Vec scaled_visible(const Vec& v, const RbmLayerParams& p) {
  return p.visible == VisibleKind::Gaussian ? Vec(v.cwiseQuotient(sigma_of(p))) : v;
}

Mat scaled_visible(const Mat& rows, const RbmLayerParams& p) {
  if (p.visible != VisibleKind::Gaussian) return rows;
  const Vec inv = sigma_of(p).cwiseInverse();
  return rows * inv.asDiagonal();
}

Mat hidden_probs(const Mat& rows, const RbmLayerParams& p) {
  Mat z = scaled_visible(rows, p) * p.W;
  z.rowwise() += p.a.transpose();
  return sigmoid(z);
}

void require_enumerable(const RbmLayerParams& p) {
  if (p.visible != VisibleKind::Gaussian) {
    throw DomainError("exact enumeration is implemented for Gaussian visible units");
  }
  if (p.hidden_size() > kMaxEnumerableHidden) {
    throw DomainError("exact enumeration refused: more than 12 hidden units");
  }
}

Vec hidden_state(unsigned mask, int f) {
  Vec h(f);
  for (int j = 0; j < f; ++j) h[j] = (mask >> j) & 1u ? 1.0 : 0.0;
  return h;
}

// Unnormalised log weight of hidden state h after integrating out v.
double hidden_log_weight(const Vec& h, const RbmLayerParams& p, const Vec& sigma) {
  const Vec c = p.W * h;
  return p.a.dot(h) + (p.b.cwiseQuotient(sigma)).dot(c) + 0.5 * c.squaredNorm();
}

std::vector<double> hidden_posterior(const RbmLayerParams& p) {
  require_enumerable(p);
  const int f = p.hidden_size();
  const Vec sigma = sigma_of(p);
  std::vector<double> lw(std::size_t{1} << f);
  for (unsigned m = 0; m < lw.size(); ++m) lw[m] = hidden_log_weight(hidden_state(m, f), p, sigma);
  const double lz = log_sum_exp(lw);
  for (double& x : lw) x = std::exp(x - lz);
  return lw;
}

}  // namespace

void RbmLayerParams::validate() const {
  const auto d = b.size();
  const auto f = a.size();
  if (W.rows() != d || W.cols() != f || sigma2.size() != d) {
    throw DomainError("rbm: inconsistent parameter dimensions");
  }
  if ((sigma2.array() <= 0.0).any()) {
    throw DomainError("rbm: visible variances must be positive");
  }
  if (!W.allFinite() || !a.allFinite() || !b.allFinite() || !sigma2.allFinite()) {
    throw DomainError("rbm: non-finite parameter");
  }
}

RbmLayerParams RbmLayerParams::init(int d, int f, VisibleKind kind, Rng& rng) {
  if (d < 1 || f < 1) {
    throw DomainError("rbm: layer sizes must be positive");
  }
  RbmLayerParams p;
  p.W = Mat(d, f);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < f; ++j) p.W(i, j) = rng.normal(0.0, 0.01);
  }
  p.a = Vec::Zero(f);
  p.b = Vec::Zero(d);
  p.sigma2 = Vec::Ones(d);
  p.visible = kind;
  return p;
}

double rbm_energy(const Vec& v, const Vec& h, const RbmLayerParams& p) {
  if (v.size() != p.visible_size() || h.size() != p.hidden_size()) {
    throw DomainError("rbm_energy: dimension mismatch");
  }
  if (p.visible == VisibleKind::Bernoulli) {
    return -p.b.dot(v) - v.dot(p.W * h) - p.a.dot(h);
  }
  const Vec diff = v - p.b;
  const double quad = 0.5 * diff.cwiseProduct(diff).cwiseQuotient(p.sigma2).sum();
  return quad - scaled_visible(v, p).dot(p.W * h) - p.a.dot(h);
}

Vec p_h_given_v(const Vec& v, const RbmLayerParams& p) {
  if (v.size() != p.visible_size()) {
    throw DomainError("p_h_given_v: dimension mismatch");
  }
  return sigmoid(Vec(p.a + p.W.transpose() * scaled_visible(v, p)));
}

Vec mean_v_given_h(const Vec& h, const RbmLayerParams& p) {
  if (h.size() != p.hidden_size()) {
    throw DomainError("mean_v_given_h: dimension mismatch");
  }
  if (p.visible == VisibleKind::Bernoulli) {
    return sigmoid(Vec(p.b + p.W * h));
  }
  return p.b + sigma_of(p).cwiseProduct(p.W * h);
}

Vec sample_bernoulli(const Vec& prob, Rng& rng) {
  Vec out(prob.size());
  for (Eigen::Index k = 0; k < prob.size(); ++k) out[k] = rng.uniform() < prob[k] ? 1.0 : 0.0;
  return out;
}

Vec sample_v_given_h(const Vec& h, const RbmLayerParams& p, Rng& rng) {
  const Vec mean = mean_v_given_h(h, p);
  if (p.visible == VisibleKind::Bernoulli) {
    return sample_bernoulli(mean, rng);
  }
  const Vec sigma = sigma_of(p);
  Vec out(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) out[i] = mean[i] + sigma[i] * rng.normal();
  return out;
}

GibbsSample gibbs_chain(const Vec& v0, const RbmLayerParams& p, int t_steps, Rng& rng) {
  if (t_steps < 1) {
    throw DomainError("gibbs_chain: t_steps must be >= 1");
  }
  GibbsSample s{v0, Vec()};
  for (int t = 0; t < t_steps; ++t) {
    s.h = sample_bernoulli(p_h_given_v(s.v, p), rng);
    s.v = sample_v_given_h(s.h, p, rng);
  }
  return s;
}

double log_partition(const RbmLayerParams& p) {
  require_enumerable(p);
  const int f = p.hidden_size();
  const Vec sigma = sigma_of(p);
  std::vector<double> lw(std::size_t{1} << f);
  for (unsigned m = 0; m < lw.size(); ++m) lw[m] = hidden_log_weight(hidden_state(m, f), p, sigma);
  double norm = 0.0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) norm += std::log(sigma[i]) + 0.5 * kLog2Pi;
  return log_sum_exp(lw) + norm;
}

double log_likelihood(const Mat& batch, const RbmLayerParams& p) {
  require_enumerable(p);
  if (batch.rows() < 1 || batch.cols() != p.visible_size()) {
    throw DomainError("log_likelihood: empty batch or dimension mismatch");
  }
  const double lz = log_partition(p);
  double total = 0.0;
  for (Eigen::Index r = 0; r < batch.rows(); ++r) {
    const Vec v = batch.row(r).transpose();
    const Vec diff = v - p.b;
    double free_energy = 0.5 * diff.cwiseProduct(diff).cwiseQuotient(p.sigma2).sum();
    const Vec z = p.a + p.W.transpose() * scaled_visible(v, p);
    for (Eigen::Index j = 0; j < z.size(); ++j) free_energy -= softplus(z[j]);
    total += -free_energy - lz;
  }
  return total / static_cast<double>(batch.rows());
}

Mat log_likelihood_grad(const Mat& batch, const RbmLayerParams& p) {
  require_enumerable(p);
  if (batch.rows() < 1 || batch.cols() != p.visible_size()) {
    throw DomainError("log_likelihood_grad: empty batch or dimension mismatch");
  }
  const RbmStats data = data_statistics(batch, p);
  const int f = p.hidden_size();
  const Vec sigma = sigma_of(p);
  const Vec b_over_sigma = p.b.cwiseQuotient(sigma);
  const auto post = hidden_posterior(p);
  Mat model = Mat::Zero(p.visible_size(), f);
  for (unsigned m = 0; m < post.size(); ++m) {
    const Vec h = hidden_state(m, f);
    // E[v / sigma | h] = b / sigma + W h
    model += post[m] * (b_over_sigma + p.W * h) * h.transpose();
  }
  return data.vh - model;
}

Vec exact_hidden_marginals(const RbmLayerParams& p) {
  const auto post = hidden_posterior(p);
  const int f = p.hidden_size();
  Vec out = Vec::Zero(f);
  for (unsigned m = 0; m < post.size(); ++m) out += post[m] * hidden_state(m, f);
  return out;
}

void CdConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw DomainError("cd: learning rate must be finite and non-negative");
  }
  if (t_steps < 1 || batch < 1 || epochs < 0) {
    throw DomainError("cd: t_steps and batch must be >= 1, epochs >= 0");
  }
}

namespace {

RbmStats statistics_of(const Mat& visible, const Mat& hidden, const RbmLayerParams& p) {
  const double n = static_cast<double>(visible.rows());
  RbmStats s;
  s.vh = scaled_visible(visible, p).transpose() * hidden / n;
  s.h = hidden.colwise().sum().transpose() / n;
  if (p.visible == VisibleKind::Gaussian) {
    Mat centred = visible;
    centred.rowwise() -= p.b.transpose();
    s.v = (centred * p.sigma2.cwiseInverse().asDiagonal()).colwise().sum().transpose() / n;
  } else {
    s.v = visible.colwise().sum().transpose() / n;
  }
  return s;
}

}  // namespace

RbmStats data_statistics(const Mat& batch, const RbmLayerParams& p) {
  if (batch.rows() < 1 || batch.cols() != p.visible_size()) {
    throw DomainError("data_statistics: empty batch or dimension mismatch");
  }
  return statistics_of(batch, hidden_probs(batch, p), p);
}

RbmStats chain_statistics(const Mat& batch, const RbmLayerParams& p, int t_steps, Rng& rng) {
  if (batch.rows() < 1 || batch.cols() != p.visible_size()) {
    throw DomainError("chain_statistics: empty batch or dimension mismatch");
  }
  Mat v_t(batch.rows(), batch.cols());
  for (Eigen::Index r = 0; r < batch.rows(); ++r) {
    v_t.row(r) = gibbs_chain(batch.row(r).transpose(), p, t_steps, rng).v.transpose();
  }
  return statistics_of(v_t, hidden_probs(v_t, p), p);
}

RbmDelta cd_delta(const RbmStats& data, const RbmStats& chain, double lr) {
  return RbmDelta{lr * (data.vh - chain.vh), lr * (data.h - chain.h), lr * (data.v - chain.v)};
}

void apply_delta(RbmLayerParams& p, const RbmDelta& delta) {
  RbmLayerParams next = p;
  next.W += delta.dW;
  next.a += delta.da;
  next.b += delta.db;
  if (!next.W.allFinite() || !next.a.allFinite() || !next.b.allFinite()) {
    throw TrainingDivergence("cd update produced non-finite parameters (max |dW| = " +
                             std::to_string(delta.dW.cwiseAbs().maxCoeff()) +
                             "); lower the learning rate");
  }
  p = std::move(next);
}

RbmLayerParams cd_update(const Mat& batch, const RbmLayerParams& p, const CdConfig& cfg, Rng& rng) {
  cfg.validate();
  p.validate();
  const RbmStats data = data_statistics(batch, p);
  const RbmStats chain = chain_statistics(batch, p, cfg.t_steps, rng);
  RbmLayerParams out = p;
  apply_delta(out, cd_delta(data, chain, cfg.lr));
  return out;
}

double reconstruction_error(const Mat& data, const RbmLayerParams& p) {
  if (data.rows() < 1) return 0.0;
  const Mat h = hidden_probs(data, p);
  Mat recon = h * p.W.transpose();
  if (p.visible == VisibleKind::Gaussian) {
    recon = recon * sigma_of(p).asDiagonal();
    recon.rowwise() += p.b.transpose();
  } else {
    recon.rowwise() += p.b.transpose();
    recon = sigmoid(recon);
  }
  return (data - recon).squaredNorm() / static_cast<double>(data.size());
}

Vec DbnStack::standardize(const Vec& x) const {
  if (x.size() != input_mean.size()) {
    throw DomainError("dbn: reading dimension mismatch");
  }
  return (x - input_mean).cwiseQuotient(input_scale);
}

Mat DbnStack::standardize(const Mat& x) const {
  if (x.cols() != input_mean.size()) {
    throw DomainError("dbn: reading dimension mismatch");
  }
  Mat out = x;
  out.rowwise() -= input_mean.transpose();
  return out * input_scale.cwiseInverse().asDiagonal();
}

Vec DbnStack::features(const Vec& reading) const {
  if (layers.empty()) {
    throw NotReady("dbn has no trained layers");
  }
  Vec h = standardize(reading);
  for (const auto& layer : layers) h = p_h_given_v(h, layer);
  return h;
}

Mat DbnStack::features(const Mat& readings) const {
  if (layers.empty()) {
    throw NotReady("dbn has no trained layers");
  }
  Mat h = standardize(readings);
  for (const auto& layer : layers) h = hidden_probs(h, layer);
  return h;
}

Vec DbnStack::class_probabilities(const Vec& reading) const {
  if (n_classes() == 0) {
    throw NotReady("dbn read-out is not fine-tuned");
  }
  Vec z = readout_W * features(reading) + readout_b;
  z.array() -= z.maxCoeff();
  z = z.array().exp();
  return z / z.sum();
}

void DbnStack::validate() const {
  if (layer_sizes.size() != 4) {
    throw DomainError("dbn: exactly three hidden layers are required");
  }
  if (layers.size() != 3) {
    throw DomainError("dbn: layer count does not match layer_sizes");
  }
  for (std::size_t k = 0; k < layers.size(); ++k) {
    layers[k].validate();
    if (layers[k].visible_size() != layer_sizes[k] || layers[k].hidden_size() != layer_sizes[k + 1]) {
      throw DomainError("dbn: adjacent layer dimensions do not match");
    }
  }
  if (input_mean.size() != layer_sizes[0] || input_scale.size() != layer_sizes[0]) {
    throw DomainError("dbn: standardiser dimension mismatch");
  }
  if (readout_W.rows() != readout_b.size() ||
      (readout_b.size() > 0 && readout_W.cols() != layer_sizes[3])) {
    throw DomainError("dbn: read-out dimension mismatch");
  }
}

DbnStack train_dbn(const Mat& data, const std::vector<int>& layer_sizes, const CdConfig& cfg,
                   std::uint64_t seed, TrainCurve* curve) {
  cfg.validate();
  if (layer_sizes.size() != 4) {
    throw DomainError("train_dbn: exactly three hidden layers are required");
  }
  if (data.rows() < 2 || data.cols() != layer_sizes[0]) {
    throw DomainError("train_dbn: need >= 2 readings of the input dimension");
  }
  DbnStack dbn;
  dbn.layer_sizes = layer_sizes;
  dbn.seed = seed;
  dbn.input_mean = data.colwise().mean().transpose();
  dbn.input_scale = Vec(data.cols());
  for (Eigen::Index c = 0; c < data.cols(); ++c) {
    const double sd =
        std::sqrt((data.col(c).array() - dbn.input_mean[c]).square().mean());
    dbn.input_scale[c] = sd > 1e-12 ? sd : 1.0;
  }
  const Rng base(seed);
  Mat x = dbn.standardize(data);
  if (curve) curve->reconstruction.assign(3, {});
  for (int k = 0; k < 3; ++k) {
    Rng rng = base.split(static_cast<std::uint64_t>(k));
    RbmLayerParams layer = RbmLayerParams::init(
        layer_sizes[k], layer_sizes[k + 1], k == 0 ? VisibleKind::Gaussian : VisibleKind::Bernoulli,
        rng);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng.engine());
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
        const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
        Mat batch(static_cast<Eigen::Index>(stop - start), x.cols());
        for (std::size_t r = start; r < stop; ++r) {
          batch.row(static_cast<Eigen::Index>(r - start)) = x.row(order[r]);
        }
        layer = cd_update(batch, layer, cfg, rng);
      }
      if (curve) curve->reconstruction[k].push_back(reconstruction_error(x, layer));
    }
    x = hidden_probs(x, layer);
    dbn.layers.push_back(std::move(layer));
  }
  dbn.epoch = cfg.epochs;
  dbn.trained = true;
  return dbn;
}

namespace {

struct Forward {
  std::vector<Mat> inputs;  // input to layer k as seen by W (scaled for Gaussian)
  std::vector<Mat> acts;    // output of layer k
  Mat probs;
};

Forward forward(const DbnStack& dbn, const Mat& data) {
  Forward f;
  Mat h = dbn.standardize(data);
  for (const auto& layer : dbn.layers) {
    f.inputs.push_back(scaled_visible(h, layer));
    Mat z = f.inputs.back() * layer.W;
    z.rowwise() += layer.a.transpose();
    h = sigmoid(z);
    f.acts.push_back(h);
  }
  Mat logits = h * dbn.readout_W.transpose();
  logits.rowwise() += dbn.readout_b.transpose();
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    logits.row(r).array() -= logits.row(r).maxCoeff();
  }
  f.probs = logits.array().exp();
  for (Eigen::Index r = 0; r < f.probs.rows(); ++r) f.probs.row(r) /= f.probs.row(r).sum();
  return f;
}

void check_labels(const DbnStack& dbn, const Mat& data, const std::vector<int>& labels) {
  if (data.rows() < 1 || static_cast<std::size_t>(data.rows()) != labels.size()) {
    throw DomainError("fine_tune: readings and labels differ in count");
  }
  for (int y : labels) {
    if (y < 0 || y >= dbn.n_classes()) {
      throw DomainError("fine_tune: label outside the read-out classes");
    }
  }
}

}  // namespace

double readout_loss(const DbnStack& dbn, const Mat& data, const std::vector<int>& labels,
                    DbnGradient* grad) {
  if (!dbn.trained || dbn.n_classes() == 0) {
    throw NotReady("readout_loss: dbn is not trained");
  }
  check_labels(dbn, data, labels);
  const Forward f = forward(dbn, data);
  const double n = static_cast<double>(data.rows());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    loss -= std::log(std::max(f.probs(r, labels[r]), std::numeric_limits<double>::min()));
  }
  loss /= n;
  if (grad) {
    Mat d = f.probs;
    for (Eigen::Index r = 0; r < data.rows(); ++r) d(r, labels[r]) -= 1.0;
    d /= n;
    grad->dR = d.transpose() * f.acts.back();
    grad->dc = d.colwise().sum().transpose();
    Mat dh = d * dbn.readout_W;
    const std::size_t L = dbn.layers.size();
    grad->dW.assign(L, Mat());
    grad->da.assign(L, Vec());
    for (std::size_t k = L; k-- > 0;) {
      const Mat& h = f.acts[k];
      const Mat dz = dh.cwiseProduct(h.cwiseProduct((1.0 - h.array()).matrix()));
      grad->dW[k] = f.inputs[k].transpose() * dz;
      grad->da[k] = dz.colwise().sum().transpose();
      if (k > 0) {
        dh = dz * dbn.layers[k].W.transpose();
      }
    }
  }
  return loss;
}

DbnStack fine_tune(const DbnStack& dbn, const Mat& data, const std::vector<int>& labels,
                   double lr, int epochs, std::vector<double>* losses) {
  if (!dbn.trained) {
    throw NotReady("fine_tune: dbn is not pretrained");
  }
  if (!(lr >= 0.0) || epochs < 0) {
    throw DomainError("fine_tune: lr must be >= 0 and epochs >= 0");
  }
  DbnStack out = dbn;
  if (out.n_classes() == 0) {
    const int classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    out.readout_W = Mat::Zero(std::max(classes, 2), out.layer_sizes.back());
    out.readout_b = Vec::Zero(std::max(classes, 2));
  }
  check_labels(out, data, labels);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    DbnGradient g;
    const double loss = readout_loss(out, data, labels, &g);
    if (!std::isfinite(loss)) {
      throw TrainingDivergence("fine_tune: loss became non-finite at epoch " + std::to_string(epoch));
    }
    if (losses) losses->push_back(loss);
    out.readout_W -= lr * g.dR;
    out.readout_b -= lr * g.dc;
    for (std::size_t k = 0; k < out.layers.size(); ++k) {
      out.layers[k].W -= lr * g.dW[k];
      out.layers[k].a -= lr * g.da[k];
    }
    if (!out.readout_W.allFinite()) {
      throw TrainingDivergence("fine_tune: read-out weights diverged at epoch " +
                               std::to_string(epoch));
    }
  }
  return out;
}

TopicState TopicState::create(int n_topics, double theta, double gamma,
                              std::vector<TopicItem> items, int n_features, int n_rows, Rng& rng) {
  if (n_topics < 1 || theta < 0.0 || gamma < 0.0) {
    throw DomainError("topics: need n_topics >= 1 and non-negative theta, gamma");
  }
  TopicState s;
  s.n_topics = n_topics;
  s.theta = theta;
  s.gamma = gamma;
  s.items = std::move(items);
  s.n_feature.assign(n_features, std::vector<int>(n_topics, 0));
  s.n_row.assign(n_rows, std::vector<int>(n_topics, 0));
  for (const auto& it : s.items) {
    if (it.feature < 0 || it.feature >= n_features || it.row < 0 || it.row >= n_rows) {
      throw DomainError("topics: item index out of range");
    }
    const int z = static_cast<int>(rng.index(static_cast<std::size_t>(n_topics)));
    s.z.push_back(z);
    ++s.n_feature[it.feature][z];
    ++s.n_row[it.row][z];
  }
  return s;
}

void TopicState::recount(std::vector<std::vector<int>>& feature,
                         std::vector<std::vector<int>>& row) const {
  feature.assign(n_feature.size(), std::vector<int>(n_topics, 0));
  row.assign(n_row.size(), std::vector<int>(n_topics, 0));
  for (std::size_t j = 0; j < items.size(); ++j) {
    ++feature[items[j].feature][z[j]];
    ++row[items[j].row][z[j]];
  }
}

std::vector<double> topic_probabilities(int j, const TopicState& s, bool* fell_back) {
  if (j < 0 || static_cast<std::size_t>(j) >= s.items.size()) {
    throw DomainError("topic_probabilities: item out of range");
  }
  const auto& it = s.items[j];
  std::vector<double> w(s.n_topics);
  double total = 0.0;
  for (int t = 0; t < s.n_topics; ++t) {
    const int own = s.z[j] == t ? 1 : 0;
    w[t] = (s.n_feature[it.feature][t] - own) + s.theta * (s.n_row[it.row][t] - own) + s.gamma;
    total += w[t];
  }
  const bool uniform = !(total > 0.0) || !std::isfinite(total);
  if (fell_back) *fell_back = uniform;
  for (double& x : w) x = uniform ? 1.0 / s.n_topics : x / total;
  return w;
}

int topic_sample(int j, TopicState& s, Rng& rng, std::vector<std::string>* log) {
  bool fell_back = false;
  const auto prob = topic_probabilities(j, s, &fell_back);
  if (fell_back && log) {
    log->push_back("topic_sample: all weights zero for item " + std::to_string(j) +
                   ", sampled uniformly");
  }
  const double u = rng.uniform();
  double acc = 0.0;
  int pick = s.n_topics - 1;
  for (int t = 0; t < s.n_topics; ++t) {
    acc += prob[t];
    if (u < acc) {
      pick = t;
      break;
    }
  }
  const auto& it = s.items[j];
  --s.n_feature[it.feature][s.z[j]];
  --s.n_row[it.row][s.z[j]];
  s.z[j] = pick;
  ++s.n_feature[it.feature][pick];
  ++s.n_row[it.row][pick];
  return pick;
}

CfEntry CfEntry::of(const Vec& x) { return CfEntry{1, x, x.squaredNorm()}; }

void CfEntry::merge(const CfEntry& other) {
  if (n == 0) {
    *this = other;
    return;
  }
  n += other.n;
  ls += other.ls;
  ss += other.ss;
}

Vec CfEntry::centroid() const { return ls / static_cast<double>(n); }

double CfEntry::radius() const {
  const double nn = static_cast<double>(n);
  return std::sqrt(std::max(0.0, ss / nn - (ls / nn).squaredNorm()));
}

int LeafCluster::majority_label() const {
  int best = -1;
  long count = 0;
  for (const auto& [label, c] : labels) {
    if (label >= 0 && c > count) {
      best = label;
      count = c;
    }
  }
  return best;
}

struct CfTree::Node {
  bool leaf = true;
  std::vector<CfEntry> entries;
  std::vector<std::unique_ptr<Node>> children;  // internal nodes
  std::vector<int> ids;                         // leaf nodes
  std::vector<std::map<int, long>> labels;      // leaf nodes

  CfEntry summary() const {
    CfEntry s;
    for (const auto& e : entries) s.merge(e);
    return s;
  }

  int closest(const Vec& x) const {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const double d = (entries[k].centroid() - x).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(k);
      }
    }
    return best;
  }

  // Moves entries closer to the farther of the two most distant seeds into a new node.
  std::unique_ptr<Node> split() {
    const std::size_t m = entries.size();
    std::size_t s1 = 0;
    std::size_t s2 = 1;
    double far = -1.0;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i + 1; j < m; ++j) {
        const double d = (entries[i].centroid() - entries[j].centroid()).squaredNorm();
        if (d > far) {
          far = d;
          s1 = i;
          s2 = j;
        }
      }
    }
    const Vec c1 = entries[s1].centroid();
    const Vec c2 = entries[s2].centroid();
    auto sibling = std::make_unique<Node>();
    sibling->leaf = leaf;
    Node keep;
    keep.leaf = leaf;
    for (std::size_t k = 0; k < m; ++k) {
      const bool to_sibling =
          k == s2 || (k != s1 && (entries[k].centroid() - c2).squaredNorm() <
                                     (entries[k].centroid() - c1).squaredNorm());
      Node& dst = to_sibling ? *sibling : keep;
      dst.entries.push_back(std::move(entries[k]));
      if (leaf) {
        dst.ids.push_back(ids[k]);
        dst.labels.push_back(std::move(labels[k]));
      } else {
        dst.children.push_back(std::move(children[k]));
      }
    }
    entries = std::move(keep.entries);
    children = std::move(keep.children);
    ids = std::move(keep.ids);
    labels = std::move(keep.labels);
    return sibling;
  }
};

CfTree::CfTree(int dim, double threshold, int branching)
    : root_(std::make_unique<Node>()), dim_(dim), threshold_(threshold), branching_(branching) {
  if (dim < 1 || !(threshold >= 0.0) || branching < 2) {
    throw DomainError("CfTree: need dim >= 1, threshold >= 0, branching >= 2");
  }
}

CfTree::~CfTree() = default;
CfTree::CfTree(CfTree&&) noexcept = default;
CfTree& CfTree::operator=(CfTree&&) noexcept = default;

int CfTree::insert(const Vec& x, int label) {
  if (x.size() != dim_) {
    throw DomainError("CfTree::insert: point dimension mismatch");
  }
  int absorbed = -1;
  const CfEntry point = CfEntry::of(x);
  auto descend = [&](auto&& self, Node& node) -> std::unique_ptr<Node> {
    if (node.leaf) {
      const int k = node.closest(x);
      if (k >= 0) {
        CfEntry merged = node.entries[k];
        merged.merge(point);
        if (merged.radius() <= threshold_) {
          node.entries[k] = std::move(merged);
          ++node.labels[k][label];
          absorbed = node.ids[k];
          return nullptr;
        }
      }
      node.entries.push_back(point);
      node.ids.push_back(leaf_count_);
      node.labels.push_back({{label, 1}});
      absorbed = leaf_count_++;
    } else {
      const int k = node.closest(x);
      auto sibling = self(self, *node.children[k]);
      node.entries[k] = node.children[k]->summary();
      if (sibling) {
        node.entries.push_back(sibling->summary());
        node.children.push_back(std::move(sibling));
      }
    }
    if (static_cast<int>(node.entries.size()) > branching_) {
      return node.split();
    }
    return nullptr;
  };
  auto sibling = descend(descend, *root_);
  if (sibling) {
    auto root = std::make_unique<Node>();
    root->leaf = false;
    root->entries.push_back(root_->summary());
    root->entries.push_back(sibling->summary());
    root->children.push_back(std::move(root_));
    root->children.push_back(std::move(sibling));
    root_ = std::move(root);
  }
  return absorbed;
}

std::vector<LeafCluster> CfTree::leaves() const {
  std::vector<LeafCluster> out;
  auto walk = [&](auto&& self, const Node& node) -> void {
    if (node.leaf) {
      for (std::size_t k = 0; k < node.entries.size(); ++k) {
        out.push_back(LeafCluster{node.ids[k], node.entries[k], node.labels[k]});
      }
      return;
    }
    for (const auto& c : node.children) self(self, *c);
  };
  walk(walk, *root_);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

int CfTree::height() const {
  int h = 1;
  for (const Node* n = root_.get(); !n->leaf; n = n->children.front().get()) ++h;
  return h;
}

bool CfTree::check_structure() const {
  const int h = height();
  auto check = [&](auto&& self, const Node& node, int depth) -> bool {
    if (static_cast<int>(node.entries.size()) > branching_) return false;
    if (node.leaf) return depth == h;
    for (std::size_t k = 0; k < node.entries.size(); ++k) {
      const CfEntry s = node.children[k]->summary();
      const CfEntry& e = node.entries[k];
      const double scale = 1.0 + std::abs(e.ss);
      if (s.n != e.n || std::abs(s.ss - e.ss) > 1e-9 * scale ||
          (s.ls - e.ls).cwiseAbs().maxCoeff() > 1e-9 * scale) {
        return false;
      }
      if (!self(self, *node.children[k], depth + 1)) return false;
    }
    return true;
  };
  return check(check, *root_, 1);
}

EventDecision nearest_leaf(const std::vector<LeafCluster>& leaves, const Vec& point) {
  if (leaves.empty()) {
    throw NotReady("classification needs at least one cluster");
  }
  std::size_t best = 0;
  double d1 = std::numeric_limits<double>::infinity();
  double d2 = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    const double d = (leaves[k].cf.centroid() - point).norm();
    if (d < d1) {
      d2 = d1;
      d1 = d;
      best = k;
    } else if (d < d2) {
      d2 = d;
    }
  }
  EventDecision out;
  out.label = leaves[best].majority_label();
  out.leaf = leaves[best].id;
  if (!std::isfinite(d2) || d1 == 0.0) {
    out.confidence = 1.0;
  } else {
    out.confidence = (1.0 / d1) / (1.0 / d1 + 1.0 / d2);
  }
  return out;
}

EventDecision classify_event(const DbnStack& dbn, const CfTree& tree, const Vec& reading) {
  if (!dbn.trained) {
    throw NotReady("classify_event: dbn is not trained");
  }
  return nearest_leaf(tree.leaves(), dbn.features(reading));
}

EventBenchmark make_event_benchmark(int n_readings, int n_sensors, std::uint64_t seed) {
  if (n_readings < 2 || n_sensors < 2) {
    throw DomainError("event benchmark: need >= 2 readings and >= 2 sensors");
  }
  Rng rng(seed);
  const RssiModel model;
  std::vector<Vec2> sensors;
  for (int k = 0; k < n_sensors; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / n_sensors;
    sensors.push_back({50.0 + 45.0 * std::cos(angle), 50.0 + 45.0 * std::sin(angle)});
  }
  const Vec2 centre[2] = {{38.0, 50.0}, {62.0, 50.0}};
  EventBenchmark bench;
  bench.readings = Mat(n_readings, n_sensors);
  for (int r = 0; r < n_readings; ++r) {
    const int label = static_cast<int>(rng.index(2));
    const Vec2 src{centre[label].x + rng.normal(0.0, 10.0), centre[label].y + rng.normal(0.0, 10.0)};
    const double offset = rng.normal(0.0, 6.0);  // source power varies per event
    for (int k = 0; k < n_sensors; ++k) {
      const double d = std::max(1.0, euclidean_distance(src, sensors[k]));
      bench.readings(r, k) = model.rssi(d) + offset + rng.normal(0.0, 2.0);
    }
    bench.labels.push_back(label);
  }
  return bench;
}

PipelineResult evaluate_pipelines(const EventBenchmark& bench, const PipelineConfig& cfg,
                                  std::uint64_t split_seed) {
  const Eigen::Index n = bench.readings.rows();
  if (n < 4 || static_cast<std::size_t>(n) != bench.labels.size()) {
    throw DomainError("evaluate_pipelines: malformed benchmark");
  }
  if (cfg.hidden.size() != 3) {
    throw DomainError("evaluate_pipelines: three hidden layer sizes are required");
  }
  Rng rng(split_seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  const auto n_test = static_cast<Eigen::Index>(std::llround(cfg.test_fraction * static_cast<double>(n)));
  const Eigen::Index n_train = n - n_test;
  Mat train(n_train, bench.readings.cols());
  Mat test(n_test, bench.readings.cols());
  std::vector<int> y_train;
  std::vector<int> y_test;
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto src = order[static_cast<std::size_t>(k)];
    if (k < n_train) {
      train.row(k) = bench.readings.row(src);
      y_train.push_back(bench.labels[src]);
    } else {
      test.row(k - n_train) = bench.readings.row(src);
      y_test.push_back(bench.labels[src]);
    }
  }

  std::vector<int> sizes{static_cast<int>(bench.readings.cols())};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  DbnStack dbn = train_dbn(train, sizes, cfg.cd, split_seed);
  dbn = fine_tune(dbn, train, y_train, cfg.fine_tune_lr, cfg.fine_tune_epochs);

  auto error_of = [&](CfTree& tree, const Mat& train_x, const Mat& test_x) {
    for (Eigen::Index r = 0; r < train_x.rows(); ++r) {
      tree.insert(train_x.row(r).transpose(), y_train[static_cast<std::size_t>(r)]);
    }
    const auto leaves = tree.leaves();
    int wrong = 0;
    for (Eigen::Index r = 0; r < test_x.rows(); ++r) {
      if (nearest_leaf(leaves, test_x.row(r).transpose()).label != y_test[static_cast<std::size_t>(r)]) {
        ++wrong;
      }
    }
    return test_x.rows() > 0 ? static_cast<double>(wrong) / static_cast<double>(test_x.rows()) : 0.0;
  };

  PipelineResult out;
  CfTree dbn_tree(cfg.hidden.back(), cfg.dbn_threshold, cfg.branching);
  out.dbn_error = error_of(dbn_tree, dbn.features(train), dbn.features(test));
  out.dbn_leaves = dbn_tree.leaf_count();
  CfTree raw_tree(static_cast<int>(bench.readings.cols()), cfg.raw_threshold, cfg.branching);
  out.birch_error = error_of(raw_tree, dbn.standardize(train), dbn.standardize(test));
  out.birch_leaves = raw_tree.leaf_count();
  return out;
}

namespace {

constexpr char kMagic[8] = {'O', 'L', 'D', 'B', 'N', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int k = 0; k < 8; ++k) buf[k] = static_cast<char>((v >> (8 * k)) & 0xffu);
  out.write(buf, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) {
    throw DomainError("checkpoint: truncated file");
  }
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(buf[k]) << (8 * k);
  return v;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char buf[4];
  for (int k = 0; k < 4; ++k) buf[k] = static_cast<char>((v >> (8 * k)) & 0xffu);
  out.write(buf, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4)) {
    throw DomainError("checkpoint: truncated file");
  }
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(buf[k]) << (8 * k);
  return v;
}

void put_f64(std::ostream& out, double x) { put_u64(out, std::bit_cast<std::uint64_t>(x)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

void put_mat(std::ostream& out, const Mat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
  }
}

Mat get_mat(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = get_f64(in);
  }
  return m;
}

void put_vec(std::ostream& out, const Vec& v) {
  for (Eigen::Index k = 0; k < v.size(); ++k) put_f64(out, v[k]);
}

Vec get_vec(std::istream& in, Eigen::Index n) {
  Vec v(n);
  for (Eigen::Index k = 0; k < n; ++k) v[k] = get_f64(in);
  return v;
}

}  // namespace

void save_checkpoint(const DbnStack& dbn, std::ostream& out) {
  dbn.validate();
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(dbn.layer_sizes.size()));
  for (int s : dbn.layer_sizes) put_u32(out, static_cast<std::uint32_t>(s));
  put_u64(out, dbn.seed);
  put_u32(out, static_cast<std::uint32_t>(dbn.epoch));
  put_u32(out, dbn.trained ? 1u : 0u);
  put_u32(out, static_cast<std::uint32_t>(dbn.n_classes()));
  put_vec(out, dbn.input_mean);
  put_vec(out, dbn.input_scale);
  for (const auto& layer : dbn.layers) {
    put_u32(out, static_cast<std::uint32_t>(layer.visible));
    put_mat(out, layer.W);
    put_vec(out, layer.a);
    put_vec(out, layer.b);
    put_vec(out, layer.sigma2);
  }
  put_mat(out, dbn.readout_W);
  put_vec(out, dbn.readout_b);
  if (!out) {
    throw Error("checkpoint: write failed");
  }
}

DbnStack load_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw DomainError("checkpoint: bad magic");
  }
  if (get_u32(in) != kVersion) {
    throw DomainError("checkpoint: unsupported version");
  }
  DbnStack dbn;
  const std::uint32_t n_sizes = get_u32(in);
  if (n_sizes != 4) {
    throw DomainError("checkpoint: expected four layer sizes");
  }
  for (std::uint32_t k = 0; k < n_sizes; ++k) {
    const std::uint32_t s = get_u32(in);
    if (s == 0 || s > (1u << 20)) {
      throw DomainError("checkpoint: implausible layer size");
    }
    dbn.layer_sizes.push_back(static_cast<int>(s));
  }
  dbn.seed = get_u64(in);
  dbn.epoch = static_cast<int>(get_u32(in));
  dbn.trained = get_u32(in) != 0;
  const auto classes = static_cast<Eigen::Index>(get_u32(in));
  const Eigen::Index d = dbn.layer_sizes[0];
  dbn.input_mean = get_vec(in, d);
  dbn.input_scale = get_vec(in, d);
  for (std::size_t k = 0; k + 1 < dbn.layer_sizes.size(); ++k) {
    RbmLayerParams layer;
    const std::uint32_t kind = get_u32(in);
    if (kind > 1) {
      throw DomainError("checkpoint: unknown visible unit kind");
    }
    layer.visible = static_cast<VisibleKind>(kind);
    const Eigen::Index rows = dbn.layer_sizes[k];
    const Eigen::Index cols = dbn.layer_sizes[k + 1];
    layer.W = get_mat(in, rows, cols);
    layer.a = get_vec(in, cols);
    layer.b = get_vec(in, rows);
    layer.sigma2 = get_vec(in, rows);
    dbn.layers.push_back(std::move(layer));
  }
  dbn.readout_W = get_mat(in, classes, classes > 0 ? dbn.layer_sizes.back() : 0);
  dbn.readout_b = get_vec(in, classes);
  dbn.validate();
  return dbn;
}

void save_checkpoint(const DbnStack& dbn, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("checkpoint: cannot open " + path);
  }
  save_checkpoint(dbn, out);
}

DbnStack load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("checkpoint: cannot open " + path);
  }
  return load_checkpoint(in);
}

}  // namespace optleach
