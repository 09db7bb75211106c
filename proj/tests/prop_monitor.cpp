#include <numbers>

#include "doctest.h"
#include "support.hpp"

using namespace optleach;
using testing::for_all;

namespace {

Vec hidden_state(unsigned mask, int f) {
  Vec h(f);
  for (int j = 0; j < f; ++j) h[j] = (mask >> j) & 1u;
  return h;
}

Vec random_vec(int n, Rng& rng, double scale = 2.0) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal(0.0, scale);
  return v;
}

// log N(v; mean, diag(sigma2))
double gaussian_log_density(const Vec& v, const Vec& mean, const Vec& sigma2) {
  double out = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double d = v[i] - mean[i];
    out -= 0.5 * d * d / sigma2[i] + 0.5 * std::log(2.0 * std::numbers::pi * sigma2[i]);
  }
  return out;
}

double worst_relative(const Mat& a, const Mat& b, double floor) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max({floor, std::abs(a.data()[i]), std::abs(b.data()[i])});
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]) / scale);
  }
  return worst;
}

}  // namespace

// Both Gibbs conditionals must be the exact conditionals of exp(-E), which
// is the detailed-balance condition of the two-block sampler.
TEST_CASE("property: Gibbs conditionals satisfy detailed balance") {
  for_all(501, [&](Rng& rng, int) {
    const int d = 1 + static_cast<int>(rng.index(3));
    const int f = 1 + static_cast<int>(rng.index(4));
    const RbmLayerParams p = testing::random_rbm(d, f, rng, rng.uniform(0.0, 1.5));
    const Vec v = random_vec(d, rng);

    // hidden side: enumerate h
    std::vector<double> log_w;
    for (unsigned m = 0; m < (1u << f); ++m) log_w.push_back(-rbm_energy(v, hidden_state(m, f), p));
    const double top = *std::max_element(log_w.begin(), log_w.end());
    double z = 0.0;
    Vec marg = Vec::Zero(f);
    for (unsigned m = 0; m < log_w.size(); ++m) {
      const double w = std::exp(log_w[m] - top);
      z += w;
      marg += w * hidden_state(m, f);
    }
    marg /= z;
    const Vec ph = p_h_given_v(v, p);
    for (int j = 0; j < f; ++j) {
      CHECK(ph[j] == doctest::Approx(marg[j]).epsilon(1e-10));
      CHECK(ph[j] >= 0.0);
      CHECK(ph[j] <= 1.0);
    }

    // visible side: log-density ratios equal energy differences
    const Vec h = hidden_state(static_cast<unsigned>(rng.index(1u << f)), f);
    const Vec v2 = random_vec(d, rng);
    const Vec mean = mean_v_given_h(h, p);
    const double lhs = gaussian_log_density(v, mean, p.sigma2) - gaussian_log_density(v2, mean, p.sigma2);
    const double rhs = rbm_energy(v2, h, p) - rbm_energy(v, h, p);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9).scale(1.0));
  });
}

TEST_CASE("property: likelihood gradient matches finite differences") {
  for_all(502, [&](Rng& rng, int) {
    const int d = 1 + static_cast<int>(rng.index(2));
    const int f = 1 + static_cast<int>(rng.index(2));
    const RbmLayerParams p = testing::random_rbm(d, f, rng, 0.5);
    const int rows = 1 + static_cast<int>(rng.index(8));
    Mat batch(rows, d);
    for (int r = 0; r < rows; ++r) batch.row(r) = random_vec(d, rng, 1.5).transpose();

    const Mat g = log_likelihood_grad(batch, p);
    Mat fd(d, f);
    const double step = 1e-5;
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < f; ++j) {
        RbmLayerParams up = p;
        RbmLayerParams down = p;
        up.W(i, j) += step;
        down.W(i, j) -= step;
        fd(i, j) = (log_likelihood(batch, up) - log_likelihood(batch, down)) / (2 * step);
      }
    }
    CHECK(worst_relative(g, fd, 1e-3) < 1e-5);
  });
}

TEST_CASE("property: identical statistics give an exactly zero update") {
  for_all(503, [&](Rng& rng, int) {
    const int d = 1 + static_cast<int>(rng.index(6));
    const int f = 1 + static_cast<int>(rng.index(6));
    RbmStats s{Mat(d, f), random_vec(d, rng), random_vec(f, rng)};
    for (Eigen::Index i = 0; i < s.vh.size(); ++i) s.vh.data()[i] = rng.normal(0.0, 3.0);
    const RbmDelta delta = cd_delta(s, s, rng.uniform(0.0, 10.0));
    CHECK(delta.dW.isZero(0.0));
    CHECK(delta.da.isZero(0.0));
    CHECK(delta.db.isZero(0.0));
  });
}

TEST_CASE("property: clustering features merge additively") {
  for_all(504, [&](Rng& rng, int) {
    const int dim = 1 + static_cast<int>(rng.index(4));
    const int count = 1 + static_cast<int>(rng.index(20));
    std::vector<CfEntry> parts;
    long n = 0;
    Vec ls = Vec::Zero(dim);
    double ss = 0.0;
    for (int k = 0; k < count; ++k) {
      Vec x(dim);
      for (int i = 0; i < dim; ++i) x[i] = static_cast<double>(static_cast<int>(rng.index(41)) - 20);
      parts.push_back(CfEntry::of(x));
      ++n;
      ls += x;
      ss += x.squaredNorm();
    }
    // merge in a random order
    std::shuffle(parts.begin(), parts.end(), rng.engine());
    CfEntry total = parts.front();
    for (std::size_t k = 1; k < parts.size(); ++k) total.merge(parts[k]);
    CHECK(total.n == n);
    CHECK(total.ls == ls);
    CHECK(total.ss == ss);
    const Vec c = total.centroid();
    CHECK(total.ss / n - c.squaredNorm() >= -1e-9);
    CHECK(total.radius() >= 0.0);
  });
}

TEST_CASE("property: CF-trees keep their structure") {
  for_all(505, [&](Rng& rng, int) {
    const int dim = 1 + static_cast<int>(rng.index(3));
    CfTree tree(dim, rng.uniform(0.05, 2.0), 2 + static_cast<int>(rng.index(6)));
    const int count = 1 + static_cast<int>(rng.index(60));
    for (int k = 0; k < count; ++k) {
      const int id = tree.insert(random_vec(dim, rng, 3.0), static_cast<int>(rng.index(3)));
      CHECK(id >= 0);
    }
    CHECK(tree.check_structure());
    const auto leaves = tree.leaves();
    CHECK(static_cast<int>(leaves.size()) == tree.leaf_count());
    long total = 0;
    for (const auto& l : leaves) {
      total += l.cf.n;
      CHECK(l.cf.radius() >= 0.0);
    }
    CHECK(total == count);
  });
}

TEST_CASE("property: topic counts always match the assignments") {
  for_all(506, [&](Rng& rng, int) {
    const int topics = 1 + static_cast<int>(rng.index(5));
    const int features = 1 + static_cast<int>(rng.index(6));
    const int rows = 1 + static_cast<int>(rng.index(6));
    std::vector<TopicItem> items;
    const int n_items = 1 + static_cast<int>(rng.index(25));
    for (int k = 0; k < n_items; ++k) {
      items.push_back({static_cast<int>(rng.index(static_cast<std::size_t>(features))),
                       static_cast<int>(rng.index(static_cast<std::size_t>(rows)))});
    }
    TopicState s = TopicState::create(topics, rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0), items,
                                      features, rows, rng);
    const int sweeps = 1 + static_cast<int>(rng.index(3));
    for (int sweep = 0; sweep < sweeps; ++sweep) {
      for (int j = 0; j < n_items; ++j) {
        const auto probs = topic_probabilities(j, s);
        double sum = 0.0;
        for (double x : probs) {
          CHECK(x >= 0.0);
          sum += x;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
        const int t = topic_sample(j, s, rng);
        CHECK(t >= 0);
        CHECK(t < topics);
        CHECK(s.z[j] == t);
      }
    }
    std::vector<std::vector<int>> feature;
    std::vector<std::vector<int>> row;
    s.recount(feature, row);
    CHECK(feature == s.n_feature);
    CHECK(row == s.n_row);
  });
}
