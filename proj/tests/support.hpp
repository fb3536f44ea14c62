#pragma once

// Shared fixtures and independent reference computations for the test suites.
// Nothing here calls into the library's pooling or scoring code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ced/codebook.hpp"
#include "ced/detector.hpp"
#include "ced/learner.hpp"
#include "ced/synth.hpp"
#include "ced/types.hpp"

namespace ced::testing {

inline RowMatrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double lo = -1.0,
                               double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  RowMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = u(rng);
  }
  return m;
}

inline Vector random_vector(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = u(rng);
  return v;
}

/// Random encoded sequence; each frame is labelled `cls` with probability p_pos.
inline EncodedSequence random_encoded(std::mt19937_64& rng, std::string id, std::size_t F, std::size_t K,
                                      const std::vector<std::string>& classes = {}, double p_pos = 0.3) {
  RowMatrix t = random_matrix(rng, F, K, 0.0, 1.0);
  RowMatrix s = random_matrix(rng, F, K, 0.0, 1.0);
  std::vector<std::string> labels;
  if (!classes.empty()) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, classes.size() - 1);
    for (std::size_t f = 0; f < F; ++f) {
      labels.push_back(u(rng) < p_pos ? classes[pick(rng)] : std::string(kBackground));
    }
  }
  return EncodedSequence::from_codes(std::move(id), std::move(t), std::move(s), std::move(labels), true);
}

/// Mean of rows s..f by explicit summation.
inline Vector naive_mean(const RowMatrix& codes, std::size_t s, std::size_t f) {
  Vector acc = Vector::Zero(codes.cols());
  for (std::size_t t = s; t <= f; ++t) acc += codes.row(static_cast<Eigen::Index>(t)).transpose();
  return acc / static_cast<double>(f - s + 1);
}

inline const RowMatrix& track(const EncodedSequence& enc, Channel c) {
  return c == Channel::Semantic ? enc.semantic_codes : enc.temporal_codes;
}

/// Feature vector of a window for a single channel of a layout, by naive summation.
inline Vector naive_feature(const EncodedSequence& enc, const FeatureLayout& layout, Channel c, std::size_t s,
                            std::size_t f) {
  const auto K = static_cast<Eigen::Index>(enc.code_dim());
  const bool shared = layout.primary != Channel::Joint && layout.secondary != Channel::Joint &&
                      layout.dim(enc.code_dim()) == enc.code_dim();
  if (shared) return naive_mean(track(enc, c), s, f);
  Vector out = Vector::Zero(2 * K);
  if (c == Channel::Joint) {
    out.head(K) = naive_mean(enc.temporal_codes, s, f);
    out.tail(K) = naive_mean(enc.semantic_codes, s, f);
  } else if (c == Channel::Temporal) {
    out.head(K) = naive_mean(enc.temporal_codes, s, f);
  } else {
    out.tail(K) = naive_mean(enc.semantic_codes, s, f);
  }
  return out;
}

/// Frame-wise binary labels, cut frame and target for one class.
struct NaiveView {
  std::vector<double> y;
  std::size_t last = 0;
  double target = -1.0;
};

inline NaiveView naive_view(const EncodedSequence& enc, const std::string& cls) {
  NaiveView v;
  const std::size_t F = enc.frames();
  v.last = F - 1;
  bool found = false;
  for (std::size_t f = 0; f < F; ++f) {
    const bool pos = !enc.labels.empty() && enc.labels[f] == cls;
    v.y.push_back(pos ? 1.0 : -1.0);
    if (pos) {
      v.last = f;
      found = true;
    }
  }
  v.target = found ? 1.0 : -1.0;
  return v;
}

/// One enumerated cutting plane:  w . dpsi >= mu - zeta / delta.
struct NaiveConstraint {
  std::size_t example;
  std::size_t frame;
  double delta;
  double mu;
  Vector dpsi;
};

/// Every admissible constraint of every example, with margins frozen at w_margin.
inline std::vector<NaiveConstraint> enumerate_constraints(const std::vector<EncodedSequence>& data,
                                                          const std::string& cls, const FeatureLayout& layout,
                                                          const Vector& w_margin) {
  std::vector<NaiveConstraint> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto view = naive_view(data[i], cls);
    const Vector psi_l = naive_feature(data[i], layout, layout.primary, 0, view.last);
    for (std::size_t f = 0; f <= view.last; ++f) {
      const double delta = std::abs(view.y[f] - view.target);
      if (delta == 0.0) continue;
      const double yhat = w_margin.dot(naive_feature(data[i], layout, layout.secondary, 0, f));
      const double mu = std::abs(view.y[f] - yhat);
      out.push_back({i, f, delta, mu, psi_l - naive_feature(data[i], layout, layout.primary, 0, f)});
    }
  }
  return out;
}

/// 1/2 |w|^2 + C/n sum_i max(0, max_f delta (mu - w.dpsi)).
inline double naive_objective(const std::vector<NaiveConstraint>& cons, std::size_t n, double C, const Vector& w) {
  std::vector<double> slack(n, 0.0);
  for (const auto& c : cons) slack[c.example] = std::max(slack[c.example], c.delta * (c.mu - w.dot(c.dpsi)));
  double sum = 0.0;
  for (double z : slack) sum += z;
  return 0.5 * w.squaredNorm() + C / static_cast<double>(n) * sum;
}

/// Euclidean projection onto {a >= 0, sum a <= cap}.
inline void project_capped_simplex(std::vector<double>& a, double cap) {
  std::vector<double> clipped(a.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    clipped[i] = std::max(0.0, a[i]);
    sum += clipped[i];
  }
  if (sum <= cap) {
    a = clipped;
    return;
  }
  std::vector<double> u(a);
  std::sort(u.begin(), u.end(), std::greater<>());
  double acc = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    acc += u[j];
    const double t = (acc - cap) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  for (auto& v : a) v = std::max(0.0, v - theta);
}

struct DenseQpResult {
  Vector w;
  double primal = 0.0;
  double dual = 0.0;
  std::size_t iterations = 0;
};

/// Accelerated projected gradient on the dual of the n-slack problem over all
/// enumerated constraints. Returns the primal point w = sum a_j delta_j dpsi_j.
inline DenseQpResult dense_qp(const std::vector<NaiveConstraint>& cons, std::size_t n, double C, std::size_t dim,
                              double tol = 1e-10, std::size_t max_iters = 2000000) {
  const std::size_t m = cons.size();
  DenseQpResult res;
  res.w = Vector::Zero(static_cast<Eigen::Index>(dim));
  if (m == 0) return res;
  Eigen::MatrixXd A(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(m));
  Vector b(static_cast<Eigen::Index>(m));
  for (std::size_t j = 0; j < m; ++j) {
    A.col(static_cast<Eigen::Index>(j)) = cons[j].delta * cons[j].dpsi;
    b(static_cast<Eigen::Index>(j)) = cons[j].delta * cons[j].mu;
  }
  const Eigen::MatrixXd G = A.transpose() * A;
  const double L = std::max(1e-12, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(G).eigenvalues().maxCoeff());
  const double cap = C / static_cast<double>(n);

  std::vector<std::vector<std::size_t>> groups(n);
  for (std::size_t j = 0; j < m; ++j) groups[cons[j].example].push_back(j);
  auto project = [&](Vector& a) {
    for (const auto& g : groups) {
      if (g.empty()) continue;
      std::vector<double> part;
      for (auto j : g) part.push_back(a(static_cast<Eigen::Index>(j)));
      project_capped_simplex(part, cap);
      for (std::size_t q = 0; q < g.size(); ++q) a(static_cast<Eigen::Index>(g[q])) = part[q];
    }
  };
  auto dual_value = [&](const Vector& a) { return b.dot(a) - 0.5 * a.dot(G * a); };

  Vector a = Vector::Zero(static_cast<Eigen::Index>(m));
  Vector z = a;
  double t = 1.0;
  for (std::size_t it = 0; it < max_iters; ++it) {
    Vector next = z + (b - G * z) / L;
    project(next);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    z = next + ((t - 1.0) / t_next) * (next - a);
    // Restart momentum whenever the dual stops increasing.
    if (dual_value(next) < dual_value(a)) {
      z = next;
      t = 1.0;
    } else {
      t = t_next;
    }
    a = next;
    res.iterations = it + 1;
    if ((it + 1) % 100 == 0) {
      const Vector w = A * a;
      const double primal = naive_objective(cons, n, C, w);
      const double dual = dual_value(a);
      if (primal - dual <= tol * std::max(1.0, std::abs(primal))) break;
    }
  }
  res.w = A * a;
  res.primal = naive_objective(cons, n, C, res.w);
  res.dual = dual_value(a);
  return res;
}

/// Labelled train and test splits of a synthetic config, sparse coded.
struct Split {
  SynthConfig cfg;
  std::vector<Sequence> train_raw, test_raw;
  Codebook codebook;
  SemanticVocab vocab;
  std::vector<EncodedSequence> train, test;
};

struct SplitOptions {
  std::size_t n_train = 12;
  std::size_t n_test = 6;
  std::size_t K = 8;
  double lambda = 0.1;
  std::size_t k_sparsity = 2;
  std::uint64_t seed = 1;
  std::size_t jobs = 4;
};

inline Split make_split(SynthConfig cfg, const SplitOptions& o) {
  Split sp;
  cfg.seed = o.seed;
  sp.cfg = cfg;
  sp.train_raw = synth_generate(cfg, o.n_train);
  SynthConfig test_cfg = cfg;
  test_cfg.seed = o.seed + 1000003;
  sp.test_raw = synth_generate(test_cfg, o.n_test);

  KMeansConfig km;
  km.K = o.K;
  km.seed = o.seed * 7 + 1;
  sp.codebook = build_codebook(temporal_samples(sp.train_raw), km, o.lambda, o.jobs);
  VocabConfig vc;
  vc.kmeans = km;
  vc.kmeans.seed = o.seed * 7 + 2;
  vc.k_sparsity = o.k_sparsity;
  sp.vocab = build_vocab(sp.train_raw, synth_embeddings(cfg), vc, o.jobs);
  sp.train = encode_all(sp.train_raw, sp.codebook, &sp.vocab, o.jobs);
  sp.test = encode_all(sp.test_raw, sp.codebook, &sp.vocab, o.jobs);
  return sp;
}

}  // namespace ced::testing
