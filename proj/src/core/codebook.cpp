#include "ced/codebook.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "ced/error.hpp"
#include "parallel.hpp"

namespace ced {

void KMeansConfig::validate() const {
  if (K < 1) fail(ErrorCode::InvalidConfig, "k-means K must be >= 1");
  if (max_iters < 1) fail(ErrorCode::InvalidConfig, "k-means max_iters must be >= 1");
  if (!(tol > 0.0)) fail(ErrorCode::InvalidConfig, "k-means tol must be > 0");
  if (restarts < 1) fail(ErrorCode::InvalidConfig, "k-means restarts must be >= 1");
}

namespace {

using Index = Eigen::Index;

double sq_dist(const RowMatrix& a, Index i, const RowMatrix& b, Index j) {
  double acc = 0.0;
  for (Index c = 0; c < a.cols(); ++c) {
    const double d = a(i, c) - b(j, c);
    acc += d * d;
  }
  return acc;
}

std::size_t distinct_rows(const RowMatrix& m) {
  std::set<std::vector<double>> rows;
  for (Index r = 0; r < m.rows(); ++r) {
    rows.emplace(m.row(r).data(), m.row(r).data() + m.cols());
  }
  return rows.size();
}

struct Assignment {
  std::vector<std::size_t> label;
  std::vector<double> dist;  // squared distance to the assigned centroid
  double distortion = 0.0;
};

// Nearest centroid per sample, ties to the lower index. Distortion is summed
// serially so the result does not depend on `jobs`.
Assignment assign(const RowMatrix& samples, const RowMatrix& centroids, std::size_t jobs) {
  const auto n = static_cast<std::size_t>(samples.rows());
  Assignment a;
  a.label.assign(n, 0);
  a.dist.assign(n, 0.0);
  constexpr std::size_t kChunk = 256;
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  detail::parallel_for(chunks, jobs, [&](std::size_t c) {
    const std::size_t end = std::min(n, (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (Index k = 0; k < centroids.rows(); ++k) {
        const double d = sq_dist(samples, static_cast<Index>(i), centroids, k);
        if (d < best) {
          best = d;
          arg = static_cast<std::size_t>(k);
        }
      }
      a.label[i] = arg;
      a.dist[i] = best;
    }
  });
  for (double d : a.dist) a.distortion += d;
  return a;
}

RowMatrix seed_plus_plus(const RowMatrix& samples, std::size_t K, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(samples.rows());
  RowMatrix centroids(static_cast<Index>(K), samples.cols());
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  centroids.row(0) = samples.row(static_cast<Index>(pick(rng)));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(samples, static_cast<Index>(i), centroids, 0);
  for (std::size_t k = 1; k < K; ++k) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t chosen = n - 1;
    if (total > 0.0) {
      const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (d2[i] > 0.0 && acc >= u) {
          chosen = i;
          break;
        }
      }
      // Rounding can leave acc just short of u; fall back to the last positive-weight sample.
      if (d2[chosen] == 0.0) {
        for (std::size_t i = n; i-- > 0;) {
          if (d2[i] > 0.0) {
            chosen = i;
            break;
          }
        }
      }
    }
    centroids.row(static_cast<Index>(k)) = samples.row(static_cast<Index>(chosen));
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(samples, static_cast<Index>(i), centroids, static_cast<Index>(k)));
    }
  }
  return centroids;
}

// Moves each empty (or duplicated) centroid onto the sample farthest from its
// current centroid; each repair consumes a distinct sample.
void repair(const RowMatrix& samples, RowMatrix& centroids, Assignment& a,
            const std::vector<std::size_t>& broken) {
  std::vector<bool> used(a.dist.size(), false);
  for (std::size_t k : broken) {
    std::size_t far = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < a.dist.size(); ++i) {
      if (!used[i] && a.dist[i] > best) {
        best = a.dist[i];
        far = i;
      }
    }
    used[far] = true;
    centroids.row(static_cast<Index>(k)) = samples.row(static_cast<Index>(far));
    a.dist[far] = 0.0;
    a.label[far] = k;
  }
}

std::vector<std::size_t> duplicate_centroids(const RowMatrix& centroids) {
  std::vector<std::size_t> dup;
  for (Index j = 1; j < centroids.rows(); ++j) {
    for (Index i = 0; i < j; ++i) {
      if (sq_dist(centroids, i, centroids, j) == 0.0) {
        dup.push_back(static_cast<std::size_t>(j));
        break;
      }
    }
  }
  return dup;
}

KMeansResult lloyd(const RowMatrix& samples, RowMatrix centroids, const KMeansConfig& cfg, std::size_t jobs) {
  const auto K = static_cast<std::size_t>(centroids.rows());
  double prev = std::numeric_limits<double>::infinity();
  std::size_t it = 0;
  for (; it < cfg.max_iters; ++it) {
    Assignment a = assign(samples, centroids, jobs);
    if (std::isfinite(prev) && prev - a.distortion <= cfg.tol * prev) break;
    if (a.distortion == 0.0) break;
    prev = a.distortion;

    RowMatrix sums = RowMatrix::Zero(centroids.rows(), centroids.cols());
    std::vector<std::size_t> counts(K, 0);
    for (std::size_t i = 0; i < a.label.size(); ++i) {
      sums.row(static_cast<Index>(a.label[i])) += samples.row(static_cast<Index>(i));
      ++counts[a.label[i]];
    }
    std::vector<std::size_t> empty;
    for (std::size_t k = 0; k < K; ++k) {
      if (counts[k] == 0) {
        empty.push_back(k);
      } else {
        centroids.row(static_cast<Index>(k)) = sums.row(static_cast<Index>(k)) / static_cast<double>(counts[k]);
      }
    }
    if (!empty.empty()) repair(samples, centroids, a, empty);
  }
  Assignment final_a = assign(samples, centroids, jobs);
  if (auto dup = duplicate_centroids(centroids); !dup.empty()) {
    repair(samples, centroids, final_a, dup);
    final_a = assign(samples, centroids, jobs);
  }
  return {std::move(centroids), final_a.distortion, it};
}

}  // namespace

KMeansResult kmeans(const RowMatrix& samples, const KMeansConfig& cfg, std::size_t jobs) {
  cfg.validate();
  if (!samples.allFinite()) fail(ErrorCode::NonFiniteInput, "k-means samples contain non-finite values");
  if (static_cast<std::size_t>(samples.rows()) < cfg.K) {
    fail(ErrorCode::FewerSamplesThanK, std::to_string(samples.rows()) + " samples for K = " + std::to_string(cfg.K));
  }
  if (distinct_rows(samples) < cfg.K) {
    fail(ErrorCode::FewerSamplesThanK, "only " + std::to_string(distinct_rows(samples)) +
                                           " distinct samples for K = " + std::to_string(cfg.K));
  }
  KMeansResult best;
  best.distortion = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    std::mt19937_64 rng(cfg.seed + 0x9E3779B97F4A7C15ULL * (r + 1));
    auto result = lloyd(samples, seed_plus_plus(samples, cfg.K, rng), cfg, jobs);
    if (result.distortion < best.distortion) best = std::move(result);
  }
  return best;
}

Codebook build_codebook(const RowMatrix& samples, const KMeansConfig& cfg, double lambda, std::size_t jobs) {
  Codebook cb;
  cb.centroids = kmeans(samples, cfg, jobs).centroids;
  cb.lambda = lambda;
  cb.seed = cfg.seed;
  cb.validate();
  return cb;
}

LassoEncoder::LassoEncoder(const Codebook& cb) : cb_(&cb) {
  cb.validate();
  gram_ = cb.centroids * cb.centroids.transpose();
}

Vector LassoEncoder::encode(const Vector& x) const {
  const auto& Q = cb_->centroids;
  if (x.size() != Q.cols()) {
    fail(ErrorCode::DimensionMismatch, "descriptor has dimension " + std::to_string(x.size()) +
                                           ", codebook expects " + std::to_string(Q.cols()));
  }
  if (!x.allFinite()) fail(ErrorCode::NonFiniteInput, "descriptor contains non-finite values");
  const Index K = Q.rows();
  const Vector c = Q * x;  // Q^T x with centroids as columns of Q
  const double half_lambda = cb_->lambda / 2.0;
  Vector e = Vector::Zero(K);
  Vector g = Vector::Zero(K);  // G e
  sweeps_ = 0;
  while (sweeps_ < kMaxSweeps) {
    ++sweeps_;
    double max_change = 0.0;
    for (Index j = 0; j < K; ++j) {
      const double gjj = gram_(j, j);
      double next = 0.0;
      if (gjj > 0.0) {
        const double rho = c[j] - g[j] + gjj * e[j];
        const double shrunk = std::abs(rho) > half_lambda ? rho - std::copysign(half_lambda, rho) : 0.0;
        next = shrunk / gjj;
      }
      const double delta = next - e[j];
      if (delta != 0.0) {
        e[j] = next;
        g += gram_.col(j) * delta;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    if (max_change < kChangeTol) break;
  }
  return e;
}

Vector sparse_encode(const Vector& x, const Codebook& cb) { return LassoEncoder(cb).encode(x); }

Vector omp_encode(const Vector& p, const SemanticVocab& vocab, OmpTrace* trace) {
  const auto& C = vocab.atoms;
  if (p.size() != C.cols()) {
    fail(ErrorCode::DimensionMismatch, "semantic vector has dimension " + std::to_string(p.size()) +
                                           ", vocabulary expects " + std::to_string(C.cols()));
  }
  if (!p.allFinite()) fail(ErrorCode::NonFiniteInput, "semantic vector contains non-finite values");
  const Index K = C.rows();
  Vector b = Vector::Zero(K);
  Vector r = p;
  std::vector<Index> support;
  std::vector<bool> chosen(static_cast<std::size_t>(K), false);
  if (trace) {
    trace->support.clear();
    trace->residual_norms = {r.norm()};
  }
  for (std::size_t step = 0; step < vocab.k_sparsity; ++step) {
    if (r.norm() < 1e-9) break;
    const Vector corr = C * r;
    Index best = -1;
    double best_abs = 0.0;
    for (Index j = 0; j < K; ++j) {
      if (!chosen[static_cast<std::size_t>(j)] && std::abs(corr[j]) > best_abs) {
        best_abs = std::abs(corr[j]);
        best = j;
      }
    }
    if (best < 0) break;  // residual orthogonal to every remaining atom
    chosen[static_cast<std::size_t>(best)] = true;
    support.push_back(best);

    Eigen::MatrixXd A(C.cols(), static_cast<Index>(support.size()));
    for (std::size_t s = 0; s < support.size(); ++s) A.col(static_cast<Index>(s)) = C.row(support[s]).transpose();
    const Vector coef = A.colPivHouseholderQr().solve(p);
    b.setZero();
    for (std::size_t s = 0; s < support.size(); ++s) b[support[s]] = coef[static_cast<Index>(s)];
    r = p - A * coef;
    if (trace) {
      trace->support.push_back(static_cast<std::size_t>(best));
      trace->residual_norms.push_back(r.norm());
    }
  }
  return b;
}

SentenceVector sentence_vector(std::span<const std::string> words, const SemanticVocab& vocab) {
  return sentence_vector(words, vocab.word_embeddings, vocab.dim());
}

SentenceVector sentence_vector(std::span<const std::string> words, const std::map<std::string, Vector>& table,
                               std::size_t dim) {
  SentenceVector out{Vector::Zero(static_cast<Index>(dim)), 0};
  std::size_t known = 0;
  for (const auto& w : words) {
    auto it = table.find(w);
    if (it == table.end()) {
      ++out.out_of_vocabulary;
      continue;
    }
    out.value += it->second;
    ++known;
  }
  if (known > 0) out.value /= static_cast<double>(known);
  return out;
}

RowMatrix temporal_samples(std::span<const Sequence> seqs) {
  std::size_t total = 0;
  std::size_t dim = 0;
  for (const auto& s : seqs) {
    total += s.frames.size();
    if (!s.frames.empty()) dim = static_cast<std::size_t>(s.frames.front().temporal.size());
  }
  RowMatrix out(static_cast<Index>(total), static_cast<Index>(dim));
  Index r = 0;
  for (const auto& s : seqs) {
    for (std::size_t f = 0; f < s.frames.size(); ++f) {
      const auto& v = s.frames[f].temporal;
      if (static_cast<std::size_t>(v.size()) != dim) {
        fail(ErrorCode::DimensionMismatch, "sequence '" + s.id + "' frame " + std::to_string(f) +
                                               ": temporal dimension " + std::to_string(v.size()) +
                                               " != " + std::to_string(dim));
      }
      out.row(r++) = v.transpose();
    }
  }
  return out;
}

SemanticVocab build_vocab(std::span<const Sequence> seqs, std::map<std::string, Vector> embeddings,
                          const VocabConfig& cfg, std::size_t jobs) {
  std::size_t dim = 0;
  if (!embeddings.empty()) dim = static_cast<std::size_t>(embeddings.begin()->second.size());
  std::vector<Vector> samples;
  for (const auto& s : seqs) {
    for (std::size_t f = 0; f < s.frames.size(); ++f) {
      const auto& fr = s.frames[f];
      Vector v;
      if (fr.words) {
        if (embeddings.empty()) {
          fail(ErrorCode::InvalidConfig, "frames carry words but no embedding table was given");
        }
        v = sentence_vector(*fr.words, embeddings, dim).value;
      } else if (fr.semantic) {
        v = *fr.semantic;
      } else {
        fail(ErrorCode::MissingWords, "sequence '" + s.id + "' frame " + std::to_string(f) +
                                          " has no semantic payload");
      }
      if (dim == 0) dim = static_cast<std::size_t>(v.size());
      if (static_cast<std::size_t>(v.size()) != dim) {
        fail(ErrorCode::DimensionMismatch, "sequence '" + s.id + "' frame " + std::to_string(f) +
                                               ": semantic dimension " + std::to_string(v.size()) +
                                               " != " + std::to_string(dim));
      }
      if (v.squaredNorm() > 0.0) samples.push_back(std::move(v));
    }
  }
  RowMatrix m(static_cast<Index>(samples.size()), static_cast<Index>(dim));
  for (std::size_t i = 0; i < samples.size(); ++i) m.row(static_cast<Index>(i)) = samples[i].transpose();
  auto km = kmeans(m, cfg.kmeans, jobs);
  return SemanticVocab::create(std::move(km.centroids), cfg.k_sparsity, std::move(embeddings));
}

EncodedSequence encode_sequence(const Sequence& seq, const Codebook& cb, const SemanticVocab* vocab) {
  const auto violations = validate_sequence(seq, vocab != nullptr);
  if (!violations.empty()) {
    const auto& v = violations.front();
    fail(violation_code(v), "sequence '" + seq.id + "': " + describe(v));
  }
  if (seq.temporal_dim != cb.dim()) {
    fail(ErrorCode::DimensionMismatch, "sequence '" + seq.id + "' temporal_dim " +
                                           std::to_string(seq.temporal_dim) + " != codebook dimension " +
                                           std::to_string(cb.dim()));
  }
  if (vocab && vocab->size() != cb.size()) {
    fail(ErrorCode::DimensionMismatch, "semantic vocabulary size " + std::to_string(vocab->size()) +
                                           " must equal codebook size " + std::to_string(cb.size()));
  }
  const auto F = static_cast<Index>(seq.frames.size());
  const auto K = static_cast<Index>(cb.size());
  RowMatrix temporal(F, K);
  RowMatrix semantic = RowMatrix::Zero(F, K);
  const LassoEncoder lasso(cb);
  for (Index f = 0; f < F; ++f) {
    const auto& fr = seq.frames[static_cast<std::size_t>(f)];
    temporal.row(f) = lasso.encode(fr.temporal).transpose();
    if (vocab) {
      try {
        const Vector p = fr.words ? sentence_vector(*fr.words, *vocab).value : *fr.semantic;
        semantic.row(f) = omp_encode(p, *vocab).transpose();
      } catch (const Error& e) {
        fail(e.code(), "sequence '" + seq.id + "' frame " + std::to_string(f) + ": " + e.what());
      }
    }
  }
  return EncodedSequence::from_codes(seq.id, std::move(temporal), std::move(semantic),
                                     seq.has_labels() ? seq.label_track() : std::vector<std::string>{},
                                     vocab != nullptr);
}

std::vector<EncodedSequence> encode_all(std::span<const Sequence> seqs, const Codebook& cb,
                                        const SemanticVocab* vocab, std::size_t jobs) {
  std::vector<EncodedSequence> out(seqs.size());
  detail::parallel_for(seqs.size(), jobs, [&](std::size_t i) { out[i] = encode_sequence(seqs[i], cb, vocab); });
  return out;
}

Vector pool_temporal(const EncodedSequence& enc, std::size_t s, std::size_t f) {
  Vector out(static_cast<Index>(enc.code_dim()));
  pool_channel(enc, FeatureLayout{Channel::Temporal, Channel::Temporal}, Channel::Temporal, s, f,
               {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

Vector pool_semantic(const EncodedSequence& enc, std::size_t s, std::size_t f) {
  Vector out(static_cast<Index>(enc.code_dim()));
  pool_channel(enc, FeatureLayout{Channel::Semantic, Channel::Semantic}, Channel::Semantic, s, f,
               {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

}  // namespace ced
