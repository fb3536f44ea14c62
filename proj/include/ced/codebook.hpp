#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ced/types.hpp"

namespace ced {

struct KMeansConfig {
  std::size_t K = 16;
  std::size_t max_iters = 100;
  double tol = 1e-6;  // relative distortion improvement
  std::uint64_t seed = 0;
  std::size_t restarts = 3;

  void validate() const;
};

struct KMeansResult {
  RowMatrix centroids;
  double distortion = 0.0;  // sum of squared distances to the assigned centroid
  std::size_t iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding, best of `restarts`.
/// Deterministic for a given seed.
KMeansResult kmeans(const RowMatrix& samples, const KMeansConfig& cfg, std::size_t jobs = 1);

/// Temporal codebook over N-dim descriptors; lambda is the LASSO penalty used by sparse_encode.
Codebook build_codebook(const RowMatrix& samples, const KMeansConfig& cfg, double lambda,
                        std::size_t jobs = 1);

/// Cyclic coordinate descent for  min_e ||x - Q e||^2 + lambda ||e||_1, where
/// the columns of Q are the codebook centroids. Holds the Gram matrix so a
/// codebook can encode many frames cheaply.
class LassoEncoder {
 public:
  explicit LassoEncoder(const Codebook& cb);

  Vector encode(const Vector& x) const;
  std::size_t sweeps_last() const { return sweeps_; }

  static constexpr double kChangeTol = 1e-10;
  static constexpr std::size_t kMaxSweeps = 10000;

 private:
  const Codebook* cb_;
  Eigen::MatrixXd gram_;
  mutable std::size_t sweeps_ = 0;
};

Vector sparse_encode(const Vector& x, const Codebook& cb);

struct OmpTrace {
  std::vector<std::size_t> support;        // in selection order
  std::vector<double> residual_norms;      // ||r|| before the first step and after each step
};

/// Orthogonal matching pursuit: at most k greedy atom selections, each
/// followed by a least-squares refit on the selected support.
Vector omp_encode(const Vector& p, const SemanticVocab& vocab, OmpTrace* trace = nullptr);

struct SentenceVector {
  Vector value;
  std::size_t out_of_vocabulary = 0;
};

/// Mean embedding of the in-vocabulary tokens; zero if none are known.
SentenceVector sentence_vector(std::span<const std::string> words, const SemanticVocab& vocab);
SentenceVector sentence_vector(std::span<const std::string> words, const std::map<std::string, Vector>& table,
                               std::size_t dim);

struct VocabConfig {
  KMeansConfig kmeans;
  std::size_t k_sparsity = 2;
};

/// Semantic atoms by k-means over per-frame sentence vectors (or raw semantic
/// vectors when frames carry no words). All-zero inputs are skipped.
SemanticVocab build_vocab(std::span<const Sequence> seqs, std::map<std::string, Vector> embeddings,
                          const VocabConfig& cfg, std::size_t jobs = 1);

/// Stacks every frame's temporal descriptor into one sample matrix.
RowMatrix temporal_samples(std::span<const Sequence> seqs);

/// Per-frame codes for a sequence. Pass nullptr for `vocab` to skip the semantic track.
EncodedSequence encode_sequence(const Sequence& seq, const Codebook& cb, const SemanticVocab* vocab);

std::vector<EncodedSequence> encode_all(std::span<const Sequence> seqs, const Codebook& cb,
                                        const SemanticVocab* vocab, std::size_t jobs = 1);

Vector pool_temporal(const EncodedSequence& enc, std::size_t s, std::size_t f);
Vector pool_semantic(const EncodedSequence& enc, std::size_t s, std::size_t f);

}  // namespace ced
