#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ced/error.hpp"

namespace ced {

/// Reserved label for frames that belong to no event of interest. Never a
/// trainable class; it is what the detector abstains to.
inline constexpr std::string_view kBackground = "BACKGROUND";

using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One frame of a feature stream: the raw temporal descriptor plus an optional
/// semantic payload (caption tokens and/or an aggregated semantic vector).
struct FrameFeatures {
  std::int64_t t = 0;
  Vector temporal;
  std::optional<std::vector<std::string>> words;
  std::optional<Vector> semantic;
  std::optional<std::string> label;

  bool operator==(const FrameFeatures& o) const;
};

struct Sequence {
  std::string id;
  std::size_t temporal_dim = 0;
  std::size_t semantic_dim = 0;
  std::vector<std::string> classes;
  std::vector<FrameFeatures> frames;
  nlohmann::json provenance;  // null unless the producer recorded one

  std::size_t size() const { return frames.size(); }
  bool has_labels() const;
  /// Per-frame labels, BACKGROUND where a frame carries none.
  std::vector<std::string> label_track() const;

  bool operator==(const Sequence&) const = default;
};

struct Violation {
  std::optional<std::size_t> frame;  // unset for sequence-level problems
  std::string field;
  std::string message;
};

/// Checks every Sequence invariant. Returns an empty list iff the sequence is
/// well formed; each entry names the frame (when applicable) and field.
std::vector<Violation> validate_sequence(const Sequence& seq, bool require_semantic = false);

std::string describe(const Violation& v);

/// Error kind a violation is reported under when it aborts an operation.
ErrorCode violation_code(const Violation& v);

/// K centroids (rows) of dimension N for temporal LASSO coding.
struct Codebook {
  RowMatrix centroids;
  double lambda = 0.0;
  std::uint64_t seed = 0;

  std::size_t size() const { return static_cast<std::size_t>(centroids.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(centroids.cols()); }

  /// Throws on K = 0, non-finite entries, negative lambda or duplicate centroids.
  void validate() const;

  bool operator==(const Codebook& o) const {
    return lambda == o.lambda && seed == o.seed && centroids.rows() == o.centroids.rows() &&
           centroids.cols() == o.centroids.cols() && centroids == o.centroids;
  }
};

/// Word vocabulary for k-sparse semantic coding. Atoms are rows, unit-normalized.
struct SemanticVocab {
  RowMatrix atoms;
  std::size_t k_sparsity = 1;
  std::map<std::string, Vector> word_embeddings;

  /// Normalizes the atoms and checks invariants.
  static SemanticVocab create(RowMatrix atoms, std::size_t k_sparsity,
                              std::map<std::string, Vector> word_embeddings);

  std::size_t size() const { return static_cast<std::size_t>(atoms.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(atoms.cols()); }

  bool operator==(const SemanticVocab& o) const {
    return k_sparsity == o.k_sparsity && atoms.rows() == o.atoms.rows() &&
           atoms.cols() == o.atoms.cols() && atoms == o.atoms && word_embeddings == o.word_embeddings;
  }
};

/// Per-frame temporal and semantic codes with cached inclusive prefix sums,
/// so any window mean costs O(K).
struct EncodedSequence {
  std::string id;
  RowMatrix temporal_codes;  // F x K
  RowMatrix semantic_codes;  // F x K, zero when has_semantic is false
  std::vector<std::string> labels;  // empty, or one per frame
  bool has_semantic = false;
  RowMatrix temporal_prefix;  // row f = sum of rows 0..f
  RowMatrix semantic_prefix;

  static EncodedSequence from_codes(std::string id, RowMatrix temporal, RowMatrix semantic,
                                    std::vector<std::string> labels, bool has_semantic);

  std::size_t frames() const { return static_cast<std::size_t>(temporal_codes.rows()); }
  std::size_t code_dim() const { return static_cast<std::size_t>(temporal_codes.cols()); }

  bool operator==(const EncodedSequence& o) const;
};

/// Which code track(s) a feature map reads. Joint concatenates temporal then
/// semantic into a 2K vector.
enum class Channel { Temporal, Semantic, Joint };

std::string_view to_string(Channel c);
Channel channel_from_string(std::string_view s);

/// The primary track feeds the detection score; the secondary track feeds the
/// semantic margin score. When both are single channels the weight vector is
/// K-dimensional and shared; otherwise each channel owns a K-block of a 2K vector.
struct FeatureLayout {
  Channel primary = Channel::Temporal;
  Channel secondary = Channel::Semantic;

  std::size_t dim(std::size_t code_dim) const;
  bool needs_semantic() const;
  bool operator==(const FeatureLayout&) const = default;
};

/// Window mean of a channel over frames [s, f], laid out for `layout`.
/// `out` must have layout.dim(K) entries.
void pool_channel(const EncodedSequence& enc, const FeatureLayout& layout, Channel channel,
                  std::size_t s, std::size_t f, std::span<double> out);

struct ClassModel {
  std::string name;
  Vector weights;
  double bias = 0.0;
  double threshold = 0.0;
  bool converged = true;

  bool operator==(const ClassModel& o) const {
    return name == o.name && weights.size() == o.weights.size() && weights == o.weights &&
           bias == o.bias && threshold == o.threshold && converged == o.converged;
  }
};

/// One-vs-rest linear event detector: one weight vector per class.
struct Model {
  std::vector<ClassModel> classes;
  double C_reg = 1.0;
  FeatureLayout layout;
  std::size_t code_dim = 0;

  const ClassModel& at(std::string_view name) const;  // throws UnknownClass
  ClassModel& at(std::string_view name);
  std::size_t index_of(std::string_view name) const;
  std::vector<std::string> class_names() const;
  std::size_t feature_dim() const { return layout.dim(code_dim); }
  bool converged() const;

  void validate() const;
  bool operator==(const Model&) const = default;
};

struct FrameDecision {
  std::int64_t t = 0;
  std::string label;
  double score = 0.0;
  bool operator==(const FrameDecision&) const = default;
};

struct Segment {
  std::string cls;
  std::size_t start = 0;
  std::size_t end = 0;
  double peak = 0.0;
  bool operator==(const Segment&) const = default;
};

struct DetectionResult {
  std::string id;
  std::vector<FrameDecision> per_frame;
  std::vector<Segment> segments;
  bool operator==(const DetectionResult&) const = default;
};

/// Segment invariants: in range, non-overlapping per class, frames agree with per_frame.
std::vector<std::string> check_detection(const DetectionResult& r);

namespace detail {

inline bool same(const Vector& a, const Vector& b) { return a.size() == b.size() && a == b; }

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline std::span<const double> row(const RowMatrix& m, std::size_t r) {
  return {m.data() + r * static_cast<std::size_t>(m.cols()), static_cast<std::size_t>(m.cols())};
}

inline std::span<const double> span_of(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

/// Mean of a window ending at frame f given inclusive prefix rows: `hi` is
/// P[f], `lo` is P[s-1] or null when s = 0. A one-frame window copies `code_f`.
inline void window_mean(std::span<const double> code_f, std::span<const double> hi, const double* lo,
                        std::size_t len, double* out) {
  const std::size_t K = code_f.size();
  if (len == 1) {
    for (std::size_t k = 0; k < K; ++k) out[k] = code_f[k];
    return;
  }
  const double n = static_cast<double>(len);
  if (lo == nullptr) {
    for (std::size_t k = 0; k < K; ++k) out[k] = hi[k] / n;
  } else {
    for (std::size_t k = 0; k < K; ++k) out[k] = (hi[k] - lo[k]) / n;
  }
}

}  // namespace detail
}  // namespace ced
