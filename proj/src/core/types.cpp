#include "ced/types.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "ced/error.hpp"

namespace ced {

bool FrameFeatures::operator==(const FrameFeatures& o) const {
  if (t != o.t || !detail::same(temporal, o.temporal) || words != o.words || label != o.label) return false;
  if (semantic.has_value() != o.semantic.has_value()) return false;
  return !semantic || detail::same(*semantic, *o.semantic);
}

bool Sequence::has_labels() const {
  return std::any_of(frames.begin(), frames.end(), [](const auto& fr) { return fr.label.has_value(); });
}

std::vector<std::string> Sequence::label_track() const {
  std::vector<std::string> out;
  out.reserve(frames.size());
  for (const auto& fr : frames) out.push_back(fr.label.value_or(std::string(kBackground)));
  return out;
}

namespace {

bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace

ErrorCode violation_code(const Violation& v) {
  if (v.field == "words") return ErrorCode::MissingWords;
  if (v.field == "temporal" || v.field == "semantic") {
    return v.message.rfind("non-finite", 0) == 0 ? ErrorCode::NonFiniteInput : ErrorCode::DimensionMismatch;
  }
  if (v.field == "label track") return ErrorCode::LengthMismatch;
  if (v.field == "frames") return ErrorCode::LengthMismatch;
  return ErrorCode::ParseError;
}

std::vector<Violation> validate_sequence(const Sequence& seq, bool require_semantic) {
  std::vector<Violation> out;
  if (seq.frames.empty()) out.push_back({std::nullopt, "frames", "sequence has no frames"});

  std::size_t labelled = 0;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const auto& fr = seq.frames[i];
    if (static_cast<std::size_t>(fr.temporal.size()) != seq.temporal_dim) {
      out.push_back({i, "temporal",
                     "temporal dimension " + std::to_string(fr.temporal.size()) + " != header temporal_dim " +
                         std::to_string(seq.temporal_dim)});
    } else if (!all_finite(fr.temporal)) {
      out.push_back({i, "temporal", "non-finite temporal value"});
    }
    if (fr.semantic) {
      if (static_cast<std::size_t>(fr.semantic->size()) != seq.semantic_dim) {
        out.push_back({i, "semantic",
                       "semantic dimension " + std::to_string(fr.semantic->size()) +
                           " != header semantic_dim " + std::to_string(seq.semantic_dim)});
      } else if (!all_finite(*fr.semantic)) {
        out.push_back({i, "semantic", "non-finite semantic value"});
      }
    }
    if (require_semantic && !fr.words && !fr.semantic) {
      out.push_back({i, "words", "frame carries neither words nor a semantic vector"});
    }
    if (i > 0 && fr.t <= seq.frames[i - 1].t) {
      out.push_back({i, "t", "frame index " + std::to_string(fr.t) + " does not increase"});
    }
    if (fr.label) {
      ++labelled;
      if (fr.label->empty()) out.push_back({i, "label", "empty label"});
    }
  }
  if (labelled != 0 && labelled != seq.frames.size()) {
    out.push_back({std::nullopt, "label track",
                   "label track covers " + std::to_string(labelled) + " of " +
                       std::to_string(seq.frames.size()) + " frames"});
  }
  std::set<std::string> seen;
  for (const auto& c : seq.classes) {
    if (c == kBackground) out.push_back({std::nullopt, "classes", "BACKGROUND is reserved"});
    if (!seen.insert(c).second) out.push_back({std::nullopt, "classes", "duplicate class " + c});
  }
  return out;
}

std::string describe(const Violation& v) {
  std::ostringstream os;
  if (v.frame) os << "frame " << *v.frame << ": ";
  os << v.field << ": " << v.message;
  return os.str();
}

void Codebook::validate() const {
  if (centroids.rows() == 0 || centroids.cols() == 0) fail(ErrorCode::InvalidConfig, "codebook is empty");
  if (!centroids.allFinite()) fail(ErrorCode::NonFiniteInput, "codebook has non-finite centroids");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail(ErrorCode::InvalidConfig, "lambda must be >= 0");
  for (Eigen::Index i = 0; i < centroids.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < centroids.rows(); ++j) {
      if ((centroids.row(i) - centroids.row(j)).squaredNorm() == 0.0) {
        fail(ErrorCode::InvalidConfig,
             "duplicate centroids " + std::to_string(i) + " and " + std::to_string(j));
      }
    }
  }
}

SemanticVocab SemanticVocab::create(RowMatrix atoms, std::size_t k_sparsity,
                                    std::map<std::string, Vector> word_embeddings) {
  if (atoms.rows() == 0 || atoms.cols() == 0) fail(ErrorCode::InvalidConfig, "vocabulary has no atoms");
  if (!atoms.allFinite()) fail(ErrorCode::NonFiniteInput, "vocabulary has non-finite atoms");
  if (k_sparsity < 1 || k_sparsity > static_cast<std::size_t>(atoms.rows())) {
    fail(ErrorCode::InvalidConfig, "k_sparsity must lie in [1, K]");
  }
  for (Eigen::Index i = 0; i < atoms.rows(); ++i) {
    const double n = atoms.row(i).norm();
    if (!(n > 0.0)) fail(ErrorCode::InvalidConfig, "vocabulary atom " + std::to_string(i) + " has zero norm");
    atoms.row(i) /= n;
  }
  for (const auto& [word, vec] : word_embeddings) {
    if (vec.size() != atoms.cols()) {
      fail(ErrorCode::DimensionMismatch, "embedding for '" + word + "' has dimension " +
                                             std::to_string(vec.size()) + ", atoms have " +
                                             std::to_string(atoms.cols()));
    }
    if (!vec.allFinite()) fail(ErrorCode::NonFiniteInput, "embedding for '" + word + "' is not finite");
  }
  SemanticVocab v;
  v.atoms = std::move(atoms);
  v.k_sparsity = k_sparsity;
  v.word_embeddings = std::move(word_embeddings);
  return v;
}

namespace {

RowMatrix prefix_sums(const RowMatrix& codes) {
  RowMatrix p(codes.rows(), codes.cols());
  const auto K = static_cast<std::size_t>(codes.cols());
  for (Eigen::Index f = 0; f < codes.rows(); ++f) {
    for (std::size_t k = 0; k < K; ++k) {
      const double prev = f == 0 ? 0.0 : p(f - 1, static_cast<Eigen::Index>(k));
      p(f, static_cast<Eigen::Index>(k)) = prev + codes(f, static_cast<Eigen::Index>(k));
    }
  }
  return p;
}

bool same_matrix(const RowMatrix& a, const RowMatrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

}  // namespace

EncodedSequence EncodedSequence::from_codes(std::string id, RowMatrix temporal, RowMatrix semantic,
                                            std::vector<std::string> labels, bool has_semantic) {
  if (temporal.rows() == 0) fail(ErrorCode::LengthMismatch, "encoded sequence '" + id + "' has no frames");
  if (semantic.rows() != temporal.rows() || semantic.cols() != temporal.cols()) {
    fail(ErrorCode::DimensionMismatch, "semantic and temporal code tracks differ in shape");
  }
  if (!labels.empty() && labels.size() != static_cast<std::size_t>(temporal.rows())) {
    fail(ErrorCode::LengthMismatch, "label track length " + std::to_string(labels.size()) +
                                        " != frame count " + std::to_string(temporal.rows()));
  }
  EncodedSequence e;
  e.id = std::move(id);
  e.temporal_prefix = prefix_sums(temporal);
  e.semantic_prefix = prefix_sums(semantic);
  e.temporal_codes = std::move(temporal);
  e.semantic_codes = std::move(semantic);
  e.labels = std::move(labels);
  e.has_semantic = has_semantic;
  return e;
}

bool EncodedSequence::operator==(const EncodedSequence& o) const {
  return id == o.id && labels == o.labels && has_semantic == o.has_semantic &&
         same_matrix(temporal_codes, o.temporal_codes) && same_matrix(semantic_codes, o.semantic_codes) &&
         same_matrix(temporal_prefix, o.temporal_prefix) && same_matrix(semantic_prefix, o.semantic_prefix);
}

std::string_view to_string(Channel c) {
  switch (c) {
    case Channel::Temporal: return "temporal";
    case Channel::Semantic: return "semantic";
    case Channel::Joint: return "joint";
  }
  return "temporal";
}

Channel channel_from_string(std::string_view s) {
  if (s == "temporal") return Channel::Temporal;
  if (s == "semantic") return Channel::Semantic;
  if (s == "joint") return Channel::Joint;
  fail(ErrorCode::InvalidConfig, "unknown channel '" + std::string(s) + "' (temporal|semantic|joint)");
}

std::size_t FeatureLayout::dim(std::size_t code_dim) const {
  const bool single = primary != Channel::Joint && secondary != Channel::Joint;
  return single ? code_dim : 2 * code_dim;
}

bool FeatureLayout::needs_semantic() const {
  return primary != Channel::Temporal || secondary != Channel::Temporal;
}

namespace {

void window_mean(const RowMatrix& codes, const RowMatrix& prefix, std::size_t s, std::size_t f,
                 double* out) {
  detail::window_mean(detail::row(codes, f), detail::row(prefix, f),
                      s == 0 ? nullptr : detail::row(prefix, s - 1).data(), f - s + 1, out);
}

}  // namespace

void pool_channel(const EncodedSequence& enc, const FeatureLayout& layout, Channel channel,
                  std::size_t s, std::size_t f, std::span<double> out) {
  const std::size_t K = enc.code_dim();
  if (s > f || f >= enc.frames()) {
    fail(ErrorCode::IndexOutOfRange, "window [" + std::to_string(s) + ", " + std::to_string(f) +
                                         "] outside sequence of " + std::to_string(enc.frames()) + " frames");
  }
  if (out.size() != layout.dim(K)) fail(ErrorCode::DimensionMismatch, "pooling buffer has wrong size");
  if (channel != Channel::Temporal && !enc.has_semantic) {
    fail(ErrorCode::DimensionMismatch, "sequence '" + enc.id + "' was encoded without semantic codes");
  }
  const bool split = out.size() == 2 * K;
  std::fill(out.begin(), out.end(), 0.0);
  switch (channel) {
    case Channel::Temporal:
      window_mean(enc.temporal_codes, enc.temporal_prefix, s, f, out.data());
      break;
    case Channel::Semantic:
      window_mean(enc.semantic_codes, enc.semantic_prefix, s, f, out.data() + (split ? K : 0));
      break;
    case Channel::Joint:
      window_mean(enc.temporal_codes, enc.temporal_prefix, s, f, out.data());
      window_mean(enc.semantic_codes, enc.semantic_prefix, s, f, out.data() + K);
      break;
  }
}

const ClassModel& Model::at(std::string_view name) const { return classes[index_of(name)]; }

ClassModel& Model::at(std::string_view name) { return classes[index_of(name)]; }

std::size_t Model::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i].name == name) return i;
  }
  fail(ErrorCode::UnknownClass, "model has no class '" + std::string(name) + "'");
}

std::vector<std::string> Model::class_names() const {
  std::vector<std::string> out;
  for (const auto& c : classes) out.push_back(c.name);
  return out;
}

bool Model::converged() const {
  return std::all_of(classes.begin(), classes.end(), [](const auto& c) { return c.converged; });
}

void Model::validate() const {
  if (classes.empty()) fail(ErrorCode::InvalidConfig, "model has no classes");
  if (code_dim == 0) fail(ErrorCode::InvalidConfig, "model code dimension is zero");
  std::set<std::string> seen;
  for (const auto& c : classes) {
    if (c.name == kBackground) fail(ErrorCode::InvalidConfig, "BACKGROUND cannot be a model class");
    if (!seen.insert(c.name).second) fail(ErrorCode::InvalidConfig, "duplicate class " + c.name);
    if (static_cast<std::size_t>(c.weights.size()) != feature_dim()) {
      fail(ErrorCode::DimensionMismatch, "class " + c.name + " weight dimension " +
                                             std::to_string(c.weights.size()) + " != " +
                                             std::to_string(feature_dim()));
    }
    if (!c.weights.allFinite() || !std::isfinite(c.bias) || !std::isfinite(c.threshold)) {
      fail(ErrorCode::NonFiniteInput, "class " + c.name + " has non-finite parameters");
    }
  }
}

std::vector<std::string> check_detection(const DetectionResult& r) {
  std::vector<std::string> problems;
  const std::size_t F = r.per_frame.size();
  std::map<std::string, std::size_t> last_end;
  for (const auto& seg : r.segments) {
    if (seg.start > seg.end || seg.end >= F) {
      problems.push_back("segment " + seg.cls + " [" + std::to_string(seg.start) + ", " +
                         std::to_string(seg.end) + "] out of range");
      continue;
    }
    auto it = last_end.find(seg.cls);
    if (it != last_end.end() && seg.start <= it->second) {
      problems.push_back("segments of " + seg.cls + " overlap at " + std::to_string(seg.start));
    }
    last_end[seg.cls] = seg.end;
    for (std::size_t f = seg.start; f <= seg.end; ++f) {
      if (r.per_frame[f].label != seg.cls) {
        problems.push_back("frame " + std::to_string(f) + " inside segment " + seg.cls + " labeled " +
                           r.per_frame[f].label);
        break;
      }
    }
  }
  return problems;
}

}  // namespace ced
