#include "ced/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ced/error.hpp"
#include "parallel.hpp"

namespace ced {

void DetectConfig::validate() const {
  if (max_window < 1) fail(ErrorCode::InvalidConfig, "max_window must be >= 1");
  if (stride < 1) fail(ErrorCode::InvalidConfig, "stride must be >= 1");
  if (hysteresis < 1) fail(ErrorCode::InvalidConfig, "hysteresis must be >= 1");
  for (const auto& [cls, thr] : thresholds) {
    if (std::isnan(thr)) fail(ErrorCode::InvalidConfig, "threshold for '" + cls + "' is NaN");
  }
}

nlohmann::json to_json(const DetectConfig& cfg) {
  return {{"max_window", cfg.max_window},
          {"stride", cfg.stride},
          {"hysteresis", cfg.hysteresis},
          {"thresholds", cfg.thresholds}};
}

DetectConfig detect_config_from_json(const nlohmann::json& j, DetectConfig cfg) {
  try {
    cfg.max_window = j.value("max_window", cfg.max_window);
    cfg.stride = j.value("stride", cfg.stride);
    cfg.hysteresis = j.value("hysteresis", cfg.hysteresis);
    if (j.contains("thresholds")) cfg.thresholds = j.at("thresholds").get<std::map<std::string, double>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("detect config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::vector<double> effective_thresholds(const Model& model, const DetectConfig& cfg) {
  std::vector<double> out;
  for (const auto& c : model.classes) out.push_back(c.threshold);
  for (const auto& [cls, thr] : cfg.thresholds) out[model.index_of(cls)] = thr;
  return out;
}

namespace {

// Row-major code track and its inclusive prefix sums.
struct Track {
  const double* codes = nullptr;
  const double* prefix = nullptr;
  std::size_t K = 0;

  std::span<const double> code(std::size_t f) const { return {codes + f * K, K}; }
  std::span<const double> pre(std::size_t f) const { return {prefix + f * K, K}; }
};

void pool_into(const Track& t, std::size_t s, std::size_t f, double* out) {
  detail::window_mean(t.code(f), t.pre(f), s == 0 ? nullptr : t.pre(s - 1).data(), f - s + 1, out);
}

// s_c(f) for all classes; `buf` has feature_dim entries.
void class_scores(const Model& model, const DetectConfig& cfg, const Track& temporal, const Track& semantic,
                  std::size_t f, std::vector<double>& buf, std::vector<double>& out) {
  const std::size_t K = model.code_dim;
  const bool split = buf.size() == 2 * K;
  const std::size_t lo = f + 1 >= cfg.max_window ? f + 1 - cfg.max_window : 0;
  out.assign(model.classes.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t s = f;; s -= cfg.stride) {
    std::fill(buf.begin(), buf.end(), 0.0);
    switch (model.layout.primary) {
      case Channel::Temporal:
        pool_into(temporal, s, f, buf.data());
        break;
      case Channel::Semantic:
        pool_into(semantic, s, f, buf.data() + (split ? K : 0));
        break;
      case Channel::Joint:
        pool_into(temporal, s, f, buf.data());
        pool_into(semantic, s, f, buf.data() + K);
        break;
    }
    for (std::size_t c = 0; c < model.classes.size(); ++c) {
      const auto& cm = model.classes[c];
      const double v = detail::dot(detail::span_of(cm.weights), buf) + cm.bias;
      if (v > out[c]) out[c] = v;
    }
    if (s < lo + cfg.stride) break;
  }
}

struct Hysteresis {
  std::string label{kBackground};
  std::string pending;
  std::size_t count = 0;

  const std::string& step(const std::string& candidate, std::size_t h) {
    if (candidate == label) {
      pending.clear();
      count = 0;
      return label;
    }
    if (candidate == pending) {
      ++count;
    } else {
      pending = candidate;
      count = 1;
    }
    if (count >= h) {
      label = pending;
      pending.clear();
      count = 0;
    }
    return label;
  }
};

std::string candidate_label(const Model& model, const std::vector<double>& scores,
                            const std::vector<double>& thresholds, double& best) {
  best = -std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (scores[c] > best) {
      best = scores[c];
      arg = c;
    }
  }
  if (scores.empty() || !(best > thresholds[arg])) return std::string(kBackground);
  return model.classes[arg].name;
}

void close_segments(const Model& model, DetectionResult& r, const std::vector<std::vector<double>>& scores) {
  r.segments.clear();
  std::size_t f = 0;
  const std::size_t F = r.per_frame.size();
  while (f < F) {
    const std::string& lab = r.per_frame[f].label;
    std::size_t g = f;
    while (g + 1 < F && r.per_frame[g + 1].label == lab) ++g;
    if (lab != kBackground) {
      const std::size_t c = model.index_of(lab);
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t k = f; k <= g; ++k) peak = std::max(peak, scores[k][c]);
      r.segments.push_back({lab, f, g, peak});
    }
    f = g + 1;
  }
}

void check_model(const Model& model, std::size_t K) {
  if (model.code_dim != K) {
    fail(ErrorCode::DimensionMismatch, "model code dimension " + std::to_string(model.code_dim) +
                                           " != encoding code dimension " + std::to_string(K));
  }
}

Track temporal_track(const EncodedSequence& enc) {
  return {enc.temporal_codes.data(), enc.temporal_prefix.data(), enc.code_dim()};
}

Track semantic_track(const Model& model, const EncodedSequence& enc) {
  if (model.layout.primary != Channel::Temporal && !enc.has_semantic) {
    fail(ErrorCode::DimensionMismatch, "model reads semantic codes but sequence '" + enc.id +
                                           "' was encoded without a vocabulary");
  }
  return {enc.semantic_codes.data(), enc.semantic_prefix.data(), enc.code_dim()};
}

}  // namespace

std::vector<double> frame_scores(const Model& model, const EncodedSequence& enc, const DetectConfig& cfg,
                                 std::size_t f) {
  cfg.validate();
  check_model(model, enc.code_dim());
  if (f >= enc.frames()) {
    fail(ErrorCode::IndexOutOfRange, "frame " + std::to_string(f) + " outside sequence of " +
                                         std::to_string(enc.frames()) + " frames");
  }
  std::vector<double> buf(model.feature_dim()), out;
  class_scores(model, cfg, temporal_track(enc), semantic_track(model, enc), f, buf, out);
  return out;
}

RowMatrix score_matrix(const Model& model, const EncodedSequence& enc, const DetectConfig& cfg) {
  cfg.validate();
  check_model(model, enc.code_dim());
  const Track t = temporal_track(enc), s = semantic_track(model, enc);
  RowMatrix out(static_cast<Eigen::Index>(enc.frames()), static_cast<Eigen::Index>(model.classes.size()));
  std::vector<double> buf(model.feature_dim()), row;
  for (std::size_t f = 0; f < enc.frames(); ++f) {
    class_scores(model, cfg, t, s, f, buf, row);
    for (std::size_t c = 0; c < row.size(); ++c) out(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(c)) = row[c];
  }
  return out;
}

DetectionResult detect(const Model& model, const EncodedSequence& enc, const DetectConfig& cfg) {
  cfg.validate();
  check_model(model, enc.code_dim());
  const auto thresholds = effective_thresholds(model, cfg);
  const Track t = temporal_track(enc), s = semantic_track(model, enc);
  DetectionResult r;
  r.id = enc.id;
  std::vector<std::vector<double>> scores(enc.frames());
  std::vector<double> buf(model.feature_dim());
  Hysteresis hyst;
  for (std::size_t f = 0; f < enc.frames(); ++f) {
    class_scores(model, cfg, t, s, f, buf, scores[f]);
    double best = 0.0;
    const std::string cand = candidate_label(model, scores[f], thresholds, best);
    r.per_frame.push_back({static_cast<std::int64_t>(f), hyst.step(cand, cfg.hysteresis), best});
  }
  close_segments(model, r, scores);
  return r;
}

std::vector<DetectionResult> detect_all(const Model& model, std::span<const EncodedSequence> data,
                                        const DetectConfig& cfg, std::size_t jobs) {
  std::vector<DetectionResult> out(data.size());
  detail::parallel_for(data.size(), jobs, [&](std::size_t i) { out[i] = detect(model, data[i], cfg); });
  return out;
}

StreamingDetector::StreamingDetector(const Model& model, DetectConfig cfg, std::string id)
    : model_(&model), cfg_(std::move(cfg)), K_(model.code_dim), label_(kBackground) {
  cfg_.validate();
  model.validate();
  thresholds_ = effective_thresholds(model, cfg_);
  scratch_.resize(model.feature_dim());
  result_.id = std::move(id);
}

FrameDecision StreamingDetector::push(std::span<const double> temporal_code, std::span<const double> semantic_code) {
  if (temporal_code.size() != K_) {
    fail(ErrorCode::DimensionMismatch, "frame " + std::to_string(frames_) + ": temporal code has " +
                                           std::to_string(temporal_code.size()) + " entries, expected " +
                                           std::to_string(K_));
  }
  const bool reads_semantic = model_->layout.primary != Channel::Temporal;
  if (reads_semantic && semantic_code.size() != K_) {
    fail(ErrorCode::DimensionMismatch, "frame " + std::to_string(frames_) + ": semantic code has " +
                                           std::to_string(semantic_code.size()) + " entries, expected " +
                                           std::to_string(K_));
  }
  auto append = [&](std::vector<double>& codes, std::vector<double>& prefix, std::span<const double> c) {
    const std::size_t base = frames_ * K_;
    for (std::size_t k = 0; k < K_; ++k) {
      const double v = c.empty() ? 0.0 : c[k];
      codes.push_back(v);
      const double prev = frames_ == 0 ? 0.0 : prefix[base - K_ + k];
      prefix.push_back(prev + v);
    }
  };
  append(t_codes_, t_prefix_, temporal_code);
  append(s_codes_, s_prefix_, reads_semantic ? semantic_code : std::span<const double>{});
  const std::size_t f = frames_++;

  const Track t{t_codes_.data(), t_prefix_.data(), K_};
  const Track s{s_codes_.data(), s_prefix_.data(), K_};
  class_scores_.emplace_back();
  class_scores(*model_, cfg_, t, s, f, scratch_, class_scores_.back());

  double best = 0.0;
  const std::string cand = candidate_label(*model_, class_scores_.back(), thresholds_, best);
  Hysteresis h{label_, pending_, pending_count_};
  label_ = h.step(cand, cfg_.hysteresis);
  pending_ = h.pending;
  pending_count_ = h.count;
  FrameDecision d{static_cast<std::int64_t>(f), label_, best};
  result_.per_frame.push_back(d);
  return d;
}

DetectionResult StreamingDetector::finish() {
  close_segments(*model_, result_, class_scores_);
  return result_;
}

}  // namespace ced
