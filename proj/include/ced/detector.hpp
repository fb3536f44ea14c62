#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ced/types.hpp"

namespace ced {

struct DetectConfig {
  std::size_t max_window = 150;  // longest candidate segment, in frames
  std::size_t stride = 1;        // spacing of candidate starts
  std::size_t hysteresis = 3;    // consecutive frames needed to switch label
  std::map<std::string, double> thresholds;  // overrides the model's per-class thresholds

  void validate() const;
};

nlohmann::json to_json(const DetectConfig& cfg);
DetectConfig detect_config_from_json(const nlohmann::json& j, DetectConfig base = {});

/// Per-class thresholds in model class order (config overrides model).
std::vector<double> effective_thresholds(const Model& model, const DetectConfig& cfg);

/// s_c(f) for every class c, in model class order: the best window score over
/// candidate starts s = f, f - stride, ... not earlier than f - max_window + 1.
std::vector<double> frame_scores(const Model& model, const EncodedSequence& enc, const DetectConfig& cfg,
                                 std::size_t f);

/// All frame scores, F x C.
RowMatrix score_matrix(const Model& model, const EncodedSequence& enc, const DetectConfig& cfg);

DetectionResult detect(const Model& model, const EncodedSequence& enc, const DetectConfig& cfg);

std::vector<DetectionResult> detect_all(const Model& model, std::span<const EncodedSequence> data,
                                        const DetectConfig& cfg, std::size_t jobs = 1);

/// Frame-at-a-time detection. Produces exactly the result of detect() on the
/// same frames; each decision depends only on frames seen so far.
class StreamingDetector {
 public:
  StreamingDetector(const Model& model, DetectConfig cfg, std::string id);

  /// Feeds the next frame's codes (semantic may be empty if the model never reads it).
  FrameDecision push(std::span<const double> temporal_code, std::span<const double> semantic_code = {});

  /// Closes any open segment and returns everything seen so far.
  DetectionResult finish();

  std::size_t frames() const { return frames_; }

 private:
  const Model* model_;
  DetectConfig cfg_;
  std::vector<double> thresholds_;
  std::size_t K_;
  std::size_t frames_ = 0;
  std::vector<double> t_codes_, t_prefix_, s_codes_, s_prefix_;
  std::vector<double> scratch_;
  DetectionResult result_;
  std::vector<std::vector<double>> class_scores_;  // per frame
  std::string label_;
  std::string pending_;
  std::size_t pending_count_ = 0;
};

}  // namespace ced
