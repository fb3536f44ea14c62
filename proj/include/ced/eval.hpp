#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ced/detector.hpp"
#include "ced/learner.hpp"
#include "ced/types.hpp"

namespace ced {

struct PrecisionResult {
  double value = 0.0;
  bool never_predicted = false;
};

/// |pred = c and truth = c| / |pred = c|; 0 with the flag set when c is never predicted.
PrecisionResult precision(std::span<const std::string> pred, std::span<const std::string> truth,
                          std::string_view cls);

struct RankedFrame {
  std::string seq;
  std::size_t t = 0;
  double score = 0.0;
  bool positive = false;
};

/// Mean precision@rank over positives, ranking by score descending with ties
/// broken by (seq, t) ascending. 0 when there are no positives.
double average_precision(std::vector<RankedFrame> frames);

/// AP of one class's frame scores over a labelled test set.
double average_precision(const Model& model, std::span<const EncodedSequence> test, const DetectConfig& cfg,
                         std::string_view cls, std::size_t jobs = 1);

/// Per-class threshold maximising frame-level F1 of  s_c(f) > threshold  on
/// `data`. Writes the thresholds into the model.
void tune_thresholds(Model& model, std::span<const EncodedSequence> data, const DetectConfig& cfg,
                     std::size_t jobs = 1);

/// Which code track feeds the detection score (primary) and the semantic margin (secondary).
struct Combo {
  std::string name;
  FeatureLayout layout;
};

nlohmann::json to_json(const Combo& c);
Combo combo_from_json(const nlohmann::json& j);

/// temporal, semantic, temporal+semantic.
std::vector<Combo> default_combos();

struct EvalRow {
  std::string combo;
  std::vector<double> ap;         // per class, report class order
  std::vector<double> precision;  // per class, set-overlap
  std::vector<bool> never_predicted;
  double mean_ap = 0.0;
  double mean_precision = 0.0;
  bool converged = true;
};

struct EvalReport {
  std::vector<std::string> classes;
  std::vector<EvalRow> rows;
};

/// AP and set precision of a model on a labelled test set.
EvalRow evaluate(const Model& model, std::span<const EncodedSequence> test, const DetectConfig& cfg,
                 std::size_t jobs = 1);

struct CompareConfig {
  TrainConfig train;
  DetectConfig detect;
  bool tune_thresholds = true;
  std::size_t jobs = 1;
};

/// Trains one model per combo on `train` and evaluates it on `test`.
EvalReport compare_features(std::span<const EncodedSequence> train_set, std::span<const EncodedSequence> test_set,
                            std::vector<std::string> classes, std::span<const Combo> combos,
                            const CompareConfig& cfg);

nlohmann::json to_json(const EvalReport& r);
std::string to_table(const EvalReport& r);
std::string to_csv(const EvalReport& r);

}  // namespace ced
