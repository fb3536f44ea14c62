#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ced/types.hpp"

namespace ced {

struct TrainConfig {
  double C_reg = 1.0;
  double epsilon = 1e-3;       // constraint-violation tolerance for the cutting-plane stop
  std::size_t max_outer = 20;  // margin-refresh epochs
  bool margin_refresh = true;  // false: freeze the semantic scores once, at the initial weights
  std::uint64_t seed = 0;      // dual coordinate order
  FeatureLayout layout;
  std::size_t max_inner = 500;  // cutting-plane rounds per epoch
  double qp_tol = 1e-6;         // duality gap for the restricted QP
  std::size_t prune_after = 10;  // drop constraints inactive for this many consecutive solves
  std::size_t jobs = 1;
  std::map<std::string, Vector> initial_weights;  // optional warm start per class

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Semantic margin |y_f - yhat_f|.
double margin_mu(double y_f, double yhat_f);

/// Slack rescaling |y_f - y_target|: 0 for agreeing labels, 2 otherwise.
double slack_rescale(double y_f, double y_target);

/// Linear score of a window: w_c . pool(primary, s, f) + b_c.
double score(const Model& model, const EncodedSequence& enc, std::size_t s, std::size_t f, std::string_view cls);

/// yhat_f: w_c . pool(secondary, 0, f) + b_c.
double semantic_score(const Model& model, const EncodedSequence& enc, std::size_t f, std::string_view cls);

/// One training example seen from one class: binary frame labels and the
/// frame at which the example is cut (the last frame of the class's event, or
/// the final frame when the class never occurs).
struct ExampleView {
  std::vector<double> y;  // +1 / -1 per frame
  std::size_t last = 0;   // l, inclusive
  double y_target = -1.0;
};

ExampleView example_view(const EncodedSequence& enc, std::string_view cls);

struct MostViolated {
  std::optional<std::size_t> frame;  // none when no admissible frame is violated
  double violation = 0.0;
};

/// Scans frames 0..l for  Delta_f (mu_f - [w.psi(0:l) - w.psi(0:f)])  and
/// returns the maximiser (smaller frame on ties). Frames with Delta_f = 0 are
/// skipped; returns (none, 0) if nothing is positive.
MostViolated most_violated(const EncodedSequence& enc, const Model& model, std::string_view cls);

/// Optimal slack for one example: max(0, most_violated.violation).
double slack_optimal(const EncodedSequence& enc, const Model& model, std::string_view cls);

struct RiskBound {
  std::string cls;
  double bound = 0.0;          // (1/n) sum_i slack_optimal(i)
  std::vector<double> slacks;  // per example
};

std::vector<RiskBound> empirical_risk_bound(const Model& model, std::span<const EncodedSequence> data);
nlohmann::json to_json(const std::vector<RiskBound>& bounds);

/// A cached cutting plane: example i requires  w . dpsi >= mu - zeta_i / Delta.
struct Constraint {
  std::size_t example = 0;
  std::size_t frame = 0;  // 0-based
  double delta = 0.0;
  double mu = 0.0;
  Vector dpsi;  // psi(0:l) - psi(0:f)
};

struct IterationRecord {
  std::size_t epoch = 0;
  std::size_t round = 0;
  double objective = 0.0;  // full objective with the epoch's frozen margins
  std::size_t constraints = 0;
  std::size_t added = 0;
  double max_violation = 0.0;  // max_i (zeta*_i - stored slack_i)
  double risk_bound = 0.0;
};

struct ClassTrainReport {
  std::string cls;
  bool converged = false;
  std::size_t epochs = 0;
  std::vector<IterationRecord> iterations;
  std::vector<double> stored_slacks;  // restricted-problem slack per example, at the final weights
  std::vector<Constraint> constraints;
  double objective = 0.0;
};

struct TrainReport {
  std::vector<ClassTrainReport> classes;
  bool converged() const;
};

nlohmann::json to_json(const TrainReport& r);

struct TrainResult {
  Model model;
  TrainReport report;
};

/// One-vs-rest max-margin training by cutting-plane constraint generation.
/// Classes are trained in sorted name order. Throws NoPositiveExamples if a
/// class never occurs in the labels.
TrainResult train(std::span<const EncodedSequence> data, std::vector<std::string> classes, const TrainConfig& cfg);

/// Full objective  1/2 |w|^2 + C/n sum_i max(0, max_f Delta_f (mu_f - w.dpsi_f))
/// where the margins mu_f come from `margin_weights` (frozen) rather than `w`.
double objective(std::span<const EncodedSequence> data, std::string_view cls, const FeatureLayout& layout,
                 std::size_t code_dim, double C_reg, const Vector& w, const Vector& margin_weights);

}  // namespace ced
