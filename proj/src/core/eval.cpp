#include "ced/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "ced/error.hpp"
#include "parallel.hpp"

namespace ced {

PrecisionResult precision(std::span<const std::string> pred, std::span<const std::string> truth,
                          std::string_view cls) {
  if (pred.size() != truth.size()) {
    fail(ErrorCode::LengthMismatch, "prediction has " + std::to_string(pred.size()) + " frames, truth has " +
                                        std::to_string(truth.size()));
  }
  std::size_t predicted = 0, hit = 0;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    if (pred[f] != cls) continue;
    ++predicted;
    hit += truth[f] == cls;
  }
  if (predicted == 0) return {0.0, true};
  return {static_cast<double>(hit) / static_cast<double>(predicted), false};
}

double average_precision(std::vector<RankedFrame> frames) {
  std::sort(frames.begin(), frames.end(), [](const RankedFrame& a, const RankedFrame& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.seq != b.seq) return a.seq < b.seq;
    return a.t < b.t;
  });
  std::size_t positives = 0;
  double sum = 0.0;
  for (std::size_t r = 0; r < frames.size(); ++r) {
    if (!frames[r].positive) continue;
    ++positives;
    sum += static_cast<double>(positives) / static_cast<double>(r + 1);
  }
  return positives == 0 ? 0.0 : sum / static_cast<double>(positives);
}

namespace {

const std::vector<std::string>& truth_of(const EncodedSequence& enc) {
  if (enc.labels.size() != enc.frames()) {
    fail(ErrorCode::LengthMismatch, "sequence '" + enc.id + "' has no ground-truth labels");
  }
  return enc.labels;
}

std::vector<RowMatrix> all_scores(const Model& model, std::span<const EncodedSequence> data, const DetectConfig& cfg,
                                  std::size_t jobs) {
  std::vector<RowMatrix> out(data.size());
  detail::parallel_for(data.size(), jobs, [&](std::size_t i) { out[i] = score_matrix(model, data[i], cfg); });
  return out;
}

std::vector<RankedFrame> ranked(std::span<const EncodedSequence> data, const std::vector<RowMatrix>& scores,
                                std::size_t c, const std::string& cls) {
  std::vector<RankedFrame> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& truth = truth_of(data[i]);
    for (std::size_t f = 0; f < data[i].frames(); ++f) {
      out.push_back({data[i].id, f, scores[i](static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(c)),
                     truth[f] == cls});
    }
  }
  return out;
}

}  // namespace

double average_precision(const Model& model, std::span<const EncodedSequence> test, const DetectConfig& cfg,
                         std::string_view cls, std::size_t jobs) {
  const std::size_t c = model.index_of(cls);
  return average_precision(ranked(test, all_scores(model, test, cfg, jobs), c, std::string(cls)));
}

void tune_thresholds(Model& model, std::span<const EncodedSequence> data, const DetectConfig& cfg, std::size_t jobs) {
  const auto scores = all_scores(model, data, cfg, jobs);
  for (std::size_t c = 0; c < model.classes.size(); ++c) {
    auto frames = ranked(data, scores, c, model.classes[c].name);
    if (frames.empty()) continue;
    std::sort(frames.begin(), frames.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
    const std::size_t total_pos =
        static_cast<std::size_t>(std::count_if(frames.begin(), frames.end(), [](const auto& r) { return r.positive; }));
    // Start from "never fire"; each distinct score level admits one more block.
    double best_thr = frames.front().score;
    double best_f1 = 0.0;
    std::size_t tp = 0;
    for (std::size_t r = 0; r < frames.size(); ++r) {
      tp += frames[r].positive;
      const bool level_end = r + 1 == frames.size() || frames[r + 1].score < frames[r].score;
      if (!level_end) continue;
      const double predicted = static_cast<double>(r + 1);
      const double f1 = tp == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / (predicted + static_cast<double>(total_pos));
      if (f1 > best_f1) {
        best_f1 = f1;
        best_thr = r + 1 < frames.size() ? frames[r + 1].score
                                         : frames[r].score - std::max(1.0, std::abs(frames[r].score));
      }
    }
    model.classes[c].threshold = best_thr;
  }
}

nlohmann::json to_json(const Combo& c) {
  return {{"name", c.name}, {"primary", to_string(c.layout.primary)}, {"secondary", to_string(c.layout.secondary)}};
}

Combo combo_from_json(const nlohmann::json& j) {
  try {
    Combo c;
    c.layout.primary = channel_from_string(j.at("primary").get<std::string>());
    c.layout.secondary = channel_from_string(j.at("secondary").get<std::string>());
    c.name = j.value("name", std::string(to_string(c.layout.primary)) + "/" + std::string(to_string(c.layout.secondary)));
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("combo: ") + e.what());
  }
}

std::vector<Combo> default_combos() {
  return {{"temporal", {Channel::Temporal, Channel::Temporal}},
          {"semantic", {Channel::Semantic, Channel::Semantic}},
          {"temporal+semantic", {Channel::Joint, Channel::Semantic}}};
}

EvalRow evaluate(const Model& model, std::span<const EncodedSequence> test, const DetectConfig& cfg, std::size_t jobs) {
  EvalRow row;
  row.converged = model.converged();
  const auto scores = all_scores(model, test, cfg, jobs);
  std::vector<DetectionResult> dets(test.size());
  detail::parallel_for(test.size(), jobs, [&](std::size_t i) { dets[i] = detect(model, test[i], cfg); });
  std::vector<std::string> pred, truth;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& t = truth_of(test[i]);
    truth.insert(truth.end(), t.begin(), t.end());
    for (const auto& d : dets[i].per_frame) pred.push_back(d.label);
  }
  for (std::size_t c = 0; c < model.classes.size(); ++c) {
    const auto& name = model.classes[c].name;
    row.ap.push_back(average_precision(ranked(test, scores, c, name)));
    const auto p = precision(pred, truth, name);
    row.precision.push_back(p.value);
    row.never_predicted.push_back(p.never_predicted);
  }
  if (!model.classes.empty()) {
    const double n = static_cast<double>(model.classes.size());
    row.mean_ap = std::accumulate(row.ap.begin(), row.ap.end(), 0.0) / n;
    row.mean_precision = std::accumulate(row.precision.begin(), row.precision.end(), 0.0) / n;
  }
  return row;
}

EvalReport compare_features(std::span<const EncodedSequence> train_set, std::span<const EncodedSequence> test_set,
                            std::vector<std::string> classes, std::span<const Combo> combos,
                            const CompareConfig& cfg) {
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  EvalReport report;
  report.classes = classes;
  for (const auto& combo : combos) {
    TrainConfig tc = cfg.train;
    tc.layout = combo.layout;
    tc.jobs = cfg.jobs;
    auto trained = train(train_set, classes, tc);
    if (cfg.tune_thresholds) tune_thresholds(trained.model, train_set, cfg.detect, cfg.jobs);
    EvalRow row = evaluate(trained.model, test_set, cfg.detect, cfg.jobs);
    row.combo = combo.name;
    report.rows.push_back(std::move(row));
  }
  return report;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json per_class = nlohmann::json::object();
    for (std::size_t c = 0; c < r.classes.size(); ++c) {
      per_class[r.classes[c]] = {{"ap", row.ap[c]},
                                 {"precision", row.precision[c]},
                                 {"never_predicted", static_cast<bool>(row.never_predicted[c])}};
    }
    rows.push_back({{"combo", row.combo},
                    {"per_class", per_class},
                    {"mean_ap", row.mean_ap},
                    {"mean_precision", row.mean_precision},
                    {"converged", row.converged}});
  }
  return {{"classes", r.classes}, {"rows", rows}};
}

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string to_table(const EvalReport& r) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header = {"class"};
  for (const auto& row : r.rows) {
    header.push_back(row.combo + " AP");
    header.push_back(row.combo + " prec");
  }
  cells.push_back(header);
  for (std::size_t c = 0; c < r.classes.size(); ++c) {
    std::vector<std::string> line = {r.classes[c]};
    for (const auto& row : r.rows) {
      line.push_back(fixed(row.ap[c]));
      line.push_back(fixed(row.precision[c]) + (row.never_predicted[c] ? "*" : ""));
    }
    cells.push_back(line);
  }
  std::vector<std::string> mean = {"Mean"};
  for (const auto& row : r.rows) {
    mean.push_back(fixed(row.mean_ap));
    mean.push_back(fixed(row.mean_precision));
  }
  cells.push_back(mean);

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t k = 0; k < line.size(); ++k) width[k] = std::max(width[k], line[k].size());
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t k = 0; k < cells[i].size(); ++k) {
      if (k > 0) out << "  ";
      const auto& cell = cells[i][k];
      if (k == 0) {
        out << cell << std::string(width[k] - cell.size(), ' ');
      } else {
        out << std::string(width[k] - cell.size(), ' ') << cell;
      }
    }
    out << '\n';
    if (i == 0 || i + 2 == cells.size()) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      out << std::string(total - 2, '-') << '\n';
    }
  }
  if (std::any_of(r.rows.begin(), r.rows.end(), [](const auto& row) {
        return std::find(row.never_predicted.begin(), row.never_predicted.end(), true) != row.never_predicted.end();
      })) {
    out << "* class never predicted; precision reported as 0\n";
  }
  return out.str();
}

std::string to_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "combo,class,ap,precision,never_predicted\n";
  char buf[64];
  for (const auto& row : r.rows) {
    for (std::size_t c = 0; c < r.classes.size(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g", row.ap[c], row.precision[c]);
      out << row.combo << ',' << r.classes[c] << ',' << buf << ',' << (row.never_predicted[c] ? 1 : 0) << '\n';
    }
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", row.mean_ap, row.mean_precision);
    out << row.combo << ",MEAN," << buf << ",0\n";
  }
  return out.str();
}

}  // namespace ced
