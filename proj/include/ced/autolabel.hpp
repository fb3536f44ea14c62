#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ced/codebook.hpp"
#include "ced/learner.hpp"
#include "ced/types.hpp"

namespace ced {

enum class MatchMode { Any, All };

/// Class name -> trigger tokens. A class fires on a frame when one (Any) or
/// every (All) of its triggers appears among the frame's words.
struct LookupTable {
  MatchMode match_mode = MatchMode::Any;
  std::map<std::string, std::set<std::string>> entries;

  void validate() const;
  bool operator==(const LookupTable&) const = default;
};

nlohmann::json to_json(const LookupTable& t);
LookupTable table_from_json(const nlohmann::json& j);

/// Label for one word set: the firing class with the most matched triggers,
/// lexicographically smallest on ties; BACKGROUND when nothing fires.
std::string match_words(std::span<const std::string> words, const LookupTable& table);

/// Per-frame labels. Throws MissingWords naming the first frame without words.
std::vector<std::string> label_frames(const Sequence& seq, const LookupTable& table);

/// Relabels as BACKGROUND every run of a non-background label shorter than
/// `min_run` frames. Returns the number of frames changed.
std::size_t suppress_short_runs(std::vector<std::string>& labels, std::size_t min_run);

struct AutolabelConfig {
  std::size_t min_run = 3;  // shorter induced runs are treated as caption noise; 1 disables
};

struct AutolabelClassStats {
  std::string cls;
  std::size_t frames = 0;      // frames labelled with the class, after run suppression
  std::size_t suppressed = 0;  // frames removed by run suppression
  bool dropped = false;
  std::optional<double> labeling_precision;  // against ground truth, when present
};

struct AutolabelReport {
  std::vector<AutolabelClassStats> classes;
  std::vector<std::string> trained;
  std::vector<std::string> warnings;
  bool no_positive_examples = false;  // every class dropped
};

nlohmann::json to_json(const AutolabelReport& r);

struct AutolabelResult {
  std::optional<Model> model;  // empty when every class was dropped
  AutolabelReport report;
  std::optional<TrainReport> train_report;
};

/// Labels every sequence from its words, drops short induced runs, encodes,
/// and trains on the induced labels. The class set comes from the table only.
AutolabelResult autolabel_train(std::span<const Sequence> unlabeled, const LookupTable& table, const Codebook& cb,
                                const SemanticVocab* vocab, const TrainConfig& cfg, std::size_t jobs = 1,
                                const AutolabelConfig& acfg = {});

}  // namespace ced
