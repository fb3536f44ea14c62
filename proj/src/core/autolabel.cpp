#include "ced/autolabel.hpp"

#include <algorithm>

#include "ced/error.hpp"
#include "parallel.hpp"

namespace ced {

void LookupTable::validate() const {
  if (entries.empty()) fail(ErrorCode::InvalidConfig, "lookup table has no entries");
  for (const auto& [cls, triggers] : entries) {
    if (cls.empty()) fail(ErrorCode::InvalidConfig, "lookup table has an empty class name");
    if (cls == kBackground) fail(ErrorCode::InvalidConfig, "BACKGROUND cannot be a lookup table class");
    if (triggers.empty()) fail(ErrorCode::InvalidConfig, "class '" + cls + "' has no triggers");
  }
}

nlohmann::json to_json(const LookupTable& t) {
  nlohmann::json entries = nlohmann::json::object();
  for (const auto& [cls, triggers] : t.entries) entries[cls] = triggers;
  return {{"match_mode", t.match_mode == MatchMode::Any ? "ANY" : "ALL"}, {"entries", entries}};
}

LookupTable table_from_json(const nlohmann::json& j) {
  LookupTable t;
  try {
    const auto mode = j.value("match_mode", std::string("ANY"));
    if (mode == "ANY" || mode == "any") {
      t.match_mode = MatchMode::Any;
    } else if (mode == "ALL" || mode == "all") {
      t.match_mode = MatchMode::All;
    } else {
      fail(ErrorCode::InvalidConfig, "unknown match_mode '" + mode + "'");
    }
    for (const auto& [cls, tokens] : j.at("entries").items()) {
      auto& set = t.entries[cls];
      for (const auto& tok : tokens) set.insert(tok.get<std::string>());
      if (set.size() != tokens.size()) fail(ErrorCode::InvalidConfig, "class '" + cls + "' repeats a trigger");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("lookup table: ") + e.what());
  }
  t.validate();
  return t;
}

std::string match_words(std::span<const std::string> words, const LookupTable& table) {
  const std::set<std::string> present(words.begin(), words.end());
  const std::string* best = nullptr;
  std::size_t best_count = 0;
  for (const auto& [cls, triggers] : table.entries) {  // sorted, so ties keep the smaller name
    std::size_t hits = 0;
    for (const auto& tok : triggers) hits += present.count(tok);
    const bool fires = table.match_mode == MatchMode::Any ? hits > 0 : hits == triggers.size();
    if (fires && hits > best_count) {
      best = &cls;
      best_count = hits;
    }
  }
  return best ? *best : std::string(kBackground);
}

std::vector<std::string> label_frames(const Sequence& seq, const LookupTable& table) {
  std::vector<std::string> out;
  out.reserve(seq.frames.size());
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    const auto& words = seq.frames[f].words;
    if (!words) fail(ErrorCode::MissingWords, "sequence '" + seq.id + "' frame " + std::to_string(f) + ": no words");
    out.push_back(match_words(*words, table));
  }
  return out;
}

std::size_t suppress_short_runs(std::vector<std::string>& labels, std::size_t min_run) {
  std::size_t changed = 0;
  std::size_t s = 0;
  while (s < labels.size()) {
    std::size_t e = s + 1;
    while (e < labels.size() && labels[e] == labels[s]) ++e;
    if (labels[s] != kBackground && e - s < min_run) {
      for (std::size_t f = s; f < e; ++f) labels[f] = std::string(kBackground);
      changed += e - s;
    }
    s = e;
  }
  return changed;
}

nlohmann::json to_json(const AutolabelReport& r) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : r.classes) {
    nlohmann::json e = {
        {"class", c.cls}, {"frames", c.frames}, {"suppressed", c.suppressed}, {"dropped", c.dropped}};
    e["labeling_precision"] = c.labeling_precision ? nlohmann::json(*c.labeling_precision) : nlohmann::json();
    classes.push_back(e);
  }
  nlohmann::json out = {{"classes", classes}, {"trained", r.trained}, {"warnings", r.warnings}};
  out["status"] = r.no_positive_examples ? to_string(ErrorCode::NoPositiveExamples) : "ok";
  return out;
}

AutolabelResult autolabel_train(std::span<const Sequence> unlabeled, const LookupTable& table, const Codebook& cb,
                                const SemanticVocab* vocab, const TrainConfig& cfg, std::size_t jobs,
                                const AutolabelConfig& acfg) {
  table.validate();
  cfg.validate();
  if (acfg.min_run < 1) fail(ErrorCode::InvalidConfig, "min_run must be >= 1");
  std::vector<std::vector<std::string>> raw(unlabeled.size());
  detail::parallel_for(unlabeled.size(), jobs, [&](std::size_t i) { raw[i] = label_frames(unlabeled[i], table); });
  auto induced = raw;
  for (auto& labels : induced) suppress_short_runs(labels, acfg.min_run);

  AutolabelResult result;
  auto& rep = result.report;
  for (const auto& [cls, triggers] : table.entries) {
    AutolabelClassStats st;
    st.cls = cls;
    std::size_t agree = 0, audited = 0;
    for (std::size_t i = 0; i < unlabeled.size(); ++i) {
      const bool audit = unlabeled[i].has_labels();
      const auto truth = audit ? unlabeled[i].label_track() : std::vector<std::string>{};
      for (std::size_t f = 0; f < induced[i].size(); ++f) {
        st.suppressed += raw[i][f] == cls && induced[i][f] != cls;
        if (induced[i][f] != cls) continue;
        ++st.frames;
        if (audit) {
          ++audited;
          agree += truth[f] == cls;
        }
      }
    }
    if (audited > 0) st.labeling_precision = static_cast<double>(agree) / static_cast<double>(audited);
    if (st.frames == 0) {
      st.dropped = true;
      rep.warnings.push_back("class '" + cls + "' never fired; dropped");
    } else {
      rep.trained.push_back(cls);
    }
    rep.classes.push_back(std::move(st));
  }
  if (rep.trained.empty()) {
    rep.no_positive_examples = true;
    return result;
  }

  std::vector<Sequence> relabelled(unlabeled.begin(), unlabeled.end());
  for (std::size_t i = 0; i < relabelled.size(); ++i) {
    auto& seq = relabelled[i];
    seq.classes = rep.trained;
    for (std::size_t f = 0; f < seq.frames.size(); ++f) {
      const auto& lab = induced[i][f];
      const bool kept = lab == kBackground || std::binary_search(rep.trained.begin(), rep.trained.end(), lab);
      seq.frames[f].label = kept ? lab : std::string(kBackground);
    }
  }
  const auto encoded = encode_all(relabelled, cb, vocab, jobs);
  auto trained = train(encoded, rep.trained, cfg);
  result.model = std::move(trained.model);
  result.train_report = std::move(trained.report);
  return result;
}

}  // namespace ced
