#include "ced/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>

#include "ced/error.hpp"
#include "ced/io.hpp"

namespace ced {

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_token(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

void SynthConfig::validate() const {
  if (classes.empty()) fail(ErrorCode::InvalidConfig, "synth config has no classes");
  std::set<std::string> names;
  bool any_interest = false;
  const auto N = classes.front().mean.size();
  if (N == 0) fail(ErrorCode::InvalidConfig, "class means must be non-empty");
  for (const auto& c : classes) {
    if (c.name.empty() || c.name == kBackground) fail(ErrorCode::InvalidConfig, "invalid class name '" + c.name + "'");
    if (!names.insert(c.name).second) fail(ErrorCode::InvalidConfig, "duplicate class '" + c.name + "'");
    if (c.mean.size() != N) fail(ErrorCode::InvalidConfig, "class '" + c.name + "' mean has the wrong dimension");
    if (!c.mean.allFinite()) fail(ErrorCode::InvalidConfig, "class '" + c.name + "' mean is not finite");
    if (!(c.sigma >= 0.0) || !std::isfinite(c.sigma)) fail(ErrorCode::InvalidConfig, "class '" + c.name + "' sigma < 0");
    if (c.words.empty()) fail(ErrorCode::InvalidConfig, "class '" + c.name + "' has no words");
    double total = 0.0;
    for (const auto& [tok, p] : c.words) {
      if (tok.empty()) fail(ErrorCode::InvalidConfig, "class '" + c.name + "' has an empty token");
      if (!(p >= 0.0)) fail(ErrorCode::InvalidConfig, "class '" + c.name + "' has a negative probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      fail(ErrorCode::InvalidConfig, "word probabilities of class '" + c.name + "' sum to " + std::to_string(total));
    }
    any_interest = any_interest || c.interest;
  }
  if (!any_interest) fail(ErrorCode::InvalidConfig, "synth config has no class of interest");
  if (event_len_min < 1 || event_len_min > event_len_max) fail(ErrorCode::InvalidConfig, "need 1 <= event_len min <= max");
  if (!(noise_sigma >= 0.0)) fail(ErrorCode::InvalidConfig, "noise_sigma must be >= 0");
  if (!(word_noise >= 0.0 && word_noise <= 1.0)) fail(ErrorCode::InvalidConfig, "word_noise must lie in [0, 1]");
  if (words_per_frame < 1) fail(ErrorCode::InvalidConfig, "words_per_frame must be >= 1");
  if (embedding_dim < 1) fail(ErrorCode::InvalidConfig, "embedding_dim must be >= 1");
}

std::size_t SynthConfig::temporal_dim() const {
  return classes.empty() ? 0 : static_cast<std::size_t>(classes.front().mean.size());
}

std::vector<std::string> SynthConfig::interest_classes() const {
  std::vector<std::string> out;
  for (const auto& c : classes) {
    if (c.interest) out.push_back(c.name);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> SynthConfig::tokens() const {
  std::set<std::string> all;
  for (const auto& c : classes) {
    for (const auto& [tok, p] : c.words) all.insert(tok);
  }
  return {all.begin(), all.end()};
}

nlohmann::json to_json(const SynthConfig& cfg) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : cfg.classes) {
    classes.push_back({{"name", c.name},
                       {"mean", io::vector_to_json(c.mean)},
                       {"sigma", c.sigma},
                       {"words", c.words},
                       {"interest", c.interest}});
  }
  return {{"classes", classes},
          {"event_len", {{"min", cfg.event_len_min}, {"max", cfg.event_len_max}}},
          {"distractors_per_video", cfg.distractors_per_video},
          {"noise_sigma", cfg.noise_sigma},
          {"words_per_frame", cfg.words_per_frame},
          {"word_noise", cfg.word_noise},
          {"embedding_dim", cfg.embedding_dim},
          {"seed", cfg.seed}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig cfg) {
  try {
    if (j.contains("classes")) {
      cfg.classes.clear();
      for (const auto& c : j.at("classes")) {
        SynthClass sc;
        sc.name = c.at("name").get<std::string>();
        sc.mean = io::vector_from_json(c.at("mean"));
        sc.sigma = c.value("sigma", 0.0);
        sc.words = c.at("words").get<std::map<std::string, double>>();
        sc.interest = c.value("interest", true);
        cfg.classes.push_back(std::move(sc));
      }
    }
    if (j.contains("event_len")) {
      cfg.event_len_min = j.at("event_len").value("min", cfg.event_len_min);
      cfg.event_len_max = j.at("event_len").value("max", cfg.event_len_max);
    }
    cfg.distractors_per_video = j.value("distractors_per_video", cfg.distractors_per_video);
    cfg.noise_sigma = j.value("noise_sigma", cfg.noise_sigma);
    cfg.words_per_frame = j.value("words_per_frame", cfg.words_per_frame);
    cfg.word_noise = j.value("word_noise", cfg.word_noise);
    cfg.embedding_dim = j.value("embedding_dim", cfg.embedding_dim);
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("synth config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

SynthConfig default_synth_config() {
  struct Spec {
    const char* name;
    bool interest;
    std::vector<std::string> words;
  };
  const std::vector<Spec> specs = {
      {"cut", true, {"cut", "knife", "board"}},       {"pour", true, {"pour", "water", "cup"}},
      {"stir", true, {"stir", "spoon", "pot"}},       {"wash", false, {"wash", "sink", "soap"}},
      {"walk", false, {"walk", "floor", "door"}},     {"wait", false, {"wait", "stand", "idle"}},
  };
  constexpr Eigen::Index N = 6;
  SynthConfig cfg;
  for (std::size_t c = 0; c < specs.size(); ++c) {
    SynthClass sc;
    sc.name = specs[c].name;
    sc.interest = specs[c].interest;
    sc.mean = Vector::Zero(N);
    sc.mean(static_cast<Eigen::Index>(c) % N) = 2.0;
    sc.sigma = 0.5;
    for (const auto& w : specs[c].words) sc.words[w] = 1.0 / static_cast<double>(specs[c].words.size());
    cfg.classes.push_back(std::move(sc));
  }
  cfg.event_len_min = 10;
  cfg.event_len_max = 20;
  return cfg;
}

std::vector<Sequence> synth_generate(const SynthConfig& cfg, std::size_t n_videos) {
  cfg.validate();
  const auto interest = cfg.interest_classes();
  const auto all_tokens = cfg.tokens();
  const auto N = static_cast<Eigen::Index>(cfg.temporal_dim());
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < cfg.classes.size(); ++c) index[cfg.classes[c].name] = c;

  std::vector<std::vector<std::string>> class_tokens(cfg.classes.size());
  std::vector<std::vector<double>> class_probs(cfg.classes.size());
  for (std::size_t c = 0; c < cfg.classes.size(); ++c) {
    for (const auto& [tok, p] : cfg.classes[c].words) {
      class_tokens[c].push_back(tok);
      class_probs[c].push_back(p);
    }
  }

  std::vector<Sequence> out;
  out.reserve(n_videos);
  for (std::size_t v = 0; v < n_videos; ++v) {
    std::mt19937_64 rng(mix(cfg.seed, v));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const std::size_t focus = index.at(interest[v % interest.size()]);
    // Distractors come from the non-interest classes so that each video holds
    // exactly one labelled event; other classes only when there are none.
    std::vector<std::size_t> others;
    for (std::size_t c = 0; c < cfg.classes.size(); ++c) {
      if (!cfg.classes[c].interest) others.push_back(c);
    }
    if (others.empty()) {
      for (std::size_t c = 0; c < cfg.classes.size(); ++c) {
        if (c != focus) others.push_back(c);
      }
    }
    if (others.empty()) others.push_back(focus);

    std::vector<std::size_t> events;
    std::uniform_int_distribution<std::size_t> pick(0, others.size() - 1);
    for (std::size_t d = 0; d < cfg.distractors_per_video; ++d) events.push_back(others[pick(rng)]);
    std::uniform_int_distribution<std::size_t> slot(0, cfg.distractors_per_video);
    events.insert(events.begin() + static_cast<std::ptrdiff_t>(slot(rng)), focus);

    Sequence seq;
    char id[32];
    std::snprintf(id, sizeof id, "video_%04zu", v);
    seq.id = id;
    seq.temporal_dim = static_cast<std::size_t>(N);
    seq.classes = interest;
    std::uniform_int_distribution<std::size_t> length(cfg.event_len_min, cfg.event_len_max);
    std::uniform_int_distribution<std::size_t> any_token(0, all_tokens.size() - 1);
    for (std::size_t c : events) {
      const auto& sc = cfg.classes[c];
      std::discrete_distribution<std::size_t> word(class_probs[c].begin(), class_probs[c].end());
      const std::size_t len = length(rng);
      for (std::size_t k = 0; k < len; ++k) {
        FrameFeatures fr;
        fr.t = static_cast<std::int64_t>(seq.frames.size());
        fr.temporal.resize(N);
        for (Eigen::Index n = 0; n < N; ++n) {
          const double a = gauss(rng);
          const double b = gauss(rng);
          fr.temporal(n) = sc.mean(n) + sc.sigma * a + cfg.noise_sigma * b;
        }
        std::vector<std::string> words;
        for (std::size_t w = 0; w < cfg.words_per_frame; ++w) {
          std::string tok = class_tokens[c][word(rng)];
          if (cfg.word_noise > 0.0 && unit(rng) < cfg.word_noise) tok = all_tokens[any_token(rng)];
          words.push_back(std::move(tok));
        }
        fr.words = std::move(words);
        fr.label = sc.interest ? sc.name : std::string(kBackground);
        seq.frames.push_back(std::move(fr));
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

std::map<std::string, Vector> synth_embeddings(const SynthConfig& cfg) {
  cfg.validate();
  std::map<std::string, Vector> out;
  const auto dim = static_cast<Eigen::Index>(cfg.embedding_dim);
  for (const auto& tok : cfg.tokens()) {
    std::mt19937_64 rng(mix(cfg.seed ^ 0x5EEDULL, hash_token(tok)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector v(dim);
    for (Eigen::Index k = 0; k < dim; ++k) v(k) = gauss(rng);
    out.emplace(tok, std::move(v));
  }
  return out;
}

LookupTable perfect_table(const SynthConfig& cfg) {
  cfg.validate();
  LookupTable table;
  for (const auto& c : cfg.classes) {
    if (!c.interest) continue;
    auto& triggers = table.entries[c.name];
    for (const auto& [tok, p] : c.words) {
      if (p > 0.0) triggers.insert(tok);
    }
  }
  for (const auto& [name, triggers] : table.entries) {
    for (const auto& other : cfg.classes) {
      if (other.name == name) continue;
      for (const auto& [tok, p] : other.words) {
        if (p > 0.0 && triggers.count(tok)) {
          fail(ErrorCode::InvalidConfig, "token '" + tok + "' is shared by '" + name + "' and '" + other.name + "'");
        }
      }
    }
  }
  table.validate();
  return table;
}

}  // namespace ced
