#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ced/autolabel.hpp"
#include "ced/types.hpp"

namespace ced {

/// One event type: a Gaussian over temporal descriptors and a unigram word model.
struct SynthClass {
  std::string name;
  Vector mean;
  double sigma = 0.0;
  std::map<std::string, double> words;  // token -> probability
  bool interest = true;  // false: appears only as a distractor, labelled BACKGROUND
};

struct SynthConfig {
  std::vector<SynthClass> classes;
  std::size_t event_len_min = 20;
  std::size_t event_len_max = 40;
  std::size_t distractors_per_video = 6;
  double noise_sigma = 0.1;
  std::size_t words_per_frame = 3;
  double word_noise = 0.0;  // chance a token is swapped for a uniformly drawn one
  std::size_t embedding_dim = 16;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t temporal_dim() const;
  std::vector<std::string> interest_classes() const;  // sorted
  std::vector<std::string> tokens() const;             // sorted union of all word models
};

nlohmann::json to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig base = {});

/// A small ready-made configuration: three classes of interest and three
/// distractor-only classes, separable in both channels.
SynthConfig default_synth_config();

/// Each video: distractor events around one event of interest at a random
/// position. Video i's event of interest cycles through the interest classes.
/// Distractors are drawn from the non-interest classes, or from the other
/// classes when every class is of interest.
std::vector<Sequence> synth_generate(const SynthConfig& cfg, std::size_t n_videos);

/// Deterministic random word embeddings for every token in the config.
std::map<std::string, Vector> synth_embeddings(const SynthConfig& cfg);

/// Table that maps each interest class to its own tokens. Exact when word
/// models are disjoint and word_noise is 0; throws InvalidConfig when an
/// interest class shares a token with another class.
LookupTable perfect_table(const SynthConfig& cfg);

}  // namespace ced
