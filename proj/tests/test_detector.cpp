#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "ced/detector.hpp"
#include "support.hpp"

using namespace ced;
using namespace ced::testing;

namespace {

const std::string kBg(kBackground);

Model random_model(std::mt19937_64& rng, std::size_t K, FeatureLayout layout, std::size_t classes = 3) {
  Model m;
  m.code_dim = K;
  m.layout = layout;
  for (std::size_t c = 0; c < classes; ++c) {
    m.classes.push_back({std::string(1, static_cast<char>('A' + c)), random_vector(rng, layout.dim(K)), 0.0,
                         std::uniform_real_distribution<double>(-0.2, 0.3)(rng), true});
  }
  return m;
}

// Best window score ending at f, by explicit enumeration of candidate starts.
double naive_frame_score(const Model& m, const EncodedSequence& enc, const DetectConfig& cfg, std::size_t c,
                         std::size_t f) {
  const long lo = std::max(0L, static_cast<long>(f) + 1 - static_cast<long>(cfg.max_window));
  double best = -std::numeric_limits<double>::infinity();
  for (long s = static_cast<long>(f); s >= lo; s -= static_cast<long>(cfg.stride)) {
    const Vector psi = naive_feature(enc, m.layout, m.layout.primary, static_cast<std::size_t>(s), f);
    best = std::max(best, m.classes[c].weights.dot(psi) + m.classes[c].bias);
  }
  return best;
}

DetectionResult stream(const Model& m, const DetectConfig& cfg, const EncodedSequence& enc) {
  StreamingDetector sd(m, cfg, enc.id);
  for (std::size_t f = 0; f < enc.frames(); ++f) {
    sd.push(detail::row(enc.temporal_codes, f), detail::row(enc.semantic_codes, f));
  }
  return sd.finish();
}

std::set<std::size_t> labelled_frames(const DetectionResult& r) {
  std::set<std::size_t> out;
  for (std::size_t f = 0; f < r.per_frame.size(); ++f) {
    if (r.per_frame[f].label != kBg) out.insert(f);
  }
  return out;
}

}  // namespace

TEST_CASE("all-zero weights never fire") {
  std::mt19937_64 rng(1);
  const auto enc = random_encoded(rng, "z", 20, 4);
  Model m;
  m.code_dim = 4;
  m.classes = {{"A", Vector::Zero(4), 0.0, 0.0, true}, {"B", Vector::Zero(4), 0.0, 0.0, true}};
  const auto r = detect(m, enc, DetectConfig{});
  for (const auto& d : r.per_frame) CHECK(d.label == kBg);
  CHECK(r.segments.empty());
}

TEST_CASE("hand case produces a single segment") {
  RowMatrix codes = RowMatrix::Zero(6, 2);
  for (int f = 3; f <= 5; ++f) codes(f, 0) = 1.0;
  const auto enc = EncodedSequence::from_codes("h", codes, RowMatrix::Zero(6, 2), {}, false);
  Model m;
  m.code_dim = 2;
  m.classes = {{"A", Eigen::Vector2d(1.0, 0.0), 0.0, 0.5, true}};
  DetectConfig cfg;
  cfg.hysteresis = 1;
  const auto r = detect(m, enc, cfg);
  REQUIRE(r.segments.size() == 1);
  CHECK(r.segments[0] == Segment{"A", 3, 5, 1.0});
  for (std::size_t f = 0; f < 6; ++f) CHECK(r.per_frame[f].label == (f >= 3 ? "A" : kBg));
  CHECK(r.per_frame[0].score == 0.0);
  CHECK(check_detection(r).empty());

  SUBCASE("hysteresis delays the switch") {
    cfg.hysteresis = 2;
    const auto h = detect(m, enc, cfg);
    REQUIRE(h.segments.size() == 1);
    CHECK(h.segments[0].start == 4);
    CHECK(h.segments[0].end == 5);
  }
  SUBCASE("a config threshold overrides the model") {
    cfg.thresholds["A"] = 1.0;
    CHECK(detect(m, enc, cfg).segments.empty());
    cfg.thresholds["missing"] = 0.0;
    CHECK_THROWS_AS(detect(m, enc, cfg), Error);
  }
}

TEST_CASE("frame scores match the naive window enumeration") {
  std::mt19937_64 rng(2);
  for (const FeatureLayout layout : {FeatureLayout{}, FeatureLayout{Channel::Joint, Channel::Semantic},
                                     FeatureLayout{Channel::Semantic, Channel::Semantic}}) {
    const auto enc = random_encoded(rng, "n", 25, 3);
    const auto m = random_model(rng, 3, layout);
    for (std::size_t max_window : {1u, 4u, 150u}) {
      for (std::size_t stride : {1u, 3u}) {
        DetectConfig cfg;
        cfg.max_window = max_window;
        cfg.stride = stride;
        const RowMatrix S = score_matrix(m, enc, cfg);
        for (std::size_t f = 0; f < 25; ++f) {
          const auto fs = frame_scores(m, enc, cfg, f);
          for (std::size_t c = 0; c < 3; ++c) {
            const double want = naive_frame_score(m, enc, cfg, c, f);
            CHECK(std::abs(fs[c] - want) <= 1e-12);
            CHECK(S(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(c)) == fs[c]);
          }
        }
      }
    }
  }
}

TEST_CASE("frame zero and unit windows score the single frame") {
  std::mt19937_64 rng(3);
  const auto enc = random_encoded(rng, "u", 8, 3);
  const auto m = random_model(rng, 3, {});
  DetectConfig cfg;
  const auto f0 = frame_scores(m, enc, cfg, 0);
  cfg.max_window = 1;
  for (std::size_t f = 0; f < 8; ++f) {
    const auto fs = frame_scores(m, enc, cfg, f);
    for (std::size_t c = 0; c < 3; ++c) {
      const double single = m.classes[c].weights.dot(enc.temporal_codes.row(static_cast<Eigen::Index>(f)).transpose());
      CHECK(std::abs(fs[c] - single) <= 1e-12);
      if (f == 0) CHECK(f0[c] == fs[c]);
    }
  }
  CHECK_THROWS_AS(frame_scores(m, enc, cfg, 8), Error);
}

TEST_CASE("longer windows never lower a frame score") {
  std::mt19937_64 rng(4);
  const auto enc = random_encoded(rng, "w", 30, 4);
  const auto m = random_model(rng, 4, {});
  DetectConfig small, large;
  small.max_window = 5;
  large.max_window = 12;
  const RowMatrix a = score_matrix(m, enc, small);
  const RowMatrix b = score_matrix(m, enc, large);
  CHECK(((b - a).array() >= 0.0).all());
}

TEST_CASE("raising one class threshold never adds frames of that class") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const auto enc = random_encoded(rng, "t", 40, 3);
    const auto m = random_model(rng, 3, {});
    DetectConfig base;
    base.hysteresis = 1 + trial % 4;
    const auto before = detect(m, enc, base);
    const auto thr = effective_thresholds(m, base);
    for (std::size_t c = 0; c < m.classes.size(); ++c) {
      DetectConfig raised = base;
      raised.thresholds[m.classes[c].name] = thr[c] + 0.05 * (1 + trial % 5);
      const auto after = detect(m, enc, raised);
      const auto count = [&](const DetectionResult& r) {
        return std::count_if(r.per_frame.begin(), r.per_frame.end(),
                             [&](const FrameDecision& d) { return d.label == m.classes[c].name; });
      };
      CHECK(count(after) <= count(before));
      if (base.hysteresis == 1) {
        const auto a = labelled_frames(before), b = labelled_frames(after);
        CHECK(std::includes(a.begin(), a.end(), b.begin(), b.end()));
      }
    }
  }
}

TEST_CASE("scaling every code and threshold by a common factor keeps every decision") {
  std::mt19937_64 rng(6);
  for (double c : {4.0, 0.5, 3.0}) {
    const auto enc = random_encoded(rng, "s", 40, 3);
    const auto scaled_enc = EncodedSequence::from_codes(enc.id, enc.temporal_codes * c, enc.semantic_codes * c,
                                                        enc.labels, enc.has_semantic);
    const auto m = random_model(rng, 3, {});
    auto scaled = m;
    for (auto& cm : scaled.classes) cm.threshold *= c;
    const auto a = detect(m, enc, DetectConfig{});
    const auto b = detect(scaled, scaled_enc, DetectConfig{});
    REQUIRE(a.per_frame.size() == b.per_frame.size());
    for (std::size_t f = 0; f < a.per_frame.size(); ++f) {
      CHECK(a.per_frame[f].label == b.per_frame[f].label);
      CHECK(b.per_frame[f].score == doctest::Approx(c * a.per_frame[f].score).epsilon(1e-12));
    }
  }
}

TEST_CASE("streaming detection equals batch detection") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const FeatureLayout layout = trial % 3 == 0   ? FeatureLayout{}
                                 : trial % 3 == 1 ? FeatureLayout{Channel::Joint, Channel::Semantic}
                                                  : FeatureLayout{Channel::Semantic, Channel::Semantic};
    const auto enc = random_encoded(rng, "st", 50, 3);
    const auto m = random_model(rng, 3, layout);
    DetectConfig cfg;
    cfg.max_window = 1 + trial % 17;
    cfg.stride = 1 + trial % 4;
    cfg.hysteresis = 1 + trial % 3;
    const auto batch = detect(m, enc, cfg);
    const auto live = stream(m, cfg, enc);
    CHECK(batch == live);
    CHECK(check_detection(batch).empty());
    CHECK(check_detection(live).empty());
  }
}

TEST_CASE("streaming push rejects wrong code sizes") {
  std::mt19937_64 rng(8);
  const auto m = random_model(rng, 3, {Channel::Joint, Channel::Semantic});
  StreamingDetector sd(m, DetectConfig{}, "x");
  const std::vector<double> three(3, 0.1), two(2, 0.1);
  CHECK_THROWS_AS(sd.push(two, three), Error);
  CHECK_THROWS_AS(sd.push(three, {}), Error);
  CHECK_NOTHROW(sd.push(three, three));
  CHECK(sd.frames() == 1);
}

TEST_CASE("detect_all is independent of the worker count") {
  std::mt19937_64 rng(9);
  std::vector<EncodedSequence> data;
  for (int i = 0; i < 10; ++i) data.push_back(random_encoded(rng, "d" + std::to_string(i), 30, 3));
  const auto m = random_model(rng, 3, {});
  const auto a = detect_all(m, data, DetectConfig{}, 1);
  const auto b = detect_all(m, data, DetectConfig{}, 4);
  CHECK(a == b);
  for (const auto& r : a) CHECK(check_detection(r).empty());
}

TEST_CASE("detect config validation") {
  DetectConfig cfg;
  cfg.stride = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  const auto parsed = detect_config_from_json({{"max_window", 9}, {"thresholds", {{"A", 0.25}}}});
  CHECK(parsed.max_window == 9);
  CHECK(parsed.thresholds.at("A") == 0.25);
  CHECK_THROWS_AS(detect_config_from_json({{"hysteresis", 0}}), Error);
}
