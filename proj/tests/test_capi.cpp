#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "ced/ced.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("ced_capi_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const char* name) const { return (path / name).string(); }
};

std::string take(char* s) {
  std::string out = s ? s : "";
  ced_string_free(s);
  return out;
}

const char* kSynth = R"({"seed": 4})";

}  // namespace

TEST_CASE("version and default config") {
  CHECK(std::string(ced_version()).size() > 0);
  char* cfg = nullptr;
  REQUIRE(ced_default_config(&cfg) == CED_OK);
  const auto j = json::parse(take(cfg));
  for (const char* key : {"seed", "jobs", "synth", "codebook", "vocab", "train", "detect", "autolabel"}) {
    CHECK(j.contains(key));
  }
}

TEST_CASE("errors are reported through status codes and last_error") {
  ced_dataset* ds = nullptr;
  CHECK(ced_dataset_load("/nonexistent/file.vjsonl", &ds) != CED_OK);
  CHECK(ds == nullptr);
  CHECK(std::string(ced_last_error()).find("/nonexistent/file.vjsonl") != std::string::npos);

  CHECK(ced_synth_generate("{not json", 2, &ds) == CED_E_VALIDATION);
  CHECK(std::string(ced_last_error_kind()) == "ParseError");

  CHECK(ced_dataset_size(nullptr) == 0);
  CHECK(ced_synth_generate(kSynth, 2, nullptr) == CED_E_VALIDATION);
  ced_dataset_free(nullptr);  // no-op
}

TEST_CASE("dimension errors name the frame") {
  TempDir tmp;
  {
    std::ofstream out(tmp / "bad.vjsonl");
    out << R"({"id":"v","num_frames":2,"temporal_dim":2,"semantic_dim":0,"classes":[]})" << '\n'
        << R"({"t":0,"temporal":[0,1]})" << '\n'
        << R"({"t":1,"temporal":[0]})" << '\n';
  }
  ced_dataset* ds = nullptr;
  CHECK(ced_dataset_load((tmp / "bad.vjsonl").c_str(), &ds) == CED_E_VALIDATION);
  CHECK(std::string(ced_last_error_kind()) == "DimensionMismatch");
  CHECK(std::string(ced_last_error()).find("frame 1") != std::string::npos);

  REQUIRE(ced_dataset_load_unchecked((tmp / "bad.vjsonl").c_str(), &ds) == CED_OK);
  char* report = nullptr;
  CHECK(ced_dataset_validate(ds, 0, &report) == CED_E_VALIDATION);
  const auto j = json::parse(take(report));
  CHECK(j.dump().find("frame 1") != std::string::npos);
  ced_dataset_free(ds);
}

TEST_CASE("small pipeline through the C interface") {
  TempDir tmp;
  ced_dataset *train_ds = nullptr, *test_ds = nullptr;
  REQUIRE(ced_synth_generate(kSynth, 6, &train_ds) == CED_OK);
  REQUIRE(ced_synth_generate(R"({"seed": 5})", 3, &test_ds) == CED_OK);
  CHECK(ced_dataset_size(train_ds) == 6);
  REQUIRE(ced_synth_write_embeddings(kSynth, (tmp / "emb.jsonl").c_str()) == CED_OK);

  ced_codebook* cb = nullptr;
  REQUIRE(ced_codebook_build(train_ds, R"({"K": 6, "seed": 1})", 0.1, 2, &cb) == CED_OK);
  CHECK(ced_codebook_size(cb) == 6);
  ced_vocab* vocab = nullptr;
  REQUIRE(ced_vocab_build(train_ds, (tmp / "emb.jsonl").c_str(), R"({"K": 6, "seed": 2})", 2, &vocab) == CED_OK);

  ced_encoded *enc = nullptr, *enc_test = nullptr;
  REQUIRE(ced_encode(train_ds, cb, vocab, 2, &enc) == CED_OK);
  REQUIRE(ced_encode(test_ds, cb, vocab, 2, &enc_test) == CED_OK);
  size_t frames = 0, K = 0;
  REQUIRE(ced_encoded_shape(enc_test, 0, &frames, &K) == CED_OK);
  CHECK(K == 6);
  CHECK(ced_encoded_shape(enc_test, 99, &frames, &K) == CED_E_VALIDATION);

  ced_model* model = nullptr;
  char* report = nullptr;
  REQUIRE(ced_train(enc, nullptr, R"({"C_reg": 1.0})", &model, &report) == CED_OK);
  CHECK(json::parse(take(report)).contains("classes"));
  CHECK(ced_model_converged(model) == 1);
  REQUIRE(ced_tune_thresholds(model, enc, nullptr, 2) == CED_OK);

  // Save, reload and compare the serialized models.
  REQUIRE(ced_model_save(model, (tmp / "model.json").c_str(), R"({"test": true})") == CED_OK);
  ced_model* reloaded = nullptr;
  REQUIRE(ced_model_load((tmp / "model.json").c_str(), &reloaded) == CED_OK);
  char *a = nullptr, *b = nullptr;
  REQUIRE(ced_model_to_json(model, &a) == CED_OK);
  REQUIRE(ced_model_to_json(reloaded, &b) == CED_OK);
  CHECK(take(a) == take(b));

  char* bound = nullptr;
  REQUIRE(ced_risk_bound(model, enc, &bound) == CED_OK);
  for (const auto& row : json::parse(take(bound))) CHECK(row["bound"].get<double>() >= 0.0);

  ced_detections* dets = nullptr;
  REQUIRE(ced_detect(model, enc_test, R"({"hysteresis": 2})", 2, &dets) == CED_OK);
  char* det_json = nullptr;
  REQUIRE(ced_detections_to_json(dets, &det_json) == CED_OK);
  const auto det = json::parse(take(det_json));
  REQUIRE(det.size() == 3);

  // The streaming handle reproduces the first sequence's batch labels.
  ced_stream* st = nullptr;
  REQUIRE(ced_stream_open(model, R"({"hysteresis": 2})", "s0", &st) == CED_OK);
  std::vector<double> t(K), s(K);
  for (size_t f = 0; f < frames; ++f) {
    REQUIRE(ced_encoded_codes(enc_test, 0, 0, f, t.data()) == CED_OK);
    REQUIRE(ced_encoded_codes(enc_test, 0, 1, f, s.data()) == CED_OK);
    char* label = nullptr;
    REQUIRE(ced_stream_push(st, t.data(), K, s.data(), K, &label, nullptr) == CED_OK);
    CHECK(take(label) == det[0]["per_frame"][f]["label"].get<std::string>());
  }
  char* fin = nullptr;
  REQUIRE(ced_stream_finish(st, &fin) == CED_OK);
  CHECK(json::parse(take(fin))["segments"] == det[0]["segments"]);
  CHECK(ced_stream_push(st, t.data(), K - 1, nullptr, 0, nullptr, nullptr) == CED_E_VALIDATION);
  ced_stream_free(st);

  char *eval_json = nullptr, *table = nullptr, *csv = nullptr;
  REQUIRE(ced_evaluate(model, enc_test, nullptr, 2, &eval_json, &table, &csv) == CED_OK);
  const auto ev = json::parse(take(eval_json));
  CHECK(ev["rows"].size() == 1);
  CHECK_FALSE(take(table).empty());
  CHECK(take(csv).rfind("combo,", 0) == 0);

  // Auto-labelling with the generator's own table.
  char* table_json = nullptr;
  REQUIRE(ced_synth_perfect_table(kSynth, &table_json) == CED_OK);
  ced_table* lookup = nullptr;
  REQUIRE(ced_table_parse(take(table_json).c_str(), &lookup) == CED_OK);
  ced_dataset* bare = nullptr;
  REQUIRE(ced_dataset_strip_labels(train_ds, &bare) == CED_OK);
  char* labels = nullptr;
  REQUIRE(ced_label_frames(bare, lookup, &labels) == CED_OK);
  CHECK(json::parse(take(labels)).size() == 6);
  ced_model* auto_model = nullptr;
  char* auto_report = nullptr;
  REQUIRE(ced_autolabel_train(bare, lookup, cb, vocab, nullptr, R"({"min_run": 3})", 2, &auto_model, &auto_report) ==
          CED_OK);
  REQUIRE(auto_model != nullptr);
  CHECK(json::parse(take(auto_report))["status"] == "ok");

  ced_table* silent = nullptr;
  REQUIRE(ced_table_parse(R"({"match_mode": "any", "entries": {"juggle": ["ball"]}})", &silent) == CED_OK);
  ced_model* none = nullptr;
  REQUIRE(ced_autolabel_train(bare, silent, cb, vocab, nullptr, nullptr, 2, &none, &auto_report) == CED_OK);
  CHECK(none == nullptr);
  CHECK(json::parse(take(auto_report))["status"] == "NoPositiveExamples");

  ced_model_free(auto_model);
  ced_table_free(silent);
  ced_table_free(lookup);
  ced_dataset_free(bare);
  ced_detections_free(dets);
  ced_model_free(reloaded);
  ced_model_free(model);
  ced_encoded_free(enc_test);
  ced_encoded_free(enc);
  ced_vocab_free(vocab);
  ced_codebook_free(cb);
  ced_dataset_free(test_ds);
  ced_dataset_free(train_ds);
}
