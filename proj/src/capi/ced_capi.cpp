#include "ced/ced.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <string>

#include "ced/autolabel.hpp"
#include "ced/codebook.hpp"
#include "ced/detector.hpp"
#include "ced/error.hpp"
#include "ced/eval.hpp"
#include "ced/io.hpp"
#include "ced/learner.hpp"
#include "ced/synth.hpp"

using nlohmann::json;

struct ced_dataset {
  std::vector<ced::Sequence> seqs;
};
struct ced_codebook {
  ced::Codebook cb;
};
struct ced_vocab {
  ced::SemanticVocab vocab;
};
struct ced_encoded {
  std::vector<ced::EncodedSequence> encs;
};
struct ced_model {
  ced::Model model;
};
struct ced_detections {
  std::vector<ced::DetectionResult> results;
};
struct ced_table {
  ced::LookupTable table;
};
struct ced_stream {
  std::unique_ptr<ced::Model> model;
  std::unique_ptr<ced::StreamingDetector> det;
};

namespace {

thread_local std::string g_error;
thread_local std::string g_error_kind;

template <class Fn>
ced_status guard(Fn&& fn) {
  try {
    fn();
    g_error.clear();
    g_error_kind.clear();
    return CED_OK;
  } catch (const ced::Error& e) {
    g_error = e.what();
    g_error_kind = std::string(ced::to_string(e.code()));
    return ced::is_validation(e.code()) ? CED_E_VALIDATION : CED_E_RUNTIME;
  } catch (const std::exception& e) {
    g_error = e.what();
    g_error_kind = "RuntimeError";
    return CED_E_RUNTIME;
  } catch (...) {
    g_error = "unknown failure";
    g_error_kind = "RuntimeError";
    return CED_E_RUNTIME;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) ced::fail(ced::ErrorCode::InvalidConfig, std::string(what) + " is NULL");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void give(char** out, const std::string& s) {
  if (out != nullptr) *out = dup(s);
}

json parse_config(const char* text) {
  if (text == nullptr || *text == '\0') return json::object();
  try {
    json j = json::parse(text);
    if (!j.is_object()) ced::fail(ced::ErrorCode::InvalidConfig, "configuration must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    ced::fail(ced::ErrorCode::ParseError, std::string("configuration: ") + e.what());
  }
}

json provenance(const char* text) {
  if (text == nullptr) return nullptr;
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    ced::fail(ced::ErrorCode::ParseError, std::string("provenance: ") + e.what());
  }
}

ced::KMeansConfig kmeans_config(const json& j) {
  ced::KMeansConfig cfg;
  try {
    cfg.K = j.value("K", cfg.K);
    cfg.max_iters = j.value("max_iters", cfg.max_iters);
    cfg.tol = j.value("tol", cfg.tol);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.restarts = j.value("restarts", cfg.restarts);
  } catch (const json::exception& e) {
    ced::fail(ced::ErrorCode::InvalidConfig, std::string("kmeans config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void write_doc(const char* path, json doc, const char* prov) {
  require(path, "path");
  json p = provenance(prov);
  if (!p.is_null()) doc["provenance"] = std::move(p);
  ced::io::write_json(path, doc);
}

void write_lines(const char* path, std::vector<json> lines, const char* prov) {
  require(path, "path");
  json p = provenance(prov);
  if (!p.is_null()) {
    for (auto& l : lines) l["provenance"] = p;
  }
  ced::io::write_jsonl(path, lines);
}

std::vector<std::string> present_classes(const std::vector<ced::EncodedSequence>& encs) {
  std::set<std::string> s;
  for (const auto& e : encs) {
    for (const auto& l : e.labels) {
      if (l != ced::kBackground) s.insert(l);
    }
  }
  return {s.begin(), s.end()};
}

}  // namespace

extern "C" {

const char* ced_version(void) { return "0.1.0"; }
const char* ced_last_error(void) { return g_error.c_str(); }
const char* ced_last_error_kind(void) { return g_error_kind.c_str(); }
void ced_string_free(char* s) { std::free(s); }

ced_status ced_default_config(char** config_json) {
  return guard([&] {
    const ced::KMeansConfig km;
    json synth = ced::to_json(ced::default_synth_config());
    synth["n_videos"] = 24;
    synth["n_test"] = 12;
    json combos = json::array();
    for (const auto& c : ced::default_combos()) combos.push_back(ced::to_json(c));
    json train = ced::to_json(ced::TrainConfig{});
    train["tune_thresholds"] = true;
    const json doc = {{"seed", 0},
                      {"jobs", 1},
                      {"synth", synth},
                      {"codebook",
                       {{"K", km.K}, {"max_iters", km.max_iters}, {"tol", km.tol}, {"restarts", km.restarts},
                        {"lambda", 0.1}}},
                      {"vocab", {{"k_sparsity", ced::VocabConfig{}.k_sparsity}}},
                      {"train", train},
                      {"autolabel", {{"min_run", ced::AutolabelConfig{}.min_run}}},
                      {"detect", ced::to_json(ced::DetectConfig{})},
                      {"compare", {{"combos", combos}, {"tune_thresholds", true}}}};
    give(config_json, doc.dump(2));
  });
}

ced_status ced_dataset_load(const char* path, ced_dataset** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    auto ds = std::make_unique<ced_dataset>();
    ds->seqs = ced::io::read_sequences(path);
    *out = ds.release();
  });
}

ced_status ced_dataset_load_unchecked(const char* path, ced_dataset** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    auto ds = std::make_unique<ced_dataset>();
    ds->seqs = ced::io::read_sequences(path, false);
    *out = ds.release();
  });
}

ced_status ced_dataset_save(const ced_dataset* ds, const char* path, const char* provenance_json) {
  return guard([&] {
    require(ds, "dataset");
    require(path, "path");
    const json p = provenance(provenance_json);
    if (p.is_null()) {
      ced::io::write_sequences(std::filesystem::path(path), ds->seqs);
      return;
    }
    auto copy = ds->seqs;
    for (auto& s : copy) s.provenance = p;
    ced::io::write_sequences(std::filesystem::path(path), copy);
  });
}

size_t ced_dataset_size(const ced_dataset* ds) { return ds ? ds->seqs.size() : 0; }

ced_status ced_dataset_validate(const ced_dataset* ds, int require_semantic, char** report_json) {
  bool any = false;
  const ced_status st = guard([&] {
    require(ds, "dataset");
    json seqs = json::array();
    for (const auto& s : ds->seqs) {
      json v = json::array();
      for (const auto& viol : ced::validate_sequence(s, require_semantic != 0)) {
        v.push_back({{"frame", viol.frame ? json(*viol.frame) : json()},
                     {"field", viol.field},
                     {"message", ced::describe(viol)}});
      }
      any = any || !v.empty();
      seqs.push_back({{"id", s.id}, {"frames", s.frames.size()}, {"violations", v}});
    }
    give(report_json, json({{"valid", !any}, {"sequences", seqs}}).dump(2));
  });
  if (st == CED_OK && any) {
    g_error = "dataset has invariant violations";
    g_error_kind = std::string(ced::to_string(ced::ErrorCode::DimensionMismatch));
    return CED_E_VALIDATION;
  }
  return st;
}

ced_status ced_dataset_strip_labels(const ced_dataset* ds, ced_dataset** out) {
  return guard([&] {
    require(ds, "dataset");
    require(out, "out");
    auto copy = std::make_unique<ced_dataset>(*ds);
    for (auto& s : copy->seqs) {
      for (auto& f : s.frames) f.label.reset();
    }
    *out = copy.release();
  });
}

void ced_dataset_free(ced_dataset* ds) { delete ds; }

ced_status ced_synth_default_config(char** config_json) {
  return guard([&] { give(config_json, ced::to_json(ced::default_synth_config()).dump(2)); });
}

ced_status ced_synth_generate(const char* config_json, size_t n_videos, ced_dataset** out) {
  return guard([&] {
    require(out, "out");
    const auto cfg = ced::synth_config_from_json(parse_config(config_json), ced::default_synth_config());
    auto ds = std::make_unique<ced_dataset>();
    ds->seqs = ced::synth_generate(cfg, n_videos);
    *out = ds.release();
  });
}

ced_status ced_synth_write_embeddings(const char* config_json, const char* path) {
  return guard([&] {
    require(path, "path");
    const auto cfg = ced::synth_config_from_json(parse_config(config_json), ced::default_synth_config());
    ced::io::write_embeddings(path, ced::synth_embeddings(cfg));
  });
}

ced_status ced_synth_perfect_table(const char* config_json, char** table_json) {
  return guard([&] {
    const auto cfg = ced::synth_config_from_json(parse_config(config_json), ced::default_synth_config());
    give(table_json, ced::to_json(ced::perfect_table(cfg)).dump(2));
  });
}

ced_status ced_codebook_build(const ced_dataset* ds, const char* kmeans_json, double lambda, size_t jobs,
                              ced_codebook** out) {
  return guard([&] {
    require(ds, "dataset");
    require(out, "out");
    const auto cfg = kmeans_config(parse_config(kmeans_json));
    auto cb = std::make_unique<ced_codebook>();
    cb->cb = ced::build_codebook(ced::temporal_samples(ds->seqs), cfg, lambda, jobs);
    *out = cb.release();
  });
}

ced_status ced_codebook_load(const char* path, ced_codebook** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    auto cb = std::make_unique<ced_codebook>();
    cb->cb = ced::io::codebook_from_json(ced::io::read_json(path));
    *out = cb.release();
  });
}

ced_status ced_codebook_save(const ced_codebook* cb, const char* path, const char* provenance_json) {
  return guard([&] {
    require(cb, "codebook");
    write_doc(path, ced::io::to_json(cb->cb), provenance_json);
  });
}

size_t ced_codebook_size(const ced_codebook* cb) { return cb ? cb->cb.size() : 0; }
void ced_codebook_free(ced_codebook* cb) { delete cb; }

ced_status ced_vocab_build(const ced_dataset* ds, const char* embeddings_path, const char* vocab_json, size_t jobs,
                           ced_vocab** out) {
  return guard([&] {
    require(ds, "dataset");
    require(out, "out");
    const json j = parse_config(vocab_json);
    ced::VocabConfig cfg;
    cfg.kmeans = kmeans_config(j);
    cfg.k_sparsity = j.value("k_sparsity", cfg.k_sparsity);
    std::map<std::string, ced::Vector> table;
    if (embeddings_path != nullptr) table = ced::io::read_embeddings(embeddings_path);
    auto v = std::make_unique<ced_vocab>();
    v->vocab = ced::build_vocab(ds->seqs, std::move(table), cfg, jobs);
    *out = v.release();
  });
}

ced_status ced_vocab_load(const char* path, ced_vocab** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    auto v = std::make_unique<ced_vocab>();
    v->vocab = ced::io::vocab_from_json(ced::io::read_json(path));
    *out = v.release();
  });
}

ced_status ced_vocab_save(const ced_vocab* v, const char* path, const char* provenance_json) {
  return guard([&] {
    require(v, "vocab");
    write_doc(path, ced::io::to_json(v->vocab), provenance_json);
  });
}

void ced_vocab_free(ced_vocab* v) { delete v; }

ced_status ced_encode(const ced_dataset* ds, const ced_codebook* cb, const ced_vocab* vocab, size_t jobs,
                      ced_encoded** out) {
  return guard([&] {
    require(ds, "dataset");
    require(cb, "codebook");
    require(out, "out");
    auto e = std::make_unique<ced_encoded>();
    e->encs = ced::encode_all(ds->seqs, cb->cb, vocab ? &vocab->vocab : nullptr, jobs);
    *out = e.release();
  });
}

ced_status ced_encoded_load(const char* path, ced_encoded** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    auto e = std::make_unique<ced_encoded>();
    e->encs = ced::io::read_encoded(path);
    *out = e.release();
  });
}

ced_status ced_encoded_save(const ced_encoded* e, const char* path, const char* provenance_json) {
  return guard([&] {
    require(e, "encoded");
    std::vector<json> lines;
    for (const auto& enc : e->encs) lines.push_back(ced::io::to_json(enc));
    write_lines(path, std::move(lines), provenance_json);
  });
}

size_t ced_encoded_size(const ced_encoded* e) { return e ? e->encs.size() : 0; }

ced_status ced_encoded_shape(const ced_encoded* e, size_t i, size_t* frames, size_t* code_dim) {
  return guard([&] {
    require(e, "encoded");
    if (i >= e->encs.size()) ced::fail(ced::ErrorCode::IndexOutOfRange, "sequence index out of range");
    if (frames) *frames = e->encs[i].frames();
    if (code_dim) *code_dim = e->encs[i].code_dim();
  });
}

ced_status ced_encoded_codes(const ced_encoded* e, size_t i, int track, size_t f, double* out) {
  return guard([&] {
    require(e, "encoded");
    require(out, "out");
    if (i >= e->encs.size()) ced::fail(ced::ErrorCode::IndexOutOfRange, "sequence index out of range");
    const auto& enc = e->encs[i];
    if (f >= enc.frames()) ced::fail(ced::ErrorCode::IndexOutOfRange, "frame index out of range");
    const auto row = ced::detail::row(track == 0 ? enc.temporal_codes : enc.semantic_codes, f);
    std::copy(row.begin(), row.end(), out);
  });
}

void ced_encoded_free(ced_encoded* e) { delete e; }

ced_status ced_train(const ced_encoded* data, const char* classes_json, const char* train_json, ced_model** out,
                     char** report_json) {
  return guard([&] {
    require(data, "encoded");
    require(out, "out");
    const auto cfg = ced::train_config_from_json(parse_config(train_json));
    std::vector<std::string> classes;
    if (classes_json != nullptr) {
      try {
        classes = json::parse(classes_json).get<std::vector<std::string>>();
      } catch (const json::exception& e) {
        ced::fail(ced::ErrorCode::ParseError, std::string("class list: ") + e.what());
      }
    } else {
      classes = present_classes(data->encs);
    }
    auto result = ced::train(data->encs, classes, cfg);
    auto m = std::make_unique<ced_model>();
    m->model = std::move(result.model);
    give(report_json, ced::to_json(result.report).dump(2));
    *out = m.release();
  });
}

ced_status ced_model_load(const char* path, ced_model** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    auto m = std::make_unique<ced_model>();
    m->model = ced::io::model_from_json(ced::io::read_json(path));
    *out = m.release();
  });
}

ced_status ced_model_save(const ced_model* m, const char* path, const char* provenance_json) {
  return guard([&] {
    require(m, "model");
    write_doc(path, ced::io::to_json(m->model), provenance_json);
  });
}

ced_status ced_model_to_json(const ced_model* m, char** out) {
  return guard([&] {
    require(m, "model");
    give(out, ced::io::to_json(m->model).dump(2));
  });
}

int ced_model_converged(const ced_model* m) { return m && m->model.converged() ? 1 : 0; }
void ced_model_free(ced_model* m) { delete m; }

ced_status ced_risk_bound(const ced_model* m, const ced_encoded* data, char** report_json) {
  return guard([&] {
    require(m, "model");
    require(data, "encoded");
    give(report_json, ced::to_json(ced::empirical_risk_bound(m->model, data->encs)).dump(2));
  });
}

ced_status ced_tune_thresholds(ced_model* m, const ced_encoded* data, const char* detect_json, size_t jobs) {
  return guard([&] {
    require(m, "model");
    require(data, "encoded");
    const auto cfg = ced::detect_config_from_json(parse_config(detect_json));
    ced::tune_thresholds(m->model, data->encs, cfg, jobs);
  });
}

ced_status ced_detect(const ced_model* m, const ced_encoded* data, const char* detect_json, size_t jobs,
                      ced_detections** out) {
  return guard([&] {
    require(m, "model");
    require(data, "encoded");
    require(out, "out");
    const auto cfg = ced::detect_config_from_json(parse_config(detect_json));
    auto d = std::make_unique<ced_detections>();
    d->results = ced::detect_all(m->model, data->encs, cfg, jobs);
    *out = d.release();
  });
}

ced_status ced_detections_save(const ced_detections* d, const char* path, const char* provenance_json) {
  return guard([&] {
    require(d, "detections");
    std::vector<json> lines;
    for (const auto& r : d->results) lines.push_back(ced::io::to_json(r));
    write_lines(path, std::move(lines), provenance_json);
  });
}

ced_status ced_detections_to_json(const ced_detections* d, char** out) {
  return guard([&] {
    require(d, "detections");
    json arr = json::array();
    for (const auto& r : d->results) arr.push_back(ced::io::to_json(r));
    give(out, arr.dump());
  });
}

void ced_detections_free(ced_detections* d) { delete d; }

ced_status ced_stream_open(const ced_model* m, const char* detect_json, const char* id, ced_stream** out) {
  return guard([&] {
    require(m, "model");
    require(out, "out");
    auto s = std::make_unique<ced_stream>();
    s->model = std::make_unique<ced::Model>(m->model);
    s->det = std::make_unique<ced::StreamingDetector>(*s->model, ced::detect_config_from_json(parse_config(detect_json)),
                                                      id ? id : "");
    *out = s.release();
  });
}

ced_status ced_stream_push(ced_stream* s, const double* temporal, size_t temporal_len, const double* semantic,
                           size_t semantic_len, char** label_out, double* score_out) {
  return guard([&] {
    require(s, "stream");
    require(temporal, "temporal");
    const auto d = s->det->push({temporal, temporal_len},
                                semantic ? std::span<const double>(semantic, semantic_len) : std::span<const double>{});
    give(label_out, d.label);
    if (score_out) *score_out = d.score;
  });
}

ced_status ced_stream_finish(ced_stream* s, char** result_json) {
  return guard([&] {
    require(s, "stream");
    give(result_json, ced::io::to_json(s->det->finish()).dump());
  });
}

void ced_stream_free(ced_stream* s) { delete s; }

ced_status ced_evaluate(const ced_model* m, const ced_encoded* test, const char* detect_json, size_t jobs,
                        char** report_json, char** table_text, char** csv_text) {
  return guard([&] {
    require(m, "model");
    require(test, "encoded");
    const auto cfg = ced::detect_config_from_json(parse_config(detect_json));
    ced::EvalReport rep;
    rep.classes = m->model.class_names();
    rep.rows.push_back(ced::evaluate(m->model, test->encs, cfg, jobs));
    rep.rows.back().combo = "model";
    give(report_json, ced::to_json(rep).dump(2));
    give(table_text, ced::to_table(rep));
    give(csv_text, ced::to_csv(rep));
  });
}

ced_status ced_compare(const ced_encoded* train, const ced_encoded* test, const char* compare_json, size_t jobs,
                       char** report_json, char** table_text, char** csv_text) {
  return guard([&] {
    require(train, "train set");
    require(test, "test set");
    const json j = parse_config(compare_json);
    ced::CompareConfig cfg;
    cfg.train = ced::train_config_from_json(j.value("train", json::object()));
    cfg.detect = ced::detect_config_from_json(j.value("detect", json::object()));
    cfg.tune_thresholds = j.value("tune_thresholds", true);
    cfg.jobs = jobs;
    std::vector<ced::Combo> combos;
    if (j.contains("combos")) {
      for (const auto& c : j.at("combos")) combos.push_back(ced::combo_from_json(c));
    } else {
      combos = ced::default_combos();
    }
    std::vector<std::string> classes;
    if (j.contains("classes")) {
      classes = j.at("classes").get<std::vector<std::string>>();
    } else {
      classes = present_classes(train->encs);
    }
    const auto rep = ced::compare_features(train->encs, test->encs, classes, combos, cfg);
    give(report_json, ced::to_json(rep).dump(2));
    give(table_text, ced::to_table(rep));
    give(csv_text, ced::to_csv(rep));
  });
}

ced_status ced_table_load(const char* path, ced_table** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    auto t = std::make_unique<ced_table>();
    t->table = ced::table_from_json(ced::io::read_json(path));
    *out = t.release();
  });
}

ced_status ced_table_parse(const char* table_json, ced_table** out) {
  return guard([&] {
    require(table_json, "table_json");
    require(out, "out");
    auto t = std::make_unique<ced_table>();
    t->table = ced::table_from_json(parse_config(table_json));
    *out = t.release();
  });
}

void ced_table_free(ced_table* t) { delete t; }

ced_status ced_label_frames(const ced_dataset* ds, const ced_table* t, char** labels_json) {
  return guard([&] {
    require(ds, "dataset");
    require(t, "table");
    json arr = json::array();
    for (const auto& s : ds->seqs) arr.push_back(ced::label_frames(s, t->table));
    give(labels_json, arr.dump());
  });
}

ced_status ced_autolabel_train(const ced_dataset* ds, const ced_table* t, const ced_codebook* cb,
                               const ced_vocab* vocab, const char* train_json, const char* autolabel_json,
                               size_t jobs, ced_model** out, char** report_json) {
  return guard([&] {
    require(ds, "dataset");
    require(t, "table");
    require(cb, "codebook");
    require(out, "out");
    auto cfg = ced::train_config_from_json(parse_config(train_json));
    cfg.jobs = jobs;
    ced::AutolabelConfig acfg;
    try {
      acfg.min_run = parse_config(autolabel_json).value("min_run", acfg.min_run);
    } catch (const json::exception& e) {
      ced::fail(ced::ErrorCode::InvalidConfig, std::string("autolabel config: ") + e.what());
    }
    auto result = ced::autolabel_train(ds->seqs, t->table, cb->cb, vocab ? &vocab->vocab : nullptr, cfg, jobs, acfg);
    json rep = ced::to_json(result.report);
    if (result.train_report) rep["training"] = ced::to_json(*result.train_report);
    give(report_json, rep.dump(2));
    if (result.model) {
      auto m = std::make_unique<ced_model>();
      m->model = std::move(*result.model);
      *out = m.release();
    } else {
      *out = nullptr;
    }
  });
}

}  // extern "C"
