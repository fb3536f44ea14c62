// Command-line front end. Everything goes through the C interface in ced/ced.h.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ced/ced.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };
Level g_level = Level::Info;

void log(Level level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= g_level) std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << '\n';
}

// Carries a process exit status up to main().
struct Failure {
  int status;
  std::string message;
};

[[noreturn]] void usage_error(const std::string& msg) { throw Failure{CED_E_VALIDATION, msg}; }

void check(ced_status st, const std::string& what) {
  if (st != CED_OK) throw Failure{static_cast<int>(st), what + ": " + ced_last_error()};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  ced_string_free(s);
  return out;
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Dataset = std::unique_ptr<ced_dataset, Deleter<ced_dataset, ced_dataset_free>>;
using Codebook = std::unique_ptr<ced_codebook, Deleter<ced_codebook, ced_codebook_free>>;
using Vocab = std::unique_ptr<ced_vocab, Deleter<ced_vocab, ced_vocab_free>>;
using Encoded = std::unique_ptr<ced_encoded, Deleter<ced_encoded, ced_encoded_free>>;
using ModelH = std::unique_ptr<ced_model, Deleter<ced_model, ced_model_free>>;
using Detections = std::unique_ptr<ced_detections, Deleter<ced_detections, ced_detections_free>>;
using Table = std::unique_ptr<ced_table, Deleter<ced_table, ced_table_free>>;

std::uint64_t derive_seed(std::uint64_t root, const std::string& stream) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : stream) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = root ^ h;
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Resolved run: defaults, then the --config document, then flags.
struct Run {
  std::string command;
  json cfg;

  std::size_t jobs() const { return cfg.value("jobs", std::size_t{1}); }
  std::uint64_t seed() const { return cfg.value("seed", std::uint64_t{0}); }
  std::string block(const char* name) const { return cfg.value(name, json::object()).dump(); }

  std::string provenance() const {
    return json({{"tool", "ced"}, {"version", ced_version()}, {"command", command}, {"config", cfg}}).dump();
  }

  std::string path(const char* key) const {
    const auto& p = cfg.value("paths", json::object());
    return p.contains(key) ? p.at(key).get<std::string>() : std::string();
  }

  std::string need(const char* key) const {
    std::string p = path(key);
    if (p.empty()) usage_error(std::string("missing --") + key);
    if (!fs::exists(p)) usage_error(std::string("--") + key + ": no such file '" + p + "'");
    return p;
  }

  std::string optional_input(const char* key) const {
    std::string p = path(key);
    if (!p.empty() && !fs::exists(p)) usage_error(std::string("--") + key + ": no such file '" + p + "'");
    return p;
  }

  std::string output(const std::string& name) const {
    fs::path dir = path("out").empty() ? fs::path(".") : fs::path(path("out"));
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Failure{CED_E_RUNTIME, "cannot create output directory '" + dir.string() + "': " + ec.message()};
    return (dir / name).string();
  }
};

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) usage_error("--config: cannot open '" + path + "'");
  try {
    json j = json::parse(in);
    if (!j.is_object()) usage_error("--config: top level must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    usage_error("--config: " + std::string(e.what()));
  }
}

Run resolve(const std::string& command, const std::string& config_path, const json& patch) {
  Run run;
  run.command = command;
  char* defaults = nullptr;
  check(ced_default_config(&defaults), "defaults");
  run.cfg = json::parse(take(defaults));
  if (!config_path.empty()) run.cfg.merge_patch(load_config_file(config_path));
  run.cfg.merge_patch(patch);
  const std::uint64_t root = run.seed();
  run.cfg["synth"]["seed"] = derive_seed(root, "synth");
  run.cfg["codebook"]["seed"] = derive_seed(root, "kmeans");
  run.cfg["vocab"]["seed"] = derive_seed(root, "vocab");
  run.cfg["train"]["seed"] = derive_seed(root, "train");
  run.cfg["vocab"]["K"] = run.cfg["codebook"]["K"];
  for (const char* key : {"max_iters", "tol", "restarts"}) run.cfg["vocab"][key] = run.cfg["codebook"][key];
  return run;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Failure{CED_E_RUNTIME, "cannot write '" + path + "'"};
  out << text;
  if (!out) throw Failure{CED_E_RUNTIME, "write failed for '" + path + "'"};
}

void write_json_file(const std::string& path, json doc, const Run& run) {
  doc["provenance"] = json::parse(run.provenance());
  write_text(path, doc.dump(2) + "\n");
  log(Level::Info, "wrote " + path);
}

Dataset load_dataset(const std::string& path) {
  ced_dataset* ds = nullptr;
  check(ced_dataset_load(path.c_str(), &ds), path);
  return Dataset(ds);
}

Codebook load_codebook(const Run& run) {
  ced_codebook* cb = nullptr;
  const auto p = run.need("codebook");
  check(ced_codebook_load(p.c_str(), &cb), p);
  return Codebook(cb);
}

Vocab load_vocab(const Run& run) {
  const auto p = run.optional_input("vocab");
  if (p.empty()) return nullptr;
  ced_vocab* v = nullptr;
  check(ced_vocab_load(p.c_str(), &v), p);
  return Vocab(v);
}

// Encoded data from --<prefix>encoded, or by encoding --<prefix>features.
Encoded load_encoded(const Run& run, const std::string& prefix) {
  const std::string enc_key = prefix + "encoded";
  const std::string feat_key = prefix + "features";
  if (!run.path(enc_key.c_str()).empty()) {
    const auto p = run.need(enc_key.c_str());
    ced_encoded* e = nullptr;
    check(ced_encoded_load(p.c_str(), &e), p);
    return Encoded(e);
  }
  const auto features = run.need(feat_key.c_str());
  auto ds = load_dataset(features);
  auto cb = load_codebook(run);
  auto vocab = load_vocab(run);
  ced_encoded* e = nullptr;
  check(ced_encode(ds.get(), cb.get(), vocab.get(), run.jobs(), &e), features);
  return Encoded(e);
}

ModelH load_model(const Run& run) {
  const auto p = run.need("model");
  ced_model* m = nullptr;
  check(ced_model_load(p.c_str(), &m), p);
  return ModelH(m);
}

void cmd_synth(const Run& run) {
  const json& synth = run.cfg.at("synth");
  const std::string cfg_text = synth.dump();
  const auto n_train = synth.value("n_videos", std::size_t{24});
  const auto n_test = synth.value("n_test", std::size_t{12});

  ced_dataset* train = nullptr;
  check(ced_synth_generate(cfg_text.c_str(), n_train, &train), "synth");
  Dataset train_ds(train);
  const auto train_path = run.output("train.vjsonl");
  check(ced_dataset_save(train_ds.get(), train_path.c_str(), run.provenance().c_str()), train_path);
  log(Level::Info, "wrote " + train_path);

  if (n_test > 0) {
    json test_cfg = synth;
    test_cfg["seed"] = derive_seed(run.seed(), "synth-test");
    ced_dataset* test = nullptr;
    check(ced_synth_generate(test_cfg.dump().c_str(), n_test, &test), "synth");
    Dataset test_ds(test);
    const auto test_path = run.output("test.vjsonl");
    check(ced_dataset_save(test_ds.get(), test_path.c_str(), run.provenance().c_str()), test_path);
    log(Level::Info, "wrote " + test_path);
  }

  const auto emb_path = run.output("embeddings.jsonl");
  check(ced_synth_write_embeddings(cfg_text.c_str(), emb_path.c_str()), emb_path);
  log(Level::Info, "wrote " + emb_path);

  char* table = nullptr;
  if (ced_synth_perfect_table(cfg_text.c_str(), &table) == CED_OK) {
    write_json_file(run.output("table.json"), json::parse(take(table)), run);
  } else {
    log(Level::Warn, std::string("no exact lookup table for this config: ") + ced_last_error());
  }
}

void cmd_build_codebook(const Run& run, bool no_vocab) {
  const auto features = run.need("features");
  auto ds = load_dataset(features);
  const json& cbcfg = run.cfg.at("codebook");
  ced_codebook* cb = nullptr;
  check(ced_codebook_build(ds.get(), cbcfg.dump().c_str(), cbcfg.value("lambda", 0.1), run.jobs(), &cb), features);
  Codebook codebook(cb);
  const auto cb_path = run.output("codebook.json");
  check(ced_codebook_save(codebook.get(), cb_path.c_str(), run.provenance().c_str()), cb_path);
  log(Level::Info, "wrote " + cb_path);
  if (no_vocab) return;

  const auto embeddings = run.optional_input("embeddings");
  ced_vocab* v = nullptr;
  const ced_status st = ced_vocab_build(ds.get(), embeddings.empty() ? nullptr : embeddings.c_str(),
                                        run.block("vocab").c_str(), run.jobs(), &v);
  if (st != CED_OK && embeddings.empty()) {
    log(Level::Warn, std::string("no semantic vocabulary built: ") + ced_last_error());
    return;
  }
  check(st, "vocabulary");
  Vocab vocab(v);
  const auto v_path = run.output("vocab.json");
  check(ced_vocab_save(vocab.get(), v_path.c_str(), run.provenance().c_str()), v_path);
  log(Level::Info, "wrote " + v_path);
}

void cmd_encode(const Run& run) {
  auto enc = load_encoded(run, "");
  const auto path = run.output("encoded.jsonl");
  check(ced_encoded_save(enc.get(), path.c_str(), run.provenance().c_str()), path);
  log(Level::Info, "wrote " + path);
}

void cmd_train(const Run& run) {
  auto enc = load_encoded(run, "");
  const json& train = run.cfg.at("train");
  std::string classes;
  if (train.contains("classes")) classes = train.at("classes").dump();
  ced_model* m = nullptr;
  char* report = nullptr;
  check(ced_train(enc.get(), classes.empty() ? nullptr : classes.c_str(), train.dump().c_str(), &m, &report),
        "train");
  ModelH model(m);
  const json report_doc = json::parse(take(report));
  if (train.value("tune_thresholds", true)) {
    check(ced_tune_thresholds(model.get(), enc.get(), run.block("detect").c_str(), run.jobs()), "threshold tuning");
  }
  if (!ced_model_converged(model.get())) log(Level::Warn, "training hit its iteration budget before converging");
  const auto model_path = run.output("model.json");
  check(ced_model_save(model.get(), model_path.c_str(), run.provenance().c_str()), model_path);
  log(Level::Info, "wrote " + model_path);
  write_json_file(run.output("train_report.json"), report_doc, run);
}

void cmd_detect(const Run& run) {
  auto model = load_model(run);
  auto enc = load_encoded(run, "");
  ced_detections* d = nullptr;
  check(ced_detect(model.get(), enc.get(), run.block("detect").c_str(), run.jobs(), &d), "detect");
  Detections det(d);
  const auto path = run.output("detections.jsonl");
  check(ced_detections_save(det.get(), path.c_str(), run.provenance().c_str()), path);
  log(Level::Info, "wrote " + path);
}

void cmd_autolabel(const Run& run) {
  const auto features = run.need("features");
  auto ds = load_dataset(features);
  const auto table_path = run.need("table");
  ced_table* t = nullptr;
  check(ced_table_load(table_path.c_str(), &t), table_path);
  Table table(t);
  auto cb = load_codebook(run);
  auto vocab = load_vocab(run);
  ced_model* m = nullptr;
  char* report = nullptr;
  check(ced_autolabel_train(ds.get(), table.get(), cb.get(), vocab.get(), run.block("train").c_str(),
                            run.block("autolabel").c_str(), run.jobs(), &m, &report),
        "autolabel");
  ModelH model(m);
  const json report_doc = json::parse(take(report));
  for (const auto& w : report_doc.value("warnings", json::array())) log(Level::Warn, w.get<std::string>());
  write_json_file(run.output("autolabel_report.json"), report_doc, run);
  if (!model) throw Failure{CED_E_VALIDATION, "autolabel: NoPositiveExamples: no class fired on any frame"};
  const auto model_path = run.output("autolabel_model.json");
  check(ced_model_save(model.get(), model_path.c_str(), run.provenance().c_str()), model_path);
  log(Level::Info, "wrote " + model_path);
}

void write_eval_outputs(const Run& run, const std::string& stem, char* report, char* table, char* csv) {
  const std::string table_text = take(table);
  const std::string header = "# " + run.provenance() + "\n";
  write_json_file(run.output(stem + "_report.json"), json::parse(take(report)), run);
  write_text(run.output(stem + "_table.txt"), header + table_text);
  write_text(run.output(stem + ".csv"), header + take(csv));
  std::cout << table_text;
}

void cmd_eval(const Run& run) {
  auto model = load_model(run);
  auto test = run.path("test_features").empty() && run.path("test_encoded").empty() ? load_encoded(run, "")
                                                                                     : load_encoded(run, "test_");
  char *report = nullptr, *table = nullptr, *csv = nullptr;
  check(ced_evaluate(model.get(), test.get(), run.block("detect").c_str(), run.jobs(), &report, &table, &csv), "eval");
  write_eval_outputs(run, "eval", report, table, csv);
}

void cmd_compare(const Run& run) {
  auto train = load_encoded(run, "");
  auto test = load_encoded(run, "test_");
  json cmp = run.cfg.at("compare");
  cmp["train"] = run.cfg.at("train");
  cmp["train"].erase("tune_thresholds");
  cmp["train"].erase("classes");
  cmp["detect"] = run.cfg.at("detect");
  if (run.cfg.at("train").contains("classes")) cmp["classes"] = run.cfg.at("train").at("classes");
  char *report = nullptr, *table = nullptr, *csv = nullptr;
  check(ced_compare(train.get(), test.get(), cmp.dump().c_str(), run.jobs(), &report, &table, &csv), "compare");
  write_eval_outputs(run, "compare", report, table, csv);
}

void cmd_risk_bound(const Run& run) {
  auto model = load_model(run);
  auto enc = load_encoded(run, "");
  char* report = nullptr;
  check(ced_risk_bound(model.get(), enc.get(), &report), "risk-bound");
  write_json_file(run.output("risk_bound.json"), json({{"classes", json::parse(take(report))}}), run);
}

int cmd_validate(const Run& run, bool require_semantic) {
  const auto features = run.need("features");
  ced_dataset* raw = nullptr;
  check(ced_dataset_load_unchecked(features.c_str(), &raw), features);
  Dataset ds(raw);
  char* report = nullptr;
  const ced_status st = ced_dataset_validate(ds.get(), require_semantic ? 1 : 0, &report);
  const std::string text = take(report);
  if (!text.empty()) std::cout << text << '\n';
  if (st != CED_OK) {
    const json doc = text.empty() ? json::object() : json::parse(text);
    for (const auto& s : doc.value("sequences", json::array())) {
      for (const auto& v : s.at("violations")) {
        log(Level::Error, features + ": sequence '" + s.at("id").get<std::string>() + "': " +
                              v.at("message").get<std::string>());
      }
    }
    return st;
  }
  log(Level::Info, features + ": " + std::to_string(ced_dataset_size(ds.get())) + " sequence(s), no violations");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuous event detection on sparse-coded feature streams"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string log_level = "info";
  json patch = json::object();
  auto set = [&patch](std::vector<std::string> keys) {
    return [&patch, keys](const auto& v) {
      json* node = &patch;
      for (std::size_t i = 0; i + 1 < keys.size(); ++i) node = &(*node)[keys[i]];
      (*node)[keys.back()] = v;
    };
  };

  app.add_option("--config", config_path, "JSON run configuration; flags override its values");
  app.add_option_function<std::uint64_t>("--seed", set({"seed"}), "root seed for every random stream");
  app.add_option_function<std::size_t>("--jobs", set({"jobs"}), "worker threads")->check(CLI::PositiveNumber);
  app.add_option_function<std::string>("--out", set({"paths", "out"}), "output directory");
  app.add_option("--log-level", log_level, "error, warn, info or debug")
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}));

  auto path_opt = [&](CLI::App* sub, const char* key, const char* help) {
    sub->add_option_function<std::string>(std::string("--") + key, set({"paths", key}), help);
  };
  auto data_opts = [&](CLI::App* sub) {
    path_opt(sub, "features", "feature stream (.vjsonl)");
    path_opt(sub, "encoded", "pre-encoded sequences (.jsonl), instead of --features");
    path_opt(sub, "codebook", "temporal codebook (.json)");
    path_opt(sub, "vocab", "semantic vocabulary (.json)");
  };
  auto train_opts = [&](CLI::App* sub) {
    sub->add_option_function<double>("--C", set({"train", "C_reg"}), "regularisation constant C");
    sub->add_option_function<double>("--epsilon", set({"train", "epsilon"}), "constraint violation tolerance");
    sub->add_option_function<std::size_t>("--max-outer", set({"train", "max_outer"}), "margin refresh epochs");
    sub->add_option_function<std::string>("--primary", set({"train", "primary"}), "temporal, semantic or joint");
    sub->add_option_function<std::string>("--secondary", set({"train", "secondary"}), "temporal, semantic or joint");
    sub->add_flag_function("--no-margin-refresh", [&patch](std::int64_t) { patch["train"]["margin_refresh"] = false; },
                           "freeze the semantic margins at the initial weights");
  };
  auto detect_opts = [&](CLI::App* sub) {
    sub->add_option_function<std::size_t>("--max-window", set({"detect", "max_window"}), "longest window in frames");
    sub->add_option_function<std::size_t>("--stride", set({"detect", "stride"}), "candidate start stride");
    sub->add_option_function<std::size_t>("--hysteresis", set({"detect", "hysteresis"}), "frames to switch label");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic labelled dataset, embeddings and lookup table");
  synth->add_option_function<std::size_t>("--n-videos", set({"synth", "n_videos"}), "training sequences");
  synth->add_option_function<std::size_t>("--n-test", set({"synth", "n_test"}), "test sequences");
  synth->add_option_function<double>("--word-noise", set({"synth", "word_noise"}), "token corruption rate");
  synth->add_option_function<std::size_t>("--distractors", set({"synth", "distractors_per_video"}),
                                           "distractor events per sequence");

  auto* build = app.add_subcommand("build-codebook", "k-means temporal codebook and semantic vocabulary");
  path_opt(build, "features", "feature stream (.vjsonl)");
  path_opt(build, "embeddings", "word embeddings (.jsonl)");
  build->add_option_function<std::size_t>("--K", set({"codebook", "K"}), "codebook size");
  build->add_option_function<double>("--lambda", set({"codebook", "lambda"}), "LASSO penalty");
  build->add_option_function<std::size_t>("--restarts", set({"codebook", "restarts"}), "k-means restarts");
  build->add_option_function<std::size_t>("--k-sparsity", set({"vocab", "k_sparsity"}), "semantic code sparsity");
  bool no_vocab = false;
  build->add_flag("--no-vocab", no_vocab, "skip the semantic vocabulary");

  auto* encode = app.add_subcommand("encode", "sparse-code a feature stream");
  data_opts(encode);

  auto* train = app.add_subcommand("train", "train per-class detectors");
  data_opts(train);
  train_opts(train);
  detect_opts(train);
  train->add_flag_function("--no-tune", [&patch](std::int64_t) { patch["train"]["tune_thresholds"] = false; },
                           "keep zero thresholds");

  auto* detect = app.add_subcommand("detect", "run the detector");
  data_opts(detect);
  path_opt(detect, "model", "trained model (.json)");
  detect_opts(detect);

  auto* autolabel = app.add_subcommand("autolabel", "label frames from words, then train");
  data_opts(autolabel);
  path_opt(autolabel, "table", "lookup table (.json)");
  train_opts(autolabel);
  autolabel->add_option_function<std::size_t>("--min-run", set({"autolabel", "min_run"}),
                                              "shortest induced run kept; 1 keeps every frame label")
      ->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval", "AP and precision of a model on a labelled set");
  data_opts(eval);
  path_opt(eval, "model", "trained model (.json)");
  path_opt(eval, "test_features", "labelled test stream; defaults to --features");
  path_opt(eval, "test_encoded", "pre-encoded test set");
  detect_opts(eval);

  auto* compare = app.add_subcommand("compare", "train and evaluate each feature combination");
  data_opts(compare);
  path_opt(compare, "test_features", "labelled test stream");
  path_opt(compare, "test_encoded", "pre-encoded test set");
  train_opts(compare);
  detect_opts(compare);

  auto* risk = app.add_subcommand("risk-bound", "empirical risk bound of a model on a dataset");
  data_opts(risk);
  path_opt(risk, "model", "trained model (.json)");

  auto* validate = app.add_subcommand("validate", "check a feature stream against the sequence invariants");
  path_opt(validate, "features", "feature stream (.vjsonl)");
  bool require_semantic = false;
  validate->add_flag("--require-semantic", require_semantic, "every frame must carry words or a semantic vector");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : CED_E_VALIDATION;
  }

  g_level = log_level == "error" ? Level::Error
            : log_level == "warn" ? Level::Warn
            : log_level == "debug" ? Level::Debug
                                   : Level::Info;

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const Run run = resolve(command, config_path, patch);
    log(Level::Debug, "resolved config: " + run.cfg.dump());
    if (command == "synth") cmd_synth(run);
    else if (command == "build-codebook") cmd_build_codebook(run, no_vocab);
    else if (command == "encode") cmd_encode(run);
    else if (command == "train") cmd_train(run);
    else if (command == "detect") cmd_detect(run);
    else if (command == "autolabel") cmd_autolabel(run);
    else if (command == "eval") cmd_eval(run);
    else if (command == "compare") cmd_compare(run);
    else if (command == "risk-bound") cmd_risk_bound(run);
    else if (command == "validate") return cmd_validate(run, require_semantic);
  } catch (const Failure& f) {
    log(Level::Error, f.message);
    return f.status;
  } catch (const json::exception& e) {
    log(Level::Error, std::string("configuration: ") + e.what());
    return CED_E_VALIDATION;
  } catch (const std::exception& e) {
    log(Level::Error, e.what());
    return CED_E_RUNTIME;
  }
  return 0;
}
