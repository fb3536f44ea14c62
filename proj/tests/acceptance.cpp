// Acceptance suite: one PASS/FAIL line per headline requirement.
// Exit status is non-zero when any requirement fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "ced/autolabel.hpp"
#include "ced/codebook.hpp"
#include "ced/detector.hpp"
#include "ced/eval.hpp"
#include "ced/learner.hpp"
#include "ced/synth.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace ced;
using namespace ced::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

SynthClass make_class(std::string name, Vector mean, double sigma, std::vector<std::string> words, bool interest) {
  SynthClass c;
  c.name = std::move(name);
  c.mean = std::move(mean);
  c.sigma = sigma;
  for (const auto& w : words) c.words[w] = 1.0 / static_cast<double>(words.size());
  c.interest = interest;
  return c;
}

Vector basis(Eigen::Index n, Eigen::Index i, double scale) {
  Vector v = Vector::Zero(n);
  v(i) = scale;
  return v;
}

// ---- tiny QP ---------------------------------------------------------------

Outcome tiny_qp() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240611);
  const std::vector<FeatureLayout> layouts = {{Channel::Temporal, Channel::Semantic},
                                              {Channel::Semantic, Channel::Semantic},
                                              {Channel::Joint, Channel::Semantic}};
  std::size_t instances = 0;
  double worst = 0.0, oracle_gap = 0.0;
  while (instances < 24) {
    std::uniform_int_distribution<std::size_t> n_dist(1, 3), f_dist(2, 4), k_dist(1, 3);
    const std::size_t n = n_dist(rng), K = k_dist(rng);
    std::vector<EncodedSequence> data;
    for (std::size_t i = 0; i < n; ++i) {
      data.push_back(random_encoded(rng, "s" + std::to_string(i), f_dist(rng), K, {"A"}, 0.5));
    }
    const auto layout = layouts[instances % layouts.size()];
    const Vector w0 = random_vector(rng, layout.dim(K));
    const auto cons = enumerate_constraints(data, "A", layout, w0);
    bool has_pos = false;
    for (const auto& e : data) has_pos = has_pos || naive_view(e, "A").target > 0;
    if (!has_pos || cons.empty()) continue;

    TrainConfig cfg;
    cfg.C_reg = std::uniform_real_distribution<double>(0.5, 10.0)(rng);
    cfg.epsilon = 1e-9;
    cfg.qp_tol = 1e-12;
    cfg.max_inner = 5000;
    cfg.margin_refresh = false;
    cfg.layout = layout;
    cfg.initial_weights["A"] = w0;
    const auto result = train(data, {"A"}, cfg);
    const double ours = naive_objective(cons, n, cfg.C_reg, result.model.classes.front().weights);
    const auto oracle = dense_qp(cons, n, cfg.C_reg, layout.dim(K));
    const double rel = std::abs(ours - oracle.primal) / std::max(1e-12, std::abs(oracle.primal));
    worst = std::max(worst, rel);
    oracle_gap = std::max(oracle_gap, oracle.primal - oracle.dual);
    ++instances;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && secs < 10.0, std::to_string(instances) + " instances, worst relative gap " +
                                            fmt("%.2e", worst) + " (oracle duality gap <= " +
                                            fmt("%.1e", oracle_gap) + "), " + fmt("%.2f", secs) + " s"};
}

// ---- slack identity and risk bound -----------------------------------------

Outcome slack_identity() {
  SplitOptions o;
  o.n_train = 12;
  o.n_test = 1;
  o.K = 8;
  o.seed = 5;
  const auto sp = make_split(default_synth_config(), o);
  TrainConfig cfg;
  cfg.jobs = 4;
  const auto classes = sp.cfg.interest_classes();
  const auto result = train(sp.train, classes, cfg);
  double worst_gap = 0.0, worst_dominance = 0.0;
  bool all_converged = true;
  for (const auto& rep : result.report.classes) {
    all_converged = all_converged && rep.converged;
    const auto& cm = result.model.at(rep.cls);
    for (std::size_t i = 0; i < sp.train.size(); ++i) {
      const double opt = slack_optimal(sp.train[i], result.model, rep.cls);
      worst_gap = std::max(worst_gap, std::abs(rep.stored_slacks[i] - opt));
    }
    // Replay: loss_i = max_f Delta_f * mu_f * [event score does not beat frame f].
    double loss = 0.0;
    for (const auto& enc : sp.train) {
      const auto view = naive_view(enc, rep.cls);
      const double top = cm.weights.dot(naive_feature(enc, result.model.layout, result.model.layout.primary, 0,
                                                      view.last));
      double worst_f = 0.0;
      for (std::size_t f = 0; f <= view.last; ++f) {
        const double delta = std::abs(view.y[f] - view.target);
        if (delta == 0.0) continue;
        const double here =
            cm.weights.dot(naive_feature(enc, result.model.layout, result.model.layout.primary, 0, f));
        const double yhat =
            cm.weights.dot(naive_feature(enc, result.model.layout, result.model.layout.secondary, 0, f));
        if (top - here <= 0.0) worst_f = std::max(worst_f, delta * std::abs(view.y[f] - yhat));
      }
      loss += worst_f;
    }
    loss /= static_cast<double>(sp.train.size());
    const auto bound = empirical_risk_bound(result.model, sp.train);
    for (const auto& b : bound) {
      if (b.cls == rep.cls) worst_dominance = std::max(worst_dominance, loss - b.bound);
    }
  }
  const bool pass = all_converged && worst_gap <= cfg.epsilon && worst_dominance <= 1e-9;
  return {pass, std::string(all_converged ? "converged" : "NOT converged") + ", max |stored - optimal| " +
                    fmt("%.2e", worst_gap) + " (eps " + fmt("%.0e", cfg.epsilon) + "), max(loss - bound) " +
                    fmt("%.2e", worst_dominance)};
}

// ---- LASSO and OMP ---------------------------------------------------------

Outcome lasso_omp() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> dim(1, 8);
  std::uniform_real_distribution<double> lam(0.0, 2.0);
  std::size_t kkt_fail = 0;
  double worst_kkt = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t K = dim(rng), N = dim(rng);
    Codebook cb;
    cb.centroids = random_matrix(rng, K, N);
    cb.lambda = lam(rng);
    const Vector x = random_vector(rng, N, -2.0, 2.0);
    const Vector e = sparse_encode(x, cb);
    const Eigen::MatrixXd Q = cb.centroids.transpose();
    const Vector g = 2.0 * Q.transpose() * (Q * e - x);
    for (Eigen::Index j = 0; j < e.size(); ++j) {
      double viol;
      if (e(j) == 0.0) {
        viol = std::abs(g(j)) - cb.lambda;
      } else {
        viol = std::abs(g(j) + cb.lambda * (e(j) > 0 ? 1.0 : -1.0));
      }
      worst_kkt = std::max(worst_kkt, viol);
      if (viol > 1e-6) {
        ++kkt_fail;
        break;
      }
    }
  }

  // One-atom inputs.
  bool one_atom_ok = true;
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t K = 5, E = 7;
    auto vocab = SemanticVocab::create(random_matrix(rng, K, E), 1, {});
    const std::size_t c = static_cast<std::size_t>(inst) % K;
    const Vector p = vocab.atoms.row(static_cast<Eigen::Index>(c)).transpose();
    const Vector b = omp_encode(p, vocab);
    for (Eigen::Index k = 0; k < b.size(); ++k) {
      const double want = k == static_cast<Eigen::Index>(c) ? 1.0 : 0.0;
      if (std::abs(b(k) - want) > 1e-12) one_atom_ok = false;
    }
  }

  // k = K against the normal equations.
  double worst_ls = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t K = 3, E = 4;
    auto vocab = SemanticVocab::create(random_matrix(rng, K, E), K, {});
    const Vector p = random_vector(rng, E);
    OmpTrace trace;
    const Vector b = omp_encode(p, vocab, &trace);
    const Eigen::MatrixXd A = vocab.atoms.transpose();
    const Eigen::MatrixXd AtA = A.transpose() * A;
    const Vector ls = AtA.ldlt().solve(A.transpose() * p);
    if (trace.support.size() != K) worst_ls = std::max(worst_ls, 1.0);
    worst_ls = std::max(worst_ls, (b - ls).cwiseAbs().maxCoeff());
  }
  const bool pass = kkt_fail == 0 && one_atom_ok && worst_ls <= 1e-8;
  return {pass, "KKT failures " + std::to_string(kkt_fail) + "/100 (worst " + fmt("%.2e", worst_kkt) +
                    "), one-atom " + (one_atom_ok ? "exact" : "WRONG") + ", k=K max deviation " +
                    fmt("%.2e", worst_ls)};
}

// ---- feature combinations --------------------------------------------------

std::map<std::string, const EvalRow*> rows_by_name(const EvalReport& r) {
  std::map<std::string, const EvalRow*> out;
  for (const auto& row : r.rows) out[row.combo] = &row;
  return out;
}

SynthConfig confusable_config() {
  constexpr Eigen::Index N = 4;
  SynthConfig cfg;
  cfg.classes = {
      make_class("open_drawer", basis(N, 0, 3.0), 0.5, {"drawer", "slide", "knob"}, true),
      make_class("open_cupboard", basis(N, 0, 3.0), 0.5, {"cupboard", "door", "hinge"}, true),
      make_class("wipe", basis(N, 1, 3.0), 0.5, {"wipe", "cloth", "towel"}, false),
      make_class("walk", basis(N, 2, 3.0), 0.5, {"walk", "floor", "step"}, false),
      make_class("wait", basis(N, 3, 3.0), 0.5, {"wait", "stand", "idle"}, false),
  };
  cfg.event_len_min = 10;
  cfg.event_len_max = 20;
  cfg.noise_sigma = 0.3;
  return cfg;
}

Outcome confusable_pair() {
  const auto t0 = Clock::now();
  SplitOptions o;
  o.n_train = 20;
  o.n_test = 10;
  o.K = 8;
  o.seed = 11;
  const auto sp = make_split(confusable_config(), o);
  CompareConfig cc;
  cc.jobs = 4;
  const auto combos = default_combos();
  const auto report = compare_features(sp.train, sp.test, sp.cfg.interest_classes(), combos, cc);
  const auto rows = rows_by_name(report);
  const double t = rows.at("temporal")->mean_ap;
  const double ts = rows.at("temporal+semantic")->mean_ap;
  const double secs = seconds_since(t0);
  const bool pass = ts - t >= 0.15 && t <= 0.6 && secs < 60.0;
  return {pass, "mean AP temporal " + fmt("%.4f", t) + ", temporal+semantic " + fmt("%.4f", ts) + " (gain " +
                    fmt("%.4f", ts - t) + "); mean set precision " + fmt("%.4f", rows.at("temporal")->mean_precision) +
                    " -> " + fmt("%.4f", rows.at("temporal+semantic")->mean_precision) + ", " + fmt("%.1f", secs) +
                    " s"};
}

// Four classes: temporal means pair {a, b} and {c, d}; word models pair {a, c}
// and {b, d}. Each channel alone confuses one pair; together they identify the class.
SynthConfig ordering_config() {
  constexpr Eigen::Index N = 5;
  const std::vector<std::string> w1 = {"grab", "hold", "lift"}, w2 = {"push", "press", "slide"};
  SynthConfig cfg;
  cfg.classes = {
      make_class("a", basis(N, 0, 3.0), 0.5, w1, true),
      make_class("b", basis(N, 0, 3.0), 0.5, w2, true),
      make_class("c", basis(N, 1, 3.0), 0.5, w1, true),
      make_class("d", basis(N, 1, 3.0), 0.5, w2, true),
      make_class("walk", basis(N, 2, 3.0), 0.5, {"walk", "floor", "step"}, false),
      make_class("wait", basis(N, 3, 3.0), 0.5, {"wait", "stand", "idle"}, false),
      make_class("wipe", basis(N, 4, 3.0), 0.5, {"wipe", "cloth", "towel"}, false),
  };
  cfg.event_len_min = 10;
  cfg.event_len_max = 20;
  cfg.noise_sigma = 0.4;
  cfg.word_noise = 0.1;
  return cfg;
}

Outcome ordering() {
  SplitOptions o;
  o.n_train = 36;
  o.n_test = 12;
  o.K = 16;
  o.seed = 23;
  const auto sp = make_split(ordering_config(), o);
  CompareConfig cc;
  cc.jobs = 4;
  const auto combos = default_combos();
  const auto report = compare_features(sp.train, sp.test, sp.cfg.interest_classes(), combos, cc);
  const auto rows = rows_by_name(report);
  const double t = rows.at("temporal")->mean_ap;
  const double s = rows.at("semantic")->mean_ap;
  const double ts = rows.at("temporal+semantic")->mean_ap;
  const bool pass = ts - t >= 0.03 && ts - s >= 0.03;
  return {pass, "mean AP temporal " + fmt("%.4f", t) + ", semantic " + fmt("%.4f", s) + ", temporal+semantic " +
                    fmt("%.4f", ts)};
}

// ---- auto-labelling --------------------------------------------------------

std::vector<Sequence> strip(std::vector<Sequence> seqs) {
  for (auto& s : seqs) {
    for (auto& f : s.frames) f.label.reset();
  }
  return seqs;
}

Outcome autolabel_equivalence() {
  TrainConfig cfg;
  cfg.jobs = 4;
  cfg.seed = 3;

  SplitOptions o;
  o.n_train = 24;
  o.n_test = 12;
  o.K = 8;
  o.seed = 31;
  const auto clean = make_split(default_synth_config(), o);
  const auto classes = clean.cfg.interest_classes();
  const auto supervised = train(clean.train, classes, cfg);
  const auto auto_clean =
      autolabel_train(strip(clean.train_raw), perfect_table(clean.cfg), clean.codebook, &clean.vocab, cfg, 4);
  const bool identical = auto_clean.model.has_value() && *auto_clean.model == supervised.model;

  SynthConfig noisy_cfg = default_synth_config();
  noisy_cfg.word_noise = 0.1;
  const auto noisy = make_split(noisy_cfg, o);
  const auto table = perfect_table(default_synth_config());
  const auto sup = train(noisy.train, classes, cfg).model;
  const auto auto_noisy = autolabel_train(strip(noisy.train_raw), table, noisy.codebook, &noisy.vocab, cfg, 4);
  if (!auto_noisy.model) return {false, "noisy auto-labelling produced no model"};
  const auto row_sup = evaluate(sup, noisy.test, {}, 4);
  const auto row_aut = evaluate(*auto_noisy.model, noisy.test, {}, 4);
  const double gap = row_sup.mean_ap - row_aut.mean_ap;
  const bool pass = identical && std::abs(gap) <= 0.1;
  return {pass, std::string("perfect table: ") + (identical ? "bit-identical model" : "MODELS DIFFER") +
                    "; 10% word noise: mean AP supervised " + fmt("%.4f", row_sup.mean_ap) + ", auto " +
                    fmt("%.4f", row_aut.mean_ap) + " (gap " + fmt("%.4f", gap) + ")"};
}

// ---- streaming -------------------------------------------------------------

Outcome streaming() {
  std::mt19937_64 rng(4242);
  const std::vector<std::string> names = {"x", "y", "z"};
  std::size_t mismatches = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t K = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
    const std::size_t F = std::uniform_int_distribution<std::size_t>(1, 80)(rng);
    const auto enc = random_encoded(rng, "seq" + std::to_string(inst), F, K);
    Model m;
    m.code_dim = K;
    m.layout = inst % 2 ? FeatureLayout{Channel::Joint, Channel::Semantic}
                        : FeatureLayout{Channel::Temporal, Channel::Semantic};
    for (const auto& n : names) {
      m.classes.push_back({n, random_vector(rng, m.layout.dim(K)), 0.0,
                           std::uniform_real_distribution<double>(-0.3, 0.3)(rng), true});
    }
    DetectConfig dc;
    dc.max_window = std::uniform_int_distribution<std::size_t>(1, 40)(rng);
    dc.stride = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
    dc.hysteresis = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
    const auto batch = detect(m, enc, dc);
    StreamingDetector sd(m, dc, enc.id);
    for (std::size_t f = 0; f < F; ++f) sd.push(detail::row(enc.temporal_codes, f), detail::row(enc.semantic_codes, f));
    if (!(sd.finish() == batch)) ++mismatches;
  }
  return {mismatches == 0, std::to_string(100 - mismatches) + "/100 sequences bit-identical"};
}

// ---- metrics ---------------------------------------------------------------

Outcome metrics() {
  std::vector<std::string> fails;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) fails.push_back(what);
  };
  using V = std::vector<std::string>;
  const V truth = {"A", "A", "B", "A", "B", "B", "A", "B", "B", "B"};
  expect(precision(truth, truth, "A").value == 1.0, "pred = truth");
  const V pred = {"A", "A", "A", "B", "A", "B", "B", "B", "B", "B"};  // 4 fire, 2 hit
  expect(precision(pred, truth, "A").value == 0.5, "4 fired, 2 correct");
  const auto never = precision(V(10, "B"), truth, "A");
  expect(never.value == 0.0 && never.never_predicted, "never predicted");

  expect(average_precision({{"s", 0, 0.9, true}, {"s", 1, 0.8, true}, {"s", 2, 0.1, false}}) == 1.0, "perfect");
  expect(average_precision({{"s", 0, 0.9, false}, {"s", 1, 0.8, true}, {"s", 2, 0.5, false}, {"s", 3, 0.1, false}}) ==
             0.5,
         "single positive ranked 2nd of 4");
  // All scores tied: the order is (seq, t); walk it by hand.
  std::vector<RankedFrame> tied;
  const std::vector<bool> pos = {false, true, true, false, false, true, false};
  for (std::size_t t = 0; t < pos.size(); ++t) tied.push_back({"s", t, 0.3, pos[t]});
  double walk = 0.0;
  std::size_t seen = 0;
  for (std::size_t r = 0; r < pos.size(); ++r) {
    if (!pos[r]) continue;
    ++seen;
    walk += static_cast<double>(seen) / static_cast<double>(r + 1);
  }
  walk /= static_cast<double>(seen);
  expect(average_precision(tied) == walk, "tied scores");
  return {fails.empty(), fails.empty() ? "6 hand cases exact" : "failed: " + fails.front()};
}

// ---- pipeline determinism --------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / ("ced_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "run.json");
    cfg << R"({"seed": 99, "jobs": 4, "synth": {"n_videos": 6, "n_test": 3}, "codebook": {"K": 6}})";
  }
  const std::string cli = CED_CLI_PATH;
  const std::string out = (dir / "out").string();
  const std::string base = "\"" + cli + "\" --log-level error --config \"" + (dir / "run.json").string() +
                           "\" --out \"" + out + "\" ";
  const std::vector<std::string> steps = {
      "synth",
      "build-codebook --features \"" + out + "/train.vjsonl\" --embeddings \"" + out + "/embeddings.jsonl\"",
      "encode --features \"" + out + "/train.vjsonl\" --codebook \"" + out + "/codebook.json\" --vocab \"" + out +
          "/vocab.json\"",
      "train --encoded \"" + out + "/encoded.jsonl\"",
      "detect --encoded \"" + out + "/encoded.jsonl\" --model \"" + out + "/model.json\"",
      "eval --model \"" + out + "/model.json\" --test_features \"" + out + "/test.vjsonl\" --codebook \"" + out +
          "/codebook.json\" --vocab \"" + out + "/vocab.json\"",
      "autolabel --features \"" + out + "/train.vjsonl\" --table \"" + out + "/table.json\" --codebook \"" + out +
          "/codebook.json\" --vocab \"" + out + "/vocab.json\"",
      "risk-bound --encoded \"" + out + "/encoded.jsonl\" --model \"" + out + "/model.json\"",
  };
  std::map<std::string, std::string> first;
  for (int pass = 0; pass < 2; ++pass) {
    fs::remove_all(out);
    for (const auto& step : steps) {
      const int rc = std::system((base + step + " > /dev/null").c_str());
      if (rc != 0) return {false, "step failed (status " + std::to_string(rc) + "): " + step.substr(0, step.find(' '))};
    }
    for (const auto& entry : fs::directory_iterator(out)) {
      const auto name = entry.path().filename().string();
      if (pass == 0) {
        first[name] = slurp(entry.path());
      } else if (!first.count(name) || first[name] != slurp(entry.path())) {
        return {false, "artifact differs between runs: " + name};
      }
    }
  }
  fs::remove_all(dir);
  return {true, std::to_string(first.size()) + " artifacts byte-identical across two runs"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"tiny-qp-oracle", tiny_qp},
      {"slack-identity-and-risk-bound", slack_identity},
      {"lasso-omp-correctness", lasso_omp},
      {"confusable-pair", confusable_pair},
      {"feature-ordering", ordering},
      {"autolabel-equivalence", autolabel_equivalence},
      {"streaming-batch-equivalence", streaming},
      {"metric-hand-cases", metrics},
      {"pipeline-determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s  %-32s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
