#include "ced/learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "ced/error.hpp"
#include "parallel.hpp"

namespace ced {

using detail::dot;
using detail::span_of;

void TrainConfig::validate() const {
  if (!(C_reg > 0.0) || !std::isfinite(C_reg)) fail(ErrorCode::InvalidConfig, "C_reg must be > 0");
  if (!(epsilon > 0.0)) fail(ErrorCode::InvalidConfig, "epsilon must be > 0");
  if (max_outer < 1) fail(ErrorCode::InvalidConfig, "max_outer must be >= 1");
  if (max_inner < 1) fail(ErrorCode::InvalidConfig, "max_inner must be >= 1");
  if (!(qp_tol > 0.0)) fail(ErrorCode::InvalidConfig, "qp_tol must be > 0");
  if (prune_after < 1) fail(ErrorCode::InvalidConfig, "prune_after must be >= 1");
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"C_reg", cfg.C_reg},
          {"epsilon", cfg.epsilon},
          {"max_outer", cfg.max_outer},
          {"margin_refresh", cfg.margin_refresh},
          {"seed", cfg.seed},
          {"primary", to_string(cfg.layout.primary)},
          {"secondary", to_string(cfg.layout.secondary)},
          {"max_inner", cfg.max_inner},
          {"qp_tol", cfg.qp_tol},
          {"prune_after", cfg.prune_after}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig cfg) {
  try {
    cfg.C_reg = j.value("C_reg", cfg.C_reg);
    cfg.epsilon = j.value("epsilon", cfg.epsilon);
    cfg.max_outer = j.value("max_outer", cfg.max_outer);
    cfg.margin_refresh = j.value("margin_refresh", cfg.margin_refresh);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("primary")) cfg.layout.primary = channel_from_string(j.at("primary").get<std::string>());
    if (j.contains("secondary")) cfg.layout.secondary = channel_from_string(j.at("secondary").get<std::string>());
    cfg.max_inner = j.value("max_inner", cfg.max_inner);
    cfg.qp_tol = j.value("qp_tol", cfg.qp_tol);
    cfg.prune_after = j.value("prune_after", cfg.prune_after);
    cfg.jobs = j.value("jobs", cfg.jobs);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("train config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

double margin_mu(double y_f, double yhat_f) { return std::abs(y_f - yhat_f); }

double slack_rescale(double y_f, double y_target) { return std::abs(y_f - y_target); }

namespace {

Vector pooled(const EncodedSequence& enc, const FeatureLayout& layout, std::size_t code_dim, Channel ch,
              std::size_t s, std::size_t f) {
  if (enc.code_dim() != code_dim) {
    fail(ErrorCode::DimensionMismatch, "sequence '" + enc.id + "' has code dimension " +
                                           std::to_string(enc.code_dim()) + ", model expects " +
                                           std::to_string(code_dim));
  }
  Vector out(static_cast<Eigen::Index>(layout.dim(code_dim)));
  pool_channel(enc, layout, ch, s, f, {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

}  // namespace

double score(const Model& model, const EncodedSequence& enc, std::size_t s, std::size_t f, std::string_view cls) {
  const auto& cm = model.at(cls);
  const Vector psi = pooled(enc, model.layout, model.code_dim, model.layout.primary, s, f);
  return dot(span_of(cm.weights), span_of(psi)) + cm.bias;
}

double semantic_score(const Model& model, const EncodedSequence& enc, std::size_t f, std::string_view cls) {
  const auto& cm = model.at(cls);
  const Vector psi = pooled(enc, model.layout, model.code_dim, model.layout.secondary, 0, f);
  return dot(span_of(cm.weights), span_of(psi)) + cm.bias;
}

ExampleView example_view(const EncodedSequence& enc, std::string_view cls) {
  const std::size_t F = enc.frames();
  if (enc.labels.size() != F) {
    fail(ErrorCode::LengthMismatch, "sequence '" + enc.id + "' has no per-frame labels");
  }
  ExampleView v;
  v.y.resize(F);
  std::optional<std::size_t> last;
  for (std::size_t f = 0; f < F; ++f) {
    v.y[f] = enc.labels[f] == cls ? 1.0 : -1.0;
    if (v.y[f] > 0) last = f;
  }
  v.last = last.value_or(F - 1);
  v.y_target = v.y[v.last];
  return v;
}

MostViolated most_violated(const EncodedSequence& enc, const Model& model, std::string_view cls) {
  const auto& cm = model.at(cls);
  const auto view = example_view(enc, cls);
  const auto w = span_of(cm.weights);
  const Vector psi_l = pooled(enc, model.layout, model.code_dim, model.layout.primary, 0, view.last);
  const double score_l = dot(w, span_of(psi_l));
  MostViolated best;
  for (std::size_t f = 0; f <= view.last; ++f) {
    const double delta = slack_rescale(view.y[f], view.y_target);
    if (delta == 0.0) continue;
    const Vector psi_s = pooled(enc, model.layout, model.code_dim, model.layout.secondary, 0, f);
    const double mu = margin_mu(view.y[f], dot(w, span_of(psi_s)) + cm.bias);
    const Vector psi_f = pooled(enc, model.layout, model.code_dim, model.layout.primary, 0, f);
    const double gap = score_l - dot(w, span_of(psi_f));
    const double v = delta * (mu - gap);
    if (v > best.violation) best = {f, v};
  }
  return best;
}

double slack_optimal(const EncodedSequence& enc, const Model& model, std::string_view cls) {
  return std::max(0.0, most_violated(enc, model, cls).violation);
}

std::vector<RiskBound> empirical_risk_bound(const Model& model, std::span<const EncodedSequence> data) {
  std::vector<RiskBound> out;
  for (const auto& cm : model.classes) {
    RiskBound rb;
    rb.cls = cm.name;
    for (const auto& enc : data) rb.slacks.push_back(slack_optimal(enc, model, cm.name));
    if (!rb.slacks.empty()) {
      rb.bound = std::accumulate(rb.slacks.begin(), rb.slacks.end(), 0.0) / static_cast<double>(rb.slacks.size());
    }
    out.push_back(std::move(rb));
  }
  return out;
}

nlohmann::json to_json(const std::vector<RiskBound>& bounds) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& b : bounds) arr.push_back({{"class", b.cls}, {"bound", b.bound}, {"slacks", b.slacks}});
  return arr;
}

bool TrainReport::converged() const {
  return std::all_of(classes.begin(), classes.end(), [](const auto& c) { return c.converged; });
}

nlohmann::json to_json(const TrainReport& r) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : r.classes) {
    nlohmann::json iters = nlohmann::json::array();
    for (const auto& it : c.iterations) {
      iters.push_back({{"epoch", it.epoch},
                       {"round", it.round},
                       {"objective", it.objective},
                       {"constraints", it.constraints},
                       {"added", it.added},
                       {"max_violation", it.max_violation},
                       {"risk_bound", it.risk_bound}});
    }
    classes.push_back({{"class", c.cls},
                       {"converged", c.converged},
                       {"epochs", c.epochs},
                       {"objective", c.objective},
                       {"stored_slacks", c.stored_slacks},
                       {"final_constraints", c.constraints.size()},
                       {"iterations", iters}});
  }
  return {{"converged", r.converged()}, {"classes", classes}};
}

namespace {

// Per-class view of the data, with every admissible (Delta > 0) frame's
// pooled features precomputed.
struct FrameTerm {
  std::size_t frame = 0;
  double y = 0.0;
  double delta = 0.0;
  Vector dpsi;   // psi_primary(0:l) - psi_primary(0:f)
  Vector psi_s;  // psi_secondary(0:f)
  double mu = 0.0;  // frozen margin
};

struct ExampleTerms {
  std::vector<FrameTerm> terms;
};

std::vector<ExampleTerms> build_terms(std::span<const EncodedSequence> data, std::string_view cls,
                                      const FeatureLayout& layout, std::size_t code_dim) {
  std::vector<ExampleTerms> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& enc = data[i];
    const auto view = example_view(enc, cls);
    const Vector psi_l = pooled(enc, layout, code_dim, layout.primary, 0, view.last);
    for (std::size_t f = 0; f <= view.last; ++f) {
      const double delta = slack_rescale(view.y[f], view.y_target);
      if (delta == 0.0) continue;
      FrameTerm t;
      t.frame = f;
      t.y = view.y[f];
      t.delta = delta;
      t.dpsi = psi_l - pooled(enc, layout, code_dim, layout.primary, 0, f);
      t.psi_s = pooled(enc, layout, code_dim, layout.secondary, 0, f);
      out[i].terms.push_back(std::move(t));
    }
  }
  return out;
}

void freeze_margins(std::vector<ExampleTerms>& ex, const Vector& w, double bias) {
  for (auto& e : ex) {
    for (auto& t : e.terms) t.mu = margin_mu(t.y, dot(span_of(w), span_of(t.psi_s)) + bias);
  }
}

struct Best {
  std::optional<std::size_t> term;
  double value = 0.0;  // max(0, max_f ...)
};

Best best_term(const ExampleTerms& e, const Vector& w) {
  Best b;
  for (std::size_t k = 0; k < e.terms.size(); ++k) {
    const auto& t = e.terms[k];
    const double v = t.delta * (t.mu - dot(span_of(w), span_of(t.dpsi)));
    if (v > b.value) b = {k, v};
  }
  return b;
}

double full_objective(const std::vector<ExampleTerms>& ex, const Vector& w, double C_reg) {
  double slack = 0.0;
  for (const auto& e : ex) slack += best_term(e, w).value;
  return 0.5 * w.squaredNorm() + C_reg / static_cast<double>(ex.size()) * slack;
}

struct CachedConstraint {
  std::size_t example = 0;
  std::size_t term = 0;  // index into ExampleTerms::terms
  Vector a;              // delta * dpsi
  double b = 0.0;        // delta * mu
  double sq = 0.0;
  double alpha = 0.0;
  std::size_t inactive = 0;
};

class ClassTrainer {
 public:
  ClassTrainer(std::vector<ExampleTerms> ex, std::size_t dim, const TrainConfig& cfg, std::uint64_t seed)
      : ex_(std::move(ex)), dim_(dim), cfg_(cfg), cap_(cfg.C_reg / static_cast<double>(ex_.size())), rng_(seed) {}

  ClassTrainReport run(Vector w0, const std::string& cls) {
    ClassTrainReport rep;
    rep.cls = cls;
    w_ = std::move(w0);
    w_qp_ = w_;
    margins_ = w_;
    set_margins(margins_);
    double prev_objective = full_objective(ex_, w_, cfg_.C_reg);
    bool converged = false;
    std::size_t epoch = 0;
    while (epoch < cfg_.max_outer) {
      if (epoch > 0) {
        // Fixed-point test with the margins taken from the current weights.
        set_margins(w_);
        const double j_now = full_objective(ex_, w_, cfg_.C_reg);
        if (count_violators(w_) == 0 && std::abs(j_now - prev_objective) < cfg_.epsilon) {
          converged = true;
          break;
        }
        prev_objective = j_now;
        margins_ += kMarginStep * (w_ - margins_);
        set_margins(margins_);
      }
      if (!cache_.empty()) {
        solve_restricted();
        line_search();
      } else {
        w_qp_ = w_;
      }
      bool inner_done = false;
      for (std::size_t round = 0; round < cfg_.max_inner; ++round) {
        IterationRecord rec;
        rec.epoch = epoch;
        rec.round = round;
        rec.objective = full_objective(ex_, w_, cfg_.C_reg);
        rec.max_violation = max_violation(w_);
        rec.risk_bound = risk_bound(w_);
        std::size_t added = add_cuts(w_);
        if (w_qp_ != w_) added += add_cuts(w_qp_);
        rec.added = added;
        rec.constraints = cache_.size();
        rep.iterations.push_back(rec);
        if (added == 0) {
          inner_done = true;
          break;
        }
        solve_restricted();
        line_search();
      }
      ++epoch;
      if (!cfg_.margin_refresh) {
        converged = inner_done;
        break;
      }
    }
    if (cfg_.margin_refresh && !converged) set_margins(w_);
    rep.converged = converged;
    rep.epochs = epoch;
    rep.objective = full_objective(ex_, w_, cfg_.C_reg);
    for (std::size_t i = 0; i < ex_.size(); ++i) rep.stored_slacks.push_back(stored_slack(i, w_));
    for (const auto& c : cache_) {
      const auto& t = ex_[c.example].terms[c.term];
      rep.constraints.push_back({c.example, t.frame, t.delta, t.mu, t.dpsi});
    }
    return rep;
  }

  const Vector& weights() const { return w_; }

 private:
  // Damping of the margin weights between epochs; a plain refresh can cycle.
  static constexpr double kMarginStep = 0.5;

  void set_margins(const Vector& m) {
    freeze_margins(ex_, m, 0.0);
    for (auto& c : cache_) {
      const auto& t = ex_[c.example].terms[c.term];
      c.b = t.delta * t.mu;
    }
  }

  double stored_slack(std::size_t i, const Vector& w) const {
    double s = 0.0;
    for (const auto& c : cache_) {
      if (c.example == i) s = std::max(s, c.b - dot(span_of(w), span_of(c.a)));
    }
    return s;
  }

  bool cached(std::size_t i, std::size_t term) const {
    return std::any_of(cache_.begin(), cache_.end(),
                       [&](const auto& c) { return c.example == i && c.term == term; });
  }

  std::size_t count_violators(const Vector& w) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < ex_.size(); ++i) {
      if (best_term(ex_[i], w).value > stored_slack(i, w) + cfg_.epsilon) ++n;
    }
    return n;
  }

  double max_violation(const Vector& w) const {
    double m = 0.0;
    for (std::size_t i = 0; i < ex_.size(); ++i) m = std::max(m, best_term(ex_[i], w).value - stored_slack(i, w));
    return m;
  }

  double risk_bound(const Vector& w) const {
    double s = 0.0;
    for (const auto& e : ex_) s += best_term(e, w).value;
    return s / static_cast<double>(ex_.size());
  }

  std::size_t add_cuts(const Vector& w) {
    std::size_t added = 0;
    for (std::size_t i = 0; i < ex_.size(); ++i) {
      const Best b = best_term(ex_[i], w);
      if (!b.term || b.value <= stored_slack(i, w) + cfg_.epsilon || cached(i, *b.term)) continue;
      const auto& t = ex_[i].terms[*b.term];
      CachedConstraint c;
      c.example = i;
      c.term = *b.term;
      c.a = t.delta * t.dpsi;
      c.b = t.delta * t.mu;
      c.sq = c.a.squaredNorm();
      cache_.push_back(std::move(c));
      ++added;
    }
    return added;
  }

  Vector rebuild_w() const {
    Vector w = Vector::Zero(static_cast<Eigen::Index>(dim_));
    for (const auto& c : cache_) {
      if (c.alpha != 0.0) w += c.alpha * c.a;
    }
    return w;
  }

  // Restricted primal at w (slack from cached constraints only) and the dual value.
  double duality_gap(const Vector& w) const {
    std::vector<double> slack(ex_.size(), 0.0);
    double lin = 0.0;
    for (const auto& c : cache_) {
      slack[c.example] = std::max(slack[c.example], c.b - dot(span_of(w), span_of(c.a)));
      lin += c.alpha * c.b;
    }
    const double half = 0.5 * w.squaredNorm();
    const double primal = half + cap_ * std::accumulate(slack.begin(), slack.end(), 0.0);
    const double dual = lin - half;
    return primal - dual;
  }

  // Dual coordinate ascent over  max sum a_j b_j - 1/2 |sum a_j a_j|^2,
  // a_j >= 0, sum over each example's constraints <= C/n. Single-coordinate
  // Newton steps plus pairwise transfers when an example's budget is full.
  void solve_restricted() {
    std::vector<std::vector<std::size_t>> groups(ex_.size());
    for (std::size_t j = 0; j < cache_.size(); ++j) groups[cache_[j].example].push_back(j);
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      if (!groups[i].empty()) order.push_back(i);
    }
    Vector w = rebuild_w();
    constexpr std::size_t kMaxSweeps = 200000;
    const double budget_eps = 1e-12 * cap_;
    for (std::size_t sweep = 0; sweep < kMaxSweeps; ++sweep) {
      std::shuffle(order.begin(), order.end(), rng_);
      for (std::size_t i : order) {
        const auto& g = groups[i];
        double sum = 0.0;
        for (std::size_t j : g) sum += cache_[j].alpha;
        for (std::size_t j : g) {
          auto& c = cache_[j];
          const double grad = c.b - dot(span_of(w), span_of(c.a));
          const double hi = c.alpha + std::max(0.0, cap_ - sum);
          double next;
          if (c.sq > 0.0) {
            next = std::clamp(c.alpha + grad / c.sq, 0.0, hi);
          } else {
            next = grad > 0.0 ? hi : (grad < 0.0 ? 0.0 : c.alpha);
          }
          const double step = next - c.alpha;
          if (step != 0.0) {
            c.alpha = next;
            w += step * c.a;
            sum += step;
          }
        }
        if (g.size() < 2 || sum < cap_ - budget_eps) continue;
        for (std::size_t pass = 0; pass < g.size(); ++pass) {
          std::size_t up = g.front();
          std::size_t down = g.front();
          double g_up = -std::numeric_limits<double>::infinity();
          double g_down = std::numeric_limits<double>::infinity();
          for (std::size_t j : g) {
            const double grad = cache_[j].b - dot(span_of(w), span_of(cache_[j].a));
            if (grad > g_up) {
              g_up = grad;
              up = j;
            }
          }
          for (std::size_t j : g) {
            if (j == up || cache_[j].alpha <= 0.0) continue;
            const double grad = cache_[j].b - dot(span_of(w), span_of(cache_[j].a));
            if (grad < g_down) {
              g_down = grad;
              down = j;
            }
          }
          if (down == up || !(g_up - g_down > 1e-15)) break;
          const Vector d = cache_[up].a - cache_[down].a;
          const double q = d.squaredNorm();
          double t = q > 0.0 ? (g_up - g_down) / q : cache_[down].alpha;
          t = std::min(t, cache_[down].alpha);
          if (!(t > 0.0)) break;
          cache_[up].alpha += t;
          cache_[down].alpha -= t;
          if (cache_[down].alpha < 0.0) cache_[down].alpha = 0.0;
          w += t * d;
        }
      }
      w = rebuild_w();
      if (duality_gap(w) <= cfg_.qp_tol) break;
    }
    w_qp_ = w;
    for (auto& c : cache_) c.inactive = c.alpha == 0.0 ? c.inactive + 1 : 0;
    std::erase_if(cache_, [&](const auto& c) { return c.inactive >= cfg_.prune_after; });
  }

  // Exact-ish minimisation of the full objective on the segment [w, w_qp];
  // never increases the objective.
  void line_search() {
    const Vector d = w_qp_ - w_;
    const double dd = d.squaredNorm();
    if (dd == 0.0) return;
    const double wd = dot(span_of(w_), span_of(d));
    const double ww = w_.squaredNorm();
    std::vector<std::vector<std::pair<double, double>>> lines(ex_.size());
    for (std::size_t i = 0; i < ex_.size(); ++i) {
      for (const auto& t : ex_[i].terms) {
        lines[i].push_back({t.delta * (t.mu - dot(span_of(w_), span_of(t.dpsi))),
                            -t.delta * dot(span_of(d), span_of(t.dpsi))});
      }
    }
    const double scale = cap_;
    auto phi = [&](double t) {
      double slack = 0.0;
      for (const auto& ls : lines) {
        double m = 0.0;
        for (const auto& [a, b] : ls) m = std::max(m, a + t * b);
        slack += m;
      }
      return 0.5 * (ww + 2.0 * t * wd + t * t * dd) + scale * slack;
    };
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 0.0, hi = 1.0;
    double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
    double f1 = phi(x1), f2 = phi(x2);
    for (int it = 0; it < 80 && hi - lo > 1e-12; ++it) {
      if (f1 <= f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - inv_phi * (hi - lo);
        f1 = phi(x1);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + inv_phi * (hi - lo);
        f2 = phi(x2);
      }
    }
    const double f0 = phi(0.0);
    double best_t = 0.0, best_f = f0;
    for (double t : {1.0, 0.5 * (lo + hi)}) {
      const double f = phi(t);
      if (f < best_f) {
        best_f = f;
        best_t = t;
      }
    }
    if (best_t == 0.0) return;
    Vector next = best_t == 1.0 ? w_qp_ : Vector(w_ + best_t * d);
    // Guard against rounding between the parametrised and direct evaluations.
    if (full_objective(ex_, next, cfg_.C_reg) <= full_objective(ex_, w_, cfg_.C_reg)) w_ = std::move(next);
  }

  std::vector<ExampleTerms> ex_;
  std::size_t dim_;
  const TrainConfig& cfg_;
  double cap_;
  std::mt19937_64 rng_;
  std::vector<CachedConstraint> cache_;
  Vector w_;
  Vector w_qp_;
  Vector margins_;
};

std::uint64_t name_hash(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

double objective(std::span<const EncodedSequence> data, std::string_view cls, const FeatureLayout& layout,
                 std::size_t code_dim, double C_reg, const Vector& w, const Vector& margin_weights) {
  auto ex = build_terms(data, cls, layout, code_dim);
  freeze_margins(ex, margin_weights, 0.0);
  return full_objective(ex, w, C_reg);
}

TrainResult train(std::span<const EncodedSequence> data, std::vector<std::string> classes, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) fail(ErrorCode::NoPositiveExamples, "training set is empty");
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.empty()) fail(ErrorCode::InvalidConfig, "no classes to train");
  const std::size_t K = data.front().code_dim();
  for (const auto& enc : data) {
    if (enc.code_dim() != K) {
      fail(ErrorCode::DimensionMismatch, "sequence '" + enc.id + "' has code dimension " +
                                             std::to_string(enc.code_dim()) + ", expected " + std::to_string(K));
    }
    if (cfg.layout.needs_semantic() && !enc.has_semantic) {
      fail(ErrorCode::DimensionMismatch, "layout reads semantic codes but sequence '" + enc.id +
                                             "' was encoded without a vocabulary");
    }
    if (enc.labels.size() != enc.frames()) {
      fail(ErrorCode::LengthMismatch, "sequence '" + enc.id + "' has no per-frame labels");
    }
  }
  for (const auto& cls : classes) {
    if (cls == kBackground) fail(ErrorCode::InvalidConfig, "BACKGROUND cannot be trained as a class");
    const bool any = std::any_of(data.begin(), data.end(), [&](const auto& enc) {
      return std::find(enc.labels.begin(), enc.labels.end(), cls) != enc.labels.end();
    });
    if (!any) fail(ErrorCode::NoPositiveExamples, "class '" + cls + "' has no positive frames");
  }
  const std::size_t D = cfg.layout.dim(K);
  for (const auto& [cls, w] : cfg.initial_weights) {
    if (static_cast<std::size_t>(w.size()) != D) {
      fail(ErrorCode::DimensionMismatch, "initial weights for '" + cls + "' have dimension " +
                                             std::to_string(w.size()) + ", expected " + std::to_string(D));
    }
  }

  TrainResult result;
  result.model.C_reg = cfg.C_reg;
  result.model.layout = cfg.layout;
  result.model.code_dim = K;
  result.model.classes.resize(classes.size());
  result.report.classes.resize(classes.size());
  detail::parallel_for(classes.size(), cfg.jobs, [&](std::size_t c) {
    const auto& cls = classes[c];
    ClassTrainer trainer(build_terms(data, cls, cfg.layout, K), D, cfg, cfg.seed ^ name_hash(cls));
    auto it = cfg.initial_weights.find(cls);
    Vector w0 = it != cfg.initial_weights.end() ? it->second : Vector::Zero(static_cast<Eigen::Index>(D));
    auto rep = trainer.run(std::move(w0), cls);
    ClassModel cm;
    cm.name = cls;
    cm.weights = trainer.weights();
    cm.converged = rep.converged;
    result.model.classes[c] = std::move(cm);
    result.report.classes[c] = std::move(rep);
  });
  return result;
}

}  // namespace ced
