#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mulann/data.hpp"
#include "mulann/losses.hpp"
#include "mulann/network.hpp"

namespace mulann {

enum class Method { dann, mada, mulann };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::dann: return "dann";
    case Method::mada: return "mada";
    case Method::mulann: return "mulann";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "dann") return Method::dann;
  if (s == "mada") return Method::mada;
  if (s == "mulann") return Method::mulann;
  throw std::invalid_argument("method must be dann, mada or mulann, got '" + s + "'");
}

enum class ScheduleKind { constant, exp_increasing, exp_decreasing };

inline const char* schedule_name(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::exp_increasing: return "exp-increasing";
    case ScheduleKind::exp_decreasing: return "exp-decreasing";
  }
  return "?";
}

inline ScheduleKind parse_schedule(const std::string& s) {
  if (s == "constant") return ScheduleKind::constant;
  if (s == "exp-increasing") return ScheduleKind::exp_increasing;
  if (s == "exp-decreasing") return ScheduleKind::exp_decreasing;
  throw std::invalid_argument("schedule must be constant, exp-increasing or exp-decreasing, got '" + s + "'");
}

/// Value of a schedule at training progress t in [0,1]:
///   constant        base
///   exp-increasing  base * (2 / (1 + exp(-10 t)) - 1)
///   exp-decreasing  base / (1 + 10 t)^0.75
inline double schedule_value(ScheduleKind kind, double base, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("schedule progress must lie in [0,1]");
  switch (kind) {
    case ScheduleKind::constant: return base;
    case ScheduleKind::exp_increasing: return base * (2.0 / (1.0 + std::exp(-10.0 * t)) - 1.0);
    case ScheduleKind::exp_decreasing: return base / std::pow(1.0 + 10.0 * t, 0.75);
  }
  return base;
}

struct TrainConfig {
  Method method = Method::mulann;
  double lr = 0.01;
  ScheduleKind lr_schedule = ScheduleKind::constant;
  double lambda = 0.1;
  ScheduleKind lambda_schedule = ScheduleKind::constant;
  double zeta = 0.1;
  double p = 0.0;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;
  EvalSetting eval_setting = EvalSetting::ft;

  void validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("train.lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("train.momentum must lie in [0,1)");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("train.p must lie in [0,1]");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("train.lambda must be >= 0");
    if (!(zeta >= 0.0) || !std::isfinite(zeta)) throw std::invalid_argument("train.zeta must be >= 0");
    if (batch_size == 0) throw std::invalid_argument("train.batch_size must be positive");
    if (steps == 0) throw std::invalid_argument("train.steps must be positive");
    if (lr_schedule == ScheduleKind::exp_increasing)
      throw std::invalid_argument("train.lr_schedule must be constant or exp-decreasing");
    if (lambda_schedule == ScheduleKind::exp_decreasing)
      throw std::invalid_argument("train.lambda_schedule must be constant or exp-increasing");
  }

  /// dann carries no KUD term; mada uses per-class discriminators and no KUD term.
  bool uses_kud() const { return method == Method::mulann; }
  double effective_p() const { return uses_kud() ? p : 0.0; }
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct OptimizerState {
  std::map<std::string, std::vector<double>> velocity;
  std::size_t step = 0;
};

/// v <- rho * v + g;  theta <- theta - lr * v.
inline void sgd_momentum_step(std::vector<std::pair<std::string, Tensor*>> params, OptimizerState& state, double lr,
                              double rho) {
  for (auto& [name, t] : params)
    if (t->requires_grad && !t->grad) throw std::invalid_argument("sgd: missing gradient for trainable parameter '" + name + "'");
  for (auto& [name, t] : params) {
    if (!t->requires_grad) continue;
    auto& v = state.velocity[name];
    if (v.empty()) v.assign(t->size(), 0.0);
    if (v.size() != t->size()) throw ShapeError("sgd: velocity for '" + name + "' does not match parameter shape");
    const auto& g = *t->grad;
    for (std::size_t k = 0; k < v.size(); ++k) {
      v[k] = rho * v[k] + g[k];
      t->values[k] -= lr * v[k];
    }
  }
  ++state.step;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

/// One training batch: an equal-size sub-batch from every domain, stacked.
struct StepBatch {
  Tensor inputs;
  std::vector<std::size_t> domain_of_row;
  std::vector<std::uint64_t> ids;
  struct PerDomain {
    std::vector<std::size_t> rows;            // all rows of this domain
    std::vector<std::size_t> labeled_rows;
    std::vector<std::size_t> labels;
    std::vector<std::size_t> unlabeled_rows;
  };
  std::vector<PerDomain> domains;
};

/// Cycles through each domain's training samples (labeled and unlabeled) in a
/// freshly shuffled order every pass, so a sub-batch reflects the domain's
/// labeled/unlabeled proportions.
class BatchSampler {
 public:
  BatchSampler(const std::vector<DomainDataset>& data, std::size_t batch_size, std::uint64_t seed)
      : data_(data), batch_(batch_size), rng_(make_rng(seed, 5000)) {
    for (const auto& d : data) {
      std::vector<std::size_t> pool;
      for (std::size_t i = 0; i < d.size(); ++i)
        if (d.pool[i] != Pool::held_out) pool.push_back(i);
      if (pool.empty()) throw std::invalid_argument("training: domain " + std::to_string(d.domain) + " has no training samples");
      pools_.push_back(std::move(pool));
      order_.emplace_back();
      cursor_.push_back(0);
    }
  }

  StepBatch next() {
    StepBatch b;
    const std::size_t n = data_.size(), dim = data_.front().dim();
    b.inputs = Tensor(Shape{n * batch_, dim});
    b.domains.resize(n);
    std::size_t row = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& d = data_[i];
      for (std::size_t k = 0; k < batch_; ++k, ++row) {
        if (cursor_[i] == order_[i].size()) {
          order_[i] = pools_[i];
          std::shuffle(order_[i].begin(), order_[i].end(), rng_);
          cursor_[i] = 0;
        }
        const std::size_t s = order_[i][cursor_[i]++];
        std::copy_n(d.row(s), dim, &b.inputs.values[row * dim]);
        b.domain_of_row.push_back(i);
        b.ids.push_back(d.ids[s]);
        auto& pd = b.domains[i];
        pd.rows.push_back(row);
        if (d.is_labeled(s)) {
          pd.labeled_rows.push_back(row);
          pd.labels.push_back(d.labels[s]);
        } else {
          pd.unlabeled_rows.push_back(row);
        }
      }
    }
    return b;
  }

 private:
  const std::vector<DomainDataset>& data_;
  std::size_t batch_;
  std::mt19937_64 rng_;
  std::vector<std::vector<std::size_t>> pools_;
  std::vector<std::vector<std::size_t>> order_;
  std::vector<std::size_t> cursor_;
};

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

/// Per-run structure the objective needs besides the batch.
struct ObjectiveContext {
  std::size_t n_domains = 2;
  /// Labeled-class mask per domain (classes with labeled samples).
  std::vector<std::vector<bool>> class_masks;
  /// Domain index served by each KUD head.
  std::vector<std::size_t> kud_domains;
};

inline ObjectiveContext make_context(const std::vector<DomainDataset>& data, bool with_kud) {
  ObjectiveContext ctx;
  ctx.n_domains = data.size();
  for (const auto& d : data) {
    ctx.class_masks.push_back(d.labeled_class_mask());
    if (with_kud && d.count(Pool::unlabeled) > 0) ctx.kud_domains.push_back(d.domain);
  }
  return ctx;
}

struct StepResult {
  LossBreakdown breakdown;
  /// Scalar driven by backward(): 1/n sum_i (Lc_i + Ld_i) + zeta/n' sum_j Lu_j,
  /// with the domain heads behind grl(lambda). Its gradient w.r.t. every
  /// parameter outside the domain heads equals that of breakdown.total; the
  /// domain heads descend their own discrimination loss.
  std::optional<Var> objective;
  std::vector<KudSelection> selections;
  std::vector<bool> single_domain_flags;
};

/// Builds every loss term for one batch on `tape`.
inline StepResult compute_objective(NetworkParams& net, Tape& tape, const StepBatch& batch, const ObjectiveContext& ctx,
                                    double lambda, double zeta, double p) {
  const std::size_t n = ctx.n_domains;
  if (batch.domains.size() != n) throw std::invalid_argument("objective: batch/domain count mismatch");
  if (net.kud.size() != ctx.kud_domains.size())
    throw std::invalid_argument("objective: network has " + std::to_string(net.kud.size()) + " KUD heads, context expects " +
                                std::to_string(ctx.kud_domains.size()));
  Var input = tape.constant(batch.inputs);
  HeadOutputs heads;
  heads.features = net.features.forward(tape, input);
  heads.class_logits = net.classifier.forward(tape, heads.features);
  heads.class_probs = softmax_values(heads.class_logits.value());
  Var reversed = grl(heads.features, lambda);
  for (auto& d : net.domain) heads.domain_logits.push_back(d.forward(tape, reversed));

  StepResult res;
  std::vector<double> lc(n, 0.0), ld(n, 0.0), lu;
  std::optional<Var> obj;
  auto accumulate = [&obj](Var v, double w) {
    Var s = w == 1.0 ? v : scale(v, w);
    obj = obj ? add(*obj, s) : s;
  };
  const double inv_n = 1.0 / static_cast<double>(n);

  for (std::size_t i = 0; i < n; ++i) {
    const auto& pd = batch.domains[i];
    LossTerm c = classification_loss(heads.class_logits, pd.labeled_rows, pd.labels);
    lc[i] = c.value;
    if (c.var) accumulate(*c.var, inv_n);

    std::vector<std::size_t> ids(pd.rows.size(), i);
    LossTerm d;
    if (net.spec.mada) {
      Tensor w(Shape{pd.rows.size(), net.spec.classes});
      for (std::size_t r = 0; r < pd.rows.size(); ++r)
        for (std::size_t k = 0; k < net.spec.classes; ++k) w.at(r, k) = heads.class_probs.at(pd.rows[r], k);
      std::vector<Var> per_class;
      for (Var z : heads.domain_logits) per_class.push_back(gather_rows(z, pd.rows));
      d = mada_domain_loss(w, per_class, ids, n);
    } else {
      d = domain_discrimination_loss(gather_rows(heads.domain_logits.front(), pd.rows), ids, n);
    }
    ld[i] = d.value;
    if (d.var) accumulate(*d.var, inv_n);
  }
  {
    std::vector<std::size_t> all_ids(batch.domain_of_row.begin(), batch.domain_of_row.end());
    res.single_domain_flags.push_back(detail::single_domain(all_ids));
  }

  for (std::size_t j = 0; j < ctx.kud_domains.size(); ++j) {
    const std::size_t dom = ctx.kud_domains[j];
    const auto& pd = batch.domains[dom];
    KudSelection sel;
    sel.domain = dom;
    sel.fraction = p;
    if (!pd.unlabeled_rows.empty()) {
      Tensor probs(Shape{pd.unlabeled_rows.size(), net.spec.classes});
      for (std::size_t r = 0; r < pd.unlabeled_rows.size(); ++r)
        for (std::size_t k = 0; k < net.spec.classes; ++k) probs.at(r, k) = heads.class_probs.at(pd.unlabeled_rows[r], k);
      std::vector<double> h;
      if (std::any_of(ctx.class_masks[dom].begin(), ctx.class_masks[dom].end(), [](bool b) { return b; })) {
        for (const auto& e : restricted_entropy(probs, ctx.class_masks[dom])) h.push_back(e.value);
      } else {
        h.assign(pd.unlabeled_rows.size(), 0.0);
      }
      sel = select_known_unknowns(h, p, dom);
    }
    double value = 0.0;
    if (!sel.indices.empty()) {
      std::vector<std::size_t> rows = pd.labeled_rows;
      for (auto s : sel.indices) rows.push_back(pd.unlabeled_rows[s]);
      Var logits = net.kud[j].forward(tape, gather_rows(heads.features, rows));
      LossTerm u = kud_loss(logits, pd.labeled_rows.size(), sel.indices.size());
      value = u.value;
      if (u.var) accumulate(*u.var, zeta / static_cast<double>(ctx.kud_domains.size()));
    }
    lu.push_back(value);
    res.selections.push_back(std::move(sel));
  }

  res.breakdown = composite_loss(std::move(lc), std::move(ld), std::move(lu), lambda, zeta);
  res.objective = obj;
  return res;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

class NumericalAbort : public std::runtime_error {
 public:
  NumericalAbort(std::size_t step, const std::string& what)
      : std::runtime_error("non-finite loss at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct TraceRow {
  std::size_t step = 0;
  LossBreakdown losses;
  double lambda = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  NetworkParams net;
  std::vector<TraceRow> trace;
  /// Identities of every sample drawn into a training batch.
  std::set<std::uint64_t> seen_ids;
};

inline ArchitectureSpec architecture_for(const std::vector<DomainDataset>& data, const TrainConfig& cfg) {
  if (data.size() < 2) throw std::invalid_argument("training needs at least 2 domains");
  ArchitectureSpec spec;
  const auto& s = data.front().sample_shape;
  spec.variant = s.size() == 3 ? Variant::digits_conv : Variant::mlp_synthetic;
  spec.input_shape = s;
  spec.classes = data.front().classes;
  spec.domains = data.size();
  spec.mada = cfg.method == Method::mada;
  spec.unlabeled_domains = cfg.uses_kud() ? make_context(data, true).kud_domains.size() : 0;
  for (const auto& d : data)
    if (d.sample_shape != s || d.classes != spec.classes)
      throw std::invalid_argument("training: domains disagree on sample shape or class count");
  return spec;
}

inline double progress(std::size_t step, std::size_t steps) {
  return steps > 1 ? static_cast<double>(step) / static_cast<double>(steps - 1) : 1.0;
}

/// Simultaneous SGD-momentum on all modules. Deterministic for a fixed seed.
/// Throws NumericalAbort on a non-finite loss.
inline TrainResult train(const TrainConfig& cfg, const std::vector<DomainDataset>& data) {
  cfg.validate();
  for (const auto& d : data) d.validate();
  TrainResult out{build(architecture_for(data, cfg), cfg.seed), {}, {}};
  const ObjectiveContext ctx = make_context(data, cfg.uses_kud());
  BatchSampler sampler(data, cfg.batch_size, cfg.seed);
  OptimizerState opt;
  auto params = out.net.named_parameters();
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const double t = progress(step, cfg.steps);
    const double lambda = schedule_value(cfg.lambda_schedule, cfg.lambda, t);
    const double lr = schedule_value(cfg.lr_schedule, cfg.lr, t);
    StepBatch batch = sampler.next();
    out.seen_ids.insert(batch.ids.begin(), batch.ids.end());
    Tape tape;
    StepResult r = compute_objective(out.net, tape, batch, ctx, lambda, cfg.zeta, cfg.effective_p());
    if (!std::isfinite(r.breakdown.total)) throw NumericalAbort(step, "composite loss");
    out.trace.push_back({step, r.breakdown, lambda, lr});
    out.net.zero_grad();
    if (r.objective) tape.backward(*r.objective);
    for (auto& [name, p] : params)
      for (double g : *p->grad)
        if (!std::isfinite(g)) throw NumericalAbort(step, "gradient of " + name);
    sgd_momentum_step(params, opt, lr, cfg.momentum);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct GroupAccuracy {
  std::size_t domain = 0;
  /// "labeled" for classes with labeled samples in the domain, "unlabeled" otherwise.
  std::string group;
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

/// Samples evaluated under each setting: FT scores the training-unlabeled pool
/// together with held-out samples; NFT scores held-out samples only.
inline std::vector<std::size_t> evaluation_indices(const DomainDataset& d, EvalSetting setting) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d.pool[i] == Pool::held_out || (setting == EvalSetting::ft && d.pool[i] == Pool::unlabeled)) out.push_back(i);
  return out;
}

inline void require_nft_pools(const std::vector<DomainDataset>& data) {
  for (const auto& d : data)
    if (d.count(Pool::unlabeled) > 0 && d.count(Pool::held_out) == 0)
      throw std::invalid_argument("NFT evaluation: domain " + std::to_string(d.domain) +
                                  " has no held-out unlabeled pool");
}

/// Argmax predictions for the given samples.
inline std::vector<std::size_t> predict(NetworkParams& net, const DomainDataset& d, std::span<const std::size_t> idx) {
  std::vector<std::size_t> out;
  constexpr std::size_t chunk = 256;
  for (std::size_t s = 0; s < idx.size(); s += chunk) {
    const auto part = idx.subspan(s, std::min(chunk, idx.size() - s));
    Tensor probs = predict_probs(net, d.gather(part));
    for (std::size_t r = 0; r < part.size(); ++r) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < probs.dim(1); ++k)
        if (probs.at(r, k) > probs.at(r, best)) best = k;
      out.push_back(best);
    }
  }
  return out;
}

/// Accuracy per domain, split into labeled-class and unlabeled-class groups.
/// Groups without samples are omitted.
inline std::vector<GroupAccuracy> evaluate(NetworkParams& net, const std::vector<DomainDataset>& data, EvalSetting setting) {
  if (setting == EvalSetting::nft) require_nft_pools(data);
  std::vector<GroupAccuracy> out;
  for (const auto& d : data) {
    const auto known = d.labeled_classes();
    const auto idx = evaluation_indices(d, setting);
    const auto pred = predict(net, d, idx);
    GroupAccuracy lab{d.domain, "labeled", 0, 0}, unl{d.domain, "unlabeled", 0, 0};
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto& g = known.count(d.labels[idx[r]]) ? lab : unl;
      ++g.total;
      if (pred[r] == d.labels[idx[r]]) ++g.correct;
    }
    if (lab.total) out.push_back(lab);
    if (unl.total) out.push_back(unl);
  }
  return out;
}

}  // namespace mulann
