#pragma once

// Experiment drivers behind the command-line subcommands. Each returns a tidy
// CSV table; per-seed rows are followed by aggregate rows (mean and sample
// standard deviation over seeds).

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mulann/bounds.hpp"
#include "mulann/checkpoint.hpp"
#include "mulann/config.hpp"
#include "mulann/csv.hpp"
#include "mulann/data.hpp"
#include "mulann/proxy.hpp"
#include "mulann/trainer.hpp"

namespace mulann {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitBoundViolation = 4;

struct CommandOutput {
  CsvTable table;
  int exit_code = kExitOk;
};

/// Where runs write checkpoints and traces. Empty means no files.
struct OutputPaths {
  std::filesystem::path dir;

  static OutputPaths from_env(const ExperimentConfig& cfg) {
    const char* root = std::getenv("MULANN_OUTPUT_ROOT");
    return {std::filesystem::path(root && *root ? root : ".") / cfg.experiment.output_dir};
  }
  bool enabled() const { return !dir.empty(); }
  std::filesystem::path file(const std::string& name) const {
    std::filesystem::create_directories(dir);
    return dir / name;
  }
};

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

struct MeanStd {
  double mean = 0.0;
  double stdev = 0.0;
};

/// Mean and sample standard deviation (0 for a single value).
inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double s = 0.0;
    for (double x : v) s += (x - r.mean) * (x - r.mean);
    r.stdev = std::sqrt(s / static_cast<double>(v.size() - 1));
  }
  return r;
}

/// Collects values per key in first-seen order.
class Aggregator {
 public:
  void add(const std::vector<std::string>& key, double v) {
    auto it = index_.find(key);
    if (it == index_.end()) {
      index_.emplace(key, keys_.size());
      keys_.push_back(key);
      values_.emplace_back();
      it = index_.find(key);
    }
    values_[it->second].push_back(v);
  }
  std::size_t size() const { return keys_.size(); }
  const std::vector<std::string>& key(std::size_t i) const { return keys_[i]; }
  MeanStd stats(std::size_t i) const { return mean_std(values_[i]); }
  const std::vector<double>& values(std::size_t i) const { return values_[i]; }

 private:
  std::map<std::vector<std::string>, std::size_t> index_;
  std::vector<std::vector<std::string>> keys_;
  std::vector<std::vector<double>> values_;
};

// ---------------------------------------------------------------------------
// Data preparation
// ---------------------------------------------------------------------------

inline DomainDataset subset(const DomainDataset& src, std::size_t begin, std::size_t end, std::size_t domain) {
  DomainDataset d = src;
  d.domain = domain;
  d.features.clear();
  d.labels.clear();
  d.pool.clear();
  d.ids.clear();
  for (std::size_t i = begin; i < end; ++i)
    d.push(src.row(i), src.labels[i], Pool::labeled, (static_cast<std::uint64_t>(domain) << 32) | (i - begin));
  return d;
}

/// Unsplit domains: synthetic clusters, or an IDX file whose first half becomes
/// the three-channel grayscale domain and second half the colorized domain.
inline std::vector<DomainDataset> base_datasets(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.data.generator == "synthetic") {
    SynthSpec s = cfg.data.synth;
    if (cfg.asymmetry.case_id > 0) s.domains = 2;
    return synth_domains(s, seed);
  }
  DomainDataset all = load_idx(cfg.data.images, cfg.data.labels, 0);
  const std::size_t n = cfg.data.limit ? std::min(cfg.data.limit, all.size()) : all.size();
  if (n < 4) throw DataError("idx data: need at least 4 samples");
  DomainDataset a = to_rgb(subset(all, 0, n / 2, 0));
  DomainDataset b = colorize_digits(subset(all, n / 2, n, 1), seed, 1);
  a.provenance = all.provenance + " first-half rgb";
  return {std::move(a), std::move(b)};
}

struct PreparedData {
  std::vector<DomainDataset> datasets;
  /// Realized extra-class fraction of the last domain's unlabeled pool.
  double p_star = 0.0;
};

inline PreparedData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed, int case_id, double target_p_star) {
  auto base = base_datasets(cfg, seed);
  PreparedData out;
  if (case_id > 0) {
    AsymmetryCase ac = build_asymmetry_case(base, case_id, cfg.asymmetry.roles, cfg.split, seed, target_p_star);
    out.p_star = ac.p_star;
    out.datasets = std::move(ac.datasets);
  } else {
    out.datasets = semi_supervised_split(std::move(base), cfg.split, seed);
    out.p_star = extra_class_fraction(out.datasets.back());
  }
  return out;
}

inline PreparedData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  return prepare_data(cfg, seed, cfg.asymmetry.case_id, cfg.asymmetry.target_p_star);
}

inline TrainConfig run_config(const ExperimentConfig& cfg, Method method, std::uint64_t seed, double p) {
  TrainConfig t = cfg.train;
  t.method = method;
  t.seed = seed;
  t.p = p;
  t.eval_setting = cfg.split.setting;
  return t;
}

inline std::vector<std::uint64_t> seed_list(const ExperimentConfig& cfg) {
  std::vector<std::uint64_t> s;
  for (std::size_t k = 0; k < cfg.experiment.seeds; ++k) s.push_back(cfg.experiment.seed + k);
  return s;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Accuracy over a domain's evaluation samples whose class is in `classes`
/// (all classes when empty).
inline double class_accuracy(NetworkParams& net, const DomainDataset& d, EvalSetting setting,
                             const std::set<std::size_t>& classes = {}) {
  std::vector<std::size_t> idx;
  for (auto i : evaluation_indices(d, setting))
    if (classes.empty() || classes.count(d.labels[i])) idx.push_back(i);
  if (idx.empty()) return 0.0;
  const auto pred = predict(net, d, idx);
  std::size_t ok = 0;
  for (std::size_t r = 0; r < idx.size(); ++r) ok += pred[r] == d.labels[idx[r]];
  return static_cast<double>(ok) / static_cast<double>(idx.size());
}

inline Tensor all_features(NetworkParams& net, const DomainDataset& d) {
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Tensor out(Shape{d.size(), net.feature_dim()});
  for (std::size_t s = 0; s < idx.size(); s += 256) {
    const std::span<const std::size_t> part(idx.data() + s, std::min<std::size_t>(256, idx.size() - s));
    const Tensor f = extract_features(net, d.gather(part));
    std::copy(f.values.begin(), f.values.end(), out.values.begin() + static_cast<std::ptrdiff_t>(s * f.dim(1)));
  }
  return out;
}

inline Tensor all_inputs(const DomainDataset& d) {
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return d.gather(idx);
}

inline CsvTable trace_table(const TrainResult& r) {
  CsvTable t;
  t.schema = "mulann.trace.v1";
  t.header = {"step"};
  if (r.trace.empty()) return t;
  const auto& first = r.trace.front().losses;
  for (std::size_t i = 0; i < first.classification.size(); ++i) t.header.push_back("lc_" + std::to_string(i));
  for (std::size_t i = 0; i < first.domain.size(); ++i) t.header.push_back("ld_" + std::to_string(i));
  for (std::size_t j = 0; j < first.kud.size(); ++j) t.header.push_back("lu_" + std::to_string(j));
  for (const char* c : {"total", "lambda", "lr"}) t.header.push_back(c);
  for (const auto& row : r.trace) {
    std::vector<std::string> v{std::to_string(row.step)};
    for (double x : row.losses.classification) v.push_back(fmt_double(x));
    for (double x : row.losses.domain) v.push_back(fmt_double(x));
    for (double x : row.losses.kud) v.push_back(fmt_double(x));
    v.push_back(fmt_double(row.losses.total));
    v.push_back(fmt_double(row.lambda));
    v.push_back(fmt_double(row.lr));
    t.add(std::move(v));
  }
  return t;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
  f << s;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

namespace detail {

inline CsvTable accuracy_table() {
  CsvTable t;
  t.schema = "mulann.accuracy.v1";
  t.header = {"kind", "seed", "method", "domain", "group", "correct", "total", "accuracy", "stdev"};
  return t;
}

inline void add_accuracy_rows(CsvTable& t, Aggregator& agg, std::map<std::vector<std::string>, std::pair<std::size_t, std::size_t>>& counts,
                              const std::string& seed, const std::string& method, const std::vector<GroupAccuracy>& acc) {
  for (const auto& g : acc) {
    t.add({"seed", seed, method, std::to_string(g.domain), g.group, std::to_string(g.correct), std::to_string(g.total),
           fmt_double(g.accuracy()), ""});
    std::vector<std::string> key{method, std::to_string(g.domain), g.group};
    agg.add(key, g.accuracy());
    counts[key].first += g.correct;
    counts[key].second += g.total;
  }
}

inline void add_accuracy_aggregates(CsvTable& t, const Aggregator& agg,
                                    std::map<std::vector<std::string>, std::pair<std::size_t, std::size_t>>& counts) {
  for (std::size_t i = 0; i < agg.size(); ++i) {
    const auto& k = agg.key(i);
    const auto s = agg.stats(i);
    t.add({"aggregate", "all", k[0], k[1], k[2], std::to_string(counts[k].first), std::to_string(counts[k].second),
           fmt_double(s.mean), fmt_double(s.stdev)});
  }
}

}  // namespace detail

/// Stand-in for double cross-validation: each point of the grid lambda, zeta in
/// {0.1, 0.8}, lr schedule {constant, exp-decreasing}, lambda schedule
/// {constant, exp-increasing} is trained once on the base seed with a fifth of
/// every class's labeled samples set aside per domain, and scored by accuracy
/// on those. zeta is only varied for MuLANN. Ties keep the first grid point.
inline CsvTable grid_search(const ExperimentConfig& cfg, TrainConfig& best) {
  CsvTable t;
  t.schema = "mulann.grid.v1";
  t.header = {"lambda", "zeta", "lr_schedule", "lambda_schedule", "val_correct", "val_total", "val_acc", "selected"};
  PreparedData data = prepare_data(cfg, cfg.experiment.seed);
  auto rng = make_rng(cfg.experiment.seed, 9000);
  std::vector<std::vector<std::size_t>> val(data.datasets.size());
  for (std::size_t d = 0; d < data.datasets.size(); ++d) {
    auto& ds = data.datasets[d];
    for (auto& members : detail::by_class(ds)) {
      std::vector<std::size_t> lab;
      for (auto i : members)
        if (ds.pool[i] == Pool::labeled) lab.push_back(i);
      detail::shuffle(lab, rng);
      for (std::size_t j = 0; j < lab.size() / 5; ++j) {
        ds.pool[lab[j]] = Pool::held_out;
        val[d].push_back(lab[j]);
      }
    }
  }
  const TrainConfig base = run_config(cfg, cfg.train.method, cfg.experiment.seed, cfg.train.p);
  const std::vector<double> zetas = base.uses_kud() ? std::vector<double>{0.1, 0.8} : std::vector<double>{base.zeta};
  double best_acc = -1.0;
  std::size_t best_row = 0;
  for (double lambda : {0.1, 0.8})
    for (double zeta : zetas)
      for (ScheduleKind lrs : {ScheduleKind::constant, ScheduleKind::exp_decreasing})
        for (ScheduleKind ls : {ScheduleKind::constant, ScheduleKind::exp_increasing}) {
          TrainConfig tc = base;
          tc.lambda = lambda;
          tc.zeta = zeta;
          tc.lr_schedule = lrs;
          tc.lambda_schedule = ls;
          TrainResult r = train(tc, data.datasets);
          std::size_t ok = 0, total = 0;
          for (std::size_t d = 0; d < val.size(); ++d) {
            if (val[d].empty()) continue;
            const auto pred = predict(r.net, data.datasets[d], val[d]);
            for (std::size_t k = 0; k < pred.size(); ++k) ok += pred[k] == data.datasets[d].labels[val[d][k]];
            total += val[d].size();
          }
          const double acc = total ? static_cast<double>(ok) / static_cast<double>(total) : 0.0;
          if (acc > best_acc) {
            best_acc = acc;
            best = tc;
            best_row = t.rows.size();
          }
          t.add({fmt_double(lambda), fmt_double(zeta), schedule_name(lrs), schedule_name(ls), std::to_string(ok),
                 std::to_string(total), fmt_double(acc), "0"});
        }
  t.rows[best_row].back() = "1";
  return t;
}

/// Trains config.train.method once per seed; per-seed and aggregate accuracy
/// per domain x {labeled, unlabeled} class group. Writes one checkpoint and one
/// loss trace per seed when `out` is enabled. With train.tune = grid the
/// hyperparameters come from grid_search first (written to grid.csv).
inline CommandOutput cmd_train(const ExperimentConfig& cfg, const OutputPaths& out) {
  CommandOutput res;
  res.table = detail::accuracy_table();
  Aggregator agg;
  std::map<std::vector<std::string>, std::pair<std::size_t, std::size_t>> counts;
  const std::string method = method_name(cfg.train.method);
  ExperimentConfig run = cfg;
  if (cfg.tune_grid) {
    TrainConfig best;
    const CsvTable grid = grid_search(cfg, best);
    run.train.lambda = best.lambda;
    run.train.zeta = best.zeta;
    run.train.lr_schedule = best.lr_schedule;
    run.train.lambda_schedule = best.lambda_schedule;
    if (out.enabled()) write_text(out.file("grid.csv"), grid.str());
  }
  for (auto seed : seed_list(cfg)) {
    PreparedData data = prepare_data(cfg, seed);
    TrainResult r = train(run_config(run, cfg.train.method, seed, cfg.train.p), data.datasets);
    if (out.enabled()) {
      const std::string stem = method + "_seed" + std::to_string(seed);
      save_checkpoint(r.net, out.file(stem + ".ckpt").string());
      write_text(out.file(stem + "_trace.csv"), trace_table(r).str());
    }
    detail::add_accuracy_rows(res.table, agg, counts, std::to_string(seed), method,
                              evaluate(r.net, data.datasets, cfg.split.setting));
  }
  detail::add_accuracy_aggregates(res.table, agg, counts);
  return res;
}

/// Scores a saved checkpoint on the data the config describes for its base seed.
inline CommandOutput cmd_evaluate(const ExperimentConfig& cfg, const std::string& checkpoint) {
  NetworkParams net = load_checkpoint(checkpoint);
  PreparedData data = prepare_data(cfg, cfg.experiment.seed);
  if (data.datasets.front().sample_shape != net.spec.input_shape)
    throw std::invalid_argument("evaluate: checkpoint input shape " + shape_str(net.spec.input_shape) +
                                " does not match data shape " + shape_str(data.datasets.front().sample_shape));
  if (data.datasets.front().classes != net.spec.classes)
    throw std::invalid_argument("evaluate: checkpoint has " + std::to_string(net.spec.classes) + " classes, data has " +
                                std::to_string(data.datasets.front().classes));
  CommandOutput res;
  res.table = detail::accuracy_table();
  Aggregator agg;
  std::map<std::vector<std::string>, std::pair<std::size_t, std::size_t>> counts;
  detail::add_accuracy_rows(res.table, agg, counts, std::to_string(cfg.experiment.seed), "checkpoint",
                            evaluate(net, data.datasets, cfg.split.setting));
  return res;
}

/// MuLANN accuracy over a (p*, p) grid on an asymmetry case (case 1 unless the
/// config names one). Metrics per run:
///   dom1_acc                  fully labeled domain, evaluation samples
///   dom2_acc                  last domain, every evaluated unlabeled sample
///   dom2_unlabeled_class_acc  last domain, samples of classes without labels
inline CommandOutput cmd_sweep_p(const ExperimentConfig& cfg) {
  for (double p : cfg.experiment.p_grid)
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("experiment.p_grid", "p values must lie in [0,1]");
  const int case_id = cfg.asymmetry.case_id > 0 ? cfg.asymmetry.case_id : 1;
  CommandOutput res;
  res.table.schema = "mulann.sweep_p.v1";
  res.table.header = {"kind", "seed", "p_star_target", "p_star", "p", "metric", "value", "stdev"};
  Aggregator agg, pstar;
  for (double target : cfg.experiment.p_star_grid)
    for (auto seed : seed_list(cfg)) {
      PreparedData data = prepare_data(cfg, seed, case_id, target);
      const auto& d1 = data.datasets.front();
      const auto& d2 = data.datasets.back();
      for (double p : cfg.experiment.p_grid) {
        TrainResult r = train(run_config(cfg, Method::mulann, seed, p), data.datasets);
        const std::pair<const char*, double> metrics[] = {
            {"dom1_acc", class_accuracy(r.net, d1, cfg.split.setting)},
            {"dom2_acc", class_accuracy(r.net, d2, cfg.split.setting)},
            {"dom2_unlabeled_class_acc", class_accuracy(r.net, d2, cfg.split.setting, d2.unlabeled_classes())}};
        for (const auto& [name, v] : metrics) {
          res.table.add({"seed", std::to_string(seed), fmt_double(target), fmt_double(data.p_star), fmt_double(p), name,
                         fmt_double(v), ""});
          agg.add({fmt_double(target), fmt_double(p), name}, v);
          pstar.add({fmt_double(target), fmt_double(p), name}, data.p_star);
        }
      }
    }
  for (std::size_t i = 0; i < agg.size(); ++i) {
    const auto& k = agg.key(i);
    const auto s = agg.stats(i);
    res.table.add({"aggregate", "all", k[0], fmt_double(pstar.stats(i).mean), k[1], k[2], fmt_double(s.mean),
                   fmt_double(s.stdev)});
  }
  return res;
}

/// Per (method, case, seed): x = accuracy on domain 1's alpha and beta
/// classes, y = accuracy on domain 2's unlabeled beta classes.
inline CommandOutput cmd_asymmetry(const ExperimentConfig& cfg) {
  for (int k : cfg.experiment.cases)
    if (k < 1 || k > 4) throw ConfigError("experiment.cases", "case " + std::to_string(k) + " outside 1..4");
  CommandOutput res;
  res.table.schema = "mulann.asymmetry.v1";
  res.table.header = {"kind", "seed", "method", "case", "p_star", "p", "x_dom1_alpha_beta_acc", "x_stdev",
                      "y_dom2_beta_acc", "y_stdev"};
  const auto& roles = cfg.asymmetry.roles;
  std::set<std::size_t> ab(roles.alpha.begin(), roles.alpha.end());
  ab.insert(roles.beta.begin(), roles.beta.end());
  const std::set<std::size_t> beta(roles.beta.begin(), roles.beta.end());
  Aggregator xs, ys, ps, pp;
  for (Method m : cfg.experiment.methods)
    for (int k : cfg.experiment.cases)
      for (auto seed : seed_list(cfg)) {
        PreparedData data = prepare_data(cfg, seed, k, cfg.asymmetry.target_p_star);
        const double p = m != Method::mulann ? 0.0 : cfg.experiment.mulann_p < 0.0 ? data.p_star : cfg.experiment.mulann_p;
        TrainResult r = train(run_config(cfg, m, seed, p), data.datasets);
        const double x = class_accuracy(r.net, data.datasets.front(), cfg.split.setting, ab);
        const double y = class_accuracy(r.net, data.datasets.back(), cfg.split.setting, beta);
        res.table.add({"seed", std::to_string(seed), method_name(m), std::to_string(k), fmt_double(data.p_star),
                       fmt_double(p), fmt_double(x), "", fmt_double(y), ""});
        const std::vector<std::string> key{method_name(m), std::to_string(k)};
        xs.add(key, x);
        ys.add(key, y);
        ps.add(key, data.p_star);
        pp.add(key, p);
      }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto x = xs.stats(i), y = ys.stats(i);
    res.table.add({"aggregate", "all", xs.key(i)[0], xs.key(i)[1], fmt_double(ps.stats(i).mean),
                   fmt_double(pp.stats(i).mean), fmt_double(x.mean), fmt_double(x.stdev), fmt_double(y.mean),
                   fmt_double(y.stdev)});
  }
  return res;
}

/// Fuzzes every bound; exit code 4 when any row fails.
inline CommandOutput cmd_bounds(const ExperimentConfig& cfg) {
  bounds::FuzzSpec spec = cfg.fuzz;
  spec.seed = cfg.experiment.seed;
  CommandOutput res;
  res.table.schema = "mulann.bounds.v1";
  res.table.header = {"seed", "n", "bound", "domain", "lhs", "rhs", "slack", "pass"};
  for (const auto& row : bounds::fuzz(spec)) {
    const auto& r = row.report;
    res.table.add({std::to_string(row.seed), std::to_string(row.n), r.bound, std::to_string(r.domain),
                   fmt_double(r.lhs), fmt_double(r.rhs), fmt_double(r.slack()), r.pass ? "1" : "0"});
    if (!r.pass) res.exit_code = kExitBoundViolation;
  }
  return res;
}

/// Proxy divergence for every unordered domain pair on raw inputs, on
/// features of the untrained network, and on trained features. With a
/// checkpoint the trained features come from it (base seed only); otherwise
/// config.train is run per seed.
inline CommandOutput cmd_divergence(const ExperimentConfig& cfg, const std::optional<std::string>& checkpoint) {
  CommandOutput res;
  res.table.schema = "mulann.divergence.v1";
  res.table.header = {"kind", "seed", "domain_a", "domain_b", "space", "d_hat", "heldout_error", "stdev"};
  Aggregator agg;
  std::vector<std::uint64_t> seeds = checkpoint ? std::vector<std::uint64_t>{cfg.experiment.seed} : seed_list(cfg);
  for (auto seed : seeds) {
    PreparedData data = prepare_data(cfg, seed);
    const TrainConfig tc = run_config(cfg, cfg.train.method, seed, cfg.train.p);
    NetworkParams init = build(architecture_for(data.datasets, tc), seed);
    NetworkParams trained = checkpoint ? load_checkpoint(*checkpoint) : train(tc, data.datasets).net;
    ProxyOptions po = cfg.proxy;
    po.seed = seed;
    const auto& ds = data.datasets;
    for (std::size_t a = 0; a < ds.size(); ++a)
      for (std::size_t b = a + 1; b < ds.size(); ++b) {
        const std::pair<const char*, ProxyResult> rows[] = {
            {"raw", proxy_divergence(all_inputs(ds[a]), all_inputs(ds[b]), po)},
            {"init_features", proxy_divergence(all_features(init, ds[a]), all_features(init, ds[b]), po)},
            {"trained_features", proxy_divergence(all_features(trained, ds[a]), all_features(trained, ds[b]), po)}};
        for (const auto& [space, pr] : rows) {
          res.table.add({"seed", std::to_string(seed), std::to_string(a), std::to_string(b), space,
                         fmt_double(pr.divergence), fmt_double(pr.heldout_error), ""});
          agg.add({std::to_string(a), std::to_string(b), space}, pr.divergence);
        }
      }
  }
  for (std::size_t i = 0; i < agg.size(); ++i) {
    const auto& k = agg.key(i);
    const auto s = agg.stats(i);
    res.table.add({"aggregate", "all", k[0], k[1], k[2], fmt_double(s.mean), "", fmt_double(s.stdev)});
  }
  return res;
}

}  // namespace mulann
