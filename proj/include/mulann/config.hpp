#pragma once

// Experiment configuration in INI form. Every key is optional; unknown
// sections or keys are rejected so typos cannot silently fall back to
// defaults. Full key list (defaults in brackets):
//
//   [data]        generator (synthetic|idx) [synthetic], domains [2], classes [6],
//                 samples_per_class [150], shift [2], rotation [0.6], cov_scale [0.25],
//                 images, labels, limit [0 = all]   (idx: first half gray, second half colorized)
//   [split]       labeled_class_fraction [0.5], labeled_per_class [10], test_fraction [0.3],
//                 setting (FT|NFT) [FT]
//   [asymmetry]   case [0 = off, else 1..4], alpha [0,1], beta [2,3], gamma [4], delta [5],
//                 target_p_star [-1 = off]
//   [train]       method [mulann], lr [0.01], lr_schedule [exp-decreasing], lambda [0.8],
//                 lambda_schedule [exp-increasing], zeta [0.8], p [0.5], momentum [0.9],
//                 batch_size [32], steps [1500], tune (none|grid) [none]
//   [experiment]  seed [0], seeds [5], output_dir [runs], methods [dann,mada,mulann],
//                 cases [1,2,3,4], p_grid, p_star_grid, mulann_p (p_star|value) [p_star]
//   [bounds]      instances [1000], n_min [2], n_max [3], points_min [1], points_max [50],
//                 grid [20], dims [1], m_min [20], m_max [5000], identical_fraction [0.1]
//   [proxy]       max_epochs [150], patience [20], batch_size [64], lr [0.05]

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mulann/bounds.hpp"
#include "mulann/data.hpp"
#include "mulann/proxy.hpp"
#include "mulann/trainer.hpp"

namespace mulann {

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct DataConfig {
  std::string generator = "synthetic";
  SynthSpec synth{2, 6, 150, 2.0, 0.6};
  std::string images;
  std::string labels;
  std::size_t limit = 0;
};

struct AsymmetryConfig {
  int case_id = 0;
  ClassRoles roles;
  double target_p_star = -1.0;
};

struct ExperimentOptions {
  std::uint64_t seed = 0;
  std::size_t seeds = 5;
  std::string output_dir = "runs";
  std::vector<Method> methods{Method::dann, Method::mada, Method::mulann};
  std::vector<int> cases{1, 2, 3, 4};
  std::vector<double> p_grid{0.0, 0.1, 0.3, 0.5, 0.7};
  std::vector<double> p_star_grid{0.3, 0.5};
  /// Negative: MuLANN uses each case's realized p*.
  double mulann_p = -1.0;
};

struct ExperimentConfig {
  DataConfig data;
  SplitSpec split;
  AsymmetryConfig asymmetry;
  TrainConfig train;
  ExperimentOptions experiment;
  bounds::FuzzSpec fuzz;
  ProxyOptions proxy;
  /// cmd_train picks lambda, zeta and both schedules by grid_search first.
  bool tune_grid = false;

  ExperimentConfig() {
    train.lr = 0.01;
    train.lr_schedule = ScheduleKind::exp_decreasing;
    train.lambda = 0.8;
    train.lambda_schedule = ScheduleKind::exp_increasing;
    train.zeta = 0.8;
    train.p = 0.5;
    train.steps = 1500;
  }
};

namespace detail {

class IniReader {
 public:
  explicit IniReader(const boost::property_tree::ptree& pt) : pt_(pt) {}

  template <typename T>
  void get(const std::string& path, T& out) {
    known_.insert(path);
    auto v = pt_.get_optional<std::string>(path);
    if (!v) return;
    try {
      out = convert<T>(*v);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(path, "cannot parse '" + *v + "': " + e.what());
    }
  }

  template <typename T, typename F>
  void get_with(const std::string& path, T& out, F parse) {
    known_.insert(path);
    auto v = pt_.get_optional<std::string>(path);
    if (!v) return;
    try {
      out = parse(trim(*v));
    } catch (const std::exception& e) {
      throw ConfigError(path, e.what());
    }
  }

  void reject_unknown() const {
    for (const auto& [section, body] : pt_) {
      if (body.empty() && !body.data().empty()) throw ConfigError(section, "key outside of any section");
      for (const auto& [key, value] : body) {
        const std::string path = section + "." + key;
        if (!known_.count(path)) throw ConfigError(path, "unknown key");
      }
    }
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n"), e = s.find_last_not_of(" \t\r\n");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
  }

  static std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!trim(item).empty()) out.push_back(trim(item));
    return out;
  }

 private:
  template <typename T>
  static T convert(const std::string& raw) {
    const std::string s = trim(raw);
    std::size_t used = 0;
    T v{};
    if constexpr (std::is_same_v<T, std::string>) {
      return s;
    } else if constexpr (std::is_same_v<T, double>) {
      v = std::stod(s, &used);
    } else if constexpr (std::is_same_v<T, int>) {
      v = std::stoi(s, &used);
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!s.empty() && s[0] == '-') throw std::invalid_argument("must be nonnegative");
      v = static_cast<T>(std::stoull(s, &used));
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      for (const auto& item : split_list(s)) v.push_back(convert<std::size_t>(item));
      return v;
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      for (const auto& item : split_list(s)) v.push_back(convert<double>(item));
      return v;
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
      for (const auto& item : split_list(s)) v.push_back(convert<int>(item));
      return v;
    }
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  }

  const boost::property_tree::ptree& pt_;
  std::set<std::string> known_;
};

/// Rethrows a validation failure as a ConfigError on the field it names.
template <typename F>
void validated(const std::string& fallback_field, F f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    const auto colon = msg.find(' ');
    std::string field = msg.substr(0, colon);
    if (field.find('.') == std::string::npos) field = fallback_field;
    throw ConfigError(field, msg);
  }
}

}  // namespace detail

inline ExperimentConfig parse_config(std::istream& is) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(is, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config", std::string("line ") + std::to_string(e.line()) + ": " + e.message());
  }
  ExperimentConfig c;
  detail::IniReader r(pt);

  r.get("data.generator", c.data.generator);
  r.get("data.domains", c.data.synth.domains);
  r.get("data.classes", c.data.synth.classes);
  r.get("data.samples_per_class", c.data.synth.samples_per_class);
  r.get("data.shift", c.data.synth.shift);
  r.get("data.rotation", c.data.synth.rotation);
  r.get("data.cov_scale", c.data.synth.cov_scale);
  r.get("data.images", c.data.images);
  r.get("data.labels", c.data.labels);
  r.get("data.limit", c.data.limit);

  r.get("split.labeled_class_fraction", c.split.labeled_class_fraction);
  r.get("split.labeled_per_class", c.split.labeled_per_class);
  r.get("split.test_fraction", c.split.test_fraction);
  r.get_with("split.setting", c.split.setting, parse_setting);

  r.get("asymmetry.case", c.asymmetry.case_id);
  r.get("asymmetry.alpha", c.asymmetry.roles.alpha);
  r.get("asymmetry.beta", c.asymmetry.roles.beta);
  r.get("asymmetry.gamma", c.asymmetry.roles.gamma);
  r.get("asymmetry.delta", c.asymmetry.roles.delta);
  r.get("asymmetry.target_p_star", c.asymmetry.target_p_star);

  r.get_with("train.method", c.train.method, parse_method);
  r.get("train.lr", c.train.lr);
  r.get_with("train.lr_schedule", c.train.lr_schedule, parse_schedule);
  r.get("train.lambda", c.train.lambda);
  r.get_with("train.lambda_schedule", c.train.lambda_schedule, parse_schedule);
  r.get("train.zeta", c.train.zeta);
  r.get("train.p", c.train.p);
  r.get("train.momentum", c.train.momentum);
  r.get("train.batch_size", c.train.batch_size);
  r.get("train.steps", c.train.steps);
  r.get_with("train.tune", c.tune_grid, [](const std::string& s) {
    if (s != "none" && s != "grid") throw std::invalid_argument("must be none or grid, got '" + s + "'");
    return s == "grid";
  });

  r.get("experiment.seed", c.experiment.seed);
  r.get("experiment.seeds", c.experiment.seeds);
  r.get("experiment.output_dir", c.experiment.output_dir);
  r.get_with("experiment.methods", c.experiment.methods, [](const std::string& s) {
    std::vector<Method> m;
    for (const auto& item : detail::IniReader::split_list(s)) m.push_back(parse_method(item));
    return m;
  });
  r.get("experiment.cases", c.experiment.cases);
  r.get("experiment.p_grid", c.experiment.p_grid);
  r.get("experiment.p_star_grid", c.experiment.p_star_grid);
  r.get_with("experiment.mulann_p", c.experiment.mulann_p,
             [](const std::string& s) { return s == "p_star" ? -1.0 : std::stod(s); });

  r.get("bounds.instances", c.fuzz.instances);
  r.get("bounds.n_min", c.fuzz.n_min);
  r.get("bounds.n_max", c.fuzz.n_max);
  r.get("bounds.points_min", c.fuzz.points_min);
  r.get("bounds.points_max", c.fuzz.points_max);
  r.get("bounds.grid", c.fuzz.grid);
  r.get("bounds.dims", c.fuzz.dims);
  r.get("bounds.m_min", c.fuzz.m_min);
  r.get("bounds.m_max", c.fuzz.m_max);
  r.get("bounds.identical_fraction", c.fuzz.identical_fraction);

  r.get("proxy.max_epochs", c.proxy.max_epochs);
  r.get("proxy.patience", c.proxy.patience);
  r.get("proxy.batch_size", c.proxy.batch_size);
  r.get("proxy.lr", c.proxy.lr);

  r.reject_unknown();
  return c;
}

/// Cross-field checks; errors carry the field path.
inline void validate_config(const ExperimentConfig& c) {
  if (c.data.generator != "synthetic" && c.data.generator != "idx")
    throw ConfigError("data.generator", "must be synthetic or idx, got '" + c.data.generator + "'");
  if (c.data.generator == "idx" && (c.data.images.empty() || c.data.labels.empty()))
    throw ConfigError("data.images", "idx generator needs data.images and data.labels");
  if (c.data.generator == "synthetic") {
    if (c.data.synth.domains < 2) throw ConfigError("data.domains", "need at least 2 domains");
    if (c.data.synth.classes < 2) throw ConfigError("data.classes", "need at least 2 classes");
    if (c.data.synth.samples_per_class == 0) throw ConfigError("data.samples_per_class", "must be positive");
    if (!(c.data.synth.cov_scale > 0.0)) throw ConfigError("data.cov_scale", "must be positive");
  }
  if (!(c.split.labeled_class_fraction >= 0.0 && c.split.labeled_class_fraction <= 1.0))
    throw ConfigError("split.labeled_class_fraction", "must lie in [0,1]");
  if (!(c.split.test_fraction >= 0.0 && c.split.test_fraction < 1.0))
    throw ConfigError("split.test_fraction", "must lie in [0,1)");
  if (c.asymmetry.case_id < 0 || c.asymmetry.case_id > 4) throw ConfigError("asymmetry.case", "must be 0 (off) or 1..4");
  if (c.asymmetry.target_p_star > 1.0) throw ConfigError("asymmetry.target_p_star", "must be <= 1");
  detail::validated("train", [&] { c.train.validate(); });
  if (c.experiment.seeds == 0) throw ConfigError("experiment.seeds", "must be positive");
  if (c.experiment.methods.empty()) throw ConfigError("experiment.methods", "must list at least one method");
  for (int k : c.experiment.cases)
    if (k < 1 || k > 4) throw ConfigError("experiment.cases", "case " + std::to_string(k) + " outside 1..4");
  for (double p : c.experiment.p_grid)
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("experiment.p_grid", "p values must lie in [0,1]");
  for (double p : c.experiment.p_star_grid)
    if (!(p > 0.0 && p <= 1.0)) throw ConfigError("experiment.p_star_grid", "p* values must lie in (0,1]");
  if (c.experiment.mulann_p > 1.0) throw ConfigError("experiment.mulann_p", "must be p_star or a value in [0,1]");
  detail::validated("bounds", [&] { c.fuzz.validate(); });
  if (c.proxy.max_epochs == 0) throw ConfigError("proxy.max_epochs", "must be positive");
  if (c.proxy.batch_size == 0) throw ConfigError("proxy.batch_size", "must be positive");
  if (!(c.proxy.lr > 0.0)) throw ConfigError("proxy.lr", "must be positive");
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config", "cannot open '" + path + "'");
  ExperimentConfig c = parse_config(f);
  validate_config(c);
  return c;
}

inline ExperimentConfig config_from_string(const std::string& text) {
  std::istringstream is(text);
  ExperimentConfig c = parse_config(is);
  validate_config(c);
  return c;
}

}  // namespace mulann
