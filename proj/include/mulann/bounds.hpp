#pragma once

// Exact H-divergence, H-delta-H divergence and generalization-bound checks on
// finite weighted distributions with an enumerable threshold hypothesis class.
//
// Notation: eps_i(h) is the risk of h on domain i, eps_i* = min_h eps_i(h),
// beta_ij = min_h (eps_i(h) + eps_j(h)), Delta_ij = max over {i, j} of the
// expected disagreement between h_i* and h_j*, B(alpha) the uniform-deviation
// term of the multi-source bound.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mulann/data.hpp"

namespace mulann::bounds {

struct WeightedPoint {
  std::vector<double> x;
  int y = 0;
  double w = 0.0;
};

/// Finite labeled distribution; weights sum to 1.
struct Distribution {
  std::vector<WeightedPoint> points;
};

/// h(x) = [x_axis > t], or its complement.
struct Threshold {
  std::size_t axis = 0;
  double t = 0.0;
  bool complement = false;

  int operator()(const std::vector<double>& x) const { return (x[axis] > t) != complement ? 1 : 0; }
};

struct HypothesisClass {
  std::vector<Threshold> members;
  std::size_t vc_dim = 2;
  std::size_t size() const { return members.size(); }
};

/// Axis thresholds on the data-adaptive grid: per axis, one threshold below
/// every support coordinate and one at each midpoint between consecutive
/// distinct coordinates, each followed by its complement. Enumeration order is
/// axis, then threshold ascending, then plain before complement.
///
/// VC dimension: 2 on one axis (thresholds with complements); otherwise the
/// class-size bound floor(log2 |H|).
///
/// On one axis d_HdH / 2 <= d_H, which the d_H-based bounds lean on. With
/// several axes that ordering can flip and those bounds can fail.
inline HypothesisClass threshold_class(const std::vector<Distribution>& domains) {
  std::size_t dim = 0;
  for (const auto& d : domains)
    for (const auto& p : d.points) dim = std::max(dim, p.x.size());
  if (dim == 0) throw std::invalid_argument("threshold_class: no support points");
  HypothesisClass H;
  for (std::size_t a = 0; a < dim; ++a) {
    std::set<double> coords;
    for (const auto& d : domains)
      for (const auto& p : d.points) coords.insert(p.x.at(a));
    std::vector<double> ts{*coords.begin() - 0.5};
    for (auto it = coords.begin(); std::next(it) != coords.end(); ++it) ts.push_back(0.5 * (*it + *std::next(it)));
    for (double t : ts) {
      H.members.push_back({a, t, false});
      H.members.push_back({a, t, true});
    }
  }
  H.vc_dim = dim == 1 ? 2 : static_cast<std::size_t>(std::floor(std::log2(static_cast<double>(H.size()))));
  return H;
}

struct DiscreteInstance {
  std::vector<Distribution> domains;
  HypothesisClass H;
  /// Per-domain sample sizes; m = sum, gamma_i = m_i / m.
  std::vector<std::size_t> sample_sizes;
  std::vector<double> alpha;
  double delta = 0.05;
  std::uint64_t seed = 0;

  std::size_t n() const { return domains.size(); }
  std::size_t m() const {
    std::size_t s = 0;
    for (auto k : sample_sizes) s += k;
    return s;
  }
  std::vector<double> gamma() const {
    std::vector<double> g;
    for (auto k : sample_sizes) g.push_back(static_cast<double>(k) / static_cast<double>(m()));
    return g;
  }

  void validate() const {
    if (domains.empty()) throw std::invalid_argument("instance: no domains");
    if (H.size() == 0) throw std::invalid_argument("instance: empty hypothesis class");
    for (std::size_t i = 0; i < n(); ++i) {
      double s = 0.0;
      if (domains[i].points.empty()) throw std::invalid_argument("instance: domain " + std::to_string(i) + " is empty");
      for (const auto& p : domains[i].points) {
        if (p.w < 0.0) throw std::invalid_argument("instance: negative weight");
        if (p.y != 0 && p.y != 1) throw std::invalid_argument("instance: labels must be 0 or 1");
        s += p.w;
      }
      if (std::abs(s - 1.0) > 1e-9)
        throw std::invalid_argument("instance: weights of domain " + std::to_string(i) + " sum to " + std::to_string(s));
    }
    if (sample_sizes.size() != n() || alpha.size() != n())
      throw std::invalid_argument("instance: need one sample size and one alpha per domain");
    double a = 0.0;
    for (std::size_t i = 0; i < n(); ++i) {
      if (alpha[i] < 0.0) throw std::invalid_argument("instance: alpha must be nonnegative");
      if (sample_sizes[i] == 0 && alpha[i] > 0.0)
        throw std::invalid_argument("instance: domain with positive alpha needs samples");
      a += alpha[i];
    }
    if (std::abs(a - 1.0) > 1e-9) throw std::invalid_argument("instance: alpha must sum to 1");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("instance: delta must lie in (0,1)");
  }
};

// ---------------------------------------------------------------------------
// Exact quantities
// ---------------------------------------------------------------------------

inline double exact_risk(const Threshold& h, const Distribution& D) {
  double r = 0.0;
  for (const auto& p : D.points)
    if (h(p.x) != p.y) r += p.w;
  return r;
}

/// P_D(h(x) = 1), labels ignored.
inline double acceptance(const Threshold& h, const Distribution& D) {
  double r = 0.0;
  for (const auto& p : D.points)
    if (h(p.x) == 1) r += p.w;
  return r;
}

/// P_D(h(x) != h'(x)).
inline double disagreement(const Threshold& h, const Threshold& g, const Distribution& D) {
  double r = 0.0;
  for (const auto& p : D.points)
    if (h(p.x) != g(p.x)) r += p.w;
  return r;
}

/// 2 max_h |P_i(h=1) - P_j(h=1)|.
inline double exact_h_divergence(const Distribution& Di, const Distribution& Dj, const HypothesisClass& H) {
  double best = 0.0;
  for (const auto& h : H.members) best = std::max(best, std::abs(acceptance(h, Di) - acceptance(h, Dj)));
  return 2.0 * best;
}

/// 2 max_{h,h'} |P_i(h != h') - P_j(h != h')| over all ordered pairs.
inline double exact_hdh_divergence(const Distribution& Di, const Distribution& Dj, const HypothesisClass& H) {
  double best = 0.0;
  for (const auto& h : H.members)
    for (const auto& g : H.members)
      best = std::max(best, std::abs(disagreement(h, g, Di) - disagreement(h, g, Dj)));
  return 2.0 * best;
}

/// Every exact quantity the bounds need, computed once from prediction tables.
struct PairwiseTerms {
  std::size_t n = 0;
  /// risk[i][k] = eps_i(h_k)
  std::vector<std::vector<double>> risk;
  std::vector<double> eps_star;
  std::vector<std::size_t> h_star;
  std::vector<std::vector<double>> beta;
  std::vector<std::vector<double>> Delta;
  std::vector<std::vector<double>> dH;
  std::vector<std::vector<double>> dHdH;
  /// Joint minimizer of sum_i eps_i and the minimal sum.
  std::size_t h_joint = 0;
  double beta_all = 0.0;
};

namespace detail {

inline std::size_t argmin_first(const std::vector<double>& v) {
  std::size_t b = 0;
  for (std::size_t k = 1; k < v.size(); ++k)
    if (v[k] < v[b]) b = k;
  return b;
}

}  // namespace detail

inline PairwiseTerms pairwise_terms(const DiscreteInstance& inst) {
  const std::size_t n = inst.n(), K = inst.H.size();
  PairwiseTerms T;
  T.n = n;
  // pred[i][k][p] = h_k(x_p) on domain i
  std::vector<std::vector<std::vector<std::uint8_t>>> pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& pts = inst.domains[i].points;
    pred[i].assign(K, std::vector<std::uint8_t>(pts.size()));
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t p = 0; p < pts.size(); ++p) pred[i][k][p] = static_cast<std::uint8_t>(inst.H.members[k](pts[p].x));
  }
  T.risk.assign(n, std::vector<double>(K, 0.0));
  std::vector<std::vector<double>> acc(n, std::vector<double>(K, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& pts = inst.domains[i].points;
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t p = 0; p < pts.size(); ++p) {
        if (pred[i][k][p] != pts[p].y) T.risk[i][k] += pts[p].w;
        if (pred[i][k][p]) acc[i][k] += pts[p].w;
      }
    T.h_star.push_back(detail::argmin_first(T.risk[i]));
    T.eps_star.push_back(T.risk[i][T.h_star.back()]);
  }
  // dis[i][k*K+l] = P_i(h_k != h_l)
  std::vector<std::vector<double>> dis(n, std::vector<double>(K * K, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& pts = inst.domains[i].points;
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t l = k + 1; l < K; ++l) {
        double s = 0.0;
        for (std::size_t p = 0; p < pts.size(); ++p)
          if (pred[i][k][p] != pred[i][l][p]) s += pts[p].w;
        dis[i][k * K + l] = dis[i][l * K + k] = s;
      }
  }
  auto square = [n] { return std::vector<std::vector<double>>(n, std::vector<double>(n, 0.0)); };
  T.beta = square();
  T.Delta = square();
  T.dH = square();
  T.dHdH = square();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double b = 2.0, dh = 0.0, dhdh = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        b = std::min(b, T.risk[i][k] + T.risk[j][k]);
        dh = std::max(dh, std::abs(acc[i][k] - acc[j][k]));
      }
      for (std::size_t q = 0; q < K * K; ++q) dhdh = std::max(dhdh, std::abs(dis[i][q] - dis[j][q]));
      const std::size_t q = T.h_star[i] * K + T.h_star[j];
      T.beta[i][j] = b;
      T.dH[i][j] = 2.0 * dh;
      T.dHdH[i][j] = 2.0 * dhdh;
      T.Delta[i][j] = std::max(dis[i][q], dis[j][q]);
    }
  std::vector<double> joint(K, 0.0);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < n; ++i) joint[k] += T.risk[i][k];
  T.h_joint = detail::argmin_first(joint);
  T.beta_all = joint[T.h_joint];
  return T;
}

// ---------------------------------------------------------------------------
// Bound checks
// ---------------------------------------------------------------------------

inline constexpr double kSlackTolerance = 1e-12;

struct BoundReport {
  std::string bound;
  /// Domain the row refers to; -1 for whole-instance rows. Corollary rows on
  /// a sub-pair encode the pair as 10*S + T.
  int domain = -1;
  double lhs = 0.0;
  double rhs = 0.0;
  std::map<std::string, double> components;
  bool pass = false;
  double slack() const { return rhs - lhs; }
};

inline BoundReport make_report(std::string id, int domain, double lhs, double rhs,
                               std::map<std::string, double> components = {}) {
  return {std::move(id), domain, lhs, rhs, std::move(components), lhs <= rhs + kSlackTolerance};
}

/// sqrt(sum_j alpha_j^2 / gamma_j) * sqrt((2 d ln(2(m+1)) + ln(4/delta)) / m).
inline double deviation_term(const std::vector<double>& alpha, const std::vector<double>& gamma, std::size_t m,
                             std::size_t vc_dim, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("deviation term: delta must lie in (0,1)");
  if (m == 0) throw std::invalid_argument("deviation term: m must be positive");
  double s = 0.0;
  for (std::size_t j = 0; j < alpha.size(); ++j)
    if (alpha[j] > 0.0) s += alpha[j] * alpha[j] / gamma[j];
  const double md = static_cast<double>(m);
  return std::sqrt(s) *
         std::sqrt((2.0 * static_cast<double>(vc_dim) * std::log(2.0 * (md + 1.0)) + std::log(4.0 / delta)) / md);
}

/// Empirical risks on multinomial draws from each domain.
struct EmpiricalSample {
  /// counts[i][p]: how often support point p of domain i was drawn.
  std::vector<std::vector<std::size_t>> counts;
};

inline EmpiricalSample draw_samples(const DiscreteInstance& inst, std::uint64_t seed) {
  auto rng = make_rng(seed, 7000);
  EmpiricalSample s;
  for (std::size_t i = 0; i < inst.n(); ++i) {
    const auto& pts = inst.domains[i].points;
    std::vector<double> w;
    for (const auto& p : pts) w.push_back(p.w);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    std::vector<std::size_t> c(pts.size(), 0);
    for (std::size_t r = 0; r < inst.sample_sizes[i]; ++r) ++c[pick(rng)];
    s.counts.push_back(std::move(c));
  }
  return s;
}

/// First minimizer of sum_i alpha_i * empirical eps_i.
inline std::size_t empirical_minimizer(const DiscreteInstance& inst, const EmpiricalSample& s) {
  std::vector<double> obj(inst.H.size(), 0.0);
  for (std::size_t i = 0; i < inst.n(); ++i) {
    if (inst.sample_sizes[i] == 0) continue;
    const auto& pts = inst.domains[i].points;
    for (std::size_t k = 0; k < inst.H.size(); ++k) {
      std::size_t wrong = 0;
      for (std::size_t p = 0; p < pts.size(); ++p)
        if (inst.H.members[k](pts[p].x) != pts[p].y) wrong += s.counts[i][p];
      obj[k] += inst.alpha[i] * static_cast<double>(wrong) / static_cast<double>(inst.sample_sizes[i]);
    }
  }
  return detail::argmin_first(obj);
}

/// Statement form:
///   sum_i eps_i(h^) <= sum_i eps_i* + 4 n B + 2 sum_{i<=j} (alpha_i + alpha_j)(d_H(i,j) + beta_ij),
/// its variant with d_H replaced by d_HdH / 2 ("thm1-hdh"), the comparison of
/// the two right-hand sides ("thm1-hdh-tightness"), and the per-domain form
///   eps_j(h^) <= eps_j* + 4 B + 2 sum_i alpha_i (beta_ij + d_H(i,j)).
inline std::vector<BoundReport> check_theorem1(const DiscreteInstance& inst, const PairwiseTerms& T, std::size_t h_hat) {
  inst.validate();
  const std::size_t n = inst.n();
  const double B = deviation_term(inst.alpha, inst.gamma(), inst.m(), inst.H.vc_dim, inst.delta);
  double lhs = 0.0, star = 0.0, cross = 0.0, cross_hdh = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    lhs += T.risk[i][h_hat];
    star += T.eps_star[i];
    for (std::size_t j = i; j < n; ++j) {
      cross += (inst.alpha[i] + inst.alpha[j]) * (T.dH[i][j] + T.beta[i][j]);
      cross_hdh += (inst.alpha[i] + inst.alpha[j]) * (0.5 * T.dHdH[i][j] + T.beta[i][j]);
    }
  }
  const double dn = static_cast<double>(n);
  const double rhs = star + 4.0 * dn * B + 2.0 * cross;
  const double rhs_hdh = star + 4.0 * dn * B + 2.0 * cross_hdh;
  std::vector<BoundReport> out;
  out.push_back(make_report("thm1", -1, lhs, rhs, {{"B", B}, {"sum_eps_star", star}, {"cross", cross}}));
  out.push_back(make_report("thm1-hdh", -1, lhs, rhs_hdh, {{"B", B}, {"cross", cross_hdh}}));
  out.push_back(make_report("thm1-hdh-tightness", -1, rhs_hdh, rhs));
  for (std::size_t j = 0; j < n; ++j) {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += inst.alpha[i] * (T.beta[i][j] + T.dH[i][j]);
    out.push_back(make_report("thm1-per-domain-proof-form", static_cast<int>(j), T.risk[j][h_hat],
                              T.eps_star[j] + 4.0 * B + 2.0 * c, {{"B", B}, {"eps_star", T.eps_star[j]}}));
  }
  return out;
}

inline double mean_risk(const PairwiseTerms& T, std::size_t h) {
  double s = 0.0;
  for (std::size_t i = 0; i < T.n; ++i) s += T.risk[i][h];
  return s / static_cast<double>(T.n);
}

/// |eps_j(h) - mean_i eps_i(h)| <= eps_j* + 1/n sum_i eps_i* + 1/n sum_i (d_H(i,j) + Delta_ij).
inline BoundReport check_prop1(const PairwiseTerms& T, std::size_t h, std::size_t j) {
  const double dn = static_cast<double>(T.n);
  double s_star = 0.0, s_pair = 0.0;
  for (std::size_t i = 0; i < T.n; ++i) {
    s_star += T.eps_star[i];
    s_pair += T.dH[i][j] + T.Delta[i][j];
  }
  const double lhs = std::abs(T.risk[j][h] - mean_risk(T, h));
  return make_report("prop1", static_cast<int>(j), lhs, T.eps_star[j] + s_star / dn + s_pair / dn,
                     {{"eps_bar", mean_risk(T, h)}, {"eps_star", T.eps_star[j]}});
}

/// |eps_j(h) - mean_i eps_i(h)| <= 2 (eps_j* + 1/n sum_i eps_i*) + eps_j(h*) + beta
///                                  + 1/n sum_i d_H(i,j) + 1/n sum_i d_HdH(i,j) / 2,
/// with h* the joint minimizer of sum_i eps_i and beta its summed risk.
inline BoundReport check_prop2(const PairwiseTerms& T, std::size_t h, std::size_t j) {
  const double dn = static_cast<double>(T.n);
  double s_star = 0.0, s_dh = 0.0, s_hdh = 0.0;
  for (std::size_t i = 0; i < T.n; ++i) {
    s_star += T.eps_star[i];
    s_dh += T.dH[i][j];
    s_hdh += 0.5 * T.dHdH[i][j];
  }
  const double rhs = 2.0 * (T.eps_star[j] + s_star / dn) + T.risk[j][T.h_joint] + T.beta_all + s_dh / dn + s_hdh / dn;
  return make_report("prop2", static_cast<int>(j), std::abs(T.risk[j][h] - mean_risk(T, h)), rhs,
                     {{"beta", T.beta_all}, {"eps_j_h_joint", T.risk[j][T.h_joint]}});
}

namespace detail {

inline void check_pair(const PairwiseTerms& T, std::size_t s, std::size_t t) {
  if (T.n < 2) throw std::invalid_argument("corollaries need two domains, instance has " + std::to_string(T.n));
  if (s >= T.n || t >= T.n || s == t) throw std::invalid_argument("corollaries need two distinct domains");
}

}  // namespace detail

/// |eps_S(h) - eps_T(h)| <= eps_S* + eps_T* + Delta_ST + d_H(S,T).
inline BoundReport check_cor3(const PairwiseTerms& T, std::size_t h, std::size_t s = 0, std::size_t t = 1) {
  detail::check_pair(T, s, t);
  return make_report("cor3", -1, std::abs(T.risk[s][h] - T.risk[t][h]),
                     T.eps_star[s] + T.eps_star[t] + T.Delta[s][t] + T.dH[s][t], {{"Delta", T.Delta[s][t]}});
}

/// |eps_S(h) - eps_T(h)| <= 2 (eps_S* + eps_T*) + beta_ST + d_HdH(S,T) / 2 + d_H(S,T).
inline BoundReport check_cor4(const PairwiseTerms& T, std::size_t h, std::size_t s = 0, std::size_t t = 1) {
  detail::check_pair(T, s, t);
  return make_report("cor4", -1, std::abs(T.risk[s][h] - T.risk[t][h]),
                     2.0 * (T.eps_star[s] + T.eps_star[t]) + T.beta[s][t] + 0.5 * T.dHdH[s][t] + T.dH[s][t],
                     {{"beta", T.beta[s][t]}});
}

namespace detail {

/// Keeps the row with the smallest slack.
inline void keep_worst(std::optional<BoundReport>& worst, BoundReport r) {
  if (!worst || r.slack() < worst->slack()) worst = std::move(r);
}

}  // namespace detail

/// All checks on one instance. Proposition and corollary rows report the
/// hypothesis with the largest left-hand side (their right-hand sides do not
/// depend on h). With n = 2 the corollaries use (S, T) = (0, 1); with more
/// domains they run on every pair.
inline std::vector<BoundReport> check_all(const DiscreteInstance& inst) {
  inst.validate();
  const PairwiseTerms T = pairwise_terms(inst);
  const EmpiricalSample sample = draw_samples(inst, inst.seed);
  auto out = check_theorem1(inst, T, empirical_minimizer(inst, sample));
  const std::size_t K = inst.H.size();
  for (std::size_t j = 0; j < inst.n(); ++j) {
    std::optional<BoundReport> w1, w2;
    for (std::size_t h = 0; h < K; ++h) {
      detail::keep_worst(w1, check_prop1(T, h, j));
      detail::keep_worst(w2, check_prop2(T, h, j));
    }
    out.push_back(*w1);
    out.push_back(*w2);
  }
  for (std::size_t s = 0; s < inst.n(); ++s)
    for (std::size_t t = s + 1; t < inst.n(); ++t) {
      std::optional<BoundReport> w3, w4;
      for (std::size_t h = 0; h < K; ++h) {
        detail::keep_worst(w3, check_cor3(T, h, s, t));
        detail::keep_worst(w4, check_cor4(T, h, s, t));
      }
      const int tag = inst.n() == 2 ? -1 : static_cast<int>(10 * s + t);
      w3->domain = tag;
      w4->domain = tag;
      out.push_back(*w3);
      out.push_back(*w4);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

struct FuzzSpec {
  std::size_t instances = 1000;
  std::size_t n_min = 2;
  std::size_t n_max = 3;
  std::size_t points_min = 1;
  std::size_t points_max = 50;
  /// Support coordinates are drawn from {0, ..., grid - 1} on each axis.
  std::size_t grid = 20;
  /// Input dimension. The d_H-based bounds are only guaranteed in one
  /// dimension; see threshold_class.
  std::size_t dims = 1;
  std::size_t m_min = 20;
  std::size_t m_max = 5000;
  /// Share of instances whose domains are all copies of the first one.
  double identical_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (instances == 0) throw std::invalid_argument("bounds.instances must be positive");
    if (n_min < 1 || n_max < n_min) throw std::invalid_argument("bounds.n_min/n_max must satisfy 1 <= n_min <= n_max");
    if (points_min < 1 || points_max < points_min)
      throw std::invalid_argument("bounds.points_min/points_max must satisfy 1 <= min <= max");
    if (grid < 2) throw std::invalid_argument("bounds.grid must be at least 2");
    if (dims < 1 || dims > 3) throw std::invalid_argument("bounds.dims must lie in 1..3");
    if (m_min < 1 || m_max < m_min) throw std::invalid_argument("bounds.m_min/m_max must satisfy 1 <= min <= max");
    if (!(identical_fraction >= 0.0 && identical_fraction <= 1.0))
      throw std::invalid_argument("bounds.identical_fraction must lie in [0,1]");
  }
};

/// Random instance on a small integer grid. Labels follow a noisy threshold
/// rule on axis 0 or are uniform; weights are normalized exponentials.
inline DiscreteInstance random_instance(const FuzzSpec& spec, std::uint64_t instance_seed) {
  auto rng = make_rng(instance_seed, 6000);
  auto uni = [&rng](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);

  DiscreteInstance inst;
  inst.seed = instance_seed;
  const std::size_t n = uni(spec.n_min, spec.n_max);
  const bool identical = u01(rng) < spec.identical_fraction;
  for (std::size_t i = 0; i < n; ++i) {
    if (identical && i > 0) {
      inst.domains.push_back(inst.domains.front());
      continue;
    }
    const std::size_t P = uni(spec.points_min, spec.points_max);
    const std::size_t lo = uni(0, spec.grid - 1), hi = uni(lo, spec.grid - 1);
    const bool rule = u01(rng) < 0.7;
    const double t = static_cast<double>(uni(0, spec.grid)) - 0.5;
    const bool flip = u01(rng) < 0.5;
    const double noise = 0.3 * u01(rng);
    Distribution D;
    double total = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      std::vector<double> x{static_cast<double>(uni(lo, hi))};
      for (std::size_t a = 1; a < spec.dims; ++a) x.push_back(static_cast<double>(uni(0, spec.grid - 1)));
      int y = rule ? ((x[0] > t) != flip ? 1 : 0) : (u01(rng) < 0.5 ? 1 : 0);
      if (rule && u01(rng) < noise) y = 1 - y;
      const double w = expo(rng) + 1e-6;
      total += w;
      D.points.push_back({std::move(x), y, w});
    }
    for (auto& p : D.points) p.w /= total;
    inst.domains.push_back(std::move(D));
  }
  inst.H = threshold_class(inst.domains);
  const double lm = std::log(static_cast<double>(spec.m_min)), hm = std::log(static_cast<double>(spec.m_max));
  const auto m = std::max<std::size_t>(n, static_cast<std::size_t>(std::llround(std::exp(lm + (hm - lm) * u01(rng)))));
  std::vector<double> g;
  double gs = 0.0;
  for (std::size_t i = 0; i < n; ++i) gs += g.emplace_back(expo(rng) + 0.05);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t mi =
        i + 1 == n ? m - assigned
                   : std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(g[i] / gs * static_cast<double>(m))), 1,
                                             m - assigned - (n - i - 1));
    inst.sample_sizes.push_back(mi);
    assigned += mi;
  }
  double as = 0.0;
  for (std::size_t i = 0; i < n; ++i) as += inst.alpha.emplace_back(expo(rng));
  for (auto& a : inst.alpha) a /= as;
  const double deltas[] = {0.01, 0.05, 0.1};
  inst.delta = deltas[uni(0, 2)];
  return inst;
}

struct FuzzRow {
  std::uint64_t seed = 0;
  std::size_t n = 0;
  BoundReport report;
};

inline std::vector<FuzzRow> fuzz(const FuzzSpec& spec) {
  spec.validate();
  std::vector<FuzzRow> rows;
  for (std::size_t k = 0; k < spec.instances; ++k) {
    const std::uint64_t s = spec.seed * 1000003ULL + k;
    const DiscreteInstance inst = random_instance(spec, s);
    for (auto& r : check_all(inst)) rows.push_back({s, inst.n(), std::move(r)});
  }
  return rows;
}

}  // namespace mulann::bounds
