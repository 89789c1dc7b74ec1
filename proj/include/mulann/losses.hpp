#pragma once

// Loss terms of the multi-domain adversarial objective
//
//   L = 1/n * sum_i (Lc_i - lambda * Ld_i) + zeta/n' * sum_j Lu_j
//
// plus the known/unknown selection that feeds the Lu terms. DANN is the
// configuration without KUD terms; MADA swaps the global discriminator for one
// discriminator per class weighted by the class posteriors.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "mulann/autodiff.hpp"

namespace mulann {

/// A loss value, optionally attached to the tape, with a diagnostic flag.
struct LossTerm {
  double value = 0.0;
  std::optional<Var> var;
  /// Set when the term is degenerate: empty input, or a single-domain batch
  /// for the discriminators.
  bool degenerate = false;
};

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

/// Mean cross-entropy of class posteriors against labels. Probabilities are
/// floored at 1e-12 before the log. Empty input yields 0 and the flag.
inline LossTerm classification_loss(const Tensor& class_probs, std::span<const std::size_t> labels) {
  if (labels.empty()) return {0.0, std::nullopt, true};
  if (class_probs.rank() != 2 || class_probs.dim(0) != labels.size())
    throw ShapeError("classification_loss: " + std::to_string(labels.size()) + " labels for probs " +
                     shape_str(class_probs.shape));
  const std::size_t L = class_probs.dim(1);
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= L) throw std::out_of_range("classification_loss: label out of range");
    s -= std::log(std::max(class_probs.at(i, labels[i]), kProbFloor));
  }
  return {s / static_cast<double>(labels.size()), std::nullopt, false};
}

/// Differentiable version on classifier logits restricted to `rows`.
inline LossTerm classification_loss(Var class_logits, std::span<const std::size_t> rows,
                                    std::span<const std::size_t> labels) {
  if (rows.size() != labels.size()) throw ShapeError("classification_loss: rows/labels length mismatch");
  if (rows.empty()) return {0.0, std::nullopt, true};
  Var loss = cross_entropy(gather_rows(class_logits, rows), labels);
  return {loss.item(), loss, false};
}

// ---------------------------------------------------------------------------
// Domain discrimination
// ---------------------------------------------------------------------------

namespace detail {

inline void check_domain_logits(const Tensor& Z, std::size_t n_domains) {
  if (n_domains < 2) throw std::invalid_argument("domain loss: need at least 2 domains");
  const std::size_t want = n_domains == 2 ? 1 : n_domains;
  if (Z.rank() != 2 || Z.dim(1) != want)
    throw ShapeError("domain loss: logits " + shape_str(Z.shape) + " but " + std::to_string(n_domains) +
                     " domains need width " + std::to_string(want));
}

/// sum_s weights[s] * CE(domain_ids[s]) / normalizer; sigmoid BCE when n == 2.
inline Var weighted_domain_ce(Var logits, std::span<const std::size_t> domain_ids,
                              std::span<const double> weights, double normalizer, std::size_t n_domains) {
  if (n_domains == 2) {
    std::vector<double> targets(domain_ids.size());
    for (std::size_t s = 0; s < domain_ids.size(); ++s) targets[s] = domain_ids[s] == 1 ? 1.0 : 0.0;
    return weighted_binary_cross_entropy(logits, targets, weights, normalizer);
  }
  return weighted_cross_entropy(logits, domain_ids, weights, normalizer);
}

inline bool single_domain(std::span<const std::size_t> ids) {
  return std::adjacent_find(ids.begin(), ids.end(), std::not_equal_to<>()) == ids.end();
}

}  // namespace detail

/// Mean multi-class cross-entropy of classifying each sample into its domain
/// (sigmoid binary cross-entropy for two domains; domain 1 is the positive).
inline LossTerm domain_discrimination_loss(Var domain_logits, std::span<const std::size_t> domain_ids,
                                           std::size_t n_domains) {
  detail::check_domain_logits(domain_logits.value(), n_domains);
  if (domain_ids.empty()) return {0.0, std::nullopt, true};
  for (auto d : domain_ids)
    if (d >= n_domains) throw std::out_of_range("domain loss: domain id out of range");
  std::vector<double> w(domain_ids.size(), 1.0);
  Var loss = detail::weighted_domain_ce(domain_logits, domain_ids, w,
                                        static_cast<double>(domain_ids.size()), n_domains);
  return {loss.item(), loss, detail::single_domain(domain_ids)};
}

/// Class-conditional domain loss: sum over classes k of the batch mean of
/// w[s,k] * CE_k(s), where w are the classifier posteriors. The weights enter
/// as constants, so no gradient reaches the classifier through them.
inline LossTerm mada_domain_loss(const Tensor& class_probs, std::span<const Var> per_class_logits,
                                 std::span<const std::size_t> domain_ids, std::size_t n_domains) {
  if (per_class_logits.empty()) throw std::invalid_argument("mada loss: no discriminators");
  if (class_probs.rank() != 2 || class_probs.dim(1) != per_class_logits.size())
    throw ShapeError("mada loss: posteriors " + shape_str(class_probs.shape) + " for " +
                     std::to_string(per_class_logits.size()) + " discriminators");
  if (domain_ids.empty()) return {0.0, std::nullopt, true};
  const std::size_t m = domain_ids.size();
  if (class_probs.dim(0) != m) throw ShapeError("mada loss: posterior rows != batch rows");
  std::optional<Var> total;
  std::vector<double> w(m);
  for (std::size_t k = 0; k < per_class_logits.size(); ++k) {
    detail::check_domain_logits(per_class_logits[k].value(), n_domains);
    for (std::size_t s = 0; s < m; ++s) w[s] = class_probs.at(s, k);
    Var term = detail::weighted_domain_ce(per_class_logits[k], domain_ids, w, static_cast<double>(m), n_domains);
    total = total ? add(*total, term) : term;
  }
  return {total->item(), total, detail::single_domain(domain_ids)};
}

// ---------------------------------------------------------------------------
// Known / unknown discrimination
// ---------------------------------------------------------------------------

struct EntropyValue {
  double value = 0.0;
  bool degenerate = false;
};

/// Shannon entropy (nats) of each row of `class_probs` after renormalizing over
/// the classes selected by `mask`. Rows whose masked mass is below 1e-12 get
/// entropy 0 and the degenerate flag.
inline std::vector<EntropyValue> restricted_entropy(const Tensor& class_probs, const std::vector<bool>& mask) {
  if (class_probs.rank() != 2 || class_probs.dim(1) != mask.size())
    throw ShapeError("restricted_entropy: mask of " + std::to_string(mask.size()) + " classes for probs " +
                     shape_str(class_probs.shape));
  if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; }))
    throw std::invalid_argument("restricted_entropy: mask selects no class");
  const std::size_t m = class_probs.dim(0), L = mask.size();
  std::vector<EntropyValue> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    double z = 0.0;
    for (std::size_t k = 0; k < L; ++k)
      if (mask[k]) z += class_probs.at(i, k);
    if (z < kProbFloor) {
      out[i] = {0.0, true};
      continue;
    }
    double h = 0.0;
    for (std::size_t k = 0; k < L; ++k) {
      if (!mask[k]) continue;
      const double q = class_probs.at(i, k) / z;
      if (q > 0.0) h -= q * std::log(q);
    }
    out[i] = {std::max(h, 0.0), false};
  }
  return out;
}

struct KudSelection {
  std::size_t domain = 0;
  double fraction = 0.0;
  /// Selected positions within the unlabeled batch, highest entropy first.
  std::vector<std::size_t> indices;
  std::vector<double> entropies;
};

/// ceil(p * m), where products within 1e-9 of an integer count as that integer
/// (so p = 0.3, m = 10 selects 3, not 4).
inline std::size_t selection_count(double p, std::size_t m) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("selection fraction p must lie in [0,1]");
  const double c = p * static_cast<double>(m);
  const double r = std::round(c);
  const double k = std::abs(c - r) < 1e-9 ? r : std::ceil(c);
  return std::min(m, static_cast<std::size_t>(k));
}

/// Picks the ceil(p*m) highest-entropy unlabeled samples. Equal entropies keep
/// their original order, so selections are nested in p.
inline KudSelection select_known_unknowns(std::span<const double> entropies, double p, std::size_t domain = 0) {
  KudSelection sel;
  sel.domain = domain;
  sel.fraction = p;
  const std::size_t k = selection_count(p, entropies.size());
  std::vector<std::size_t> order(entropies.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&entropies](std::size_t a, std::size_t b) { return entropies[a] > entropies[b]; });
  sel.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  for (auto i : sel.indices) sel.entropies.push_back(entropies[i]);
  return sel;
}

/// Binary cross-entropy of a KUD head on [labeled rows..., selected rows...]:
/// labeled samples are the positive class, selected unlabeled the negative.
/// Returns 0 when nothing was selected.
inline LossTerm kud_loss(Var kud_logits, std::size_t n_labeled, std::size_t n_selected) {
  if (n_selected == 0) return {0.0, std::nullopt, true};
  const Tensor& Z = kud_logits.value();
  if (Z.rank() != 2 || Z.dim(0) != n_labeled + n_selected || Z.dim(1) != 1)
    throw ShapeError("kud_loss: logits " + shape_str(Z.shape) + " for " + std::to_string(n_labeled) +
                     " labeled + " + std::to_string(n_selected) + " selected rows");
  std::vector<double> targets(n_labeled + n_selected, 0.0);
  std::fill_n(targets.begin(), n_labeled, 1.0);
  Var loss = binary_cross_entropy(kud_logits, targets);
  return {loss.item(), loss, false};
}

// ---------------------------------------------------------------------------
// Composite objective
// ---------------------------------------------------------------------------

struct LossBreakdown {
  std::vector<double> classification;  // Lc_i, one per domain
  std::vector<double> domain;          // Ld_i, one per domain
  std::vector<double> kud;             // Lu_j, one per domain with unlabeled data
  double lambda = 0.0;
  double zeta = 0.0;
  double total = 0.0;

  /// Re-assembles the total from the stored components.
  double assemble() const {
    const double n = static_cast<double>(classification.size());
    double s = 0.0;
    for (std::size_t i = 0; i < classification.size(); ++i) s += classification[i] - lambda * domain[i];
    double t = s / n;
    if (!kud.empty()) {
      double u = 0.0;
      for (double v : kud) u += v;
      t += zeta / static_cast<double>(kud.size()) * u;
    }
    return t;
  }
};

/// Assembles the objective from per-domain terms. With no unlabeled domain
/// the KUD term is 0 regardless of zeta.
inline LossBreakdown composite_loss(std::vector<double> classification, std::vector<double> domain,
                                    std::vector<double> kud, double lambda, double zeta) {
  if (!(lambda >= 0.0) || !(zeta >= 0.0)) throw std::invalid_argument("composite loss: lambda and zeta must be >= 0");
  if (classification.empty() || classification.size() != domain.size())
    throw std::invalid_argument("composite loss: need one classification and one domain term per domain");
  LossBreakdown b{std::move(classification), std::move(domain), std::move(kud), lambda, zeta, 0.0};
  b.total = b.assemble();
  return b;
}

}  // namespace mulann
