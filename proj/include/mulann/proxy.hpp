#pragma once

// Proxy H-divergence: train a small domain classifier on half of each feature
// set and turn its held-out error into d = 2 (1 - 2 err), clamped to [0, 2].

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "mulann/data.hpp"
#include "mulann/network.hpp"
#include "mulann/trainer.hpp"

namespace mulann {

struct ProxyOptions {
  std::uint64_t seed = 0;
  std::size_t max_epochs = 150;
  /// Epochs without validation improvement before stopping.
  std::size_t patience = 20;
  std::size_t batch_size = 64;
  double lr = 0.05;
  double momentum = 0.9;
  std::size_t hidden = 32;
};

struct ProxyResult {
  double divergence = 0.0;
  /// Balanced held-out error: mean of the two per-side error rates.
  double heldout_error = 0.0;
  std::size_t epochs = 0;
};

inline constexpr std::size_t kProxyMinSamples = 20;

namespace detail {

inline Tensor rows_of(const Tensor& X, std::span<const std::size_t> idx) {
  const std::size_t d = X.dim(1);
  Tensor out(Shape{idx.size(), d});
  for (std::size_t r = 0; r < idx.size(); ++r) std::copy_n(&X.values[idx[r] * d], d, &out.values[r * d]);
  return out;
}

}  // namespace detail

/// Each side is split 50/50 into training and held-out halves; a fifth of the
/// training half is kept aside for early stopping on validation loss. Features
/// are standardized with training-half statistics.
inline ProxyResult proxy_divergence(const Tensor& A, const Tensor& B, const ProxyOptions& opt = {}) {
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(1))
    throw ShapeError("proxy_divergence: feature sets " + shape_str(A.shape) + " and " + shape_str(B.shape) +
                     " are not comparable");
  if (A.dim(0) < kProxyMinSamples || B.dim(0) < kProxyMinSamples)
    throw std::invalid_argument("proxy_divergence: need at least " + std::to_string(kProxyMinSamples) +
                                " samples per side, got " + std::to_string(A.dim(0)) + " and " +
                                std::to_string(B.dim(0)));
  auto rng = make_rng(opt.seed, 8000);
  const std::size_t D = A.dim(1);

  // Stack both sides; y = 1 marks B.
  std::vector<double> X;
  std::vector<double> y;
  std::vector<std::size_t> train, val, test;
  for (int side = 0; side < 2; ++side) {
    const Tensor& S = side ? B : A;
    const std::size_t base = y.size();
    X.insert(X.end(), S.values.begin(), S.values.end());
    y.insert(y.end(), S.dim(0), side ? 1.0 : 0.0);
    std::vector<std::size_t> idx(S.dim(0));
    std::iota(idx.begin(), idx.end(), base);
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t half = idx.size() / 2, n_val = std::max<std::size_t>(1, half / 5);
    val.insert(val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    train.insert(train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.begin() + static_cast<std::ptrdiff_t>(half));
    test.insert(test.end(), idx.begin() + static_cast<std::ptrdiff_t>(half), idx.end());
  }
  const std::size_t N = y.size();
  std::vector<double> mean(D, 0.0), sd(D, 0.0);
  for (auto i : train)
    for (std::size_t k = 0; k < D; ++k) mean[k] += X[i * D + k];
  for (auto& m : mean) m /= static_cast<double>(train.size());
  for (auto i : train)
    for (std::size_t k = 0; k < D; ++k) sd[k] += (X[i * D + k] - mean[k]) * (X[i * D + k] - mean[k]);
  for (auto& s : sd) s = std::sqrt(s / static_cast<double>(train.size())) + 1e-8;
  Tensor all(Shape{N, D});
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t k = 0; k < D; ++k) all.values[i * D + k] = (X[i * D + k] - mean[k]) / sd[k];

  std::mt19937_64 init_rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
  Mlp head = detail::make_mlp({D, opt.hidden, 1}, false, init_rng);
  std::vector<std::pair<std::string, Tensor*>> params;
  for (std::size_t l = 0; l < head.layers.size(); ++l) {
    params.emplace_back("fc" + std::to_string(l) + ".weight", &head.layers[l].weight);
    params.emplace_back("fc" + std::to_string(l) + ".bias", &head.layers[l].bias);
  }

  auto logits_of = [&](std::span<const std::size_t> idx) {
    Tape tape(false);
    return head.forward(tape, tape.constant(detail::rows_of(all, idx))).value();
  };
  auto val_loss = [&] {
    const Tensor z = logits_of(val);
    double s = 0.0;
    for (std::size_t r = 0; r < val.size(); ++r) {
      const double v = z.values[r], t = y[val[r]];
      s += std::max(v, 0.0) - v * t + std::log1p(std::exp(-std::abs(v)));
    }
    return s / static_cast<double>(val.size());
  };

  OptimizerState state;
  Mlp best = head;
  double best_loss = val_loss();
  std::size_t since = 0, epochs = 0;
  std::vector<std::size_t> order = train;
  for (; epochs < opt.max_epochs && since < opt.patience; ++epochs) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t s = 0; s < order.size(); s += opt.batch_size) {
      const std::span<const std::size_t> part(order.data() + s, std::min(opt.batch_size, order.size() - s));
      std::vector<double> t;
      for (auto i : part) t.push_back(y[i]);
      for (auto& [name, p] : params) p->zero_grad();
      Tape tape;
      Var loss = binary_cross_entropy(head.forward(tape, tape.constant(detail::rows_of(all, part))), t);
      tape.backward(loss);
      sgd_momentum_step(params, state, opt.lr, opt.momentum);
    }
    const double l = val_loss();
    if (l < best_loss - 1e-9) {
      best_loss = l;
      best = head;
      since = 0;
    } else {
      ++since;
    }
  }
  head = best;

  const Tensor z = logits_of(test);
  std::size_t wrong[2] = {0, 0}, count[2] = {0, 0};
  for (std::size_t r = 0; r < test.size(); ++r) {
    const int side = y[test[r]] > 0.5 ? 1 : 0;
    ++count[side];
    if ((z.values[r] > 0.0 ? 1 : 0) != side) ++wrong[side];
  }
  ProxyResult res;
  res.heldout_error = 0.5 * (static_cast<double>(wrong[0]) / static_cast<double>(count[0]) +
                             static_cast<double>(wrong[1]) / static_cast<double>(count[1]));
  res.divergence = std::clamp(2.0 * (1.0 - 2.0 * res.heldout_error), 0.0, 2.0);
  res.epochs = epochs;
  return res;
}

}  // namespace mulann
