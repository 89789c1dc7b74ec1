#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "mulann/autodiff.hpp"

namespace mulann::testing {

inline Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(s));
  for (double& v : t.values) v = u(rng);
  t.requires_grad = true;
  return t;
}

/// Reduces any tensor to a scalar with fixed random weights, so every output
/// coordinate contributes to the checked gradient.
inline Var project(Var out, std::uint64_t seed = 99) {
  Var flat = out.value().rank() == 2 ? out : flatten(out);
  const std::size_t rows = flat.value().dim(0), cols = flat.value().dim(1);
  std::mt19937_64 rng(seed);
  Tensor w = random_tensor({cols, 1}, rng);
  w.requires_grad = false;
  Var col = matmul(flat, flat.tape->constant(w));
  Tensor ones(Shape{1, rows}, 1.0);
  return matmul(flat.tape->constant(ones), col);
}

struct GradcheckResult {
  double max_rel = 0.0;
  double max_abs = 0.0;
  std::size_t coords = 0;
};

/// Relative error with a magnitude floor, so coordinates whose true gradient
/// is ~0 are judged on absolute error.
inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central differences (step h) of `loss` against the analytic gradient of
/// `objective`, scaled per parameter by `factor` (e.g. -lambda across a GRL).
/// Both builders bind the parameters on the tape they receive.
inline GradcheckResult gradcheck(const std::vector<Tensor*>& params, const std::function<Var(Tape&)>& objective,
                                 const std::function<double(Tape&)>& loss, double h = 1e-5,
                                 const std::vector<double>& factor = {}) {
  for (Tensor* p : params) {
    p->requires_grad = true;
    p->grad.reset();
  }
  {
    Tape t;
    Var l = objective(t);
    t.backward(l);
  }
  GradcheckResult r;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor* p = params[pi];
    const std::vector<double> analytic = p->grad ? *p->grad : std::vector<double>(p->size(), 0.0);
    const double f = factor.empty() ? 1.0 : factor[pi];
    for (std::size_t k = 0; k < p->size(); ++k) {
      const double v = p->values[k];
      p->values[k] = v + h;
      double fp, fm;
      {
        Tape t(false);
        fp = loss(t);
      }
      p->values[k] = v - h;
      {
        Tape t(false);
        fm = loss(t);
      }
      p->values[k] = v;
      const double numeric = f * (fp - fm) / (2.0 * h);
      r.max_rel = std::max(r.max_rel, rel_error(analytic[k], numeric));
      r.max_abs = std::max(r.max_abs, std::abs(analytic[k] - numeric));
      ++r.coords;
    }
  }
  return r;
}

inline GradcheckResult gradcheck(const std::vector<Tensor*>& params, const std::function<Var(Tape&)>& objective,
                                 double h = 1e-5) {
  return gradcheck(params, objective, [&objective](Tape& t) { return objective(t).item(); }, h);
}

}  // namespace mulann::testing
