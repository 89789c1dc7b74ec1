#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mulann {

using Shape = std::vector<std::size_t>;

/// Thrown when an operation receives inputs whose shapes do not conform.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major array of doubles with an optional gradient slot.
struct Tensor {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;

  Tensor() = default;

  explicit Tensor(Shape s, double fill = 0.0)
      : shape(std::move(s)), values(shape_numel(shape), fill) {
    validate_shape();
  }

  Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    validate_shape();
    if (values.size() != shape_numel(shape)) {
      throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                       std::to_string(shape_numel(shape)) + " values, got " +
                       std::to_string(values.size()));
    }
  }

  static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  double& at(std::size_t r, std::size_t c) { return values[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * shape[1] + c]; }

  bool is_scalar() const { return values.size() == 1; }

  void zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), 0.0);
    else grad.emplace(values.size(), 0.0);
  }

  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    if (grad)
      for (double g : *grad)
        if (!std::isfinite(g)) return false;
    return true;
  }

 private:
  void validate_shape() const {
    for (std::size_t d : shape)
      if (d == 0) throw ShapeError("tensor: zero-sized dimension in " + shape_str(shape));
  }
};

}  // namespace mulann
