#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace backdrop {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer of the
/// same layout. Extents are always positive.
struct Tensor {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty when no gradient has been allocated

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> v);

  std::size_t numel() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  bool has_grad() const { return !grad.empty(); }

  /// Allocates the gradient if needed and sets it to zero.
  void zero_grad();

  bool all_finite() const;
};

/// Elementwise `param <- param - lr * grad`.
void sgd_step(Tensor& param, const Tensor& grad, double lr);

/// Applies `sgd_step` to each tensor using its own gradient buffer.
void sgd_step(std::span<Tensor* const> params, double lr);

/// lambda * sum |w| across all tensors.
double l1_penalty(std::span<const Tensor* const> params, double lambda);

}  // namespace backdrop
