#include "backdrop/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace backdrop {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
void check_extents(const Shape& s) {
  if (s.empty()) throw std::invalid_argument("tensor shape must have at least one extent");
  for (auto d : s)
    if (d == 0) throw std::invalid_argument("tensor shape " + shape_str(s) + " has a zero extent");
}
}  // namespace

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)) {
  check_extents(shape);
  values.assign(shape_numel(shape), fill);
}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
  check_extents(shape);
  if (values.size() != shape_numel(shape))
    throw std::invalid_argument("tensor shape " + shape_str(shape) + " needs " +
                                std::to_string(shape_numel(shape)) + " values, got " +
                                std::to_string(values.size()));
}

void Tensor::zero_grad() { grad.assign(values.size(), 0.0); }

bool Tensor::all_finite() const {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  for (double g : grad)
    if (!std::isfinite(g)) return false;
  return true;
}

void sgd_step(Tensor& param, const Tensor& grad, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (param.shape != grad.shape)
    throw std::invalid_argument("sgd_step: parameter shape " + shape_str(param.shape) +
                                " does not match gradient shape " + shape_str(grad.shape));
  for (std::size_t i = 0; i < param.values.size(); ++i) param.values[i] -= lr * grad.values[i];
}

void sgd_step(std::span<Tensor* const> params, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  for (Tensor* p : params) {
    if (!p->has_grad()) continue;
    if (p->grad.size() != p->values.size())
      throw std::invalid_argument("sgd_step: gradient length does not match parameter " +
                                  shape_str(p->shape));
    for (std::size_t i = 0; i < p->values.size(); ++i) p->values[i] -= lr * p->grad[i];
  }
}

double l1_penalty(std::span<const Tensor* const> params, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("l1 lambda must be nonnegative");
  if (lambda == 0.0) return 0.0;
  double s = 0.0;
  for (const Tensor* p : params)
    for (double w : p->values) s += std::abs(w);
  return lambda * s;
}

}  // namespace backdrop
