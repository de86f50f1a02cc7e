#include "backdrop/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace backdrop {

Var Tape::push(Tensor value, std::function<void(Tape&, std::size_t)> backprop) {
  Node n;
  n.owned = std::move(value);
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::val(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.owned;
}

const Tensor& Tape::value(Var v) const { return val(v.id); }

std::span<const double> Tape::grad(Var v) const { return nodes_.at(v.id).grad; }

Var Tape::parameter(Tensor& p) {
  Node n;
  n.external = &p;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor t) { return push(std::move(t), nullptr); }

Var Tape::conv2d(Var input, Var kernel, std::size_t stride, std::size_t padding) {
  const Tensor& x = val(input.id);
  const Tensor& k = val(kernel.id);
  if (x.rank() != 3 || k.rank() != 4 || k.shape[1] != x.shape[0])
    throw std::invalid_argument("conv2d: input shape " + shape_str(x.shape) +
                                " incompatible with kernel shape " + shape_str(k.shape));
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  kernels::ConvGeometry geo{x.shape[0], x.shape[1], x.shape[2], k.shape[0],
                            k.shape[2], k.shape[3], stride, padding};
  if (geo.kernel_h > geo.in_h + 2 * padding || geo.kernel_w > geo.in_w + 2 * padding)
    throw std::invalid_argument("conv2d: kernel shape " + shape_str(k.shape) +
                                " exceeds padded input shape " + shape_str(x.shape));
  Tensor out({geo.out_channels, geo.out_h(), geo.out_w()});
  kernels::omp::conv2d_forward(geo, x.values, k.values, out.values);
  const std::size_t in_id = input.id, k_id = kernel.id;
  return push(std::move(out), [geo, in_id, k_id](Tape& t, std::size_t self) {
    const auto& go = t.g(self);
    kernels::omp::conv2d_backward_input(geo, t.val(k_id).values, go, t.g(in_id));
    kernels::omp::conv2d_backward_kernel(geo, t.val(in_id).values, go, t.g(k_id));
  });
}

Var Tape::channel_bias(Var x, Var b) {
  const Tensor& xv = val(x.id);
  const Tensor& bv = val(b.id);
  if (xv.rank() != 3 || bv.rank() != 1 || bv.shape[0] != xv.shape[0])
    throw std::invalid_argument("channel_bias: input shape " + shape_str(xv.shape) +
                                " incompatible with bias shape " + shape_str(bv.shape));
  const std::size_t c = xv.shape[0], hw = xv.shape[1] * xv.shape[2];
  Tensor out = xv;
  out.grad.clear();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < hw; ++i) out.values[ch * hw + i] += bv.values[ch];
  const std::size_t xi = x.id, bi = b.id;
  return push(std::move(out), [xi, bi, c, hw](Tape& t, std::size_t self) {
    const auto& go = t.g(self);
    auto& gx = t.g(xi);
    auto& gb = t.g(bi);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < hw; ++i) {
        gx[ch * hw + i] += go[ch * hw + i];
        gb[ch] += go[ch * hw + i];
      }
  });
}

Var Tape::relu(Var x) {
  const Tensor& in = val(x.id);
  Tensor out(in.shape);
  for (std::size_t i = 0; i < in.numel(); ++i) out.values[i] = in.values[i] > 0.0 ? in.values[i] : 0.0;
  const std::size_t in_id = x.id;
  return push(std::move(out), [in_id](Tape& t, std::size_t self) {
    const auto& xs = t.val(in_id).values;
    const auto& go = t.g(self);
    auto& gi = t.g(in_id);
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (xs[i] > 0.0) gi[i] += go[i];
  });
}

Var Tape::global_avg_pool(Var x) {
  const Tensor& in = val(x.id);
  if (in.rank() != 3)
    throw std::invalid_argument("global_avg_pool: expected [C,H,W], got " + shape_str(in.shape));
  const std::size_t c = in.shape[0], hw = in.shape[1] * in.shape[2];
  Tensor out({c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += in.values[ch * hw + i];
    out.values[ch] = s / static_cast<double>(hw);
  }
  const std::size_t in_id = x.id;
  return push(std::move(out), [in_id, c, hw](Tape& t, std::size_t self) {
    const auto& go = t.g(self);
    auto& gi = t.g(in_id);
    const double inv = 1.0 / static_cast<double>(hw);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < hw; ++i) gi[ch * hw + i] += go[ch] * inv;
  });
}

Var Tape::dense(Var x, Var w, Var b) {
  const Tensor& xv = val(x.id);
  const Tensor& wv = val(w.id);
  const Tensor& bv = val(b.id);
  if (xv.rank() != 1 || wv.rank() != 2 || bv.rank() != 1 || wv.shape[0] != xv.shape[0] ||
      wv.shape[1] != bv.shape[0])
    throw std::invalid_argument("dense: input " + shape_str(xv.shape) + ", weight " +
                                shape_str(wv.shape) + ", bias " + shape_str(bv.shape) +
                                " are inconsistent");
  Tensor out({wv.shape[1]});
  kernels::omp::dense_forward(xv.values, wv.values, bv.values, out.values);
  const std::size_t xi = x.id, wi = w.id, bi = b.id;
  return push(std::move(out), [xi, wi, bi](Tape& t, std::size_t self) {
    kernels::omp::dense_backward(t.val(xi).values, t.val(wi).values, t.g(self), t.g(xi), t.g(wi),
                                 t.g(bi));
  });
}

Var Tape::softmax_cross_entropy(Var logits, std::size_t label) {
  const Tensor& z = val(logits.id);
  if (z.rank() != 1) throw std::invalid_argument("softmax_cross_entropy: logits must be 1-D");
  if (label >= z.numel())
    throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) +
                                " out of range for " + std::to_string(z.numel()) + " classes");
  const double m = *std::max_element(z.values.begin(), z.values.end());
  std::vector<double> p(z.numel());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += (p[i] = std::exp(z.values[i] - m));
  for (double& v : p) v /= sum;
  const double loss = std::log(sum) + m - z.values[label];
  const std::size_t zi = logits.id;
  return push(Tensor({1}, {loss}), [zi, label, p = std::move(p)](Tape& t, std::size_t self) {
    const double go = t.g(self)[0];
    auto& gz = t.g(zi);
    for (std::size_t i = 0; i < p.size(); ++i) gz[i] += go * (p[i] - (i == label ? 1.0 : 0.0));
  });
}

Var Tape::l1_penalty(std::span<const Var> params, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("l1_penalty: lambda must be nonnegative");
  double s = 0.0;
  for (Var v : params)
    for (double w : val(v.id).values) s += std::abs(w);
  std::vector<std::size_t> ids;
  ids.reserve(params.size());
  for (Var v : params) ids.push_back(v.id);
  return push(Tensor({1}, {lambda * s}), [ids = std::move(ids), lambda](Tape& t, std::size_t self) {
    const double go = t.g(self)[0] * lambda;
    if (go == 0.0) return;
    for (std::size_t id : ids) {
      const auto& w = t.val(id).values;
      auto& gw = t.g(id);
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] > 0.0) gw[i] += go;
        else if (w[i] < 0.0) gw[i] -= go;
      }
    }
  });
}

Var Tape::scaled_sum(std::span<const Var> scalars, double scale) {
  double s = 0.0;
  std::vector<std::size_t> ids;
  for (Var v : scalars) {
    const Tensor& t = val(v.id);
    if (t.numel() != 1) throw std::invalid_argument("scaled_sum: operands must be scalars");
    s += t.values[0];
    ids.push_back(v.id);
  }
  return push(Tensor({1}, {s * scale}), [ids = std::move(ids), scale](Tape& t, std::size_t self) {
    const double go = t.g(self)[0] * scale;
    for (std::size_t id : ids) t.g(id)[0] += go;
  });
}

Var Tape::add(Var a, Var b) {
  const Tensor& av = val(a.id);
  const Tensor& bv = val(b.id);
  if (av.shape != bv.shape)
    throw std::invalid_argument("add: shapes " + shape_str(av.shape) + " and " +
                                shape_str(bv.shape) + " differ");
  Tensor out(av.shape);
  for (std::size_t i = 0; i < av.numel(); ++i) out.values[i] = av.values[i] + bv.values[i];
  const std::size_t ai = a.id, bi = b.id;
  return push(std::move(out), [ai, bi](Tape& t, std::size_t self) {
    const auto& go = t.g(self);
    auto& ga = t.g(ai);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    auto& gb = t.g(bi);
    for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
  });
}

std::size_t Tape::backward(Var root) {
  if (root.id >= nodes_.size()) throw std::out_of_range("backward: unknown root");
  if (val(root.id).numel() != 1) throw std::invalid_argument("backward: root must be a scalar");
  for (auto& n : nodes_) n.grad.assign(n.external ? n.external->numel() : n.owned.numel(), 0.0);
  nodes_[root.id].grad[0] = 1.0;
  std::size_t visited = 0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    ++visited;
    if (i <= root.id && nodes_[i].backprop) nodes_[i].backprop(*this, i);
  }
  for (auto& n : nodes_) {
    if (!n.external) continue;
    if (!n.external->has_grad()) n.external->zero_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) n.external->grad[i] += n.grad[i];
  }
  return visited;
}

}  // namespace backdrop
