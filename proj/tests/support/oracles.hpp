#pragma once

// Randomized gradient-oracle scenarios shared by the unit tests and the
// acceptance runner.

#include <random>

#include "gradcheck.hpp"

namespace backdrop::testing {

inline Tensor random_tensor(const Shape& s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(s);
  std::uniform_real_distribution<double> d(lo, hi);
  for (double& v : t.values) v = d(rng);
  return t;
}

// Keeps values away from the kinks of |w| and ReLU.
inline void push_off_zero(Tensor& t, double margin) {
  for (double& v : t.values)
    if (std::abs(v) < margin) v = v < 0 ? -margin : margin;
}

inline GradCheck oracle_conv2d(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t cin = 1 + rng() % 3, cout = 1 + rng() % 3, k = 1 + rng() % 3;
  const std::size_t stride = 1 + rng() % 2, pad = rng() % 2;
  const std::size_t h = k + 2 + rng() % 4, w = k + 2 + rng() % 4;
  std::vector<Tensor> p = {random_tensor({cin, h, w}, rng), random_tensor({cout, cin, k, k}, rng)};
  Tensor head = random_tensor({cout, 3}, rng), bias = random_tensor({3}, rng);
  const std::size_t label = rng() % 3;
  return grad_check(p, [&](Tape& t, const std::vector<Var>& v) {
    Var y = t.conv2d(v[0], v[1], stride, pad);
    Var z = t.dense(t.global_avg_pool(y), t.constant(head), t.constant(bias));
    return t.softmax_cross_entropy(z, label);
  });
}

inline GradCheck oracle_dense(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t k = 1 + rng() % 6, n = 2 + rng() % 5;
  std::vector<Tensor> p = {random_tensor({k}, rng), random_tensor({k, n}, rng), random_tensor({n}, rng)};
  const std::size_t label = rng() % n;
  return grad_check(p, [&](Tape& t, const std::vector<Var>& v) {
    return t.softmax_cross_entropy(t.dense(v[0], v[1], v[2]), label);
  });
}

inline GradCheck oracle_relu_composite(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (;;) {
    const std::size_t cin = 1 + rng() % 2, c1 = 2 + rng() % 2, c2 = 2 + rng() % 3;
    std::vector<Tensor> p = {random_tensor({cin, 7, 7}, rng), random_tensor({c1, cin, 3, 3}, rng),
                             random_tensor({c1}, rng, -0.2, 0.2), random_tensor({c2, c1, 3, 3}, rng),
                             random_tensor({c2, 3}, rng), random_tensor({3}, rng)};
    const std::size_t label = rng() % 3;
    auto build = [&](Tape& t, const std::vector<Var>& v) {
      Var a = t.relu(t.channel_bias(t.conv2d(v[0], v[1], 2, 1), v[2]));
      Var b = t.relu(t.conv2d(a, v[3], 1, 1));
      return t.softmax_cross_entropy(t.dense(t.global_avg_pool(b), v[4], v[5]), label);
    };
    // Redraw when a pre-activation sits close enough to zero for the
    // finite difference to straddle the kink.
    Tape t;
    std::vector<Var> v;
    for (auto& x : p) v.push_back(t.constant(x));
    Var pre1 = t.channel_bias(t.conv2d(v[0], v[1], 2, 1), v[2]);
    Var pre2 = t.conv2d(t.relu(pre1), v[3], 1, 1);
    bool near = false;
    for (Var z : {pre1, pre2})
      for (double x : t.value(z).values) near |= std::abs(x) < 1e-2;
    if (near) continue;
    return grad_check(p, build);
  }
}

inline GradCheck oracle_softmax_ce(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t n = 2 + rng() % 8;
  std::vector<Tensor> p = {random_tensor({n}, rng, -5.0, 5.0)};
  const std::size_t label = rng() % n;
  return grad_check(p, [&](Tape& t, const std::vector<Var>& v) {
    return t.softmax_cross_entropy(v[0], label);
  });
}

inline GradCheck oracle_l1(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t k = 2 + rng() % 4;
  std::vector<Tensor> p = {random_tensor({k}, rng), random_tensor({k, 3}, rng), random_tensor({3}, rng)};
  push_off_zero(p[1], 1e-2);
  push_off_zero(p[2], 1e-2);
  const double lambda = std::uniform_real_distribution<double>(0.001, 0.5)(rng);
  const std::size_t label = rng() % 3;
  return grad_check(p, [&](Tape& t, const std::vector<Var>& v) {
    Var ce = t.softmax_cross_entropy(t.dense(v[0], v[1], v[2]), label);
    const std::vector<Var> ws = {v[1], v[2]};
    return t.add(ce, t.l1_penalty(ws, lambda));
  });
}

}  // namespace backdrop::testing
