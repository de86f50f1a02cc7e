#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "backdrop/autodiff.hpp"

namespace backdrop::testing {

struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

using GraphBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

// Central differences over every element of every parameter. The relative
// error uses a 1e-6 floor in the denominator so exactly-zero gradients do not
// divide by zero.
inline GradCheck grad_check(std::vector<Tensor>& params, const GraphBuilder& build,
                            double eps = 1e-4) {
  std::vector<std::vector<double>> analytic;
  {
    Tape t;
    std::vector<Var> vars;
    for (auto& p : params) vars.push_back(t.parameter(p));
    t.backward(build(t, vars));
    for (Var v : vars) analytic.emplace_back(t.grad(v).begin(), t.grad(v).end());
  }
  auto value = [&] {
    Tape t;
    std::vector<Var> vars;
    for (auto& p : params) vars.push_back(t.parameter(p));
    return t.value(build(t, vars)).values[0];
  };
  GradCheck r;
  for (std::size_t i = 0; i < params.size(); ++i)
    for (std::size_t e = 0; e < params[i].numel(); ++e) {
      double& x = params[i].values[e];
      const double saved = x;
      x = saved + eps;
      const double fp = value();
      x = saved - eps;
      const double fm = value();
      x = saved;
      const double num = (fp - fm) / (2 * eps);
      const double a = analytic[i][e];
      const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-6});
      r.max_rel = std::max(r.max_rel, rel);
      ++r.checked;
    }
  return r;
}

}  // namespace backdrop::testing
