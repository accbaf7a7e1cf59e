#include "mome/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "mome/error.hpp"

namespace mome {

namespace {

double eval_scalar(const std::function<Var(Graph&)>& f) {
  Graph g;
  Var loss = f(g);
  double v = g.value(loss).item();
  if (!std::isfinite(v)) {
    throw Error("grad_check: objective evaluated to a non-finite value");
  }
  return v;
}

}  // namespace

double grad_check(const std::function<Var(Graph&)>& f,
                  const std::vector<Tensor*>& params, double h) {
  Graph g;
  Var loss = f(g);
  if (!std::isfinite(g.value(loss).item())) {
    throw Error("grad_check: objective evaluated to a non-finite value");
  }
  g.backward(loss);

  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const Tensor* p : params) analytic.push_back(g.grad_of(*p));

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    for (std::size_t i = 0; i < p.size(); ++i) {
      double orig = p.data[i];
      p.data[i] = orig + h;
      double fp = eval_scalar(f);
      p.data[i] = orig - h;
      double fm = eval_scalar(f);
      p.data[i] = orig;
      double fd = (fp - fm) / (2.0 * h);
      double err = std::fabs(analytic[pi].data[i] - fd) /
                   std::max(1.0, std::fabs(fd));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace mome
