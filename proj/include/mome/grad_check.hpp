#pragma once

#include <functional>
#include <vector>

#include "mome/graph.hpp"

namespace mome {

// Compares reverse-mode gradients against central finite differences.
//
// `f` must build the scalar objective on the given graph using the current
// contents of `params` (registering them via Graph::param so gradients can
// be read back). It is re-invoked on a fresh graph for every perturbed
// evaluation, so it must be deterministic.
//
// Returns the max over all parameter entries of
//   |autodiff - central_difference| / max(1, |central_difference|).
double grad_check(const std::function<Var(Graph&)>& f,
                  const std::vector<Tensor*>& params, double h = 1e-5);

}  // namespace mome
