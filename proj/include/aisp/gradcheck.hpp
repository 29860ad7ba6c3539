#pragma once

// Central finite-difference checks of every differentiable operation.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aisp/graph.hpp"
#include "aisp/random.hpp"

namespace aisp {

inline constexpr double kGradcheckTolerance = 1e-4;
// Denominator floor of the relative error; gradients below it are compared
// absolutely.
inline constexpr double kGradcheckFloor = 1e-6;

struct GradcheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;  // number of coordinates compared
  bool passed() const { return max_rel_error < kGradcheckTolerance; }
};

// |a - n| / max(|a|, |n|, floor).
double gradcheck_relative_error(double analytic, double numeric);

// Builds a scalar from graph handles of `inputs`.
using ScalarFn = std::function<Var(Graph&, const std::vector<Var>&)>;

// Compares backward() against central differences on up to `per_input`
// randomly chosen coordinates of each input (all of them when smaller).
GradcheckResult check_gradient(const std::string& name, const ScalarFn& fn,
                               const std::vector<Tensor>& inputs, double eps, std::size_t per_input,
                               Rng& rng);

// Names accepted by run_gradchecks besides "all".
std::vector<std::string> gradcheck_scopes();

// Throws ConfigError for an unknown scope.
std::vector<GradcheckResult> run_gradchecks(const std::string& scope, std::uint64_t seed = 2024);

}  // namespace aisp
