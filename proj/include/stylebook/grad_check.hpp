#pragma once

#include "stylebook/autodiff.hpp"

#include <cstddef>
#include <functional>
#include <string>

namespace stylebook {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t entries_checked = 0;
  /// Parameters whose analytic gradient was identically zero.
  std::vector<std::string> zero_gradient;
};

/// Builds a scalar loss on a fresh tape; called repeatedly.
using LossFn = std::function<Var(Tape&)>;

/// Compares analytic gradients of `loss` with central finite differences.
///
/// Relative error per entry is |a - n| / max(|a| + |n|, 1e-6). At most
/// `max_entries_per_param` entries of each parameter are probed (evenly
/// strided); 0 probes everything.
GradCheckReport grad_check(const LossFn& loss, const ParameterList& params, double epsilon,
                           std::size_t max_entries_per_param = 0);

}  // namespace stylebook
