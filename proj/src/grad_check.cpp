#include "stylebook/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stylebook {

namespace {

double evaluate(const LossFn& loss) {
  Tape tape;
  return loss(tape).value()(0, 0);
}

}  // namespace

GradCheckReport grad_check(const LossFn& loss, const ParameterList& params, double epsilon,
                           std::size_t max_entries_per_param) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) throw std::invalid_argument("grad_check: epsilon outside [1e-7, 1e-3]");
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }

  GradCheckReport report;
  for (Parameter* p : params) {
    const Matrix analytic = p->grad;
    if (analytic.cwiseAbs().maxCoeff() == 0.0) report.zero_gradient.push_back(p->name);
    const auto n = static_cast<std::size_t>(p->value.size());
    const std::size_t stride =
        (max_entries_per_param == 0 || n <= max_entries_per_param) ? 1 : (n + max_entries_per_param - 1) / max_entries_per_param;
    for (std::size_t i = 0; i < n; i += stride) {
      double& x = p->value.data()[i];
      const double saved = x;
      x = saved + epsilon;
      const double up = evaluate(loss);
      x = saved - epsilon;
      const double down = evaluate(loss);
      x = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic.data()[i];
      const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-6);
      ++report.entries_checked;
      if (rel > report.max_relative_error || !std::isfinite(rel)) {
        report.max_relative_error = std::isfinite(rel) ? rel : INFINITY;
        report.worst_parameter = p->name;
      }
    }
  }
  return report;
}

}  // namespace stylebook
