#pragma once

#include <functional>
#include <string>
#include <vector>

#include "usrgr/autodiff.hpp"

namespace usrgr {
namespace gradcheck {

struct CheckResult {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Central finite differences (float64, perturbation h) of a rebuilt scalar
/// loss against the analytic gradients of the given leaves. Relative error is
/// ||analytic - numeric||_inf / max(1, ||numeric||_inf).
double fd_relative_error(const std::vector<ad::Var<double>>& leaves,
                         const std::function<ad::Var<double>()>& build_loss, double h = 1e-5);

/// The named finite-difference suites over every differentiable operation and
/// the full network graphs. `filter` selects checks whose name contains it.
std::vector<CheckResult> run_all(const std::string& filter = "");

}  // namespace gradcheck
}  // namespace usrgr
