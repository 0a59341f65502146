#pragma once

#include "fmdiff/rng.hpp"
#include "fmdiff/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace fmdiff {

using TapedFn = std::function<Tensor(std::span<const Tensor>)>;

struct GradCheckOptions {
  double h = 1e-5;
  double rel_tol = 1e-5;
  /// Elements whose reverse-mode and finite-difference values differ by at most this pass outright.
  double abs_tol = 1e-8;
  /// Also check the Jacobian row of every output coordinate, not only a random projection.
  bool all_outputs = false;
};

struct GradCheckResult {
  std::string name;
  int points = 0;
  double max_rel_error = 0.0; // over elements large enough for the relative bound to matter
  double max_abs_error = 0.0;
  bool pass = true;

  void merge(const GradCheckResult& other);
};

/// Compares reverse-mode gradients of <r, f(inputs)> for a random r against
/// central differences, at one point.
GradCheckResult check_gradient(const std::string& name, const TapedFn& f, const std::vector<Tensor>& inputs, Rng& rng,
                               const GradCheckOptions& options = {});

/// Every primitive tensor op at `points` random inputs each.
std::vector<GradCheckResult> op_gradient_suite(std::uint64_t seed, int points = 10, double rel_tol = 1e-5);

/// Every forward model, differentiated with respect to the signal.
std::vector<GradCheckResult> model_gradient_suite(std::uint64_t seed, int points = 10, double rel_tol = 1e-4);

} // namespace fmdiff
