#pragma once

#include "fmdiff/rng.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fmdiff {

/// Finite weighted sample set standing in for a probability measure.
class EmpiricalMeasure {
public:
  /// One sample per row. Weights, when given, must be non-negative and sum to 1 within 1e-12.
  explicit EmpiricalMeasure(Eigen::MatrixXd samples, std::optional<Eigen::VectorXd> weights = std::nullopt);

  const Eigen::MatrixXd& samples() const { return samples_; }
  const std::optional<Eigen::VectorXd>& explicit_weights() const { return weights_; }
  /// Weights with the uniform default filled in.
  Eigen::VectorXd weights() const;
  double weight(Eigen::Index i) const;

  Eigen::Index size() const { return samples_.rows(); }
  Eigen::Index dim() const { return samples_.cols(); }
  bool empty() const { return samples_.rows() == 0; }

  /// Column `c` as a contiguous vector.
  std::vector<double> coordinate(Eigen::Index c) const;
  /// Index drawn with probability proportional to the weights.
  Eigen::Index draw(Rng& rng) const;

private:
  Eigen::MatrixXd samples_;
  std::optional<Eigen::VectorXd> weights_;
  std::vector<double> cumulative_; // only for explicit weights
};

using PointMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Maps samples pointwise; weights carry over unchanged.
EmpiricalMeasure pushforward(const EmpiricalMeasure& mu, const PointMap& f);

/// A density evaluator. nullopt marks points where the density is undefined.
struct DensityFn {
  std::function<std::optional<double>(const Eigen::VectorXd&)> eval;
  std::optional<double> normalizer;

  std::optional<double> operator()(const Eigen::VectorXd& x) const { return eval(x); }
  std::optional<double> operator()(double x) const { return eval(Eigen::VectorXd::Constant(1, x)); }
};

DensityFn standard_normal_density(Eigen::Index dim = 1);
/// Uniform density on [lo, hi]^dim.
DensityFn uniform_density(double lo, double hi, Eigen::Index dim = 1);

/// Density of f_* mu at y: p(f^{-1}(y)) |det d f^{-1}_y|. Undefined wherever the
/// Jacobian determinant is not finite.
DensityFn change_of_variables_density(DensityFn p, PointMap f_inv, std::function<double(const Eigen::VectorXd&)> jac_det_f_inv);

/// Trapezoid rule over a sorted 1D grid. Nodes where the density is undefined count as 0.
double integrate_density_1d(const DensityFn& p, std::span<const double> grid);
/// Uniform grid on [lo, hi] with n intervals.
std::vector<double> uniform_grid(double lo, double hi, Eigen::Index n);
/// Grid y = h sign(s) |s|^power for s uniform on [-1, 1]: dense near 0.
std::vector<double> power_grid(double half_width, Eigen::Index n, double power);

struct LeftInverseReport {
  bool ok = false;
  double max_error = 0.0;  // largest pointwise |f_left_inv(f(x)) - x|
  Eigen::Index worst_index = -1;
  double distance = 0.0;   // largest per-coordinate W1 between recovered and original samples
};

/// Checks that f_left_inv undoes f on every sample (within `tolerance`), then
/// compares the recovered measure with the original.
LeftInverseReport verify_left_inverse(const EmpiricalMeasure& mu, const PointMap& f, const PointMap& f_left_inv,
                                      double tolerance = 0.0);

/// Size of a total observation: an H x W grid at each of P poses, stored as
/// one row of length P * H * W in (pose, row, column) order.
struct TotalGrid {
  Eigen::Index height = 0;
  Eigen::Index width = 0;
  Eigen::Index poses = 0;

  Eigen::Index size() const { return height * width * poses; }
  Eigen::Index index(Eigen::Index x, Eigen::Index y, Eigen::Index phi) const { return (phi * height + y) * width + x; }
};

/// g(x, y, phi, total observation).
using SliceFn = std::function<double(Eigen::Index, Eigen::Index, Eigen::Index, const Eigen::VectorXd&)>;

struct SliceIdentityResult {
  double lhs = 0.0;
  double lhs_stderr = 0.0;
  double rhs = 0.0;
  double rhs_stderr = 0.0;

  double combined_stderr() const;
  /// |lhs - rhs| in units of the combined standard error (0 when both are exact).
  double z() const;
};

/// LHS averages g over jointly random (x, y, phi, total); RHS averages, over
/// random (phi, total), the full-slice mean of g. Each uses n_mc draws.
SliceIdentityResult slice_identity_check(const SliceFn& g, const EmpiricalMeasure& mu_t, const TotalGrid& grid,
                                         Eigen::Index n_mc, Rng& rng);
/// Exact mean of g over every sample, pose and pixel.
double slice_identity_exact(const SliceFn& g, const EmpiricalMeasure& mu_t, const TotalGrid& grid);

enum class TwoSampleKind { energy, ks_per_coordinate, wasserstein1_1d };
std::string_view to_string(TwoSampleKind kind);
TwoSampleKind two_sample_kind_from_string(std::string_view name);

/// Energy distance over full vectors; the per-coordinate kinds return the
/// largest statistic over coordinates.
double two_sample_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b, TwoSampleKind kind);

/// One row of a property-suite report.
struct CheckResult {
  std::string name;
  double statistic = 0.0;
  double stderr_ = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

struct MeasureSuiteConfig {
  std::uint64_t seed = 0;
  Eigen::Index n_samples = 100000;  // pushforward and chi-square sample count
  Eigen::Index n_mc = 100000;       // slice identity draws
  double alpha = 0.01;
};

/// Every measure-theoretic check the library ships, without training.
std::vector<CheckResult> run_measure_suite(const MeasureSuiteConfig& config);

} // namespace fmdiff
