#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fls/feature_map.hpp"

namespace fls {

/// An operation with an analytic vector-Jacobian product, evaluated in double.
struct DifferentiableOp {
  std::string name;
  std::function<FeatureMapD(const FeatureMapD&)> forward;
  /// (input, dL/d(output)) -> dL/d(input)
  std::function<FeatureMapD(const FeatureMapD&, const FeatureMapD&)> input_grad;
};

struct GradCheckOptions {
  double epsilon = 1e-3;
  /// Seeds the projection L = sum(p_i * out_i). With `unit_projection` the
  /// plain sum of outputs is used instead.
  std::uint64_t seed = 0;
  bool unit_projection = false;
};

/// max over input coordinates of |analytic - central difference| / max(1, |analytic|)
double grad_check(const DifferentiableOp& op, const FeatureMapD& input,
                  const GradCheckOptions& options = {});

/// The tensor-core ops that carry analytic input gradients, with fixed random
/// parameters drawn from `seed`.
struct GradCheckCase {
  DifferentiableOp op;
  FeatureMapD input;
};

/// conv2d on an 8x8x2 input with a 3x3 kernel.
GradCheckCase conv2d_case(std::uint64_t seed);
GradCheckCase softplus_case(std::uint64_t seed);
GradCheckCase spatial_softmax_case(std::uint64_t seed);
GradCheckCase l2_normalize_case(std::uint64_t seed);
/// ELU, Tanh, SoftPlus2 and a strided padded conv, for broader coverage.
std::vector<GradCheckCase> extra_cases(std::uint64_t seed);

struct GradCheckResult {
  std::string name;
  double max_relative_error = 0.0;
  bool passed = false;
};

/// Runs `instances` random instances of every op and reports the worst error per op.
std::vector<GradCheckResult> run_grad_check_suite(std::uint64_t seed, double epsilon,
                                                  double tolerance, int instances);

}  // namespace fls
