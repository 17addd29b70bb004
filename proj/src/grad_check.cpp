#include "fls/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "fls/rng.hpp"
#include "fls/tensor_ops.hpp"

namespace fls {

namespace {

FeatureMapD random_map(Rng& rng, int h, int w, int c, double lo, double hi) {
  FeatureMapD m(h, w, c);
  for (auto& v : m.storage()) v = rng.uniform(lo, hi);
  return m;
}

ConvKernelD random_kernel(Rng& rng, int out_c, int in_c, int k, int stride, int padding) {
  ConvKernelD kernel = ConvKernelD::zeros(out_c, in_c, k, stride, padding, true);
  for (auto& v : kernel.weights) v = rng.uniform(-1.0, 1.0);
  for (auto& v : *kernel.bias) v = rng.uniform(-0.5, 0.5);
  return kernel;
}

double projected_loss(const FeatureMapD& out, const FeatureMapD& projection) {
  double total = 0.0;
  const auto a = out.data();
  const auto p = projection.data();
  for (std::size_t i = 0; i < a.size(); ++i) total += a[i] * p[i];
  return total;
}

GradCheckCase activation_case(Activation a, std::uint64_t seed, double range) {
  Rng rng(seed);
  return {DifferentiableOp{std::string(to_string(a)),
                           [a](const FeatureMapD& x) { return apply_activation(x, a); },
                           [a](const FeatureMapD& x, const FeatureMapD& g) {
                             return activation_input_grad(x, a, g);
                           }},
          random_map(rng, 6, 6, 2, -range, range)};
}

GradCheckCase conv_case(std::string name, std::uint64_t seed, int size, int stride, int padding) {
  Rng rng(seed);
  FeatureMapD input = random_map(rng, size, size, 2, -1.0, 1.0);
  ConvKernelD kernel = random_kernel(rng, 3, 2, 3, stride, padding);
  return {DifferentiableOp{std::move(name),
                           [kernel](const FeatureMapD& x) { return conv2d(x, kernel); },
                           [kernel](const FeatureMapD& x, const FeatureMapD& g) {
                             return conv2d_input_grad(x, kernel, g);
                           }},
          std::move(input)};
}

}  // namespace

double grad_check(const DifferentiableOp& op, const FeatureMapD& input,
                  const GradCheckOptions& options) {
  const FeatureMapD reference = op.forward(input);
  FeatureMapD projection(reference.height(), reference.width(), reference.channels(), 1.0);
  if (!options.unit_projection) {
    Rng rng(options.seed);
    for (auto& v : projection.storage()) v = rng.uniform(-1.0, 1.0);
  }
  const FeatureMapD analytic = op.input_grad(input, projection);
  if (!analytic.same_shape(input)) {
    throw ConfigError("grad_check: gradient of " + op.name + " has shape " +
                      analytic.shape_string() + ", input is " + input.shape_string());
  }

  double worst = 0.0;
  FeatureMapD probe = input;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double x0 = input.storage()[i];
    probe.storage()[i] = x0 + options.epsilon;
    const double up = projected_loss(op.forward(probe), projection);
    probe.storage()[i] = x0 - options.epsilon;
    const double down = projected_loss(op.forward(probe), projection);
    probe.storage()[i] = x0;
    const double numeric = (up - down) / (2.0 * options.epsilon);
    const double a = analytic.storage()[i];
    worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
  }
  return worst;
}

GradCheckCase conv2d_case(std::uint64_t seed) { return conv_case("conv2d", seed, 8, 1, 0); }

GradCheckCase softplus_case(std::uint64_t seed) {
  return activation_case(Activation::SoftPlus, seed, 4.0);
}

GradCheckCase spatial_softmax_case(std::uint64_t seed) {
  Rng rng(seed);
  return {DifferentiableOp{"spatial_softmax",
                           [](const FeatureMapD& x) { return spatial_softmax(x); },
                           [](const FeatureMapD& x, const FeatureMapD& g) {
                             return spatial_softmax_input_grad(x, g);
                           }},
          random_map(rng, 5, 5, 1, -2.0, 2.0)};
}

GradCheckCase l2_normalize_case(std::uint64_t seed) {
  Rng rng(seed);
  return {DifferentiableOp{"l2_normalize",
                           [](const FeatureMapD& x) { return l2_normalize_locations(x); },
                           [](const FeatureMapD& x, const FeatureMapD& g) {
                             return l2_normalize_input_grad(x, g);
                           }},
          random_map(rng, 4, 4, 3, -1.0, 1.0)};
}

std::vector<GradCheckCase> extra_cases(std::uint64_t seed) {
  std::vector<GradCheckCase> cases;
  cases.push_back(activation_case(Activation::ELU, seed, 3.0));
  cases.push_back(activation_case(Activation::Tanh, seed + 1, 3.0));
  cases.push_back(activation_case(Activation::SoftPlus2, seed + 2, 4.0));
  cases.push_back(conv_case("conv2d_strided_padded", seed + 3, 9, 2, 1));
  return cases;
}

std::vector<GradCheckResult> run_grad_check_suite(std::uint64_t seed, double epsilon,
                                                  double tolerance, int instances) {
  using Factory = GradCheckCase (*)(std::uint64_t);
  const Factory core[] = {conv2d_case, softplus_case, spatial_softmax_case, l2_normalize_case};

  std::vector<GradCheckResult> results;
  auto record = [&](const std::string& name, double err) {
    auto it = std::find_if(results.begin(), results.end(),
                           [&](const GradCheckResult& r) { return r.name == name; });
    if (it == results.end()) {
      results.push_back({name, err, false});
    } else {
      it->max_relative_error = std::max(it->max_relative_error, err);
    }
  };

  Rng seeds(seed);
  for (int n = 0; n < instances; ++n) {
    for (Factory make : core) {
      const std::uint64_t s = seeds.next();
      GradCheckCase c = make(s);
      record(c.op.name, grad_check(c.op, c.input, {epsilon, s ^ 0x5bd1e995ULL, false}));
    }
    const std::uint64_t s = seeds.next();
    for (GradCheckCase& c : extra_cases(s)) {
      record(c.op.name, grad_check(c.op, c.input, {epsilon, s ^ 0x5bd1e995ULL, false}));
    }
  }
  for (auto& r : results) r.passed = r.max_relative_error < tolerance;
  return results;
}

}  // namespace fls
