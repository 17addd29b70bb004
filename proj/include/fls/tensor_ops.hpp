#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fls/feature_map.hpp"

namespace fls {

/// Square-stride convolution kernel. Weights are laid out as
/// (out_channels, in_channels, kernel_h, kernel_w); padding is symmetric.
template <typename T>
struct BasicConvKernel {
  int kernel_h = 1;
  int kernel_w = 1;
  int in_channels = 1;
  int out_channels = 1;
  int stride = 1;
  int padding = 0;
  std::vector<T> weights;
  std::optional<std::vector<T>> bias;

  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel_h * kernel_w;
  }

  T& w(int co, int ci, int ky, int kx) {
    return weights[((static_cast<std::size_t>(co) * in_channels + ci) * kernel_h + ky) * kernel_w + kx];
  }
  const T& w(int co, int ci, int ky, int kx) const {
    return weights[((static_cast<std::size_t>(co) * in_channels + ci) * kernel_h + ky) * kernel_w + kx];
  }

  /// Kernel of the given geometry with zero weights (and zero bias when requested).
  static BasicConvKernel zeros(int out_channels, int in_channels, int kernel, int stride,
                               int padding, bool with_bias) {
    BasicConvKernel k;
    k.kernel_h = kernel;
    k.kernel_w = kernel;
    k.in_channels = in_channels;
    k.out_channels = out_channels;
    k.stride = stride;
    k.padding = padding;
    k.weights.assign(k.weight_count(), T{0});
    if (with_bias) k.bias = std::vector<T>(static_cast<std::size_t>(out_channels), T{0});
    return k;
  }

  /// Throws ConfigError if the fields are inconsistent.
  void validate() const;
};

using ConvKernel = BasicConvKernel<float>;
using ConvKernelD = BasicConvKernel<double>;

enum class Activation { ReLU, ELU, Tanh, SoftPlus, SoftPlus2, Identity };

std::string_view to_string(Activation a);

/// floor((size + 2p - k) / s) + 1, or a non-positive value if the window does not fit.
int conv_output_size(int size, int kernel, int stride, int padding);

/// (size - 1) * s + k - 2p
int transposed_output_size(int size, int kernel, int stride, int padding);

// Scalar activations, evaluated in double.
double softplus(double x);
double softplus2(double x);
double elu(double x);
double apply_activation(double x, Activation a);
/// d/dx of the activation at x.
double activation_derivative(double x, Activation a);

/// Cross-correlation with zero padding. Accumulates in double.
template <typename T>
BasicFeatureMap<T> conv2d(const BasicFeatureMap<T>& input, const BasicConvKernel<T>& kernel);

/// Adjoint of conv2d (bias is not applied). The input carries kernel.out_channels
/// channels and the result kernel.in_channels. When `output` is given the result
/// is cropped or zero-extended to that extent; otherwise it is
/// (H - 1) * s + k - 2p on each axis.
template <typename T>
BasicFeatureMap<T> transposed_conv2d(const BasicFeatureMap<T>& input,
                                     const BasicConvKernel<T>& kernel,
                                     std::optional<Extent> output = std::nullopt);

template <typename T>
BasicFeatureMap<T> apply_activation(const BasicFeatureMap<T>& input, Activation a);

/// Softmax over all H x W positions, independently per channel.
template <typename T>
BasicFeatureMap<T> spatial_softmax(const BasicFeatureMap<T>& input);

/// H x W x C -> H x W x 1 by summing channels.
template <typename T>
BasicFeatureMap<T> sum_pool_channels(const BasicFeatureMap<T>& input);

/// Per-channel sum over all spatial positions.
template <typename T>
std::vector<T> spatial_sum_pool(const BasicFeatureMap<T>& input);

/// Divides each location's channel vector by its Euclidean norm. Zero vectors are left as is.
template <typename T>
BasicFeatureMap<T> l2_normalize_locations(const BasicFeatureMap<T>& input);

/// Multiplies every channel of `features` by a single-channel `attention` map
/// of the same spatial extent.
template <typename T>
BasicFeatureMap<T> broadcast_multiply(const BasicFeatureMap<T>& features,
                                      const BasicFeatureMap<T>& attention);

/// Divides every value by the total sum (no-op if the sum is zero).
template <typename T>
BasicFeatureMap<T> normalize_sum(const BasicFeatureMap<T>& input);

/// Bilinear resampling with half-pixel-centre alignment, per channel.
template <typename T>
BasicFeatureMap<T> resize_bilinear(const BasicFeatureMap<T>& input, int height, int width);

/// Dense row-major matrix (rows = outputs, cols = inputs).
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  float& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  static Matrix zeros(int rows, int cols) {
    return Matrix{rows, cols, std::vector<float>(static_cast<std::size_t>(rows) * cols, 0.f)};
  }
  static Matrix identity(int n) {
    Matrix m = zeros(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.f;
    return m;
  }
};

/// y = W x (+ b).
std::vector<float> linear(std::span<const float> input, const Matrix& weights,
                          std::optional<std::span<const float>> bias = std::nullopt);

// Vector-Jacobian products: given dL/d(output), return dL/d(input).

template <typename T>
BasicFeatureMap<T> conv2d_input_grad(const BasicFeatureMap<T>& input,
                                     const BasicConvKernel<T>& kernel,
                                     const BasicFeatureMap<T>& grad_output);

template <typename T>
BasicFeatureMap<T> activation_input_grad(const BasicFeatureMap<T>& input, Activation a,
                                         const BasicFeatureMap<T>& grad_output);

template <typename T>
BasicFeatureMap<T> spatial_softmax_input_grad(const BasicFeatureMap<T>& input,
                                              const BasicFeatureMap<T>& grad_output);

template <typename T>
BasicFeatureMap<T> l2_normalize_input_grad(const BasicFeatureMap<T>& input,
                                           const BasicFeatureMap<T>& grad_output);

/// True if every value is finite.
template <typename T>
bool all_finite(std::span<const T> values);

}  // namespace fls
