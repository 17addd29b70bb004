#include "fls/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace fls {

namespace {

void require(bool cond, const std::string& message) {
  if (!cond) throw ConfigError(message);
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename T>
void require_same_shape(const BasicFeatureMap<T>& a, const BasicFeatureMap<T>& b,
                        const char* op) {
  require(a.same_shape(b), std::string(op) + ": shape mismatch " + a.shape_string() +
                               " vs " + b.shape_string());
}

}  // namespace

template <typename T>
void BasicConvKernel<T>::validate() const {
  require(kernel_h > 0 && kernel_w > 0, "conv kernel size must be positive");
  require(in_channels > 0 && out_channels > 0, "conv channel counts must be positive");
  require(stride >= 1, "conv stride must be >= 1");
  require(padding >= 0, "conv padding must be non-negative");
  require(weights.size() == weight_count(),
          "conv weights length " + std::to_string(weights.size()) + " != expected " +
              std::to_string(weight_count()));
  if (bias) {
    require(bias->size() == static_cast<std::size_t>(out_channels),
            "conv bias length " + std::to_string(bias->size()) + " != out_channels " +
                std::to_string(out_channels));
  }
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::ELU: return "elu";
    case Activation::Tanh: return "tanh";
    case Activation::SoftPlus: return "softplus";
    case Activation::SoftPlus2: return "softplus2";
    case Activation::Identity: return "identity";
  }
  return "unknown";
}

int conv_output_size(int size, int kernel, int stride, int padding) {
  const int span = size + 2 * padding - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

int transposed_output_size(int size, int kernel, int stride, int padding) {
  return (size - 1) * stride + kernel - 2 * padding;
}

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double softplus2(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp2(x) / std::numbers::ln2;
  return std::log1p(std::exp2(x)) / std::numbers::ln2;
}

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }

double apply_activation(double x, Activation a) {
  switch (a) {
    case Activation::ReLU: return x > 0.0 ? x : 0.0;
    case Activation::ELU: return elu(x);
    case Activation::Tanh: return std::tanh(x);
    case Activation::SoftPlus: return softplus(x);
    case Activation::SoftPlus2: return softplus2(x);
    case Activation::Identity: return x;
  }
  return x;
}

double activation_derivative(double x, Activation a) {
  switch (a) {
    case Activation::ReLU: return x > 0.0 ? 1.0 : 0.0;
    case Activation::ELU: return x > 0.0 ? 1.0 : std::exp(x);
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::SoftPlus: return sigmoid(x);
    case Activation::SoftPlus2: return sigmoid(x * std::numbers::ln2);
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

template <typename T>
BasicFeatureMap<T> conv2d(const BasicFeatureMap<T>& input, const BasicConvKernel<T>& kernel) {
  kernel.validate();
  require(input.channels() == kernel.in_channels,
          "conv2d: input has " + std::to_string(input.channels()) +
              " channels, kernel expects " + std::to_string(kernel.in_channels));
  const int out_h = conv_output_size(input.height(), kernel.kernel_h, kernel.stride, kernel.padding);
  const int out_w = conv_output_size(input.width(), kernel.kernel_w, kernel.stride, kernel.padding);
  require(out_h >= 1 && out_w >= 1,
          "conv2d: non-positive output size for input " + input.shape_string());

  const int cin = kernel.in_channels;
  const int cout = kernel.out_channels;
  const int kh = kernel.kernel_h;
  const int kw = kernel.kernel_w;

  // Repack to (ky, kx, ci, co) so the innermost loop runs over output channels.
  std::vector<double> packed(kernel.weight_count());
  for (int co = 0; co < cout; ++co)
    for (int ci = 0; ci < cin; ++ci)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx)
          packed[((static_cast<std::size_t>(ky) * kw + kx) * cin + ci) * cout + co] =
              static_cast<double>(kernel.w(co, ci, ky, kx));

  BasicFeatureMap<T> out(out_h, out_w, cout);
  std::vector<double> acc(static_cast<std::size_t>(cout));
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      if (kernel.bias) {
        for (int co = 0; co < cout; ++co) acc[co] = static_cast<double>((*kernel.bias)[co]);
      } else {
        std::fill(acc.begin(), acc.end(), 0.0);
      }
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * kernel.stride + ky - kernel.padding;
        if (iy < 0 || iy >= input.height()) continue;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ox * kernel.stride + kx - kernel.padding;
          if (ix < 0 || ix >= input.width()) continue;
          const T* x = &input.at(iy, ix, 0);
          const double* wk = &packed[(static_cast<std::size_t>(ky) * kw + kx) * cin * cout];
          for (int ci = 0; ci < cin; ++ci) {
            const double xv = static_cast<double>(x[ci]);
            const double* wrow = wk + static_cast<std::size_t>(ci) * cout;
            for (int co = 0; co < cout; ++co) acc[co] += xv * wrow[co];
          }
        }
      }
      T* o = &out.at(oy, ox, 0);
      for (int co = 0; co < cout; ++co) o[co] = static_cast<T>(acc[co]);
    }
  }
  return out;
}

template <typename T>
BasicFeatureMap<T> transposed_conv2d(const BasicFeatureMap<T>& input,
                                     const BasicConvKernel<T>& kernel,
                                     std::optional<Extent> output) {
  kernel.validate();
  require(input.channels() == kernel.out_channels,
          "transposed_conv2d: input has " + std::to_string(input.channels()) +
              " channels, kernel produces " + std::to_string(kernel.out_channels));
  Extent ext;
  if (output) {
    ext = *output;
  } else {
    ext.height = transposed_output_size(input.height(), kernel.kernel_h, kernel.stride, kernel.padding);
    ext.width = transposed_output_size(input.width(), kernel.kernel_w, kernel.stride, kernel.padding);
  }
  require(ext.height >= 1 && ext.width >= 1,
          "transposed_conv2d: non-positive output size " + std::to_string(ext.height) + "x" +
              std::to_string(ext.width));

  const int cin = kernel.in_channels;
  const int cout = kernel.out_channels;
  std::vector<double> acc(static_cast<std::size_t>(ext.height) * ext.width * cin, 0.0);
  for (int y = 0; y < input.height(); ++y) {
    for (int x = 0; x < input.width(); ++x) {
      for (int ky = 0; ky < kernel.kernel_h; ++ky) {
        const int oy = y * kernel.stride + ky - kernel.padding;
        if (oy < 0 || oy >= ext.height) continue;
        for (int kx = 0; kx < kernel.kernel_w; ++kx) {
          const int ox = x * kernel.stride + kx - kernel.padding;
          if (ox < 0 || ox >= ext.width) continue;
          double* o = &acc[(static_cast<std::size_t>(oy) * ext.width + ox) * cin];
          for (int co = 0; co < cout; ++co) {
            const double g = static_cast<double>(input.at(y, x, co));
            if (g == 0.0) continue;
            for (int ci = 0; ci < cin; ++ci) {
              o[ci] += g * static_cast<double>(kernel.w(co, ci, ky, kx));
            }
          }
        }
      }
    }
  }
  BasicFeatureMap<T> out(ext.height, ext.width, cin);
  for (std::size_t i = 0; i < acc.size(); ++i) out.storage()[i] = static_cast<T>(acc[i]);
  return out;
}

template <typename T>
BasicFeatureMap<T> apply_activation(const BasicFeatureMap<T>& input, Activation a) {
  BasicFeatureMap<T> out = input;
  if (a == Activation::Identity) return out;
  for (auto& v : out.storage()) v = static_cast<T>(apply_activation(static_cast<double>(v), a));
  return out;
}

template <typename T>
BasicFeatureMap<T> spatial_softmax(const BasicFeatureMap<T>& input) {
  BasicFeatureMap<T> out(input.height(), input.width(), input.channels());
  const std::size_t cells = static_cast<std::size_t>(input.height()) * input.width();
  const int channels = input.channels();
  const auto src = input.data();
  auto dst = out.data();
  std::vector<double> e(cells);
  for (int c = 0; c < channels; ++c) {
    double peak = -INFINITY;
    for (std::size_t i = 0; i < cells; ++i)
      peak = std::max(peak, static_cast<double>(src[i * channels + c]));
    double total = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
      e[i] = std::exp(static_cast<double>(src[i * channels + c]) - peak);
      total += e[i];
    }
    for (std::size_t i = 0; i < cells; ++i) dst[i * channels + c] = static_cast<T>(e[i] / total);
  }
  return out;
}

template <typename T>
BasicFeatureMap<T> sum_pool_channels(const BasicFeatureMap<T>& input) {
  BasicFeatureMap<T> out(input.height(), input.width(), 1);
  for (int h = 0; h < input.height(); ++h) {
    for (int w = 0; w < input.width(); ++w) {
      double s = 0.0;
      for (int c = 0; c < input.channels(); ++c) s += static_cast<double>(input.at(h, w, c));
      out.at(h, w, 0) = static_cast<T>(s);
    }
  }
  return out;
}

template <typename T>
std::vector<T> spatial_sum_pool(const BasicFeatureMap<T>& input) {
  std::vector<double> acc(static_cast<std::size_t>(input.channels()), 0.0);
  const int channels = input.channels();
  const auto src = input.data();
  for (std::size_t i = 0; i < src.size(); ++i) acc[i % channels] += static_cast<double>(src[i]);
  return std::vector<T>(acc.begin(), acc.end());
}

template <typename T>
BasicFeatureMap<T> l2_normalize_locations(const BasicFeatureMap<T>& input) {
  BasicFeatureMap<T> out = input;
  const int channels = input.channels();
  auto dst = out.data();
  for (std::size_t base = 0; base < dst.size(); base += channels) {
    double sq = 0.0;
    for (int c = 0; c < channels; ++c) sq += static_cast<double>(dst[base + c]) * dst[base + c];
    if (sq == 0.0) continue;
    const double norm = std::sqrt(sq);
    for (int c = 0; c < channels; ++c)
      dst[base + c] = static_cast<T>(static_cast<double>(dst[base + c]) / norm);
  }
  return out;
}

template <typename T>
BasicFeatureMap<T> broadcast_multiply(const BasicFeatureMap<T>& features,
                                      const BasicFeatureMap<T>& attention) {
  require(attention.channels() == 1, "broadcast_multiply: attention must have one channel");
  require(features.extent() == attention.extent(),
          "broadcast_multiply: extent mismatch " + features.shape_string() + " vs " +
              attention.shape_string());
  BasicFeatureMap<T> out = features;
  const int channels = features.channels();
  auto dst = out.data();
  const auto a = attention.data();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (int c = 0; c < channels; ++c) dst[i * channels + c] *= a[i];
  return out;
}

template <typename T>
BasicFeatureMap<T> normalize_sum(const BasicFeatureMap<T>& input) {
  double total = 0.0;
  for (T v : input.data()) total += static_cast<double>(v);
  BasicFeatureMap<T> out = input;
  if (total == 0.0) return out;
  for (auto& v : out.storage()) v = static_cast<T>(static_cast<double>(v) / total);
  return out;
}

template <typename T>
BasicFeatureMap<T> resize_bilinear(const BasicFeatureMap<T>& input, int height, int width) {
  BasicFeatureMap<T> out(height, width, input.channels());
  struct Tap {
    int lo;
    int hi;
    double t;
  };
  auto taps = [](int in, int n) {
    std::vector<Tap> result(static_cast<std::size_t>(n));
    const double scale = static_cast<double>(in) / n;
    for (int i = 0; i < n; ++i) {
      double src = (i + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const int lo = static_cast<int>(std::floor(src));
      const int hi = std::min(lo + 1, in - 1);
      result[i] = {lo, hi, src - lo};
    }
    return result;
  };
  const auto ry = taps(input.height(), height);
  const auto rx = taps(input.width(), width);
  for (int y = 0; y < height; ++y) {
    const Tap& ty = ry[y];
    for (int x = 0; x < width; ++x) {
      const Tap& tx = rx[x];
      for (int c = 0; c < input.channels(); ++c) {
        const double a = input.at(ty.lo, tx.lo, c);
        const double b = input.at(ty.lo, tx.hi, c);
        const double d = input.at(ty.hi, tx.lo, c);
        const double e = input.at(ty.hi, tx.hi, c);
        const double top = a + tx.t * (b - a);
        const double bottom = d + tx.t * (e - d);
        out.at(y, x, c) = static_cast<T>(top + ty.t * (bottom - top));
      }
    }
  }
  return out;
}

std::vector<float> linear(std::span<const float> input, const Matrix& weights,
                          std::optional<std::span<const float>> bias) {
  require(input.size() == static_cast<std::size_t>(weights.cols),
          "linear: input length " + std::to_string(input.size()) + " != weight columns " +
              std::to_string(weights.cols));
  require(weights.data.size() == static_cast<std::size_t>(weights.rows) * weights.cols,
          "linear: weight matrix storage does not match its dimensions");
  if (bias) {
    require(bias->size() == static_cast<std::size_t>(weights.rows),
            "linear: bias length " + std::to_string(bias->size()) + " != weight rows " +
                std::to_string(weights.rows));
  }
  std::vector<float> out(static_cast<std::size_t>(weights.rows));
  for (int r = 0; r < weights.rows; ++r) {
    double acc = bias ? static_cast<double>((*bias)[r]) : 0.0;
    const float* row = &weights.data[static_cast<std::size_t>(r) * weights.cols];
    for (int c = 0; c < weights.cols; ++c) acc += static_cast<double>(row[c]) * input[c];
    out[r] = static_cast<float>(acc);
  }
  return out;
}

template <typename T>
BasicFeatureMap<T> conv2d_input_grad(const BasicFeatureMap<T>& input,
                                     const BasicConvKernel<T>& kernel,
                                     const BasicFeatureMap<T>& grad_output) {
  return transposed_conv2d(grad_output, kernel, input.extent());
}

template <typename T>
BasicFeatureMap<T> activation_input_grad(const BasicFeatureMap<T>& input, Activation a,
                                         const BasicFeatureMap<T>& grad_output) {
  require_same_shape(input, grad_output, "activation_input_grad");
  BasicFeatureMap<T> out = grad_output;
  const auto x = input.data();
  auto g = out.data();
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = static_cast<T>(static_cast<double>(g[i]) *
                          activation_derivative(static_cast<double>(x[i]), a));
  return out;
}

template <typename T>
BasicFeatureMap<T> spatial_softmax_input_grad(const BasicFeatureMap<T>& input,
                                              const BasicFeatureMap<T>& grad_output) {
  require_same_shape(input, grad_output, "spatial_softmax_input_grad");
  const BasicFeatureMap<T> s = spatial_softmax(input);
  BasicFeatureMap<T> out(input.height(), input.width(), input.channels());
  const int channels = input.channels();
  const std::size_t cells = static_cast<std::size_t>(input.height()) * input.width();
  const auto sv = s.data();
  const auto g = grad_output.data();
  auto dst = out.data();
  for (int c = 0; c < channels; ++c) {
    double dot = 0.0;
    for (std::size_t i = 0; i < cells; ++i)
      dot += static_cast<double>(sv[i * channels + c]) * static_cast<double>(g[i * channels + c]);
    for (std::size_t i = 0; i < cells; ++i) {
      const std::size_t k = i * channels + c;
      dst[k] = static_cast<T>(static_cast<double>(sv[k]) * (static_cast<double>(g[k]) - dot));
    }
  }
  return out;
}

template <typename T>
BasicFeatureMap<T> l2_normalize_input_grad(const BasicFeatureMap<T>& input,
                                           const BasicFeatureMap<T>& grad_output) {
  require_same_shape(input, grad_output, "l2_normalize_input_grad");
  BasicFeatureMap<T> out = grad_output;
  const int channels = input.channels();
  const auto x = input.data();
  auto g = out.data();
  for (std::size_t base = 0; base < x.size(); base += channels) {
    double sq = 0.0;
    for (int c = 0; c < channels; ++c) sq += static_cast<double>(x[base + c]) * x[base + c];
    if (sq == 0.0) continue;
    const double norm = std::sqrt(sq);
    double dot = 0.0;
    for (int c = 0; c < channels; ++c) dot += static_cast<double>(x[base + c]) / norm * g[base + c];
    for (int c = 0; c < channels; ++c) {
      const double y = static_cast<double>(x[base + c]) / norm;
      g[base + c] = static_cast<T>((static_cast<double>(g[base + c]) - y * dot) / norm);
    }
  }
  return out;
}

template <typename T>
bool all_finite(std::span<const T> values) {
  return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

#define FLS_INSTANTIATE(T)                                                                     \
  template struct BasicConvKernel<T>;                                                          \
  template BasicFeatureMap<T> conv2d(const BasicFeatureMap<T>&, const BasicConvKernel<T>&);    \
  template BasicFeatureMap<T> transposed_conv2d(const BasicFeatureMap<T>&,                     \
                                                const BasicConvKernel<T>&, std::optional<Extent>); \
  template BasicFeatureMap<T> apply_activation(const BasicFeatureMap<T>&, Activation);         \
  template BasicFeatureMap<T> spatial_softmax(const BasicFeatureMap<T>&);                      \
  template BasicFeatureMap<T> sum_pool_channels(const BasicFeatureMap<T>&);                    \
  template std::vector<T> spatial_sum_pool(const BasicFeatureMap<T>&);                         \
  template BasicFeatureMap<T> l2_normalize_locations(const BasicFeatureMap<T>&);               \
  template BasicFeatureMap<T> broadcast_multiply(const BasicFeatureMap<T>&,                    \
                                                 const BasicFeatureMap<T>&);                   \
  template BasicFeatureMap<T> normalize_sum(const BasicFeatureMap<T>&);                        \
  template BasicFeatureMap<T> resize_bilinear(const BasicFeatureMap<T>&, int, int);            \
  template BasicFeatureMap<T> conv2d_input_grad(const BasicFeatureMap<T>&,                     \
                                                const BasicConvKernel<T>&,                     \
                                                const BasicFeatureMap<T>&);                    \
  template BasicFeatureMap<T> activation_input_grad(const BasicFeatureMap<T>&, Activation,     \
                                                    const BasicFeatureMap<T>&);                \
  template BasicFeatureMap<T> spatial_softmax_input_grad(const BasicFeatureMap<T>&,            \
                                                         const BasicFeatureMap<T>&);           \
  template BasicFeatureMap<T> l2_normalize_input_grad(const BasicFeatureMap<T>&,               \
                                                      const BasicFeatureMap<T>&);              \
  template bool all_finite(std::span<const T>);

FLS_INSTANTIATE(float)
FLS_INSTANTIATE(double)

#undef FLS_INSTANTIATE

}  // namespace fls
