#include "fls/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fls/rng.hpp"

namespace fls {

namespace {

struct ConvShape {
  ConvLayerSpec spec;
  int in_channels;
};

std::vector<ConvLayerSpec> attention_layers(const AttentionConfig& a) {
  switch (a.kind) {
    case AttentionKind::FLS: return {{256, 3, 1, 1}, {1, 3, 1, 1}};
    case AttentionKind::FLS1x1: return {{256, 1, 1, 0}, {1, 1, 1, 0}};
    case AttentionKind::RS: return {{512, 1, 1, 0}, {2, 1, 1, 0}};
    case AttentionKind::DAQN: return {{a.daqn_width, 1, 1, 0}, {1, 1, 1, 0}};
    case AttentionKind::Mousavi: return {{64, 1, 1, 0}};
  }
  return {};
}

std::string block_conv_name(int index) { return "block.conv" + std::to_string(index + 1); }

std::string attention_conv_name(int tap, int index) {
  return "attention." + tap_tag(tap) + ".conv" + std::to_string(index + 1);
}

std::int64_t conv_params(const ConvLayerSpec& s, int in_channels) {
  return static_cast<std::int64_t>(s.out_channels) * in_channels * s.kernel * s.kernel +
         s.out_channels;
}

std::string shape_of(int size, int channels) {
  return std::to_string(size) + "x" + std::to_string(size) + "x" + std::to_string(channels);
}

bool is_fls(AttentionKind k) { return k == AttentionKind::FLS || k == AttentionKind::FLS1x1; }

/// Everything the model is made of, in canonical parameter order.
struct Layout {
  std::vector<ConvShape> block;
  std::vector<std::pair<int, std::vector<ConvShape>>> modules;  // (tap, convs)
  int readout_width = 0;
  std::vector<LayerSummary> summary;
};

Layout propagate(const ModelConfig& config) {
  config.validate();
  Layout layout;
  const auto taps = config.attention_taps();
  const auto layers = block_layers(config.block);

  int size = config.input_size + (config.pad_input_1px ? 2 : 0);
  int channels = config.input_channels;
  int index = 1;  // 1-based position in the layer table
  auto fail = [&](const std::string& name, int in_size) {
    throw ConfigError("layer " + std::to_string(index) + " (" + name + "): input " +
                      shape_of(in_size, channels) + " gives a non-positive output size");
  };

  for (std::size_t i = 0; i < layers.size(); ++i, ++index) {
    const auto& spec = layers[i];
    const int out = conv_output_size(size, spec.kernel, spec.stride, spec.padding);
    if (out < 1) fail(block_conv_name(static_cast<int>(i)), size);
    layout.block.push_back({spec, channels});
    layout.summary.push_back({block_conv_name(static_cast<int>(i)),
                              shape_of(out, spec.out_channels),
                              conv_params(spec, channels)});
    size = out;
    channels = spec.out_channels;

    const int tap = static_cast<int>(i) + 1;
    if (std::find(taps.begin(), taps.end(), tap) == taps.end()) continue;
    std::vector<ConvShape> convs;
    int a_size = size;
    int a_channels = channels;
    const auto a_layers = attention_layers(*config.attention);
    for (std::size_t j = 0; j < a_layers.size(); ++j) {
      ++index;
      const auto& a = a_layers[j];
      const std::string name = attention_conv_name(tap, static_cast<int>(j));
      const int out_a = conv_output_size(a_size, a.kernel, a.stride, a.padding);
      if (out_a < 1) fail(name, a_size);
      convs.push_back({a, a_channels});
      layout.summary.push_back({name, shape_of(out_a, a.out_channels), conv_params(a, a_channels)});
      a_size = out_a;
      a_channels = a.out_channels;
    }
    if (a_size != size) {
      throw ConfigError("layer " + std::to_string(index) + " (" + attention_conv_name(tap, 0) +
                        "): attention map " + std::to_string(a_size) +
                        " does not match features " + std::to_string(size));
    }
    layout.modules.emplace_back(tap, std::move(convs));
  }

  ++index;
  layout.readout_width =
      config.readout == Readout::Flatten ? size * size * channels : channels;
  layout.summary.push_back({config.readout == Readout::Flatten ? "readout.flatten"
                                                               : "readout.spatial_sum_pool",
                            std::to_string(layout.readout_width), 0});
  auto dense = [&](const std::string& name, int in, int out) {
    layout.summary.push_back({name, std::to_string(out),
                              static_cast<std::int64_t>(in) * out + out});
  };
  dense("fc", layout.readout_width, config.fc_width);
  dense("policy", config.fc_width, config.num_actions);
  dense("value", config.fc_width, 1);
  return layout;
}

ConvKernel make_kernel(const ConvShape& s) {
  return ConvKernel::zeros(s.spec.out_channels, s.in_channels, s.spec.kernel, s.spec.stride,
                           s.spec.padding, true);
}

DenseLayer make_dense(int in, int out) { return {Matrix::zeros(out, in), std::vector<float>(out, 0.f)}; }

}  // namespace

std::vector<ConvLayerSpec> block_layers(BlockKind kind) {
  if (kind == BlockKind::Sparse) return {{32, 8, 4, 0}, {64, 4, 2, 0}, {64, 3, 1, 0}};
  return {{32, 7, 1, 3}, {64, 5, 1, 2}, {64, 3, 1, 1}};
}

void ModelConfig::validate() const {
  if (num_actions < 1) throw ConfigError("num_actions must be >= 1, got " + std::to_string(num_actions));
  if (fc_width < 1) throw ConfigError("fc_width must be >= 1");
  if (input_size < 1 || input_channels < 1) throw ConfigError("input shape must be positive");
  if (!attention) {
    if (placement != Placement::AfterBlock)
      throw ConfigError("attention placement '" + std::string(to_string(placement)) +
                        "' requires an attention module");
    return;
  }
  if (attention->kind == AttentionKind::DAQN && attention->daqn_width < 1)
    throw ConfigError("DAQN width must be >= 1");
  if (attention->terminal != Activation::SoftPlus) {
    if (!is_fls(attention->kind))
      throw ConfigError("terminal activation override only applies to FLS modules");
    if (attention->terminal != Activation::SoftPlus2)
      throw ConfigError("FLS terminal activation must be softplus or softplus2");
  }
}

std::vector<int> ModelConfig::attention_taps() const {
  if (!attention) return {};
  const int depth = static_cast<int>(block_layers(block).size());
  switch (placement) {
    case Placement::AfterBlock: return {depth};
    case Placement::AfterFirstConv: return {1};
    case Placement::AfterEachConv: {
      std::vector<int> taps(static_cast<std::size_t>(depth));
      std::iota(taps.begin(), taps.end(), 1);
      return taps;
    }
  }
  return {};
}

std::string_view to_string(BlockKind k) { return k == BlockKind::Sparse ? "sparse" : "dense"; }

std::string_view to_string(AttentionKind k) {
  switch (k) {
    case AttentionKind::FLS: return "fls";
    case AttentionKind::FLS1x1: return "fls-1x1";
    case AttentionKind::RS: return "rs";
    case AttentionKind::DAQN: return "daqn";
    case AttentionKind::Mousavi: return "mousavi";
  }
  return "unknown";
}

std::string_view to_string(Placement p) {
  switch (p) {
    case Placement::AfterBlock: return "after-block";
    case Placement::AfterFirstConv: return "after-first-conv";
    case Placement::AfterEachConv: return "after-each-conv";
  }
  return "unknown";
}

std::string_view to_string(Readout r) { return r == Readout::Flatten ? "flatten" : "sum-pool"; }

std::optional<BlockKind> parse_block(std::string_view s) {
  if (s == "sparse") return BlockKind::Sparse;
  if (s == "dense") return BlockKind::Dense;
  return std::nullopt;
}

std::optional<AttentionKind> parse_attention(std::string_view s) {
  for (auto k : {AttentionKind::FLS, AttentionKind::FLS1x1, AttentionKind::RS, AttentionKind::DAQN,
                 AttentionKind::Mousavi})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

std::optional<Placement> parse_placement(std::string_view s) {
  for (auto p : {Placement::AfterBlock, Placement::AfterFirstConv, Placement::AfterEachConv})
    if (s == to_string(p)) return p;
  return std::nullopt;
}

std::optional<Readout> parse_readout(std::string_view s) {
  if (s == "flatten") return Readout::Flatten;
  if (s == "sum-pool") return Readout::SpatialSumPool;
  return std::nullopt;
}

std::string tap_tag(int tap) { return "after_conv" + std::to_string(tap); }

const std::vector<Preset>& presets() {
  static const std::vector<Preset> table = [] {
    auto fls = [](AttentionConfig a = {}) { return std::optional<AttentionConfig>(a); };
    std::vector<Preset> p;
    ModelConfig c;

    p.push_back({"nature-cnn", "Nature CNN", c});

    c = {};
    c.attention = AttentionConfig{AttentionKind::DAQN, 256};
    c.readout = Readout::SpatialSumPool;
    p.push_back({"daqn", "DAQN", c});

    c = {};
    c.attention = AttentionConfig{AttentionKind::RS};
    c.pad_input_1px = true;
    c.l2_norm_features = true;
    p.push_back({"rs-ppo", "RS-PPO", c});

    c = {};
    c.attention = fls();
    p.push_back({"sparse-fls", "Sparse FLS", c});

    c.readout = Readout::SpatialSumPool;
    p.push_back({"sparse-fls-sum-pool", "Sparse FLS + sum-pooling", c});

    c.block = BlockKind::Dense;
    p.push_back({"dense-fls-sum-pool", "Dense FLS + sum-pooling", c});

    c = {};
    c.attention = fls();
    c.placement = Placement::AfterFirstConv;
    p.push_back({"sparse-fls-after-first-conv", "Sparse + FLS after first conv layer", c});

    c.placement = Placement::AfterEachConv;
    p.push_back({"sparse-fls-after-each-conv", "Sparse + FLS after each conv layer", c});

    c = {};
    c.attention = AttentionConfig{AttentionKind::Mousavi};
    p.push_back({"mousavi", "Mousavi attention", c});

    c = {};
    c.attention = fls({AttentionKind::FLS, 256, Activation::SoftPlus2});
    p.push_back({"sparse-fls-softplus2", "Sparse FLS w/ SoftPlus2", c});

    c = {};
    c.attention = fls({AttentionKind::FLS, 256, Activation::SoftPlus, true});
    p.push_back({"sparse-fls-normalized", "Sparse FLS w/ output normalization", c});

    c = {};
    c.attention = fls({AttentionKind::FLS1x1});
    p.push_back({"sparse-fls-1x1", "Sparse FLS w/ 1x1 convs", c});

    c = {};
    c.attention = fls({AttentionKind::FLS, 256, Activation::SoftPlus, false, false});
    p.push_back({"sparse-fls-no-final-relu", "Sparse FLS w/o final ReLU", c});

    c.readout = Readout::SpatialSumPool;
    p.push_back({"sparse-fls-no-final-relu-sum-pool", "Sparse FLS w/o final ReLU + sum-pooling", c});

    c.block = BlockKind::Dense;
    p.push_back({"dense-fls-no-final-relu-sum-pool", "Dense FLS w/o final ReLU + sum-pooling", c});
    return p;
  }();
  return table;
}

std::optional<ModelConfig> find_preset(std::string_view name) {
  for (const auto& p : presets())
    if (p.name == name) return p.config;
  return std::nullopt;
}

std::vector<LayerSummary> describe(const ModelConfig& config) { return propagate(config).summary; }

std::int64_t count_params(const ModelConfig& config) {
  std::int64_t total = 0;
  for (const auto& row : describe(config)) total += row.params;
  return total;
}

Model zero_model(const ModelConfig& config) {
  const Layout layout = propagate(config);
  Model m;
  m.config_ = config;
  for (const auto& s : layout.block) m.block_.push_back(make_kernel(s));
  for (const auto& [tap, convs] : layout.modules) {
    AttentionModule module;
    module.tap = tap;
    module.config = *config.attention;
    for (const auto& s : convs) module.convs.push_back(make_kernel(s));
    m.modules_.push_back(std::move(module));
  }
  m.fc_ = make_dense(layout.readout_width, config.fc_width);
  m.policy_ = make_dense(config.fc_width, config.num_actions);
  m.value_ = make_dense(config.fc_width, 1);
  return m;
}

Model build_model(const ModelConfig& config, std::uint64_t rng_seed) {
  Model m = zero_model(config);
  Rng rng(rng_seed);
  for (auto& p : m.parameters()) {
    if (p.dims.size() < 2) continue;  // biases stay zero
    std::int64_t fan_in = 1;
    for (std::size_t d = 1; d < p.dims.size(); ++d) fan_in *= p.dims[d];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (float& v : p.values) v = static_cast<float>(rng.uniform(-bound, bound));
  }
  return m;
}

template <typename Self, typename Visitor>
void Model::visit_parameters(Self& self, Visitor&& visit) {
  auto conv = [&](const std::string& name, auto& k) {
    visit(name + ".weight", std::vector<int>{k.out_channels, k.in_channels, k.kernel_h, k.kernel_w},
          std::span(k.weights));
    visit(name + ".bias", std::vector<int>{k.out_channels}, std::span(*k.bias));
  };
  auto dense = [&](const std::string& name, auto& d) {
    visit(name + ".weight", std::vector<int>{d.weights.rows, d.weights.cols}, std::span(d.weights.data));
    visit(name + ".bias", std::vector<int>{d.weights.rows}, std::span(d.bias));
  };
  if (self.block_.empty()) return;
  for (std::size_t i = 0; i < self.block_.size(); ++i)
    conv(block_conv_name(static_cast<int>(i)), self.block_[i]);
  for (auto& module : self.modules_)
    for (std::size_t j = 0; j < module.convs.size(); ++j)
      conv(attention_conv_name(module.tap, static_cast<int>(j)), module.convs[j]);
  dense("fc", self.fc_);
  dense("policy", self.policy_);
  dense("value", self.value_);
}

std::vector<ParameterView> Model::parameters() {
  std::vector<ParameterView> out;
  visit_parameters(*this, [&](std::string name, std::vector<int> dims, std::span<float> values) {
    out.push_back({std::move(name), std::move(dims), values});
  });
  return out;
}

std::int64_t Model::parameter_count() const {
  std::int64_t total = 0;
  visit_parameters(*this, [&](const std::string&, const std::vector<int>&, std::span<const float> v) {
    total += static_cast<std::int64_t>(v.size());
  });
  return total;
}

void Model::check_weights() const {
  if (block_.empty()) throw EvalError("model has no weights loaded");
  visit_parameters(*this, [](const std::string& name, const std::vector<int>&, std::span<const float> v) {
    if (!all_finite<float>(v)) throw EvalError("parameter " + name + " contains non-finite values");
  });
}

AttentionMap Model::attend(const AttentionModule& module, const FeatureMap& features) {
  const AttentionConfig& a = module.config;
  FeatureMap x = conv2d(features, module.convs.at(0));
  AttentionMap out;
  switch (a.kind) {
    case AttentionKind::FLS:
    case AttentionKind::FLS1x1:
      x = apply_activation(x, Activation::ReLU);
      out = apply_activation(conv2d(x, module.convs.at(1)), a.terminal);
      break;
    case AttentionKind::RS: {
      x = apply_activation(x, Activation::ELU);
      x = spatial_softmax(conv2d(x, module.convs.at(1)));
      const float channels = static_cast<float>(x.channels());
      out = sum_pool_channels(x);
      for (float& v : out.storage()) v /= channels;
      break;
    }
    case AttentionKind::DAQN:
      x = apply_activation(x, Activation::Tanh);
      out = spatial_softmax(conv2d(x, module.convs.at(1)));
      break;
    case AttentionKind::Mousavi: {
      x = spatial_softmax(apply_activation(x, Activation::Tanh));
      const float channels = static_cast<float>(x.channels());
      out = sum_pool_channels(x);
      for (float& v : out.storage()) v /= channels;
      break;
    }
  }
  if (a.normalize_output) out = normalize_sum(out);
  return out;
}

ModelOutput Model::forward(const FeatureMap& observation) const {
  check_weights();
  if (observation.height() != config_.input_size || observation.width() != config_.input_size ||
      observation.channels() != config_.input_channels) {
    throw EvalError("observation shape " + observation.shape_string() + " does not match model input " +
                    shape_of(config_.input_size, config_.input_channels));
  }
  for (float v : observation.data()) {
    if (!(v >= 0.f && v <= 1.f)) throw EvalError("observation values must lie in [0, 1]");
  }

  ModelOutput result;
  FeatureMap x = config_.pad_input_1px ? pad_zero(observation, 1) : observation;
  const int depth = static_cast<int>(block_.size());
  for (int i = 0; i < depth; ++i) {
    const int tap = i + 1;
    const AttentionModule* module = nullptr;
    for (const auto& m : modules_)
      if (m.tap == tap) module = &m;

    x = conv2d(x, block_[i]);
    if (!module || module->config.pre_relu) x = apply_activation(x, Activation::ReLU);
    if (tap == depth) {
      if (config_.l2_norm_features) x = l2_normalize_locations(x);
      result.features = x;
    }
    if (module) {
      AttentionMap a = attend(*module, x);
      x = broadcast_multiply(x, a);
      result.attention_maps.push_back({tap, tap_tag(tap), std::move(a)});
    }
  }

  std::vector<float> pooled = config_.readout == Readout::Flatten ? x.storage() : spatial_sum_pool(x);
  std::vector<float> hidden = linear(pooled, fc_.weights, std::span<const float>(fc_.bias));
  for (float& v : hidden) v = v > 0.f ? v : 0.f;
  result.policy_logits = linear(hidden, policy_.weights, std::span<const float>(policy_.bias));
  result.value = linear(hidden, value_.weights, std::span<const float>(value_.bias)).at(0);
  result.embedding = std::move(hidden);
  return result;
}

FeatureMap pad_zero(const FeatureMap& input, int pad) {
  FeatureMap out(input.height() + 2 * pad, input.width() + 2 * pad, input.channels());
  for (int h = 0; h < input.height(); ++h)
    for (int w = 0; w < input.width(); ++w)
      for (int c = 0; c < input.channels(); ++c) out.at(h + pad, w + pad, c) = input.at(h, w, c);
  return out;
}

}  // namespace fls
