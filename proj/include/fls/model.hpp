#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fls/feature_map.hpp"
#include "fls/tensor_ops.hpp"

namespace fls {

enum class BlockKind { Sparse, Dense };

struct ConvLayerSpec {
  int out_channels;
  int kernel;
  int stride;
  int padding;
};

/// The three conv layers of a block; each is followed by a ReLU.
std::vector<ConvLayerSpec> block_layers(BlockKind kind);

enum class AttentionKind { FLS, FLS1x1, RS, DAQN, Mousavi };

struct AttentionConfig {
  AttentionKind kind = AttentionKind::FLS;
  /// Hidden width N of the DAQN module.
  int daqn_width = 256;
  /// Terminal activation of the FLS variants (SoftPlus or SoftPlus2).
  Activation terminal = Activation::SoftPlus;
  /// Divide the attention map by its total.
  bool normalize_output = false;
  /// Keep the ReLU of the conv layer the module reads from.
  bool pre_relu = true;

  friend bool operator==(const AttentionConfig&, const AttentionConfig&) = default;
};

enum class Placement { AfterBlock, AfterFirstConv, AfterEachConv };
enum class Readout { Flatten, SpatialSumPool };

struct ModelConfig {
  BlockKind block = BlockKind::Sparse;
  std::optional<AttentionConfig> attention;
  Placement placement = Placement::AfterBlock;
  Readout readout = Readout::Flatten;
  bool pad_input_1px = false;
  bool l2_norm_features = false;
  int fc_width = 512;
  int num_actions = 4;
  int input_size = 84;
  int input_channels = 4;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;

  /// Conv depths (1-based, counted from the input) after which an attention
  /// module reads. Empty without attention.
  std::vector<int> attention_taps() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

std::string_view to_string(BlockKind);
std::string_view to_string(AttentionKind);
std::string_view to_string(Placement);
std::string_view to_string(Readout);
std::optional<BlockKind> parse_block(std::string_view);
std::optional<AttentionKind> parse_attention(std::string_view);
std::optional<Placement> parse_placement(std::string_view);
std::optional<Readout> parse_readout(std::string_view);

/// Tag used for an attention map read after conv layer `tap`.
std::string tap_tag(int tap);

struct Preset {
  std::string name;   // kebab-case identifier
  std::string label;  // human-readable row label
  ModelConfig config;
};

const std::vector<Preset>& presets();
std::optional<ModelConfig> find_preset(std::string_view name);

/// Shape and size of one parameterised layer.
struct LayerSummary {
  std::string name;
  std::string output_shape;
  std::int64_t params = 0;
};

/// Symbolic shape propagation over the whole network. Throws ConfigError
/// naming the failing layer index when a shape does not fit.
std::vector<LayerSummary> describe(const ModelConfig& config);

/// Exact number of weights and biases, including policy and value heads.
std::int64_t count_params(const ModelConfig& config);

struct DenseLayer {
  Matrix weights;
  std::vector<float> bias;
};

struct AttentionModule {
  int tap = 0;
  AttentionConfig config;
  std::vector<ConvKernel> convs;
};

/// Mutable view of one named parameter tensor.
struct ParameterView {
  std::string name;
  std::vector<int> dims;
  std::span<float> values;
};

struct TaggedAttention {
  int tap = 0;
  std::string tag;
  AttentionMap map;
};

struct ModelOutput {
  /// Block output (after the optional L2 norm), before attention gating.
  FeatureMap features;
  std::vector<TaggedAttention> attention_maps;
  std::vector<float> embedding;
  std::vector<float> policy_logits;
  float value = 0.f;
};

class Model {
 public:
  Model() = default;

  const ModelConfig& config() const { return config_; }
  const std::vector<ConvKernel>& block() const { return block_; }
  const std::vector<AttentionModule>& attention_modules() const { return modules_; }

  /// Every parameter in canonical order (block, attention, fc, policy, value).
  std::vector<ParameterView> parameters();
  std::int64_t parameter_count() const;

  /// Throws EvalError if the model has no weights or any weight is non-finite.
  void check_weights() const;

  /// Runs the network on an input_size x input_size x input_channels
  /// observation with values in [0, 1].
  ModelOutput forward(const FeatureMap& observation) const;

  /// Attention map of a single module applied to `features`.
  static AttentionMap attend(const AttentionModule& module, const FeatureMap& features);

 private:
  template <typename Self, typename Visitor>
  static void visit_parameters(Self& self, Visitor&& visit);

  friend Model build_model(const ModelConfig&, std::uint64_t);
  friend Model zero_model(const ModelConfig&);

  ModelConfig config_;
  std::vector<ConvKernel> block_;
  std::vector<AttentionModule> modules_;
  DenseLayer fc_;
  DenseLayer policy_;
  DenseLayer value_;
};

/// Instantiates `config` with weights uniform in +-sqrt(6 / fan_in) drawn from
/// `rng_seed` and zero biases.
Model build_model(const ModelConfig& config, std::uint64_t rng_seed);

/// Instantiates `config` with every parameter zero.
Model zero_model(const ModelConfig& config);

/// Zero-pads every side of `input` by `pad` cells.
FeatureMap pad_zero(const FeatureMap& input, int pad);

}  // namespace fls
