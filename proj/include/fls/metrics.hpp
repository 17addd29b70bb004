#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fls/feature_map.hpp"
#include "fls/preprocess.hpp"

namespace fls {

/// Why a metric has no value for a frame.
enum class Undefined : std::uint8_t { None, ZeroVariance, NoFixations, NoNegatives };

std::string_view to_string(Undefined reason);
std::optional<Undefined> parse_undefined(std::string_view token);

struct MetricResult {
  std::optional<double> value;
  Undefined reason = Undefined::None;

  static MetricResult of(double v) { return {v, Undefined::None}; }
  static MetricResult undefined(Undefined why) { return {std::nullopt, why}; }
  bool defined() const { return value.has_value(); }

  friend bool operator==(const MetricResult&, const MetricResult&) = default;
};

struct FrameScore {
  std::string recording;
  std::int64_t frame = 0;
  MetricResult nss;
  MetricResult kl;
  MetricResult sauc;

  friend bool operator==(const FrameScore&, const FrameScore&) = default;
};

struct BlurParams {
  double sigma = 5.0;
  int radius = 15;  // ceil(3 sigma)

  static BlurParams with_sigma(double sigma);
};

/// Normalized scanpath saliency: the saliency map standardised to zero mean and
/// unit population deviation, averaged with fixation counts as weights.
MetricResult nss(const FeatureMap& saliency, const FixationMap& fixations);

/// Separable Gaussian blur, truncated at `radius` and normalised, with
/// edge-repeating reflection at the borders. Operates per channel.
FeatureMapD gaussian_blur(const FeatureMapD& map, const BlurParams& params = {});

/// Additive smoothing applied to both distributions before normalisation.
inline constexpr double kKlEpsilon = 1e-9;

/// sum p log(p / q) for two distributions given cell by cell.
double kl_between(std::span<const double> p, std::span<const double> q);

/// KL(blurred fixations || saliency). Each map is normalised to sum 1, then
/// kKlEpsilon is added to every cell and the result renormalised.
MetricResult kl_divergence(const FeatureMap& saliency, const FixationMap& fixations,
                           const BlurParams& params = {});

struct SaucOptions {
  /// Cap on the number of negatives; 0 uses all of them.
  std::size_t max_negatives = 0;
  std::uint64_t rng_seed = 0;
};

/// Mann-Whitney AUC of saliency at fixated pixels against pixels in
/// `negatives` (nonzero entries) that are not fixated in `positives`.
/// Ties count one half.
MetricResult shuffled_auc_masked(const FeatureMap& saliency, const FixationMap& positives,
                                 std::span<const std::uint8_t> negatives,
                                 const SaucOptions& options = {});

/// Negatives are every pixel fixated in any map of `negative_pool`.
MetricResult shuffled_auc(const FeatureMap& saliency, const FixationMap& positives,
                          std::span<const FixationMap> negative_pool,
                          const SaucOptions& options = {});

/// Per-pixel count of pool frames with at least one fixation there.
class FixationPool {
 public:
  FixationPool(int width, int height);
  void add(const FixationMap& map);
  /// Pixels fixated in some pool frame but not in `own`.
  std::vector<std::uint8_t> negatives_for(const FixationMap& own) const;

 private:
  int width_;
  int height_;
  std::vector<std::uint32_t> frames_;
};

struct SummaryRow {
  std::string metric;
  std::optional<double> mean;
  std::optional<double> std;
  std::size_t frames = 0;      // defined frames across all recordings
  std::size_t recordings = 0;  // recordings with at least one defined frame
};

/// Per-recording means of the defined frames, then the mean and population
/// standard deviation of those means across recordings. One row per metric
/// (nss, kl, sauc); a metric with no defined frames has no mean and count 0.
std::vector<SummaryRow> aggregate(std::span<const FrameScore> scores);

/// Shortest round-trip decimal form of `v`.
std::string format_real(double v);

/// frame,nss,kl,sauc,valid_nss,valid_kl,valid_sauc
/// A valid_* column holds 1 for a defined value, otherwise the reason token.
void write_frame_csv(const std::filesystem::path& path, std::span<const FrameScore> scores);
std::vector<FrameScore> read_frame_csv(const std::filesystem::path& path, const std::string& recording);

/// model,game,metric,mean,std,n
void write_summary_csv(const std::filesystem::path& path, const std::string& model,
                       const std::string& game, std::span<const SummaryRow> rows);

}  // namespace fls
