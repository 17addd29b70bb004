#include "fls/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "fls/rng.hpp"

namespace fls {

namespace {

void require_match(const FeatureMap& saliency, int width, int height, const char* op) {
  if (saliency.channels() != 1 || saliency.width() != width || saliency.height() != height) {
    throw ConfigError(std::string(op) + ": saliency " + saliency.shape_string() +
                      " does not match fixation map " + std::to_string(height) + "x" +
                      std::to_string(width));
  }
}

int reflect_index(int i, int n) {
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

std::vector<double> gaussian_kernel(const BlurParams& p) {
  std::vector<double> k(static_cast<std::size_t>(2 * p.radius + 1));
  double total = 0.0;
  for (int i = -p.radius; i <= p.radius; ++i) {
    const double v = p.sigma > 0 ? std::exp(-0.5 * (i * i) / (p.sigma * p.sigma)) : (i == 0 ? 1.0 : 0.0);
    k[i + p.radius] = v;
    total += v;
  }
  for (double& v : k) v /= total;
  return k;
}

}  // namespace

std::string_view to_string(Undefined reason) {
  switch (reason) {
    case Undefined::None: return "ok";
    case Undefined::ZeroVariance: return "zero_variance";
    case Undefined::NoFixations: return "no_fixations";
    case Undefined::NoNegatives: return "no_negatives";
  }
  return "unknown";
}

std::optional<Undefined> parse_undefined(std::string_view token) {
  for (auto r : {Undefined::ZeroVariance, Undefined::NoFixations, Undefined::NoNegatives})
    if (token == to_string(r)) return r;
  return std::nullopt;
}

BlurParams BlurParams::with_sigma(double sigma) {
  if (sigma < 0) throw ConfigError("blur sigma must be non-negative");
  return {sigma, static_cast<int>(std::ceil(3.0 * sigma))};
}

MetricResult nss(const FeatureMap& saliency, const FixationMap& fixations) {
  require_match(saliency, fixations.width, fixations.height, "nss");
  const auto s = saliency.data();
  const double n = static_cast<double>(s.size());
  double mean = 0.0;
  for (float v : s) mean += v;
  mean /= n;
  double var = 0.0;
  for (float v : s) var += (v - mean) * (v - mean);
  var /= n;
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  if (*lo == *hi || !(var > 0.0)) return MetricResult::undefined(Undefined::ZeroVariance);
  const std::uint64_t total = fixations.total();
  if (total == 0) return MetricResult::undefined(Undefined::NoFixations);

  const double sd = std::sqrt(var);
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (fixations.counts[i] == 0) continue;
    acc += fixations.counts[i] * ((s[i] - mean) / sd);
  }
  return MetricResult::of(acc / static_cast<double>(total));
}

FeatureMapD gaussian_blur(const FeatureMapD& map, const BlurParams& params) {
  const auto k = gaussian_kernel(params);
  const int r = params.radius;
  const int h = map.height();
  const int w = map.width();
  const int c = map.channels();
  FeatureMapD tmp(h, w, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int d = -r; d <= r; ++d) acc += k[d + r] * map.at(y, reflect_index(x + d, w), ch);
        tmp.at(y, x, ch) = acc;
      }
  FeatureMapD out(h, w, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int d = -r; d <= r; ++d) acc += k[d + r] * tmp.at(reflect_index(y + d, h), x, ch);
        out.at(y, x, ch) = acc;
      }
  return out;
}

double kl_between(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ConfigError("kl_between: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) total += p[i] * std::log(p[i] / q[i]);
  }
  return total;
}

MetricResult kl_divergence(const FeatureMap& saliency, const FixationMap& fixations,
                           const BlurParams& params) {
  require_match(saliency, fixations.width, fixations.height, "kl_divergence");
  if (fixations.total() == 0) return MetricResult::undefined(Undefined::NoFixations);

  FeatureMapD f(fixations.height, fixations.width, 1);
  for (std::size_t i = 0; i < fixations.counts.size(); ++i) f.storage()[i] = fixations.counts[i];
  std::vector<double> p = gaussian_blur(f, params).storage();
  std::vector<double> q(saliency.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double v = saliency.data()[i];
    if (v < 0.0) throw ConfigError("kl_divergence: saliency must be non-negative");
    q[i] = v;
  }
  // Normalising before smoothing keeps the result independent of the maps' scale.
  auto smooth = [](std::vector<double>& d) {
    double mass = 0.0;
    for (double v : d) mass += v;
    double total = 0.0;
    for (double& v : d) {
      v = (mass > 0.0 ? v / mass : 0.0) + kKlEpsilon;
      total += v;
    }
    for (double& v : d) v /= total;
  };
  smooth(p);
  smooth(q);
  // Rounding can leave a matched pair a hair below zero.
  return MetricResult::of(std::max(0.0, kl_between(p, q)));
}

MetricResult shuffled_auc_masked(const FeatureMap& saliency, const FixationMap& positives,
                                 std::span<const std::uint8_t> negatives, const SaucOptions& options) {
  require_match(saliency, positives.width, positives.height, "shuffled_auc");
  if (negatives.size() != positives.counts.size()) throw ConfigError("shuffled_auc: negative mask size mismatch");
  const auto s = saliency.data();
  std::vector<double> pos;
  std::vector<double> neg;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (positives.counts[i] > 0) {
      pos.push_back(s[i]);
    } else if (negatives[i]) {
      neg.push_back(s[i]);
    }
  }
  if (pos.empty()) return MetricResult::undefined(Undefined::NoFixations);
  if (neg.empty()) return MetricResult::undefined(Undefined::NoNegatives);

  if (options.max_negatives > 0 && neg.size() > options.max_negatives) {
    Rng rng(options.rng_seed);
    for (std::size_t i = 0; i < options.max_negatives; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(neg.size() - i));
      std::swap(neg[i], neg[j]);
    }
    neg.resize(options.max_negatives);
  }

  std::sort(neg.begin(), neg.end());
  // Twice the Mann-Whitney U, kept integral so ties and perfect rankings are exact.
  std::uint64_t twice_u = 0;
  for (double v : pos) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), v);
    const auto hi = std::upper_bound(lo, neg.end(), v);
    twice_u += 2 * static_cast<std::uint64_t>(lo - neg.begin()) + static_cast<std::uint64_t>(hi - lo);
  }
  const double pairs = static_cast<double>(pos.size()) * static_cast<double>(neg.size());
  return MetricResult::of(static_cast<double>(twice_u) / (2.0 * pairs));
}

MetricResult shuffled_auc(const FeatureMap& saliency, const FixationMap& positives,
                          std::span<const FixationMap> negative_pool, const SaucOptions& options) {
  FixationPool pool(positives.width, positives.height);
  for (const auto& m : negative_pool) pool.add(m);
  return shuffled_auc_masked(saliency, positives, pool.negatives_for(positives), options);
}

FixationPool::FixationPool(int width, int height)
    : width_(width), height_(height), frames_(static_cast<std::size_t>(width) * height, 0) {}

void FixationPool::add(const FixationMap& map) {
  if (map.width != width_ || map.height != height_) throw ConfigError("fixation pool: map size mismatch");
  for (std::size_t i = 0; i < frames_.size(); ++i) frames_[i] += map.counts[i] > 0 ? 1 : 0;
}

std::vector<std::uint8_t> FixationPool::negatives_for(const FixationMap& own) const {
  if (own.width != width_ || own.height != height_) throw ConfigError("fixation pool: map size mismatch");
  std::vector<std::uint8_t> mask(frames_.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = frames_[i] > 0 && own.counts[i] == 0;
  return mask;
}

std::vector<SummaryRow> aggregate(std::span<const FrameScore> scores) {
  std::map<std::string, std::vector<const FrameScore*>> by_recording;
  for (const auto& s : scores) by_recording[s.recording].push_back(&s);
  for (auto& [name, frames] : by_recording) {
    std::stable_sort(frames.begin(), frames.end(),
                     [](const FrameScore* a, const FrameScore* b) { return a->frame < b->frame; });
  }

  using Getter = const MetricResult& (*)(const FrameScore&);
  const std::pair<const char*, Getter> metrics[] = {
      {"nss", [](const FrameScore& f) -> const MetricResult& { return f.nss; }},
      {"kl", [](const FrameScore& f) -> const MetricResult& { return f.kl; }},
      {"sauc", [](const FrameScore& f) -> const MetricResult& { return f.sauc; }},
  };

  std::vector<SummaryRow> rows;
  for (const auto& [metric, get] : metrics) {
    SummaryRow row;
    row.metric = metric;
    std::vector<double> means;
    for (const auto& [name, frames] : by_recording) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const FrameScore* f : frames) {
        const MetricResult& r = get(*f);
        if (!r.defined()) continue;
        sum += *r.value;
        ++n;
      }
      if (n == 0) continue;
      means.push_back(sum / static_cast<double>(n));
      row.frames += n;
    }
    row.recordings = means.size();
    if (!means.empty()) {
      double mean = 0.0;
      for (double m : means) mean += m;
      mean /= static_cast<double>(means.size());
      double var = 0.0;
      for (double m : means) var += (m - mean) * (m - mean);
      var /= static_cast<double>(means.size());
      row.mean = mean;
      row.std = std::sqrt(var);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

void write_frame_csv(const std::filesystem::path& path, std::span<const FrameScore> scores) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "frame,nss,kl,sauc,valid_nss,valid_kl,valid_sauc\n";
  auto value = [](const MetricResult& r) { return r.defined() ? format_real(*r.value) : std::string(); };
  auto valid = [](const MetricResult& r) { return r.defined() ? std::string("1") : std::string(to_string(r.reason)); };
  for (const auto& s : scores) {
    out << s.frame << ',' << value(s.nss) << ',' << value(s.kl) << ',' << value(s.sauc) << ','
        << valid(s.nss) << ',' << valid(s.kl) << ',' << valid(s.sauc) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<FrameScore> read_frame_csv(const std::filesystem::path& path, const std::string& recording) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "frame,nss,kl,sauc,valid_nss,valid_kl,valid_sauc") {
    throw IoError(path.string() + ": not a per-frame metrics CSV");
  }
  std::vector<FrameScore> scores;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() == 6 && line.back() == ',') cells.emplace_back();
    if (cells.size() != 7) throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected 7 columns");
    auto fail = [&] { throw IoError(path.string() + ":" + std::to_string(line_no) + ": malformed row"); };
    FrameScore s;
    s.recording = recording;
    if (std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), s.frame).ec != std::errc()) fail();
    MetricResult* slots[] = {&s.nss, &s.kl, &s.sauc};
    for (int m = 0; m < 3; ++m) {
      const std::string& v = cells[1 + m];
      const std::string& flag = cells[4 + m];
      if (flag == "1") {
        double x = 0.0;
        if (std::from_chars(v.data(), v.data() + v.size(), x).ec != std::errc()) fail();
        *slots[m] = MetricResult::of(x);
      } else {
        const auto reason = parse_undefined(flag);
        if (!reason || !v.empty()) fail();
        *slots[m] = MetricResult::undefined(*reason);
      }
    }
    scores.push_back(std::move(s));
  }
  return scores;
}

void write_summary_csv(const std::filesystem::path& path, const std::string& model, const std::string& game,
                       std::span<const SummaryRow> rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "model,game,metric,mean,std,n\n";
  for (const auto& r : rows) {
    out << model << ',' << game << ',' << r.metric << ',' << (r.mean ? format_real(*r.mean) : "") << ','
        << (r.std ? format_real(*r.std) : "") << ',' << r.frames << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace fls
