#include "raca/criteria_individual.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "raca/error.hpp"
#include "raca/parallel.hpp"

namespace raca {

void IndividualConfig::validate(std::size_t n) const {
  if (!(epsilon_sfc > 0.0)) throw ValidationError("epsilon_sfc must be positive");
  if (topk < 1 || topk > n) {
    throw ValidationError("topk must lie in [1, " + std::to_string(n) + "]");
  }
  if (bins < 1) throw ValidationError("bins must be at least 1");
}

double sfc(const Matrix& projected, double epsilon) {
  const std::size_t n = projected.cols();
  if (projected.empty() || n == 0) return 0.0;
  std::vector<bool> hit(n, false);
  for (std::size_t r = 0; r < projected.rows(); ++r) {
    auto row = projected.row(r);
    for (std::size_t j = 0; j < n; ++j) {
      if (row[j] > epsilon) hit[j] = true;
    }
  }
  return static_cast<double>(std::count(hit.begin(), hit.end(), true)) / static_cast<double>(n);
}

std::vector<std::size_t> top_k_features(std::span<const double> v, std::size_t k) {
  k = std::min(k, v.size());
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double ma = std::abs(v[a]);
                      const double mb = std::abs(v[b]);
                      return ma != mb ? ma > mb : a < b;
                    });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

double tkfc(const Matrix& projected, std::size_t k) {
  const std::size_t n = projected.cols();
  if (k < 1 || k > n) throw ValidationError("tkfc: k must lie in [1, n]");
  if (projected.empty()) return 0.0;
  std::vector<bool> hit(n, false);
  for (std::size_t r = 0; r < projected.rows(); ++r) {
    for (std::size_t j : top_k_features(projected.row(r), k)) hit[j] = true;
  }
  return static_cast<double>(std::count(hit.begin(), hit.end(), true)) / static_cast<double>(n);
}

std::size_t intensity_bin(double value, const FeatureRange& range, std::size_t bins) {
  const double width = range.max - range.min;
  if (!(width > 0.0)) return 0;
  const double clamped = std::clamp(value, range.min, range.max);
  const auto bin = static_cast<std::size_t>(std::floor((clamped - range.min) / width * static_cast<double>(bins)));
  return std::min(bin, bins - 1);
}

double fic(const Matrix& projected, std::span<const FeatureRange> ranges, std::size_t bins) {
  const std::size_t n = projected.cols();
  if (ranges.size() != n) throw ValidationError("fic: one range per feature required");
  if (bins < 1) throw ValidationError("fic: bins must be at least 1");
  if (projected.empty() || n == 0) return 0.0;
  std::vector<bool> covered(n * bins, false);
  for (std::size_t r = 0; r < projected.rows(); ++r) {
    auto row = projected.row(r);
    for (std::size_t j = 0; j < n; ++j) covered[j * bins + intensity_bin(row[j], ranges[j], bins)] = true;
  }
  const auto total = static_cast<double>(std::count(covered.begin(), covered.end(), true));
  return total / static_cast<double>(bins * n);  // one rounding of the exact fraction
}

IndividualScores individual_scores(const LayerConceptSpace& layer, const Matrix& projected,
                                   const IndividualConfig& cfg) {
  cfg.validate(layer.n());
  return {sfc(projected, cfg.epsilon_sfc), tkfc(projected, cfg.topk),
          fic(projected, layer.feature_ranges, cfg.bins)};
}

IndividualScores individual_scores(const ConceptSpace& space, const ActivationDump& dump,
                                   const TestSuite& suite, const IndividualConfig& cfg) {
  const std::vector<std::size_t> rows = resolve_suite(dump, suite);
  const auto& layers = space.layers();
  std::vector<IndividualScores> per_layer(layers.size());
  parallel_for(layers.size(), [&](std::size_t i) {
    per_layer[i] = individual_scores(layers[i], project_rows(layers[i], dump, rows), cfg);
  });
  IndividualScores mean;
  for (const auto& s : per_layer) {
    mean.sfc += s.sfc;
    mean.tkfc += s.tkfc;
    mean.fic += s.fic;
  }
  const auto count = static_cast<double>(per_layer.size());
  mean.sfc /= count;
  mean.tkfc /= count;
  mean.fic /= count;
  return mean;
}

}  // namespace raca
