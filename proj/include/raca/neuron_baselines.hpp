#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "raca/activation_store.hpp"
#include "raca/matrix.hpp"

namespace raca {

struct BaselineConfig {
  double nc_threshold = 0.25;
  std::size_t tknc_k = 10;
  std::size_t tknp_k = 1;
  double tfc_threshold = 50.0;
  /// Layers to trace; empty means every layer in the dump.
  std::vector<int> layers;

  void validate() const;
  friend bool operator==(const BaselineConfig&, const BaselineConfig&) = default;
};

// Streaming accumulators for one layer. add() consumes one activation row;
// value_with() reports the value the state would have after add() without
// mutating it.

/// NC: a neuron is activated once its per-row min-max scaled value exceeds the threshold.
class NcState {
 public:
  NcState(std::size_t width, double threshold);
  void add(std::span<const double> row);
  double value() const;
  double value_with(std::span<const double> row) const;

 private:
  template <typename Fn>
  void for_each_active(std::span<const double> row, Fn&& fn) const;

  double threshold_;
  std::vector<bool> activated_;
  std::size_t count_ = 0;
};

/// TKNC: neurons that were among some row's k largest raw values.
class TkncState {
 public:
  TkncState(std::size_t width, std::size_t k);
  void add(std::span<const double> row);
  double value() const;
  double value_with(std::span<const double> row) const;

 private:
  std::size_t k_;
  std::vector<bool> seen_;
  std::size_t count_ = 0;
};

/// Indices of the k largest raw values, ties towards the lower index, sorted ascending.
std::vector<std::uint32_t> top_k_neurons(std::span<const double> row, std::size_t k);

/// TKNP: distinct top-k index sets.
class TknpState {
 public:
  explicit TknpState(std::size_t k);
  void add(std::span<const double> row);
  double value() const;
  double value_with(std::span<const double> row) const;

 private:
  std::size_t k_;
  std::set<std::vector<std::uint32_t>> patterns_;
};

/// TFC: rows retained when farther than threshold (L2) from every retained row.
class TfcState {
 public:
  explicit TfcState(double threshold);
  void add(std::span<const double> row);
  double value() const;
  double value_with(std::span<const double> row) const;

 private:
  bool is_novel(std::span<const double> row) const;

  double threshold_sq_;
  std::vector<std::vector<double>> retained_;
};

/// NLC stand-in: Frobenius norm of the unbiased covariance, updated with Welford's recurrence.
class NlcState {
 public:
  explicit NlcState(std::size_t width);
  void add(std::span<const double> row);
  double value() const;
  double value_with(std::span<const double> row) const;
  std::size_t count() const noexcept { return count_; }

 private:
  std::size_t width_;
  std::size_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;  // width x width co-moment sums
};

// One-layer batch forms: consume every row of activations into the state and return its value.
double nc(NcState& state, const Matrix& activations);
double tknc(TkncState& state, const Matrix& activations);
double tknp(TknpState& state, const Matrix& activations);
double tfc(TfcState& state, const Matrix& activations);
double nlc(NlcState& state, const Matrix& activations);

struct BaselineScores {
  double nc = 0.0;
  double tknc = 0.0;
  double tknp = 0.0;
  double tfc = 0.0;
  double nlc = 0.0;
};

/// All five accumulators for every traced layer.
class BaselineState {
 public:
  BaselineState(const ActivationDump& dump, const BaselineConfig& cfg);
  void add(std::size_t row);
  BaselineScores scores() const;
  BaselineScores scores_with(std::size_t row) const;

 private:
  struct Layer {
    std::size_t position;
    NcState nc;
    TkncState tknc;
    TknpState tknp;
    TfcState tfc;
    NlcState nlc;
  };

  std::vector<double> row_at(std::size_t row, std::size_t position) const;

  const ActivationDump* dump_;
  std::vector<Layer> layers_;
};

/// Each criterion is computed per traced layer and averaged over layers.
BaselineScores baseline_scores(const ActivationDump& dump, const TestSuite& suite,
                               const BaselineConfig& cfg);

}  // namespace raca
