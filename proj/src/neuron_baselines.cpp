#include "raca/neuron_baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "raca/error.hpp"
#include "raca/parallel.hpp"

namespace raca {

void BaselineConfig::validate() const {
  if (!(nc_threshold > 0.0) || !(tfc_threshold > 0.0)) {
    throw ValidationError("baseline thresholds must be positive");
  }
  if (tknc_k < 1 || tknp_k < 1) throw ValidationError("baseline k values must be at least 1");
}

NcState::NcState(std::size_t width, double threshold) : threshold_(threshold), activated_(width, false) {}

template <typename Fn>
void NcState::for_each_active(std::span<const double> row, Fn&& fn) const {
  const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
  const double span = *hi - *lo;
  if (!(span > 0.0)) return;  // constant row scales to all zeros
  for (std::size_t i = 0; i < row.size(); ++i) {
    if ((row[i] - *lo) / span > threshold_) fn(i);
  }
}

void NcState::add(std::span<const double> row) {
  for_each_active(row, [&](std::size_t i) {
    if (!activated_[i]) {
      activated_[i] = true;
      ++count_;
    }
  });
}

double NcState::value() const { return static_cast<double>(count_) / static_cast<double>(activated_.size()); }

double NcState::value_with(std::span<const double> row) const {
  std::size_t extra = 0;
  for_each_active(row, [&](std::size_t i) { extra += activated_[i] ? 0 : 1; });
  return static_cast<double>(count_ + extra) / static_cast<double>(activated_.size());
}

std::vector<std::uint32_t> top_k_neurons(std::span<const double> row, std::size_t k) {
  k = std::min(k, row.size());
  std::vector<std::uint32_t> order(row.size());
  std::iota(order.begin(), order.end(), 0u);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::uint32_t a, std::uint32_t b) { return row[a] != row[b] ? row[a] > row[b] : a < b; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

TkncState::TkncState(std::size_t width, std::size_t k) : k_(k), seen_(width, false) {}

void TkncState::add(std::span<const double> row) {
  for (auto i : top_k_neurons(row, k_)) {
    if (!seen_[i]) {
      seen_[i] = true;
      ++count_;
    }
  }
}

double TkncState::value() const { return static_cast<double>(count_) / static_cast<double>(seen_.size()); }

double TkncState::value_with(std::span<const double> row) const {
  std::size_t extra = 0;
  for (auto i : top_k_neurons(row, k_)) extra += seen_[i] ? 0 : 1;
  return static_cast<double>(count_ + extra) / static_cast<double>(seen_.size());
}

TknpState::TknpState(std::size_t k) : k_(k) {}

void TknpState::add(std::span<const double> row) { patterns_.insert(top_k_neurons(row, k_)); }

double TknpState::value() const { return static_cast<double>(patterns_.size()); }

double TknpState::value_with(std::span<const double> row) const {
  const bool fresh = !patterns_.contains(top_k_neurons(row, k_));
  return static_cast<double>(patterns_.size() + (fresh ? 1 : 0));
}

TfcState::TfcState(double threshold) : threshold_sq_(threshold * threshold) {}

bool TfcState::is_novel(std::span<const double> row) const {
  return std::all_of(retained_.begin(), retained_.end(),
                     [&](const std::vector<double>& kept) { return squared_distance(kept, row) > threshold_sq_; });
}

void TfcState::add(std::span<const double> row) {
  if (is_novel(row)) retained_.emplace_back(row.begin(), row.end());
}

double TfcState::value() const { return static_cast<double>(retained_.size()); }

double TfcState::value_with(std::span<const double> row) const {
  return static_cast<double>(retained_.size() + (is_novel(row) ? 1 : 0));
}

NlcState::NlcState(std::size_t width) : width_(width), mean_(width, 0.0), m2_(width * width, 0.0) {}

void NlcState::add(std::span<const double> row) {
  ++count_;
  std::vector<double> delta(width_);
  for (std::size_t i = 0; i < width_; ++i) {
    delta[i] = row[i] - mean_[i];
    mean_[i] += delta[i] / static_cast<double>(count_);
  }
  for (std::size_t i = 0; i < width_; ++i) {
    const double after = row[i] - mean_[i];
    double* m2_row = m2_.data() + i * width_;
    for (std::size_t j = 0; j < width_; ++j) m2_row[j] += after * delta[j];
  }
}

double NlcState::value() const {
  if (count_ < 2) return 0.0;
  double sum = 0.0;
  for (double v : m2_) sum += v * v;
  return std::sqrt(sum) / static_cast<double>(count_ - 1);
}

double NlcState::value_with(std::span<const double> row) const {
  const std::size_t next = count_ + 1;
  if (next < 2) return 0.0;
  // M2' = M2 + (n / (n + 1)) * delta * delta^T
  const double weight = static_cast<double>(count_) / static_cast<double>(next);
  std::vector<double> delta(width_);
  for (std::size_t i = 0; i < width_; ++i) delta[i] = row[i] - mean_[i];
  double sum = 0.0;
  for (std::size_t i = 0; i < width_; ++i) {
    const double* m2_row = m2_.data() + i * width_;
    const double scaled = weight * delta[i];
    for (std::size_t j = 0; j < width_; ++j) {
      const double v = m2_row[j] + scaled * delta[j];
      sum += v * v;
    }
  }
  return std::sqrt(sum) / static_cast<double>(next - 1);
}

namespace {

template <typename State>
double consume(State& state, const Matrix& activations) {
  for (std::size_t r = 0; r < activations.rows(); ++r) state.add(activations.row(r));
  return state.value();
}

}  // namespace

double nc(NcState& state, const Matrix& activations) { return consume(state, activations); }
double tknc(TkncState& state, const Matrix& activations) { return consume(state, activations); }
double tknp(TknpState& state, const Matrix& activations) { return consume(state, activations); }
double tfc(TfcState& state, const Matrix& activations) { return consume(state, activations); }
double nlc(NlcState& state, const Matrix& activations) { return consume(state, activations); }

namespace {

std::vector<std::size_t> traced_positions(const ActivationDump& dump, const BaselineConfig& cfg) {
  std::vector<std::size_t> positions;
  if (cfg.layers.empty()) {
    positions.resize(dump.num_layers());
    std::iota(positions.begin(), positions.end(), std::size_t{0});
  } else {
    for (int layer : cfg.layers) positions.push_back(dump.layer_position(layer));
  }
  return positions;
}

BaselineScores mean_of(const std::vector<BaselineScores>& per_layer) {
  BaselineScores mean;
  for (const auto& s : per_layer) {
    mean.nc += s.nc;
    mean.tknc += s.tknc;
    mean.tknp += s.tknp;
    mean.tfc += s.tfc;
    mean.nlc += s.nlc;
  }
  const auto count = static_cast<double>(per_layer.size());
  mean.nc /= count;
  mean.tknc /= count;
  mean.tknp /= count;
  mean.tfc /= count;
  mean.nlc /= count;
  return mean;
}

}  // namespace

BaselineState::BaselineState(const ActivationDump& dump, const BaselineConfig& cfg) : dump_(&dump) {
  cfg.validate();
  const std::size_t width = dump.d_model();
  for (std::size_t pos : traced_positions(dump, cfg)) {
    layers_.push_back(Layer{pos, NcState(width, cfg.nc_threshold), TkncState(width, cfg.tknc_k),
                            TknpState(cfg.tknp_k), TfcState(cfg.tfc_threshold), NlcState(width)});
  }
}

std::vector<double> BaselineState::row_at(std::size_t row, std::size_t position) const {
  auto h = dump_->activation(row, position);
  return {h.begin(), h.end()};
}

void BaselineState::add(std::size_t row) {
  parallel_for(layers_.size(), [&](std::size_t i) {
    auto& l = layers_[i];
    const auto h = row_at(row, l.position);
    l.nc.add(h);
    l.tknc.add(h);
    l.tknp.add(h);
    l.tfc.add(h);
    l.nlc.add(h);
  });
}

BaselineScores BaselineState::scores() const {
  std::vector<BaselineScores> per_layer;
  for (const auto& l : layers_) {
    per_layer.push_back({l.nc.value(), l.tknc.value(), l.tknp.value(), l.tfc.value(), l.nlc.value()});
  }
  return mean_of(per_layer);
}

BaselineScores BaselineState::scores_with(std::size_t row) const {
  std::vector<BaselineScores> per_layer(layers_.size());
  parallel_for(layers_.size(), [&](std::size_t i) {
    const auto& l = layers_[i];
    const auto h = row_at(row, l.position);
    per_layer[i] = {l.nc.value_with(h), l.tknc.value_with(h), l.tknp.value_with(h), l.tfc.value_with(h),
                    l.nlc.value_with(h)};
  });
  return mean_of(per_layer);
}

BaselineScores baseline_scores(const ActivationDump& dump, const TestSuite& suite, const BaselineConfig& cfg) {
  cfg.validate();
  const std::vector<std::size_t> rows = resolve_suite(dump, suite);
  const std::vector<std::size_t> positions = traced_positions(dump, cfg);
  std::vector<BaselineScores> per_layer(positions.size());
  parallel_for(positions.size(), [&](std::size_t i) {
    const auto dims = dump.d_model();
    const Matrix acts = select_layer_view(dump, dump.layers()[positions[i]]).gather(rows);
    NcState nc_state(dims, cfg.nc_threshold);
    TkncState tknc_state(dims, cfg.tknc_k);
    TknpState tknp_state(cfg.tknp_k);
    TfcState tfc_state(cfg.tfc_threshold);
    NlcState nlc_state(dims);
    per_layer[i] = {nc(nc_state, acts), tknc(tknc_state, acts), tknp(tknp_state, acts), tfc(tfc_state, acts),
                    nlc(nlc_state, acts)};
  });
  return mean_of(per_layer);
}

}  // namespace raca
