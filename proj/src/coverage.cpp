#include "raca/coverage.hpp"

#include <algorithm>

#include "raca/criteria_compositional.hpp"
#include "raca/criteria_individual.hpp"
#include "raca/error.hpp"
#include "raca/neuron_baselines.hpp"
#include "raca/parallel.hpp"

namespace raca {

namespace {

void check_compatible(const ConceptSpace& space, const ActivationDump& dump, const CoverageConfig& cfg) {
  if (space.d_model() != dump.d_model()) {
    throw ValidationError("concept space d_model " + std::to_string(space.d_model()) +
                          " does not match dump d_model " + std::to_string(dump.d_model()));
  }
  for (int layer : space.layer_indices()) dump.layer_position(layer);
  cfg.individual.validate(space.n());
  cfg.compositional.validate();
  cfg.baseline.validate();
}

}  // namespace

CriterionValues evaluate_suite(const ConceptSpace& space, const ActivationDump& dump, const TestSuite& suite,
                               const CoverageConfig& cfg, bool* cbc_undefined) {
  check_compatible(space, dump, cfg);
  const std::vector<std::size_t> rows = resolve_suite(dump, suite);
  const auto& layers = space.layers();

  std::vector<IndividualScores> individual(layers.size());
  std::vector<CompositionalScores> compositional(layers.size());
  parallel_for(layers.size(), [&](std::size_t i) {
    const Matrix projected = project_rows(layers[i], dump, rows);
    individual[i] = individual_scores(layers[i], projected, cfg.individual);
    compositional[i] = compositional_scores(layers[i], projected, cfg.compositional);
  });

  CriterionValues v;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    v[Criterion::sfc] += individual[i].sfc;
    v[Criterion::tkfc] += individual[i].tkfc;
    v[Criterion::fic] += individual[i].fic;
    v[Criterion::scc] += compositional[i].scc;
    v[Criterion::pcc] += compositional[i].pcc;
    v[Criterion::cbc] += compositional[i].cbc;
  }
  for (Criterion c : kRacaCriteria) v[c] /= static_cast<double>(layers.size());

  const BaselineScores b = baseline_scores(dump, suite, cfg.baseline);
  v[Criterion::nc] = b.nc;
  v[Criterion::tknc] = b.tknc;
  v[Criterion::tknp] = b.tknp;
  v[Criterion::tfc] = b.tfc;
  v[Criterion::nlc] = b.nlc;
  if (cbc_undefined) *cbc_undefined = rows.empty();
  return v;
}

CoverageReport cover(const ConceptSpace& space, const ActivationDump& dump, const TestSuite& suite,
                     const CoverageConfig& cfg) {
  CoverageReport report;
  report.suite_name = suite.name;
  report.suite_size = suite.size();
  report.values = evaluate_suite(space, dump, suite, cfg, &report.cbc_undefined);
  report.config = cfg;
  return report;
}

// Set-valued RACA state of one layer.
class RacaLayerState {
 public:
  RacaLayerState(const LayerConceptSpace& space, const CoverageConfig& cfg)
      : space_(&space),
        cfg_(&cfg),
        sfc_(space.n(), false),
        tkfc_(space.n(), false),
        fic_(space.n() * cfg.individual.bins, false),
        scc_(space.centroids.rows(), false),
        pcc_(space.n() * (space.n() - 1) / 2, false) {}

  struct Delta {
    std::vector<std::size_t> sfc, tkfc, fic, scc, pcc;
    bool boundary = false;
  };

  Delta delta(std::span<const double> v) const {
    Delta d;
    const std::size_t n = space_->n();
    const std::size_t bins = cfg_->individual.bins;
    for (std::size_t j = 0; j < n; ++j) {
      if (v[j] > cfg_->individual.epsilon_sfc && !sfc_[j]) d.sfc.push_back(j);
      const std::size_t bin = j * bins + intensity_bin(v[j], space_->feature_ranges[j], bins);
      if (!fic_[bin]) d.fic.push_back(bin);
    }
    for (std::size_t j : top_k_features(v, cfg_->individual.topk)) {
      if (!tkfc_[j]) d.tkfc.push_back(j);
    }
    const auto nearest = nearest_centroid(space_->centroids, v);
    if (!scc_[nearest.index]) d.scc.push_back(nearest.index);
    d.boundary = nearest.distance > cfg_->compositional.delta;
    std::vector<std::size_t> active;
    for (std::size_t j = 0; j < n; ++j) {
      if (v[j] > cfg_->compositional.epsilon_pcc) active.push_back(j);
    }
    for (std::size_t a = 0; a < active.size(); ++a) {
      for (std::size_t b = a + 1; b < active.size(); ++b) {
        const std::size_t p = pair_index(active[a], active[b], n);
        if (!pcc_[p]) d.pcc.push_back(p);
      }
    }
    return d;
  }

  void apply(const Delta& d) {
    for (auto j : d.sfc) sfc_[j] = true;
    for (auto j : d.tkfc) tkfc_[j] = true;
    for (auto j : d.fic) fic_[j] = true;
    for (auto j : d.scc) scc_[j] = true;
    for (auto j : d.pcc) pcc_[j] = true;
    counts_.sfc += d.sfc.size();
    counts_.tkfc += d.tkfc.size();
    counts_.fic += d.fic.size();
    counts_.scc += d.scc.size();
    counts_.pcc += d.pcc.size();
    counts_.boundary += d.boundary ? 1 : 0;
    ++counts_.total;
  }

  void accumulate(CriterionValues& out, const Delta* pending) const {
    Counts c = counts_;
    if (pending) {
      c.sfc += pending->sfc.size();
      c.tkfc += pending->tkfc.size();
      c.fic += pending->fic.size();
      c.scc += pending->scc.size();
      c.pcc += pending->pcc.size();
      c.boundary += pending->boundary ? 1 : 0;
      ++c.total;
    }
    if (c.total == 0) return;
    const auto n = static_cast<double>(space_->n());
    out[Criterion::sfc] += static_cast<double>(c.sfc) / n;
    out[Criterion::tkfc] += static_cast<double>(c.tkfc) / n;
    out[Criterion::fic] += static_cast<double>(c.fic) / static_cast<double>(cfg_->individual.bins) / n;
    out[Criterion::scc] += static_cast<double>(c.scc) / static_cast<double>(scc_.size());
    out[Criterion::pcc] += static_cast<double>(c.pcc) / static_cast<double>(pcc_.size());
    out[Criterion::cbc] += static_cast<double>(c.boundary) / static_cast<double>(c.total);
  }

 private:
  struct Counts {
    std::size_t sfc = 0, tkfc = 0, fic = 0, scc = 0, pcc = 0, boundary = 0, total = 0;
  };

  const LayerConceptSpace* space_;
  const CoverageConfig* cfg_;
  std::vector<bool> sfc_, tkfc_, fic_, scc_, pcc_;
  Counts counts_;
};

struct IncrementalCoverage::Impl {
  Impl(const ConceptSpace& space_in, const ActivationDump& dump_in, const CoverageConfig& cfg_in)
      : space(&space_in), dump(&dump_in), cfg(cfg_in), baselines(dump_in, cfg.baseline) {
    check_compatible(space_in, dump_in, cfg);
    for (const auto& l : space_in.layers()) raca_layers.emplace_back(l, cfg);
  }

  std::vector<std::vector<double>> project_all(std::size_t row) const {
    std::vector<std::vector<double>> out;
    for (const auto& l : space->layers()) {
      out.push_back(project(l, dump->activation(row, dump->layer_position(l.layer))));
    }
    return out;
  }

  CriterionValues combine(const std::vector<RacaLayerState::Delta>* pending, const BaselineScores& b) const {
    CriterionValues v;
    for (std::size_t i = 0; i < raca_layers.size(); ++i) {
      raca_layers[i].accumulate(v, pending ? &(*pending)[i] : nullptr);
    }
    for (Criterion c : kRacaCriteria) v[c] /= static_cast<double>(raca_layers.size());
    v[Criterion::nc] = b.nc;
    v[Criterion::tknc] = b.tknc;
    v[Criterion::tknp] = b.tknp;
    v[Criterion::tfc] = b.tfc;
    v[Criterion::nlc] = b.nlc;
    return v;
  }

  const ConceptSpace* space;
  const ActivationDump* dump;
  // Owned copy: the layer states keep pointers into it.
  CoverageConfig cfg;
  std::vector<RacaLayerState> raca_layers;
  BaselineState baselines;
  std::size_t size = 0;
};

IncrementalCoverage::IncrementalCoverage(const ConceptSpace& space, const ActivationDump& dump,
                                         const CoverageConfig& cfg)
    : impl_(std::make_unique<Impl>(space, dump, cfg)) {}

IncrementalCoverage::~IncrementalCoverage() = default;
IncrementalCoverage::IncrementalCoverage(IncrementalCoverage&&) noexcept = default;
IncrementalCoverage& IncrementalCoverage::operator=(IncrementalCoverage&&) noexcept = default;

void IncrementalCoverage::add(std::size_t row) {
  const auto projections = impl_->project_all(row);
  for (std::size_t i = 0; i < projections.size(); ++i) {
    impl_->raca_layers[i].apply(impl_->raca_layers[i].delta(projections[i]));
  }
  impl_->baselines.add(row);
  ++impl_->size;
}

std::size_t IncrementalCoverage::size() const noexcept { return impl_->size; }

CriterionValues IncrementalCoverage::values() const {
  return impl_->combine(nullptr, impl_->baselines.scores());
}

CriterionValues IncrementalCoverage::values_with(std::size_t row) const {
  const auto projections = impl_->project_all(row);
  std::vector<RacaLayerState::Delta> pending;
  for (std::size_t i = 0; i < projections.size(); ++i) {
    pending.push_back(impl_->raca_layers[i].delta(projections[i]));
  }
  return impl_->combine(&pending, impl_->baselines.scores_with(row));
}

}  // namespace raca
