#include "raca/suite_lab.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/Dense>

#include "raca/coverage.hpp"
#include "raca/error.hpp"
#include "raca/io_util.hpp"
#include "raca/parallel.hpp"
#include "raca/rng.hpp"

namespace raca {

namespace {

constexpr std::string_view kSynonymPrefix = "synonym-of:";

std::string padded_id(std::string_view prefix, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return std::string(prefix) + "-" + buf;
}

// Haar-ish random rotation: QR of a Gaussian matrix with the R diagonal made positive.
Eigen::MatrixXd random_rotation(std::size_t d, Rng& rng) {
  Eigen::MatrixXd g(d, d);
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d; ++c) g(r, c) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR();
  for (std::size_t c = 0; c < d; ++c) {
    if (r(c, c) < 0) q.col(c) *= -1.0;
  }
  return q;
}

struct Latent {
  std::vector<double> z;
  std::vector<std::vector<double>> layer_noise;  // concept coordinates only
  std::vector<double> post;                      // added after the layer scaling; synonym jitter
};

class WorldBuilder {
 public:
  WorldBuilder(const WorldParams& p, const Warn& warn) : p_(p), rng_(p.seed) {
    const std::size_t d = p.d_model;
    const std::size_t k = p.n_true_concepts;
    for (std::size_t l = 0; l < p.num_layers; ++l) {
      rotations_.push_back(random_rotation(d, rng_));
      Eigen::VectorXd bias(d);
      for (std::size_t i = 0; i < d; ++i) bias(i) = rng_.normal(0.0, p.bias_scale);
      biases_.push_back(bias);
      std::vector<double> scale(k);
      for (auto& x : scale) x = std::exp(rng_.normal(0.0, p.layer_scale_jitter));
      scales_.push_back(std::move(scale));
    }

    means_ = p.cluster_means;
    if (means_.empty()) {
      means_ = Matrix(p.num_clusters, d);
      // Topic 0 stays at the origin: the common, central topic.
      for (std::size_t t = 1; t < p.num_clusters; ++t) {
        std::vector<double> v(p.topic_dims);
        double norm = 0.0;
        for (auto& x : v) {
          x = rng_.normal();
          norm += x * x;
        }
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < p.topic_dims; ++j) means_(t, j) = v[j] / norm * p.cluster_scale;
      }
      // Centre the other topics so a topic-balanced calibration set sits near the origin.
      for (std::size_t j = 0; j < p.topic_dims && p.num_clusters > 1; ++j) {
        double mean = 0.0;
        for (std::size_t t = 1; t < p.num_clusters; ++t) mean += means_(t, j);
        mean /= static_cast<double>(p.num_clusters - 1);
        for (std::size_t t = 1; t < p.num_clusters; ++t) means_(t, j) -= mean;
      }
    }

    invalid_offset_ = p.invalid_offset;
    if (invalid_offset_.empty()) {
      invalid_offset_ = complement_direction(p.invalid_offset_norm);
    } else {
      double leak = 0.0;
      for (std::size_t j = 0; j < k; ++j) leak += invalid_offset_[j] * invalid_offset_[j];
      if (leak > 0.0) {
        if (warn) warn("invalid_offset has a component inside the concept span; projecting it out");
        std::fill(invalid_offset_.begin(), invalid_offset_.begin() + static_cast<std::ptrdiff_t>(k), 0.0);
      }
    }
    template_ = complement_direction(p.template_norm);

    // Attack patterns: fixed signed groups of low-variance concept coordinates,
    // disjoint while the coordinates last.
    std::vector<std::size_t> tail;
    for (std::size_t j = p.topic_dims; j < k; ++j) tail.push_back(j);
    rng_.shuffle(tail);
    std::size_t next = 0;
    for (std::size_t a = 0; a < p.jailbreak_patterns; ++a) {
      std::vector<std::pair<std::size_t, double>> pattern;
      for (std::size_t i = 0; i < p.jailbreak_dims; ++i) {
        if (next == tail.size()) next = 0;
        pattern.emplace_back(tail[next++], rng_.uniform() < 0.5 ? -1.0 : 1.0);
      }
      patterns_.push_back(std::move(pattern));
    }
    // Minor concepts of ordinary prompts avoid the attack coordinates.
    std::set<std::size_t> used;
    for (const auto& pattern : patterns_) {
      for (const auto& entry : pattern) used.insert(entry.first);
    }
    for (std::size_t j = p.topic_dims; j < k; ++j) {
      if (!used.contains(j)) minor_dims_.push_back(j);
    }

    // Topic coordinates share one spread; the remaining coordinates decay
    // geometrically so their variances stay distinct and PCA recovers them
    // as individual directions.
    const std::size_t tail_count = k - p.topic_dims;
    for (std::size_t j = 0; j < k; ++j) {
      if (j < p.topic_dims) {
        spread_.push_back(p.cluster_spread);
        continue;
      }
      const std::size_t t = j - p.topic_dims;
      const double frac = tail_count > 1 ? static_cast<double>(t) / static_cast<double>(tail_count - 1) : 0.0;
      spread_.push_back(p.cluster_spread * std::pow(p.spread_floor, frac));
    }
    double total = 0.0;
    for (std::size_t t = 0; t < p.num_clusters; ++t) {
      total += 1.0 / std::pow(static_cast<double>(t + 1), p.zipf_exponent);
      zipf_cdf_.push_back(total);
    }
    for (auto& c : zipf_cdf_) c /= total;
  }

  ActivationDump build() {
    std::vector<PromptMeta> metas;
    std::vector<Latent> points;
    auto emit = [&](std::string id, PromptLabel label, std::string source, Latent latent) {
      PromptMeta m;
      m.digest = text_digest(id);
      m.id = std::move(id);
      m.label = label;
      m.source = std::move(source);
      metas.push_back(std::move(m));
      points.push_back(std::move(latent));
    };

    const auto jb_cal = static_cast<std::size_t>(
        std::llround(p_.calibration_jailbreak_fraction * static_cast<double>(p_.num_calibration)));
    for (std::size_t i = 0; i < p_.num_calibration; ++i) {
      // Calibration jailbreak exemplars are pure attack patterns on the central topic.
      const bool exemplar = i >= p_.num_calibration - jb_cal;
      std::vector<double> c = topic_point(exemplar ? 0 : i % p_.num_clusters);
      if (exemplar) boost(c, patterns_[i % patterns_.size()]);
      emit(padded_id("cal", i), PromptLabel::calibration, "synthetic:calibration", finish(c, {}, 0.0));
    }

    std::vector<std::size_t> normal_slots;
    for (std::size_t i = 0; i < p_.num_normal; ++i) {
      normal_slots.push_back(points.size());
      emit(padded_id("nrm", i), PromptLabel::normal, "synthetic:normal", finish(normal_concept(), {}, 0.0));
    }
    for (std::size_t i = 0; i < p_.num_normal; ++i) {
      const std::size_t parent = normal_slots[i];
      Latent child = points[parent];
      std::vector<double> dir(p_.d_model);
      double norm = 0.0;
      for (auto& x : dir) {
        x = rng_.normal();
        norm += x * x;
      }
      norm = std::sqrt(norm);
      // Stay strictly inside the radius so float storage cannot push a clone past it.
      const double radius = p_.synonym_jitter * rng_.uniform(0.2, 0.95);
      child.post.assign(p_.d_model, 0.0);
      for (std::size_t j = 0; j < p_.d_model; ++j) child.post[j] = dir[j] / norm * radius;
      emit(padded_id("syn", i), PromptLabel::synonym, std::string(kSynonymPrefix) + metas[parent].id,
           std::move(child));
    }

    for (std::size_t i = 0; i < p_.num_invalid; ++i) {
      // A faint echo of the most common non-central topic.
      std::vector<double> c = topic_point(std::min<std::size_t>(1, p_.num_clusters - 1));
      for (auto& x : c) x *= p_.invalid_concept_scale;
      emit(padded_id("inv", i), PromptLabel::invalid, "synthetic:invalid",
           finish(c, invalid_offset_, p_.invalid_spread));
    }
    for (std::size_t i = 0; i < p_.num_jailbreak_success; ++i) {
      std::vector<double> c = normal_concept();
      boost(c, patterns_[rng_.index(patterns_.size())]);
      add_minor_concepts(c, p_.jailbreak_extra_concepts);
      emit(padded_id("jbs", i), PromptLabel::jailbreak_success, "synthetic:jailbreak", finish(c, template_, 0.0));
    }
    for (std::size_t i = 0; i < p_.num_jailbreak_fail; ++i) {
      emit(padded_id("jbf", i), PromptLabel::jailbreak_fail, "synthetic:jailbreak",
           finish(normal_concept(), template_, 0.0));
    }

    const std::size_t d = p_.d_model;
    const std::size_t layers = p_.num_layers;
    std::vector<float> tensor(points.size() * layers * d);
    parallel_for(points.size(), [&](std::size_t i) {
      for (std::size_t l = 0; l < layers; ++l) {
        Eigen::VectorXd z(d);
        const Latent& pt = points[i];
        for (std::size_t j = 0; j < d; ++j) z(j) = pt.z[j];
        for (std::size_t j = 0; j < scales_[l].size(); ++j) z(j) = z(j) * scales_[l][j] + pt.layer_noise[l][j];
        if (!pt.post.empty()) {
          for (std::size_t j = 0; j < d; ++j) z(j) += pt.post[j];
        }
        const Eigen::VectorXd h = rotations_[l] * z + biases_[l];
        float* out = tensor.data() + (i * layers + l) * d;
        for (std::size_t j = 0; j < d; ++j) out[j] = static_cast<float>(h(j));
      }
    });
    return ActivationDump(p_.layers(), d, std::move(metas), std::move(tensor));
  }

 private:
  std::vector<double> complement_direction(double norm) {
    std::vector<double> v(p_.d_model, 0.0);
    double n2 = 0.0;
    for (std::size_t j = p_.n_true_concepts; j < p_.d_model; ++j) {
      v[j] = rng_.normal();
      n2 += v[j] * v[j];
    }
    const double scale = n2 > 0.0 ? norm / std::sqrt(n2) : 0.0;
    for (auto& x : v) x *= scale;
    return v;
  }

  std::vector<double> topic_point(std::size_t topic) {
    std::vector<double> c(p_.n_true_concepts);
    for (std::size_t j = 0; j < c.size(); ++j) c[j] = means_(topic, j) + rng_.normal(0.0, spread_[j]);
    return c;
  }

  std::vector<double> normal_concept() {
    const double u = rng_.uniform();
    const auto topic = static_cast<std::size_t>(std::lower_bound(zipf_cdf_.begin(), zipf_cdf_.end(), u) -
                                                zipf_cdf_.begin());
    std::vector<double> c = topic_point(std::min(topic, p_.num_clusters - 1));
    if (rng_.uniform() < p_.boundary_fraction && p_.num_clusters > 1) {
      // Halfway towards another topic: between clusters rather than inside one.
      std::size_t other = rng_.index(p_.num_clusters - 1);
      if (other >= topic) ++other;
      for (std::size_t j = 0; j < c.size(); ++j) c[j] += 0.5 * (means_(other, j) - means_(topic, j));
    }
    // Occasional minor concepts on the low-variance coordinates (Poisson count).
    const double draw = rng_.uniform();
    double mass = std::exp(-p_.minor_concept_rate);
    double cdf = mass;
    std::size_t count = 0;
    while (draw > cdf && count < 8) {
      ++count;
      mass *= p_.minor_concept_rate / static_cast<double>(count);
      cdf += mass;
    }
    add_minor_concepts(c, count);
    return c;
  }

  void add_minor_concepts(std::vector<double>& c, std::size_t count) {
    for (std::size_t i = 0; i < count && !minor_dims_.empty(); ++i) {
      const std::size_t j = minor_dims_[rng_.index(minor_dims_.size())];
      c[j] += (rng_.uniform() < 0.5 ? -1.0 : 1.0) * p_.minor_concept_scale * rng_.uniform(0.6, 1.2);
    }
  }

  void boost(std::vector<double>& c, const std::vector<std::pair<std::size_t, double>>& pattern) const {
    for (const auto& [j, sign] : pattern) c[j] += sign * p_.jailbreak_boost;
  }

  Latent finish(const std::vector<double>& coords, const std::vector<double>& offset, double offset_spread) {
    Latent out;
    out.z.assign(p_.d_model, 0.0);
    for (std::size_t j = 0; j < coords.size(); ++j) out.z[j] = coords[j];
    for (std::size_t j = p_.n_true_concepts; j < p_.d_model; ++j) {
      out.z[j] = rng_.normal(0.0, p_.off_subspace_noise);
      if (!offset.empty()) out.z[j] += offset[j] + rng_.normal(0.0, offset_spread);
    }
    out.layer_noise.resize(p_.num_layers, std::vector<double>(p_.n_true_concepts));
    for (auto& layer : out.layer_noise) {
      for (auto& x : layer) x = rng_.normal(0.0, p_.layer_noise);
    }
    return out;
  }

  const WorldParams& p_;
  Rng rng_;
  std::vector<Eigen::MatrixXd> rotations_;
  std::vector<Eigen::VectorXd> biases_;
  std::vector<std::vector<double>> scales_;
  Matrix means_;
  std::vector<double> invalid_offset_;
  std::vector<double> template_;
  std::vector<std::vector<std::pair<std::size_t, double>>> patterns_;
  std::vector<std::size_t> minor_dims_;
  std::vector<double> spread_;
  std::vector<double> zipf_cdf_;
};

}  // namespace

void WorldParams::validate() const {
  if (d_model == 0 || num_layers == 0) throw ValidationError("world needs d_model > 0 and at least one layer");
  if (n_true_concepts == 0 || n_true_concepts > d_model) {
    throw ValidationError("n_true_concepts must be in [1, d_model]");
  }
  if (topic_dims == 0 || topic_dims >= n_true_concepts) {
    throw ValidationError("topic_dims must be in [1, n_true_concepts)");
  }
  if (!(boundary_fraction >= 0.0 && boundary_fraction <= 1.0)) {
    throw ValidationError("boundary_fraction must lie in [0, 1]");
  }
  if (!(synonym_jitter >= 0.0 && synonym_jitter < cluster_spread)) {
    throw ValidationError("synonym_jitter must be non-negative and below cluster_spread");
  }
  if (!(calibration_jailbreak_fraction >= 0.0 && calibration_jailbreak_fraction <= 1.0)) {
    throw ValidationError("calibration_jailbreak_fraction must lie in [0, 1]");
  }
  if (!cluster_means.empty() && cluster_means.cols() != d_model) {
    throw ValidationError("cluster_means must have d_model columns");
  }
  if (cluster_means.empty() && num_clusters == 0) throw ValidationError("num_clusters must be positive");
  if (!invalid_offset.empty() && invalid_offset.size() != d_model) {
    throw ValidationError("invalid_offset must have d_model entries");
  }
  if (jailbreak_patterns == 0 || jailbreak_dims == 0) {
    throw ValidationError("jailbreak_patterns and jailbreak_dims must be positive");
  }
  if (!(minor_concept_rate >= 0.0)) throw ValidationError("minor_concept_rate must be non-negative");
  if (num_calibration == 0) throw ValidationError("num_calibration must be positive");
}

std::vector<int> WorldParams::layers() const {
  std::vector<int> out;
  for (std::size_t l = 0; l < num_layers; ++l) out.push_back(first_layer + static_cast<int>(l));
  return out;
}

nlohmann::json to_json(const WorldParams& p) {
  nlohmann::json j;
  j["seed"] = p.seed;
  j["d_model"] = p.d_model;
  j["num_layers"] = p.num_layers;
  j["first_layer"] = p.first_layer;
  j["n_true_concepts"] = p.n_true_concepts;
  j["topic_dims"] = p.topic_dims;
  j["cluster_means"] = nlohmann::json::array();
  for (std::size_t r = 0; r < p.cluster_means.rows(); ++r) {
    auto row = p.cluster_means.row(r);
    j["cluster_means"].push_back(std::vector<double>(row.begin(), row.end()));
  }
  j["num_clusters"] = p.num_clusters;
  j["cluster_scale"] = p.cluster_scale;
  j["cluster_spread"] = p.cluster_spread;
  j["spread_floor"] = p.spread_floor;
  j["zipf_exponent"] = p.zipf_exponent;
  j["boundary_fraction"] = p.boundary_fraction;
  j["minor_concept_rate"] = p.minor_concept_rate;
  j["minor_concept_scale"] = p.minor_concept_scale;
  j["synonym_jitter"] = p.synonym_jitter;
  j["invalid_offset"] = p.invalid_offset;
  j["invalid_offset_norm"] = p.invalid_offset_norm;
  j["invalid_spread"] = p.invalid_spread;
  j["invalid_concept_scale"] = p.invalid_concept_scale;
  j["jailbreak_boost"] = p.jailbreak_boost;
  j["jailbreak_dims"] = p.jailbreak_dims;
  j["jailbreak_patterns"] = p.jailbreak_patterns;
  j["jailbreak_extra_concepts"] = p.jailbreak_extra_concepts;
  j["template_norm"] = p.template_norm;
  j["calibration_jailbreak_fraction"] = p.calibration_jailbreak_fraction;
  j["off_subspace_noise"] = p.off_subspace_noise;
  j["layer_noise"] = p.layer_noise;
  j["layer_scale_jitter"] = p.layer_scale_jitter;
  j["bias_scale"] = p.bias_scale;
  j["num_calibration"] = p.num_calibration;
  j["num_normal"] = p.num_normal;
  j["num_invalid"] = p.num_invalid;
  j["num_jailbreak_success"] = p.num_jailbreak_success;
  j["num_jailbreak_fail"] = p.num_jailbreak_fail;
  return j;
}

WorldParams parse_world_params(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("world params must be a JSON object");
  WorldParams p;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("seed", p.seed);
    get("d_model", p.d_model);
    get("num_layers", p.num_layers);
    get("first_layer", p.first_layer);
    get("n_true_concepts", p.n_true_concepts);
    get("topic_dims", p.topic_dims);
    if (j.contains("cluster_means")) {
      for (const auto& row : j.at("cluster_means")) p.cluster_means.append_row(row.get<std::vector<double>>());
      if (!p.cluster_means.empty()) p.num_clusters = p.cluster_means.rows();
    }
    get("num_clusters", p.num_clusters);
    get("cluster_scale", p.cluster_scale);
    get("cluster_spread", p.cluster_spread);
    get("spread_floor", p.spread_floor);
    get("zipf_exponent", p.zipf_exponent);
    get("boundary_fraction", p.boundary_fraction);
    get("minor_concept_rate", p.minor_concept_rate);
    get("minor_concept_scale", p.minor_concept_scale);
    get("synonym_jitter", p.synonym_jitter);
    get("invalid_offset", p.invalid_offset);
    get("invalid_offset_norm", p.invalid_offset_norm);
    get("invalid_spread", p.invalid_spread);
    get("invalid_concept_scale", p.invalid_concept_scale);
    get("jailbreak_boost", p.jailbreak_boost);
    get("jailbreak_dims", p.jailbreak_dims);
    get("jailbreak_patterns", p.jailbreak_patterns);
    get("jailbreak_extra_concepts", p.jailbreak_extra_concepts);
    get("template_norm", p.template_norm);
    get("calibration_jailbreak_fraction", p.calibration_jailbreak_fraction);
    get("off_subspace_noise", p.off_subspace_noise);
    get("layer_noise", p.layer_noise);
    get("layer_scale_jitter", p.layer_scale_jitter);
    get("bias_scale", p.bias_scale);
    get("num_calibration", p.num_calibration);
    get("num_normal", p.num_normal);
    get("num_invalid", p.num_invalid);
    get("num_jailbreak_success", p.num_jailbreak_success);
    get("num_jailbreak_fail", p.num_jailbreak_fail);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad world params: ") + e.what());
  }
  if (!p.cluster_means.empty() && p.cluster_means.rows() != p.num_clusters) {
    throw ValidationError("num_clusters disagrees with cluster_means");
  }
  p.validate();
  return p;
}

WorldParams load_world_params(const std::filesystem::path& file) {
  return parse_world_params(parse_json_file(file));
}

ActivationDump generate_world(const WorldParams& params, const Warn& warn) {
  params.validate();
  WorldBuilder builder(params, warn);
  return builder.build();
}

std::string synonym_parent(const PromptMeta& meta) {
  if (meta.label != PromptLabel::synonym || !meta.source.starts_with(kSynonymPrefix)) return {};
  return meta.source.substr(kSynonymPrefix.size());
}

std::string_view name_of(SuiteKind kind) {
  switch (kind) {
    case SuiteKind::p: return "S_P";
    case SuiteKind::e: return "S_E";
    case SuiteKind::rs: return "S_RS";
    case SuiteKind::ri: return "S_RI";
    case SuiteKind::ja: return "S_JA";
    case SuiteKind::rs_star: return "S*_RS";
    case SuiteKind::ri_star: return "S*_RI";
    case SuiteKind::ja_star: return "S*_JA";
  }
  return "?";
}

SuiteKind parse_suite_kind(std::string_view name) {
  for (SuiteKind k : kAllSuiteKinds) {
    if (name_of(k) == name) return k;
  }
  throw ValidationError("unknown suite kind '" + std::string(name) + "'");
}

const TestSuite& SuiteFamily::get(SuiteKind kind) const {
  switch (kind) {
    case SuiteKind::p: return s_p;
    case SuiteKind::e: return s_e;
    case SuiteKind::rs: return s_rs;
    case SuiteKind::ri: return s_ri;
    case SuiteKind::ja: return s_ja;
    case SuiteKind::rs_star: return s_rs_star;
    case SuiteKind::ri_star: return s_ri_star;
    case SuiteKind::ja_star: return s_ja_star;
  }
  return s_p;
}

TestSuite& SuiteFamily::get(SuiteKind kind) {
  return const_cast<TestSuite&>(static_cast<const SuiteFamily&>(*this).get(kind));
}

namespace {

std::vector<std::string> ids_with_label(const ActivationDump& dump, PromptLabel label) {
  std::vector<std::string> out;
  for (std::size_t r : dump.rows_with_label(label)) out.push_back(dump.prompt(r).id);
  return out;
}

std::vector<std::string> take(std::vector<std::string>& pool, std::size_t n, std::string_view what) {
  if (pool.size() < n) {
    throw ValidationError("not enough " + std::string(what) + " prompts: need " + std::to_string(n) + ", have " +
                          std::to_string(pool.size()));
  }
  std::vector<std::string> out(pool.end() - static_cast<std::ptrdiff_t>(n), pool.end());
  pool.resize(pool.size() - n);
  return out;
}

std::map<std::string, std::vector<std::string>> synonyms_by_parent(const ActivationDump& dump) {
  std::map<std::string, std::vector<std::string>> out;
  for (std::size_t r : dump.rows_with_label(PromptLabel::synonym)) {
    const auto parent = synonym_parent(dump.prompt(r));
    if (!parent.empty()) out[parent].push_back(dump.prompt(r).id);
  }
  return out;
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

SuiteFamily build_suite_family(const ActivationDump& dump, std::size_t size_base, std::size_t n_extra,
                               std::uint64_t seed) {
  if (n_extra > size_base) throw ValidationError("n_extra may not exceed size_base");
  Rng rng(seed);
  const auto syn = synonyms_by_parent(dump);

  std::vector<std::string> with_syn, without_syn;
  for (auto& id : ids_with_label(dump, PromptLabel::normal)) {
    (syn.contains(id) ? with_syn : without_syn).push_back(std::move(id));
  }
  rng.shuffle(with_syn);
  const std::vector<std::string> s_p = take(with_syn, size_base, "normal prompts with synonyms");
  std::vector<std::string> fresh = concat(std::move(with_syn), without_syn);
  std::sort(fresh.begin(), fresh.end());
  rng.shuffle(fresh);
  const auto extra_normal = take(fresh, n_extra, "normal");

  auto invalid = ids_with_label(dump, PromptLabel::invalid);
  rng.shuffle(invalid);
  auto jailbreak = ids_with_label(dump, PromptLabel::jailbreak_success);
  rng.shuffle(jailbreak);
  const auto extra_invalid = take(invalid, n_extra, "invalid");
  const auto extra_jailbreak = take(jailbreak, n_extra, "jailbreak_success");

  auto synonym_of = [&](const std::string& parent) {
    const auto& clones = syn.at(parent);
    return clones[rng.index(clones.size())];
  };

  // Additive synonyms rephrase n_extra members of s_p.
  std::vector<std::size_t> order(size_base);
  for (std::size_t i = 0; i < size_base; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::string> extra_synonym;
  for (std::size_t i = 0; i < n_extra; ++i) extra_synonym.push_back(synonym_of(s_p[order[i]]));

  // Replacement variants drop the same members; synonyms clone members that stay.
  rng.shuffle(order);
  std::vector<bool> dropped(size_base, false);
  for (std::size_t i = 0; i < n_extra; ++i) dropped[order[i]] = true;
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < size_base; ++i) {
    if (!dropped[i]) kept.push_back(s_p[i]);
  }
  std::vector<std::string> kept_synonym;
  for (std::size_t i = n_extra; i < 2 * n_extra && i < size_base; ++i) {
    kept_synonym.push_back(synonym_of(s_p[order[i]]));
  }
  if (kept_synonym.size() < n_extra) throw ValidationError("suite too small for synonym replacement");

  auto make = [](std::string name, std::vector<std::string> members) {
    TestSuite s;
    s.name = std::move(name);
    s.members = std::move(members);
    return s;
  };
  SuiteFamily f;
  f.size_base = size_base;
  f.n_extra = n_extra;
  f.s_p = make("S_P", s_p);
  f.s_e = make("S_E", concat(s_p, extra_normal));
  f.s_rs = make("S_RS", concat(s_p, extra_synonym));
  f.s_ri = make("S_RI", concat(s_p, extra_invalid));
  f.s_ja = make("S_JA", concat(s_p, extra_jailbreak));
  f.s_rs_star = make("S*_RS", concat(kept, kept_synonym));
  f.s_ri_star = make("S*_RI", concat(kept, extra_invalid));
  f.s_ja_star = make("S*_JA", concat(kept, extra_jailbreak));
  return f;
}

bool TendencyResult::strict_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const TendencyCheck& c) { return c.strict; });
}

bool TendencyResult::relaxed_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const TendencyCheck& c) { return c.relaxed; });
}

TendencyResult check_tendencies(const FamilyValues& values, Criterion criterion, double tol_approx) {
  if (!(tol_approx >= 0.0)) throw ValidationError("tol_approx must be non-negative");
  auto s = [&](SuiteKind k) {
    auto it = values.find(k);
    if (it == values.end()) throw ValidationError("missing suite " + std::string(name_of(k)));
    return it->second[criterion];
  };
  const double p = s(SuiteKind::p);
  const double slack = tol_approx * std::abs(p);

  TendencyResult out;
  out.criterion = criterion;
  auto greater = [&](SuiteKind a, SuiteKind b) {
    TendencyCheck c;
    c.name = std::string(name_of(a)) + ">" + std::string(name_of(b));
    c.lhs = s(a);
    c.rhs = s(b);
    c.strict = c.lhs > c.rhs;
    c.relaxed = c.lhs >= c.rhs - slack;
    out.checks.push_back(std::move(c));
  };
  auto near = [&](SuiteKind a) {
    TendencyCheck c;
    c.name = std::string(name_of(a)) + "~S_P";
    c.approx = true;
    c.lhs = s(a);
    c.rhs = p;
    c.strict = c.relaxed = std::abs(c.lhs - p) <= slack;
    out.checks.push_back(std::move(c));
  };
  greater(SuiteKind::ja_star, SuiteKind::p);
  greater(SuiteKind::p, SuiteKind::ri_star);
  greater(SuiteKind::p, SuiteKind::rs_star);
  greater(SuiteKind::ja, SuiteKind::e);
  greater(SuiteKind::e, SuiteKind::ri);
  greater(SuiteKind::e, SuiteKind::rs);
  near(SuiteKind::ri);
  near(SuiteKind::rs);
  return out;
}

bool tendencies_hold(std::span<const TendencyResult> results, std::size_t min_strict,
                     std::span<const Criterion> exempt) {
  std::size_t strict = 0;
  std::size_t counted = 0;
  for (const auto& r : results) {
    if (std::find(exempt.begin(), exempt.end(), r.criterion) != exempt.end()) continue;
    ++counted;
    if (!r.relaxed_pass()) return false;
    if (r.strict_pass()) ++strict;
  }
  return strict >= std::min(min_strict, counted);
}

FamilyValues evaluate_family(const ConceptSpace& space, const ActivationDump& dump, const SuiteFamily& family,
                             const CoverageConfig& cfg) {
  std::vector<CriterionValues> slots(kAllSuiteKinds.size());
  parallel_for(slots.size(), [&](std::size_t i) {
    slots[i] = evaluate_suite(space, dump, family.get(kAllSuiteKinds[i]), cfg);
  });
  FamilyValues out;
  for (std::size_t i = 0; i < slots.size(); ++i) out[kAllSuiteKinds[i]] = slots[i];
  return out;
}

FilterResult prioritize(const ConceptSpace& space, const ActivationDump& dump, const CoverageConfig& cfg,
                        const TestSuite& current, std::span<const std::string> pool, EnsembleMetric metric,
                        double tau) {
  IncrementalCoverage state(space, dump, cfg);
  for (std::size_t row : resolve_suite(dump, current)) state.add(row);
  std::vector<std::size_t> rows;
  for (const auto& id : pool) rows.push_back(dump.row_of(id));

  FilterResult out;
  CriterionValues now = state.values();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const CriterionValues next = state.values_with(rows[i]);
    const double gain = pick(compare_values(now, next).ensembles, metric);
    out.gains.push_back(gain);
    if (gain > tau) {
      state.add(rows[i]);
      now = next;
      out.accepted.push_back(pool[i]);
    }
  }
  return out;
}

double label_share(const ActivationDump& dump, std::span<const std::string> ids, PromptLabel label) {
  if (ids.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& id : ids) hits += dump.prompt(dump.row_of(id)).label == label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ids.size());
}

AttackSample attack_sample(const ConceptSpace& space, const ActivationDump& dump, const CoverageConfig& cfg,
                           const TestSuite& current, std::span<const std::string> pool, EnsembleMetric metric,
                           double tau) {
  AttackSample out;
  out.filter = prioritize(space, dump, cfg, current, pool, metric, tau);
  out.asr = label_share(dump, out.filter.accepted, PromptLabel::jailbreak_success);
  return out;
}

Rq2Setup build_rq2_setup(const ActivationDump& dump, std::size_t base_size, std::size_t pool_size,
                         std::size_t attack_size, std::uint64_t seed) {
  Rng rng(seed);
  const auto syn = synonyms_by_parent(dump);
  std::vector<std::string> with_syn, without_syn;
  for (auto& id : ids_with_label(dump, PromptLabel::normal)) {
    (syn.contains(id) ? with_syn : without_syn).push_back(std::move(id));
  }
  rng.shuffle(with_syn);

  Rq2Setup out;
  out.base.name = "base";
  out.base.members = take(with_syn, base_size, "normal prompts with synonyms");

  const std::size_t n_normal = pool_size / 2;
  const std::size_t n_invalid = pool_size / 10;
  const std::size_t n_synonym = pool_size - n_normal - n_invalid;

  std::vector<std::string> fresh = concat(std::move(with_syn), without_syn);
  std::sort(fresh.begin(), fresh.end());
  rng.shuffle(fresh);
  out.prior_pool = take(fresh, n_normal, "normal");

  std::vector<std::string> parents = out.base.members;
  rng.shuffle(parents);
  if (parents.size() < n_synonym) throw ValidationError("base too small for the synonym share of the pool");
  for (std::size_t i = 0; i < n_synonym; ++i) {
    const auto& clones = syn.at(parents[i]);
    out.prior_pool.push_back(clones[rng.index(clones.size())]);
  }
  auto invalid = ids_with_label(dump, PromptLabel::invalid);
  rng.shuffle(invalid);
  out.prior_pool = concat(std::move(out.prior_pool), take(invalid, n_invalid, "invalid"));
  rng.shuffle(out.prior_pool);

  auto success = ids_with_label(dump, PromptLabel::jailbreak_success);
  auto fail = ids_with_label(dump, PromptLabel::jailbreak_fail);
  rng.shuffle(success);
  rng.shuffle(fail);
  const std::size_t n_success = attack_size / 2;
  out.attack_pool = take(success, n_success, "jailbreak_success");
  out.attack_pool = concat(std::move(out.attack_pool), take(fail, attack_size - n_success, "jailbreak_fail"));
  rng.shuffle(out.attack_pool);
  return out;
}

SweepGrid parse_sweep_grid(const nlohmann::json& j) {
  SweepGrid g;
  if (!j.is_object()) throw ValidationError("sweep grid must be a JSON object");
  try {
    auto get = [&](const char* key, std::vector<double>& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("epsilon_sfc", g.epsilon_sfc);
    get("topk", g.topk);
    get("bins", g.bins);
    get("clusters", g.clusters);
    get("epsilon_pcc", g.epsilon_pcc);
    get("delta", g.delta);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad sweep grid: ") + e.what());
  }
  return g;
}

namespace {

std::size_t as_count(double v, const char* what) {
  if (!(v >= 1.0) || v != std::floor(v)) {
    throw ValidationError(std::string(what) + " grid values must be positive integers");
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

std::vector<SweepPoint> sensitivity_sweep(const ActivationDump& dump, const SuiteFamily& family,
                                          const FitParams& fit, const CoverageConfig& cfg, const SweepGrid& grid,
                                          double tol_approx) {
  struct Run {
    std::string param;
    double value;
    CoverageConfig cfg;
    std::size_t clusters;
  };
  std::vector<Run> runs;
  for (double v : grid.epsilon_sfc) {
    Run r{"epsilon_sfc", v, cfg, fit.clusters};
    r.cfg.individual.epsilon_sfc = v;
    runs.push_back(r);
  }
  for (double v : grid.topk) {
    Run r{"topk", v, cfg, fit.clusters};
    r.cfg.individual.topk = as_count(v, "topk");
    runs.push_back(r);
  }
  for (double v : grid.bins) {
    Run r{"bins", v, cfg, fit.clusters};
    r.cfg.individual.bins = as_count(v, "bins");
    runs.push_back(r);
  }
  for (double v : grid.clusters) runs.push_back({"clusters", v, cfg, as_count(v, "clusters")});
  for (double v : grid.epsilon_pcc) {
    Run r{"epsilon_pcc", v, cfg, fit.clusters};
    r.cfg.compositional.epsilon_pcc = v;
    runs.push_back(r);
  }
  for (double v : grid.delta) {
    Run r{"delta", v, cfg, fit.clusters};
    r.cfg.compositional.delta = v;
    runs.push_back(r);
  }

  std::map<std::size_t, ConceptSpace> spaces;
  for (const auto& r : runs) {
    if (spaces.contains(r.clusters)) continue;
    FitParams f = fit;
    f.clusters = r.clusters;
    spaces.emplace(r.clusters, fit_concept_space(dump, f));
  }

  std::vector<SweepPoint> out(runs.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto values = evaluate_family(spaces.at(runs[i].clusters), dump, family, runs[i].cfg);
    out[i].param = runs[i].param;
    out[i].value = runs[i].value;
    for (Criterion c : kRacaCriteria) out[i].results.push_back(check_tendencies(values, c, tol_approx));
  }
  return out;
}

std::string sweep_csv(std::span<const SweepPoint> points) {
  std::string out = "param,value,criterion,chain,passed\n";
  for (const auto& p : points) {
    const std::string prefix = p.param + "," + nlohmann::json(p.value).dump() + ",";
    for (const auto& r : p.results) {
      const std::string crit = std::string(name_of(r.criterion)) + ",";
      for (const auto& c : r.checks) out += prefix + crit + c.name + "," + (c.strict ? "1" : "0") + "\n";
      out += prefix + crit + "relaxed," + (r.relaxed_pass() ? "1" : "0") + "\n";
      out += prefix + crit + "strict," + (r.strict_pass() ? "1" : "0") + "\n";
    }
  }
  return out;
}

}  // namespace raca
