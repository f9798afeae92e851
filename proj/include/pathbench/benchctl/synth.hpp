#pragma once

#include <cmath>
#include <numbers>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathbench/benchctl/registry.hpp"
#include "pathbench/benchctl/store.hpp"
#include "pathbench/embstore/embeddings.hpp"
#include "pathbench/embstore/manifest.hpp"
#include "pathbench/embstore/model_card.hpp"
#include "pathbench/errors.hpp"
#include "pathbench/numkit/rng.hpp"

namespace pathbench::benchctl {

enum class SynthKind { GaussianClassification, LinearRegression, MilBags };

inline std::string_view to_string(SynthKind k) {
  switch (k) {
    case SynthKind::GaussianClassification: return "gaussian-classification";
    case SynthKind::LinearRegression: return "linear-regression";
    case SynthKind::MilBags: return "mil-bags";
  }
  return "?";
}

/**
 * gaussian-classification: `classes` Gaussian clusters with covariance
 *   noise^2 I. Two classes sit at -/+ separation * e1, more classes at
 *   separation * e_c. `train`/`val`/`test` items; item i is in patient
 *   i % patients (or its own patient when patients = 0).
 * linear-regression: latent x ~ N(0, I), 50 targets y = x W + noise * eps,
 *   `patients` x `spots_per_patient` spots.
 * mil-bags: `train`/`val`/`test` bags of `instances` instances; each instance
 *   is a witness with probability `witness_rate`. Witnesses sit at
 *   separation * e1, the others at the origin, plus noise * N(0, I). A bag is
 *   positive when it holds a witness.
 */
struct SynthSpec {
  SynthKind kind = SynthKind::GaussianClassification;
  std::string dataset_id;
  std::size_t dim = 16;
  std::size_t classes = 2;
  double separation = 4.0;
  double noise = 1.0;
  std::size_t train = 0, val = 0, test = 0;
  std::size_t patients = 0;
  std::size_t spots_per_patient = 0;
  std::size_t instances = 20;
  double witness_rate = 0.3;
  std::uint64_t seed = 0;

  void validate() const {
    auto bad = [&](const std::string& what) { throw ConfigError("synth spec " + dataset_id + ": " + what); };
    if (dataset_id.empty()) throw ConfigError("synth spec: dataset_id is required");
    if (dim == 0) bad("dim must be positive");
    if (!(noise >= 0)) bad("noise must be non-negative");
    switch (kind) {
      case SynthKind::GaussianClassification:
        if (classes < 2) bad("need at least 2 classes");
        if (classes > 2 && classes > dim) bad("more classes than dimensions");
        if (!(separation > 0) || !(noise > 0)) bad("separation and noise must be positive");
        if (train + val + test < classes) bad("need at least one item per class");
        break;
      case SynthKind::LinearRegression:
        if (patients < 2 || spots_per_patient < 2) bad("need at least 2 patients with 2 spots each");
        break;
      case SynthKind::MilBags:
        if (instances == 0) bad("instances must be positive");
        if (!(witness_rate > 0 && witness_rate < 1)) bad("witness_rate must lie in (0, 1)");
        if (!(separation > 0) || !(noise > 0)) bad("separation and noise must be positive");
        if (train + val + test == 0) bad("need at least one bag");
        break;
    }
  }
};

/// How one synthetic backbone degrades the signal.
struct SynthModel {
  std::string model_id = "synthetic";
  double separation_scale = 1.0;  // classification and MIL
  double feature_noise = 0.0;     // regression: observed x = latent + feature_noise * N(0, I)
};

inline SynthSpec synth_spec_from_json(const json& j) {
  SynthSpec s;
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "gaussian-classification") s.kind = SynthKind::GaussianClassification;
    else if (kind == "linear-regression") s.kind = SynthKind::LinearRegression;
    else if (kind == "mil-bags") s.kind = SynthKind::MilBags;
    else throw ConfigError("synth spec: unknown kind '" + kind + "'");
    s.dataset_id = j.at("dataset_id").get<std::string>();
    s.dim = j.value("dim", s.dim);
    s.classes = j.value("classes", s.classes);
    if (j.contains("genes") && j.at("genes").get<std::size_t>() != embstore::kRegressionTargets)
      throw ConfigError("synth spec " + s.dataset_id + ": manifests carry exactly 50 genes");
    s.separation = j.value("separation", s.separation);
    s.noise = j.value("noise", s.noise);
    s.train = j.value("train", s.train);
    s.val = j.value("val", s.val);
    s.test = j.value("test", s.test);
    s.patients = j.value("patients", s.patients);
    s.spots_per_patient = j.value("spots_per_patient", s.spots_per_patient);
    s.instances = j.value("instances", s.instances);
    s.witness_rate = j.value("witness_rate", s.witness_rate);
    s.seed = j.value("seed", s.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Closed-form oracles

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/**
 * Bayes accuracy for equal-prior isotropic clusters at distance-to-boundary
 * `snr` (separation / noise). Two classes: Phi(snr). K orthogonal centres:
 * integral of phi(z) Phi(z + snr)^(K-1) dz (Simpson on [-12, 12]).
 */
inline double gaussian_bayes_accuracy(std::size_t classes, double snr) {
  if (classes == 2) return normal_cdf(snr);
  const int n = 4000;
  const double a = -12.0, h = 24.0 / n;
  double sum = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double z = a + i * h;
    const double f = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi) *
                     std::pow(normal_cdf(z + snr), static_cast<double>(classes - 1));
    sum += f * (i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0));
  }
  return sum * h / 3.0;
}

/// Probability that a bag of n instances holds at least one witness.
inline double mil_positive_rate(double witness_rate, std::size_t n) {
  return 1.0 - std::pow(1.0 - witness_rate, static_cast<double>(n));
}

/**
 * Balanced accuracy of the instance-threshold rule "positive iff some
 * instance has x1 above the midpoint", with `snr` the distance from either
 * cluster to the midpoint in noise units. Negative bags are right when all n
 * instances fall below; a positive bag with k witnesses is missed when all n
 * instances fall below.
 */
inline double mil_threshold_accuracy(double witness_rate, std::size_t n, double snr) {
  const double below_neg = normal_cdf(snr), below_wit = normal_cdf(-snr);
  const double tnr = std::pow(below_neg, static_cast<double>(n));
  double tp = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    const double log_binom = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(static_cast<double>(n - k) + 1.0);
    const double pk = std::exp(log_binom + k * std::log(witness_rate) + (n - k) * std::log1p(-witness_rate));
    tp += pk * (1.0 - std::pow(below_neg, static_cast<double>(n - k)) * std::pow(below_wit, static_cast<double>(k)));
  }
  return 0.5 * (tp / mil_positive_rate(witness_rate, n) + tnr);
}

// ---------------------------------------------------------------------------
// Generation

namespace detail {

inline embstore::EmbeddingMatrix empty_matrix(const std::string& model, const std::string& dataset, std::size_t rows,
                                              std::size_t dim) {
  embstore::EmbeddingMatrix m;
  m.model_id = model;
  m.dataset_id = dataset;
  m.items = numkit::Matrix(rows, dim);
  m.item_ids.reserve(rows);
  return m;
}

inline embstore::SplitTag tag_for(std::size_t i, const SynthSpec& s) {
  if (i < s.train) return embstore::SplitTag::Train;
  if (i < s.train + s.val) return embstore::SplitTag::Val;
  return embstore::SplitTag::Test;
}

}  // namespace detail

struct SynthOutput {
  embstore::DatasetManifest manifest;
  embstore::EmbeddingMatrix cls, mean;
  json oracle;
};

/**
 * Builds one dataset for one synthetic model. Labels, patients and latent
 * structure depend only on `spec.seed`, so every model shares one manifest;
 * observation noise is drawn from streams keyed by the model id. The mean
 * token matrix repeats the signal with independent noise.
 */
inline SynthOutput synth_build(const SynthSpec& spec, const SynthModel& model = {}) {
  spec.validate();
  using numkit::CounterRng;
  using numkit::stream_key;
  SynthOutput out;
  out.manifest.dataset_id = spec.dataset_id;
  CounterRng structure(stream_key(spec.seed, 1));
  const std::uint64_t model_key = stream_key(spec.seed, numkit::fnv1a64(model.model_id));
  CounterRng cls_noise(stream_key(model_key, 2)), mean_noise(stream_key(model_key, 3));
  const std::size_t d = spec.dim;
  out.oracle = {{"dataset_id", spec.dataset_id}, {"kind", to_string(spec.kind)}, {"model_id", model.model_id}};

  switch (spec.kind) {
    case SynthKind::GaussianClassification: {
      const std::size_t n = spec.train + spec.val + spec.test, k = spec.classes;
      const double s = spec.separation * model.separation_scale;
      out.manifest.task_kind = embstore::TaskKind::PatchClassification;
      out.cls = detail::empty_matrix(model.model_id, spec.dataset_id, n, d);
      out.mean = detail::empty_matrix(model.model_id, spec.dataset_id, n, d);
      std::vector<int> labels(n);
      for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % k);
      for (std::size_t part : {0, 1, 2}) {
        const std::size_t lo = part == 0 ? 0 : (part == 1 ? spec.train : spec.train + spec.val);
        const std::size_t hi = part == 0 ? spec.train : (part == 1 ? spec.train + spec.val : n);
        structure.shuffle(std::span<int>(labels.data() + lo, hi - lo));
      }
      for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        embstore::ManifestRecord r;
        r.item_id = spec.dataset_id + "_" + std::to_string(i);
        r.label = y;
        r.patient_id = "P" + std::to_string(spec.patients ? i % spec.patients : i);
        r.slide_id = r.patient_id;
        r.split = detail::tag_for(i, spec);
        out.manifest.records.push_back(r);
        for (auto* m : {&out.cls, &out.mean}) {
          auto& rng = m == &out.cls ? cls_noise : mean_noise;
          auto row = m->items.row(i);
          for (std::size_t j = 0; j < d; ++j) row[j] = static_cast<float>(spec.noise * rng.normal());
          if (k == 2) row[0] += static_cast<float>(y == 0 ? -s : s);
          else row[static_cast<std::size_t>(y)] += static_cast<float>(s);
          m->item_ids.push_back(r.item_id);
        }
      }
      const double snr = s / spec.noise;
      out.oracle["bayes_balanced_accuracy"] = {{"cls", gaussian_bayes_accuracy(k, snr)},
                                               {"cls_mean", gaussian_bayes_accuracy(k, std::sqrt(2.0) * snr)}};
      break;
    }
    case SynthKind::LinearRegression: {
      const std::size_t g = embstore::kRegressionTargets, n = spec.patients * spec.spots_per_patient;
      out.manifest.task_kind = embstore::TaskKind::Regression;
      numkit::MatrixD w(d, g);
      for (double& v : w.values()) v = structure.normal() / std::sqrt(static_cast<double>(d));
      out.cls = detail::empty_matrix(model.model_id, spec.dataset_id, n, d);
      out.mean = detail::empty_matrix(model.model_id, spec.dataset_id, n, d);
      std::vector<double> x(d);
      for (std::size_t i = 0; i < n; ++i) {
        for (double& v : x) v = structure.normal();
        embstore::ManifestRecord r;
        r.item_id = spec.dataset_id + "_" + std::to_string(i);
        r.patient_id = "P" + std::to_string(i / spec.spots_per_patient);
        r.slide_id = r.patient_id;
        r.targets.assign(g, 0.0);
        for (std::size_t t = 0; t < g; ++t) {
          for (std::size_t j = 0; j < d; ++j) r.targets[t] += x[j] * w(j, t);
          r.targets[t] += spec.noise * structure.normal();
        }
        out.manifest.records.push_back(r);
        for (auto* m : {&out.cls, &out.mean}) {
          auto& rng = m == &out.cls ? cls_noise : mean_noise;
          auto row = m->items.row(i);
          for (std::size_t j = 0; j < d; ++j) row[j] = static_cast<float>(x[j] + model.feature_noise * rng.normal());
          m->item_ids.push_back(r.item_id);
        }
      }
      json weights = json::array(), r_cls = json::array(), r_mean = json::array();
      const double tau2 = model.feature_noise * model.feature_noise;
      for (std::size_t j = 0; j < d; ++j) {
        std::vector<double> row(w.row(j).begin(), w.row(j).end());
        weights.push_back(row);
      }
      double mean_cls = 0.0, mean_cm = 0.0;
      for (std::size_t t = 0; t < g; ++t) {
        double sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) sq += w(j, t) * w(j, t);
        const double denom = sq + spec.noise * spec.noise;
        const double a = std::sqrt(sq / ((1.0 + tau2) * denom)), b = std::sqrt(sq / ((1.0 + tau2 / 2.0) * denom));
        r_cls.push_back(a);
        r_mean.push_back(b);
        mean_cls += a / static_cast<double>(g);
        mean_cm += b / static_cast<double>(g);
      }
      out.oracle["true_weights"] = weights;
      out.oracle["population_pearson"] = {{"cls", r_cls}, {"cls_mean", r_mean}};
      out.oracle["population_pearson_mean"] = {{"cls", mean_cls}, {"cls_mean", mean_cm}};
      break;
    }
    case SynthKind::MilBags: {
      const std::size_t bags = spec.train + spec.val + spec.test, m_inst = spec.instances;
      const double s = spec.separation * model.separation_scale;
      out.manifest.task_kind = embstore::TaskKind::SlideClassification;
      out.cls = detail::empty_matrix(model.model_id, spec.dataset_id, bags * m_inst, d);
      out.mean = detail::empty_matrix(model.model_id, spec.dataset_id, bags * m_inst, d);
      std::size_t row_i = 0, positives = 0;
      std::vector<bool> witness(m_inst);
      for (std::size_t b = 0; b < bags; ++b) {
        bool positive = false;
        for (std::size_t i = 0; i < m_inst; ++i) {
          witness[i] = structure.uniform() < spec.witness_rate;
          positive = positive || witness[i];
        }
        positives += positive;
        const std::string slide = spec.dataset_id + "_S" + std::to_string(b);
        for (std::size_t i = 0; i < m_inst; ++i, ++row_i) {
          embstore::ManifestRecord r;
          r.item_id = slide + "_" + std::to_string(i);
          r.label = positive ? 1 : 0;
          r.patient_id = slide;
          r.slide_id = slide;
          r.split = detail::tag_for(b, spec);
          out.manifest.records.push_back(r);
          for (auto* m : {&out.cls, &out.mean}) {
            auto& rng = m == &out.cls ? cls_noise : mean_noise;
            auto row = m->items.row(row_i);
            for (std::size_t j = 0; j < d; ++j) row[j] = static_cast<float>(spec.noise * rng.normal());
            if (witness[i]) row[0] += static_cast<float>(s);
            m->item_ids.push_back(r.item_id);
          }
        }
      }
      const double snr = s / (2.0 * spec.noise);
      out.oracle["bag_positive_rate"] = mil_positive_rate(spec.witness_rate, m_inst);
      out.oracle["observed_positive_fraction"] = static_cast<double>(positives) / static_cast<double>(bags);
      out.oracle["threshold_balanced_accuracy"] = {
          {"cls", mil_threshold_accuracy(spec.witness_rate, m_inst, snr)},
          {"cls_mean", mil_threshold_accuracy(spec.witness_rate, m_inst, std::sqrt(2.0) * snr)}};
      break;
    }
  }
  out.mean.variant = TokenVariant::Cls;
  return out;
}

/// Writes the manifest, both token files and oracle.json into the store layout under `root`.
inline json synth_generate(const SynthSpec& spec, const fs::path& root, const SynthModel& model = {}) {
  const auto built = synth_build(spec, model);
  const DataStore store(root);
  fs::create_directories(store.embedding_dir(model.model_id, spec.dataset_id));
  fs::create_directories(store.manifest_path(spec.dataset_id).parent_path());
  embstore::write_manifest(built.manifest, store.manifest_path(spec.dataset_id));
  embstore::write_embeddings(built.cls, store.cls_path(model.model_id, spec.dataset_id));
  embstore::write_embeddings(built.mean, store.mean_path(model.model_id, spec.dataset_id));
  embstore::write_file_atomic(store.embedding_dir(model.model_id, spec.dataset_id) / "oracle.json",
                              built.oracle.dump(2) + "\n");
  return built.oracle;
}

/**
 * A suite document holds "models" (cards plus separation_scale /
 * feature_noise), "datasets" (synth specs) and a "registry". Every dataset
 * is generated for every model; registry.json, models.json and oracles.json
 * are written at the root.
 */
inline json synth_generate_suite(const json& suite, const fs::path& root) {
  std::vector<embstore::ModelCard> cards;
  std::vector<SynthModel> models;
  std::vector<SynthSpec> specs;
  try {
    for (const auto& m : suite.at("models")) {
      cards.push_back(embstore::model_card_from_json(m));
      models.push_back({cards.back().model_id, m.value("separation_scale", 1.0), m.value("feature_noise", 0.0)});
    }
    for (const auto& d : suite.at("datasets")) specs.push_back(synth_spec_from_json(d));
    if (!suite.contains("registry")) throw ConfigError("synth suite: missing registry");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth suite: ") + e.what());
  }
  fs::create_directories(root);
  json oracles = json::object();
  for (const auto& spec : specs) {
    for (const auto& m : models) {
      auto o = synth_generate(spec, root, m);
      o.erase("true_weights");
      oracles[spec.dataset_id][m.model_id] = o;
    }
  }
  json cards_doc = json::array();
  for (const auto& c : cards) cards_doc.push_back(embstore::to_json(c));
  embstore::write_file_atomic(root / "models.json", json{{"models", cards_doc}}.dump(2) + "\n");
  embstore::write_file_atomic(root / "registry.json", suite.at("registry").dump(2) + "\n");
  embstore::write_file_atomic(root / "oracles.json", oracles.dump(2) + "\n");
  return oracles;
}

}  // namespace pathbench::benchctl
