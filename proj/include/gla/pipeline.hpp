#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gla/alignment.hpp"
#include "gla/errors.hpp"
#include "gla/regressor.hpp"
#include "gla/simulator.hpp"

// The six-step label alignment procedure over multiple source domains:
//   1. train extractor+head on all domains (balanced resample)
//   2. retrain a head on the anchor domain with the extractor frozen
//   3. predict on the remaining domains, fit alignment units, relabel
//   4. retrain a head on the remaining domains with their aligned labels
//   5. predict on the anchor, fit and relabel the anchor
//   6. retrain the full model from scratch on the aligned labels
// Rounds > 1 feed the aligned labels back in as the next round's originals.

namespace gla {

struct GlaConfig {
  int anchor_index = 0;
  UnitKind unit_kind = UnitKind::kPerson;
  AlignmentKind function_kind = AlignmentKind::kRigidRT;
  int rounds = 1;
  TrainConfig train;
  // Step-1 epochs. The step-1 model only has to supply shared features and a
  // rough fit; training it to full convergence on the still-conflicting raw
  // labels wires person/style idiosyncrasies into the extractor, and those
  // leak into the anchor head's predictions as per-unit junk that the
  // alignment then bakes into the relabeled conventions.
  int invariance_epochs = 30;
  std::uint64_t seed = 0;
};

/// Alignment outcome for one domain in steps 3/5.
struct DomainFitSummary {
  int domain_id = 0;
  std::vector<FitReport> unit_reports;
  double mean_pre_deg = 0.0;
  double mean_post_deg = 0.0;
};

struct RoundReport {
  double step1_train_error_deg = 0.0;
  double step2_anchor_error_deg = 0.0;
  std::vector<DomainFitSummary> step3_fits;
  double step4_rest_error_deg = 0.0;
  DomainFitSummary step5_fit;
  double step6_train_error_deg = 0.0;
  ModelParams step1_params;  // the extractor frozen through steps 2-5
};

struct GlaResult {
  std::vector<std::vector<UnitGaze>> aligned_labels;  // per domain, per sample
  ModelParams final_params;
  std::vector<RoundReport> rounds;
};

enum class Reference { kTruth, kLabel };

/// Mean angular error of model predictions on a dataset against either the
/// simulator's true gaze or the recorded labels.
inline double evaluate_cross_domain(const ModelParams& params,
                                    const SyntheticDataset& ds,
                                    Reference ref = Reference::kTruth) {
  if (ds.samples.empty()) throw NoSamples("evaluation dataset is empty");
  const Eigen::MatrixXd x = features_of(ds);
  Eigen::Matrix3Xd y(3, ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    y.col(static_cast<Eigen::Index>(i)) = ref == Reference::kTruth
                                              ? ds.samples[i].gaze_true.v
                                              : ds.samples[i].gaze_label.v;
  return mean_angular_error(params, x, y);
}

namespace detail {

struct DomainData {
  const SyntheticDataset* ds = nullptr;
  Eigen::MatrixXd features;
};

inline std::vector<UnitGaze> original_labels(const SyntheticDataset& ds) {
  std::vector<UnitGaze> labels;
  labels.reserve(ds.samples.size());
  for (const GazeSample& s : ds.samples) labels.push_back(s.gaze_label);
  return labels;
}

inline Eigen::Matrix3Xd pooled_directions(
    const std::vector<std::vector<UnitGaze>>& labels,
    const std::vector<PooledIndex>& pool) {
  Eigen::Matrix3Xd y(3, pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i)
    y.col(static_cast<Eigen::Index>(i)) =
        labels[static_cast<std::size_t>(pool[i].domain)]
              [static_cast<std::size_t>(pool[i].sample)].v;
  return y;
}

inline Eigen::MatrixXd pooled_features(const std::vector<DomainData>& domains,
                                       const std::vector<PooledIndex>& pool) {
  Eigen::MatrixXd x(domains[0].features.rows(), pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i)
    x.col(static_cast<Eigen::Index>(i)) =
        domains[static_cast<std::size_t>(pool[i].domain)]
            .features.col(pool[i].sample);
  return x;
}

/// Step 3/5 worker: predict with (frozen extractor, head), fit per unit,
/// relabel. Returns the aligned labels and a fit summary.
inline std::pair<std::vector<UnitGaze>, DomainFitSummary> align_domain(
    const DomainData& dom, const std::vector<UnitGaze>& labels,
    const ModelParams& model, const GlaConfig& cfg) {
  const Eigen::Matrix3Xd pred = predict_batch(model, dom.features);
  std::vector<AlignmentSample> ss;
  std::vector<int> unit_ids;
  ss.reserve(labels.size());
  unit_ids.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const GazeSample& s = dom.ds->samples[i];
    ss.push_back({labels[i], UnitGaze{pred.col(static_cast<Eigen::Index>(i))},
                  s.target_cam, s.origin});
    unit_ids.push_back(cfg.unit_kind == UnitKind::kPerson ? s.person_id
                                                          : kDatasetUnitId);
  }
  const std::vector<UnitFit> fits = fit_units(cfg.function_kind, ss, unit_ids);
  DomainFitSummary summary;
  summary.domain_id = dom.ds->spec.id;
  double pre = 0, post = 0;
  for (const UnitFit& f : fits) {
    summary.unit_reports.push_back(f.report);
    pre += f.report.pre_mean_deg;
    post += f.report.post_mean_deg;
  }
  summary.mean_pre_deg = pre / static_cast<double>(fits.size());
  summary.mean_post_deg = post / static_cast<double>(fits.size());
  return {relabel_domain(*dom.ds, labels, fits, cfg.unit_kind), summary};
}

/// Balanced resample + full training; shared by step 1, step 6, and the
/// no-alignment baseline (which is exactly the step-6 path on raw labels).
inline std::pair<ModelParams, double> train_pooled(
    const std::vector<DomainData>& domains,
    const std::vector<std::vector<UnitGaze>>& labels, const TrainConfig& base,
    std::uint64_t seed, std::uint64_t stage, std::uint64_t round) {
  std::vector<const SyntheticDataset*> sets;
  sets.reserve(domains.size());
  for (const DomainData& d : domains) sets.push_back(d.ds);
  Rng resample_rng = Rng::stream(seed, {stream::kResample, stage, round});
  const std::vector<PooledIndex> pool = resample_balanced(sets, resample_rng);
  const Eigen::MatrixXd x = pooled_features(domains, pool);
  const Eigen::Matrix3Xd y = pooled_directions(labels, pool);
  TrainConfig cfg = base;
  cfg.seed = derive_seed(seed, {stream::kTrain, stage, round});
  ModelParams params = train_full(x, y, cfg);
  const double err = mean_angular_error(params, x, y);
  return {std::move(params), err};
}

}  // namespace detail

/// Splits one dataset into two pseudo-domains by person (not by sample), so
/// person-level alignment units survive the split.
inline std::pair<SyntheticDataset, SyntheticDataset> split_by_person(
    const SyntheticDataset& ds, std::uint64_t seed) {
  std::vector<int> person_ids;
  for (const Person& p : ds.spec.persons) person_ids.push_back(p.id);
  Rng rng = Rng::stream(seed, {stream::kSplit});
  rng.shuffle(person_ids);
  const std::size_t half = person_ids.size() / 2;
  std::vector<bool> in_first(person_ids.size(), false);
  std::vector<int> first_ids(person_ids.begin(), person_ids.begin() + half);

  auto build = [&](const std::vector<int>& ids, int new_id) {
    SyntheticDataset out;
    out.spec = ds.spec;
    out.spec.id = new_id;
    out.spec.persons.clear();
    for (const Person& p : ds.spec.persons)
      if (std::find(ids.begin(), ids.end(), p.id) != ids.end())
        out.spec.persons.push_back(p);
    for (const GazeSample& s : ds.samples)
      if (std::find(ids.begin(), ids.end(), s.person_id) != ids.end())
        out.samples.push_back(s);
    return out;
  };
  std::vector<int> second_ids(person_ids.begin() + half, person_ids.end());
  return {build(first_ids, ds.spec.id),
          build(second_ids, ds.spec.id + 1000)};
}

/// Runs the full six-step procedure for cfg.rounds rounds. A single input
/// domain is first split into two person-disjoint halves.
inline GlaResult run_gla(const std::vector<SyntheticDataset>& input_domains,
                         const GlaConfig& cfg) {
  if (input_domains.empty()) throw NoSamples("no source domains");

  std::vector<SyntheticDataset> split_storage;
  const std::vector<SyntheticDataset>* domains_ptr = &input_domains;
  if (input_domains.size() == 1) {
    auto [a, b] = split_by_person(input_domains[0], cfg.seed);
    split_storage.push_back(std::move(a));
    split_storage.push_back(std::move(b));
    domains_ptr = &split_storage;
  }
  const std::vector<SyntheticDataset>& domains = *domains_ptr;
  const std::size_t m = domains.size();
  const std::size_t anchor = static_cast<std::size_t>(cfg.anchor_index);
  if (anchor >= m) throw Error("anchor index out of range");

  std::vector<detail::DomainData> data(m);
  for (std::size_t i = 0; i < m; ++i) {
    data[i].ds = &domains[i];
    data[i].features = features_of(domains[i]);
  }

  GlaResult result;
  result.aligned_labels.resize(m);
  std::vector<std::vector<UnitGaze>> labels(m);
  for (std::size_t i = 0; i < m; ++i)
    labels[i] = detail::original_labels(domains[i]);

  for (int round = 0; round < cfg.rounds; ++round) {
    const std::uint64_t r = static_cast<std::uint64_t>(round);
    RoundReport report;

    // Step 1: joint training on all domains, balanced.
    TrainConfig cfg1 = cfg.train;
    cfg1.epochs = cfg.invariance_epochs;
    auto [params0, step1_err] =
        detail::train_pooled(data, labels, cfg1, cfg.seed, 1, r);
    report.step1_train_error_deg = step1_err;
    report.step1_params = params0;

    // Step 2: anchor head on the frozen extractor.
    TrainConfig cfg2 = cfg.train;
    cfg2.seed = derive_seed(cfg.seed, {stream::kTrain, 2, r});
    const Eigen::Matrix3Xd y_anchor = directions_of(labels[anchor]);
    Head head_anchor =
        train_head(params0.extractor, data[anchor].features, y_anchor, cfg2);
    ModelParams anchor_model{params0.extractor, head_anchor};
    report.step2_anchor_error_deg =
        mean_angular_error(anchor_model, data[anchor].features, y_anchor);

    // Step 3: align every non-anchor domain to the anchor's convention.
    std::vector<std::vector<UnitGaze>> aligned = labels;
    for (std::size_t i = 0; i < m; ++i) {
      if (i == anchor) continue;
      auto [relabeled, summary] =
          detail::align_domain(data[i], labels[i], anchor_model, cfg);
      aligned[i] = std::move(relabeled);
      report.step3_fits.push_back(std::move(summary));
    }

    // Step 4: head for the remaining domains on their aligned labels.
    std::size_t rest_count = 0;
    for (std::size_t i = 0; i < m; ++i)
      if (i != anchor) rest_count += labels[i].size();
    Eigen::MatrixXd x_rest(data[0].features.rows(), rest_count);
    Eigen::Matrix3Xd y_rest(3, rest_count);
    Eigen::Index col = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (i == anchor) continue;
      for (std::size_t s = 0; s < aligned[i].size(); ++s, ++col) {
        x_rest.col(col) = data[i].features.col(static_cast<Eigen::Index>(s));
        y_rest.col(col) = aligned[i][s].v;
      }
    }
    TrainConfig cfg4 = cfg.train;
    cfg4.seed = derive_seed(cfg.seed, {stream::kTrain, 4, r});
    Head head_rest = train_head(params0.extractor, x_rest, y_rest, cfg4);
    ModelParams rest_model{params0.extractor, head_rest};
    report.step4_rest_error_deg = mean_angular_error(rest_model, x_rest, y_rest);

    // Step 5: align the anchor to the re-labeled remaining domains.
    auto [anchor_relabel, anchor_summary] =
        detail::align_domain(data[anchor], labels[anchor], rest_model, cfg);
    aligned[anchor] = std::move(anchor_relabel);
    report.step5_fit = std::move(anchor_summary);

    // Step 6: final model from scratch on the aligned labels.
    auto [final_params, step6_err] =
        detail::train_pooled(data, aligned, cfg.train, cfg.seed, 6, r);
    report.step6_train_error_deg = step6_err;
    result.final_params = std::move(final_params);

    labels = std::move(aligned);
    result.rounds.push_back(std::move(report));
  }

  result.aligned_labels = std::move(labels);
  return result;
}

/// The no-alignment reference: exactly the step-6 training path (same
/// resample and seed streams) on the original labels.
inline ModelParams train_baseline(const std::vector<SyntheticDataset>& domains,
                                  const GlaConfig& cfg) {
  std::vector<detail::DomainData> data(domains.size());
  std::vector<std::vector<UnitGaze>> labels(domains.size());
  for (std::size_t i = 0; i < domains.size(); ++i) {
    data[i].ds = &domains[i];
    data[i].features = features_of(domains[i]);
    labels[i] = detail::original_labels(domains[i]);
  }
  const std::uint64_t last_round = static_cast<std::uint64_t>(cfg.rounds - 1);
  return detail::train_pooled(data, labels, cfg.train, cfg.seed, 6, last_round)
      .first;
}

// ---------------------------------------------------------------------------
// Standard desk-scale benchmark

struct BenchmarkParams {
  int n_source = 3;
  int n_target = 2;
  int persons = 20;
  int samples_per_person = 200;
  double calib_tau_deg = 1.0;
  double calib_tau_cm = 1.0;
  double axis_std_deg = 2.5;
  std::uint64_t seed = 2024;
  FeatureParams features;
};

struct Benchmark {
  FeatureSpace space;
  std::vector<SyntheticDataset> sources;
  std::vector<SyntheticDataset> targets;
};

/// Fixed multi-domain benchmark: every domain draws its own calibration
/// error, style and persons from the master seed. Target domains use ids
/// starting at 100 so their streams never collide with source streams.
inline Benchmark make_benchmark(const BenchmarkParams& p = BenchmarkParams()) {
  Benchmark b;
  b.space = FeatureSpace::make(p.seed, p.features);
  DomainParams dp;
  dp.persons = p.persons;
  dp.samples_per_person = p.samples_per_person;
  dp.axis_std_deg = p.axis_std_deg;
  dp.calib_tau_deg = p.calib_tau_deg;
  dp.calib_tau_cm = p.calib_tau_cm;
  for (int i = 0; i < p.n_source; ++i) {
    dp.id = i;
    b.sources.push_back(
        generate_domain(make_domain_spec(dp, b.space, p.seed), b.space, p.seed));
  }
  for (int i = 0; i < p.n_target; ++i) {
    dp.id = 100 + i;
    b.targets.push_back(
        generate_domain(make_domain_spec(dp, b.space, p.seed), b.space, p.seed));
  }
  return b;
}

// ---------------------------------------------------------------------------
// Ablation harness

enum class AblationAxis { kFunctions, kUnits, kAnchor, kRounds };

inline const char* to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::kFunctions: return "functions";
    case AblationAxis::kUnits: return "units";
    case AblationAxis::kAnchor: return "anchor";
    case AblationAxis::kRounds: return "rounds";
  }
  return "?";
}

struct AblationRow {
  std::string config;
  std::vector<double> target_errors_deg;
  double average_deg = 0.0;
};

namespace detail {

inline AblationRow evaluate_row(const std::string& name, const ModelParams& params,
                                const std::vector<SyntheticDataset>& targets,
                                Reference ref) {
  AblationRow row;
  row.config = name;
  double sum = 0;
  for (const SyntheticDataset& t : targets) {
    row.target_errors_deg.push_back(evaluate_cross_domain(params, t, ref));
    sum += row.target_errors_deg.back();
  }
  row.average_deg = sum / static_cast<double>(targets.size());
  return row;
}

}  // namespace detail

/// Sweeps one configuration axis with shared seeds; the first row is always
/// the no-alignment baseline.
inline std::vector<AblationRow> ablation_harness(const Benchmark& bench,
                                                 AblationAxis axis,
                                                 const GlaConfig& base,
                                                 Reference ref = Reference::kTruth) {
  std::vector<AblationRow> rows;
  rows.push_back(detail::evaluate_row("baseline",
                                      train_baseline(bench.sources, base),
                                      bench.targets, ref));
  auto run = [&](const std::string& name, const GlaConfig& cfg) {
    const GlaResult r = run_gla(bench.sources, cfg);
    rows.push_back(detail::evaluate_row(name, r.final_params, bench.targets, ref));
  };

  switch (axis) {
    case AblationAxis::kFunctions:
      for (AlignmentKind k :
           {AlignmentKind::kOffset, AlignmentKind::kLinear, AlignmentKind::kAffine,
            AlignmentKind::kHomography, AlignmentKind::kRigidRT}) {
        GlaConfig cfg = base;
        cfg.function_kind = k;
        run(to_string(k), cfg);
      }
      break;
    case AblationAxis::kUnits:
      for (UnitKind u : {UnitKind::kPerson, UnitKind::kDataset}) {
        GlaConfig cfg = base;
        cfg.unit_kind = u;
        run(u == UnitKind::kPerson ? "person" : "dataset", cfg);
      }
      break;
    case AblationAxis::kAnchor:
      for (std::size_t k = 0; k < bench.sources.size(); ++k) {
        GlaConfig cfg = base;
        cfg.anchor_index = static_cast<int>(k);
        run("anchor=" + std::to_string(k), cfg);
      }
      break;
    case AblationAxis::kRounds:
      for (int r = 1; r <= 3; ++r) {
        GlaConfig cfg = base;
        cfg.rounds = r;
        run("rounds=" + std::to_string(r), cfg);
      }
      break;
  }
  return rows;
}

/// Scatter rows for one person of a dataset: predicted vs reference polar
/// angles, the raw material for the alignment-quality scatter plots.
struct ScatterPoint {
  double theta_pred_deg, theta_ref_deg, phi_pred_deg, phi_ref_deg;
  int person_id;
};

inline std::vector<ScatterPoint> scatter_points(const ModelParams& params,
                                                const SyntheticDataset& ds,
                                                int person_id,
                                                Reference ref = Reference::kLabel) {
  std::vector<ScatterPoint> pts;
  const Eigen::MatrixXd x = features_of(ds);
  const Eigen::Matrix3Xd pred = predict_batch(params, x);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    if (ds.samples[i].person_id != person_id) continue;
    const PolarGaze pp = vector_to_polar(UnitGaze{pred.col(static_cast<Eigen::Index>(i))});
    const PolarGaze pr = vector_to_polar(ref == Reference::kLabel
                                             ? ds.samples[i].gaze_label
                                             : ds.samples[i].gaze_true);
    pts.push_back({pp.theta_deg, pr.theta_deg, pp.phi_deg, pr.phi_deg, person_id});
  }
  return pts;
}

}  // namespace gla
