#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gla/alignment.hpp"

using namespace gla;

namespace {

double tiny_angle_deg(const UnitGaze& a, const UnitGaze& b) {
  return rad2deg(2.0 * std::asin(0.5 * (a.v - b.v).norm()));
}

// Domain with a fixed calibration error and optional per-person axis noise.
SyntheticDataset deviated_domain(const CalibrationError& err, double axis_std,
                                 std::uint64_t seed, int persons = 2,
                                 int per_person = 60) {
  FeatureParams fp;
  fp.feature_dim = 8;
  FeatureSpace space = FeatureSpace::make(seed, fp);
  DomainParams dp;
  dp.persons = persons;
  dp.samples_per_person = per_person;
  dp.axis_std_deg = axis_std;
  dp.calib_tau_deg = 0;
  dp.calib_tau_cm = 0;
  DomainSpec spec = make_domain_spec(dp, space, seed);
  spec.calib_error = err;
  return generate_domain(spec, space, seed);
}

// Oracle predictions = the simulator's true gaze.
std::vector<AlignmentSample> oracle_samples(const SyntheticDataset& ds) {
  std::vector<AlignmentSample> out;
  out.reserve(ds.samples.size());
  for (const GazeSample& s : ds.samples)
    out.push_back({s.gaze_label, s.gaze_true, s.target_cam, s.origin});
  return out;
}

double polar_sse(const AlignmentModel& m, const std::vector<AlignmentSample>& ss) {
  double sse = 0;
  for (const AlignmentSample& s : ss) {
    const UnitGaze aligned = apply_alignment(m, s.label, s.target_cam, s.origin);
    const PolarGaze pa = vector_to_polar(aligned);
    const PolarGaze pp = vector_to_polar(s.predicted);
    const double dt = pa.theta_deg - pp.theta_deg;
    const double df = canonical_deg(pa.phi_deg - pp.phi_deg);
    sse += dt * dt + df * df;
  }
  return sse;
}

}  // namespace

TEST_CASE("apply_alignment identity models") {
  UnitGaze y = polar_to_vector(PolarGaze{8.0, -14.0});
  const Vec3 t_c(5, 2, 0), o(0, 0, 60);

  UnitGaze via_offset = apply_alignment(OffsetModel{}, y, t_c, o);
  REQUIRE(tiny_angle_deg(via_offset, y) < 1e-9);

  UnitGaze via_h = apply_alignment(HomographyModel{}, y, t_c, o);
  REQUIRE(tiny_angle_deg(via_h, y) < 1e-9);
}

TEST_CASE("apply_alignment rigid transform shifts the ray") {
  RigidRTModel rt;
  rt.translation = Vec3(3, 0, 0);
  UnitGaze y{Vec3(0, 0, -1)};
  UnitGaze aligned = apply_alignment(rt, y, Vec3(0, 0, 0), Vec3(0, 0, 60));
  REQUIRE(aligned.v.isApprox(Vec3(3, 0, -60).normalized(), 1e-12));
  REQUIRE(angular_error_deg(aligned, y) ==
          Catch::Approx(rad2deg(std::atan2(3.0, 60.0))).margin(1e-9));
}

TEST_CASE("apply_alignment degenerate cases throw") {
  RigidRTModel rt;
  rt.translation = Vec3(0, 0, 60);  // moves the target onto the origin
  REQUIRE_THROWS_AS(
      apply_alignment(rt, UnitGaze{Vec3(0, 0, -1)}, Vec3(0, 0, 0), Vec3(0, 0, 60)),
      DegenerateRay);

  HomographyModel h;
  h.h(2, 0) = -0.1;  // third coordinate vanishes at theta = 10
  UnitGaze y = polar_to_vector(PolarGaze{10.0, 0.0});
  REQUIRE_THROWS_AS(apply_alignment(h, y, Vec3(0, 0, 0), Vec3(0, 0, 60)),
                    ProjectiveDegenerate);
}

TEST_CASE("fitting on perfect predictions returns identity-like models") {
  SyntheticDataset ds = deviated_domain(CalibrationError{}, 0.0, 3);
  std::vector<AlignmentSample> ss = oracle_samples(ds);
  // Labels equal predictions here, so every family should locate identity.
  auto [off, off_rep] = fit_alignment(AlignmentKind::kOffset, ss);
  REQUIRE(std::get<OffsetModel>(off).b.norm() < 1e-6);
  auto [lin, lin_rep] = fit_alignment(AlignmentKind::kLinear, ss);
  REQUIRE((std::get<LinearModel>(lin).k - Eigen::Vector2d::Ones()).norm() < 1e-6);
  REQUIRE(std::get<LinearModel>(lin).b.norm() < 1e-6);
  auto [aff, aff_rep] = fit_alignment(AlignmentKind::kAffine, ss);
  REQUIRE((std::get<AffineModel>(aff).a - Eigen::Matrix2d::Identity()).norm() < 1e-6);
  REQUIRE(std::get<AffineModel>(aff).t.norm() < 1e-6);
  auto [hom, hom_rep] = fit_alignment(AlignmentKind::kHomography, ss);
  REQUIRE(hom_rep.post_mean_deg < 1e-6);
  auto [rt, rt_rep] = fit_alignment(AlignmentKind::kRigidRT, ss);
  REQUIRE(rt_rep.post_mean_deg < 1e-6);
}

TEST_CASE("an injected polar offset is recovered to high precision") {
  SyntheticDataset ds = deviated_domain(CalibrationError{}, 0.0, 4);
  const Eigen::Vector2d b_star(1.5, -0.8);
  std::vector<AlignmentSample> ss;
  for (const GazeSample& s : ds.samples) {
    const PolarGaze p = vector_to_polar(s.gaze_label);
    AlignmentSample a;
    a.label = s.gaze_label;
    a.predicted = polar_to_vector(
        PolarGaze{p.theta_deg + b_star[0], p.phi_deg + b_star[1]});
    a.target_cam = s.target_cam;
    a.origin = s.origin;
    ss.push_back(a);
  }
  auto [model, report] = fit_alignment(AlignmentKind::kOffset, ss);
  REQUIRE((std::get<OffsetModel>(model).b - b_star).norm() < 0.01);
  REQUIRE(report.post_mean_deg <= report.pre_mean_deg + 1e-9);

  // Idempotence: refitting on already-aligned labels finds a null offset.
  std::vector<AlignmentSample> aligned = ss;
  for (AlignmentSample& a : aligned)
    a.label = apply_alignment(model, a.label, a.target_cam, a.origin);
  auto [again, report2] = fit_alignment(AlignmentKind::kOffset, aligned);
  REQUIRE(std::get<OffsetModel>(again).b.norm() < 1e-6);
}

TEST_CASE("rigid fit removes a simulator-injected calibration error") {
  CalibrationError err;
  err.pitch_deg = 1.0;
  err.yaw_deg = 0.5;
  err.roll_deg = -1.0;
  err.x_cm = 2.0;
  err.y_cm = -1.0;
  err.z_cm = 0.5;
  SyntheticDataset ds = deviated_domain(err, 0.0, 5);
  std::vector<AlignmentSample> ss = oracle_samples(ds);
  auto [model, report] = fit_alignment(AlignmentKind::kRigidRT, ss);
  REQUIRE(report.pre_mean_deg > 1.0);  // the injected deviation is visible
  REQUIRE(report.post_mean_deg < 0.1);
  REQUIRE(report.post_mean_deg <= report.pre_mean_deg + 1e-9);
}

TEST_CASE("rigid fit reaches a target convention far from identity") {
  // Align the true labels onto the *deviated* convention: the optimum is a
  // genuine rigid transform degrees away from the identity start.
  CalibrationError err;
  err.pitch_deg = -0.8;
  err.yaw_deg = 1.2;
  err.roll_deg = 0.4;
  err.x_cm = -2.0;
  err.y_cm = 1.5;
  err.z_cm = 1.0;
  SyntheticDataset ds = deviated_domain(err, 2.5, 6, /*persons=*/1, /*per_person=*/80);
  std::vector<AlignmentSample> ss;
  for (const GazeSample& s : ds.samples)
    ss.push_back({s.gaze_true, s.gaze_label, s.target_cam, s.origin});
  auto [model, report] = fit_alignment(AlignmentKind::kRigidRT, ss);
  REQUIRE(report.pre_mean_deg > 1.0);
  REQUIRE(report.post_mean_deg < 1e-3);
}

TEST_CASE("closed-form families nest in their shared objective") {
  CalibrationError err;
  err.yaw_deg = 1.0;
  err.x_cm = -2.0;
  err.z_cm = 1.0;
  SyntheticDataset ds = deviated_domain(err, 1.5, 7);
  std::vector<AlignmentSample> ss = oracle_samples(ds);
  auto [off, r1] = fit_alignment(AlignmentKind::kOffset, ss);
  auto [lin, r2] = fit_alignment(AlignmentKind::kLinear, ss);
  auto [aff, r3] = fit_alignment(AlignmentKind::kAffine, ss);
  const double so = polar_sse(off, ss);
  const double sl = polar_sse(lin, ss);
  const double sa = polar_sse(aff, ss);
  REQUIRE(sa <= sl + 1e-9);
  REQUIRE(sl <= so + 1e-9);
}

TEST_CASE("no fit family makes things worse") {
  CalibrationError err;
  err.pitch_deg = 0.7;
  err.x_cm = 1.2;
  SyntheticDataset ds = deviated_domain(err, 2.0, 8);
  std::vector<AlignmentSample> ss = oracle_samples(ds);
  for (AlignmentKind kind :
       {AlignmentKind::kOffset, AlignmentKind::kLinear, AlignmentKind::kAffine,
        AlignmentKind::kHomography, AlignmentKind::kRigidRT}) {
    auto [model, report] = fit_alignment(kind, ss);
    INFO(to_string(kind));
    REQUIRE(report.post_mean_deg <= report.pre_mean_deg + 1e-9);
  }
}

TEST_CASE("small units fall back to the offset family") {
  SyntheticDataset ds = deviated_domain(CalibrationError{.x_cm = 1.0}, 0.0, 9);
  std::vector<AlignmentSample> ss = oracle_samples(ds);
  ss.resize(5);
  auto [model, report] = fit_alignment(AlignmentKind::kRigidRT, ss);
  REQUIRE(report.fallback_offset);
  REQUIRE(std::holds_alternative<OffsetModel>(model));

  REQUIRE_THROWS_AS(fit_alignment(AlignmentKind::kOffset, {}), InsufficientSamples);
}

TEST_CASE("degenerate design matrices fall back with a flag") {
  SyntheticDataset ds = deviated_domain(CalibrationError{}, 0.0, 10);
  std::vector<AlignmentSample> ss = oracle_samples(ds);
  // Collapse every label onto one point: no spread, no linear fit.
  for (AlignmentSample& s : ss) s.label = ss[0].label;
  auto [lin, r1] = fit_alignment(AlignmentKind::kLinear, ss);
  REQUIRE(r1.rank_deficient);
  REQUIRE(std::holds_alternative<OffsetModel>(lin));
  auto [aff, r2] = fit_alignment(AlignmentKind::kAffine, ss);
  REQUIRE(r2.rank_deficient);
  REQUIRE(std::holds_alternative<OffsetModel>(aff));
}

TEST_CASE("relabel_domain applies each person its own model") {
  SyntheticDataset ds = deviated_domain(CalibrationError{}, 3.0, 11);
  std::vector<UnitGaze> labels;
  std::vector<AlignmentSample> ss;
  std::vector<int> unit_ids;
  for (const GazeSample& s : ds.samples) {
    labels.push_back(s.gaze_label);
    ss.push_back({s.gaze_label, s.gaze_true, s.target_cam, s.origin});
    unit_ids.push_back(s.person_id);
  }
  std::vector<UnitFit> fits = fit_units(AlignmentKind::kOffset, ss, unit_ids);
  REQUIRE(fits.size() == 2);

  std::vector<UnitGaze> aligned =
      relabel_domain(ds, labels, fits, UnitKind::kPerson);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const UnitFit& fit = ds.samples[i].person_id == fits[0].unit_id ? fits[0] : fits[1];
    UnitGaze expect = apply_alignment(fit.model, labels[i],
                                      ds.samples[i].target_cam, ds.samples[i].origin);
    REQUIRE(aligned[i].v == expect.v);
  }

  // Identity models leave labels unchanged (up to the polar round trip).
  std::vector<UnitFit> identity_fits;
  for (const UnitFit& f : fits)
    identity_fits.push_back({f.unit_id, OffsetModel{}, FitReport{}});
  std::vector<UnitGaze> same = relabel_domain(ds, labels, identity_fits,
                                              UnitKind::kPerson);
  for (std::size_t i = 0; i < labels.size(); ++i)
    REQUIRE(tiny_angle_deg(same[i], labels[i]) < 1e-9);

  // A person without a model is an error.
  identity_fits.pop_back();
  REQUIRE_THROWS_AS(relabel_domain(ds, labels, identity_fits, UnitKind::kPerson),
                    UncoveredSample);
}

TEST_CASE("dataset-level units fit exactly one model") {
  SyntheticDataset ds = deviated_domain(CalibrationError{.yaw_deg = 1.0}, 1.0, 12);
  std::vector<UnitGaze> labels;
  std::vector<AlignmentSample> ss;
  std::vector<int> unit_ids;
  for (const GazeSample& s : ds.samples) {
    labels.push_back(s.gaze_label);
    ss.push_back({s.gaze_label, s.gaze_true, s.target_cam, s.origin});
    unit_ids.push_back(kDatasetUnitId);
  }
  std::vector<UnitFit> fits = fit_units(AlignmentKind::kRigidRT, ss, unit_ids);
  REQUIRE(fits.size() == 1);
  REQUIRE(fits[0].unit_id == kDatasetUnitId);
  std::vector<UnitGaze> aligned =
      relabel_domain(ds, labels, fits, UnitKind::kDataset);
  REQUIRE(aligned.size() == labels.size());
}
