#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "gla/geometry.hpp"
#include "gla/rng.hpp"

// Synthetic multi-domain gaze acquisition. Each domain owns one fixed
// calibration error (the acquisition-system deviation) and a set of persons,
// each with an individual visual-axis offset. Feature vectors stand in for
// face images; the generator is shared across domains so distribution shift
// lives entirely in the per-domain style term.

namespace gla {

/// Six-variable system deviation. Zero means a perfectly calibrated system.
struct CalibrationError {
  double pitch_deg = 0.0;
  double yaw_deg = 0.0;
  double roll_deg = 0.0;
  double x_cm = 0.0;
  double y_cm = 0.0;
  double z_cm = 0.0;

  bool is_zero() const {
    return pitch_deg == 0 && yaw_deg == 0 && roll_deg == 0 && x_cm == 0 &&
           y_cm == 0 && z_cm == 0;
  }
};

struct Person {
  int id = 0;
  EulerRot axis_offset;          // visual-vs-optical axis deviation
  Eigen::VectorXd appearance;    // ~ N(0,1)^A
};

struct ScreenRect {
  double u_min = -25.0, u_max = 25.0;
  double v_min = -15.0, v_max = 15.0;
};

struct DomainSpec {
  int id = 0;
  Extrinsics true_extrinsics;
  CalibrationError calib_error;
  std::vector<Person> persons;
  int samples_per_person = 200;
  Eigen::VectorXd style;         // fixed per-domain nuisance vector
  ScreenRect screen;
  Vec3 origin_mean{0.0, 0.0, 60.0};
  Vec3 origin_std{2.0, 2.0, 2.0};
};

struct GazeSample {
  int domain_id = 0;
  int person_id = 0;
  ScreenTarget target_screen;
  Vec3 target_cam;               // via the TRUE extrinsics
  Vec3 origin;
  UnitGaze gaze_true;            // optical-axis ground truth
  UnitGaze gaze_label;           // recorded label, calibration + person deviation
  Eigen::VectorXd features;
};

struct SyntheticDataset {
  DomainSpec spec;
  std::vector<GazeSample> samples;
};

/// Applies a calibration error on top of the true extrinsics: the error
/// rotation left-multiplies, the offset adds to the translation.
inline Extrinsics perturbed_extrinsics(const Extrinsics& true_ext,
                                       const CalibrationError& err) {
  Extrinsics out;
  out.rotation =
      euler_to_rotation(EulerRot{err.pitch_deg, err.yaw_deg, err.roll_deg}) *
      true_ext.rotation;
  out.translation = true_ext.translation + Vec3(err.x_cm, err.y_cm, err.z_cm);
  return out;
}

/// Draws a person: axis offset ~ N(0, axis_std^2) per Euler component,
/// appearance ~ N(0,1)^appearance_dim.
inline Person sample_person(Rng& rng, double axis_std_deg, int appearance_dim,
                            int id = 0) {
  Person p;
  p.id = id;
  p.axis_offset.pitch_deg = rng.normal(0.0, axis_std_deg);
  p.axis_offset.yaw_deg = rng.normal(0.0, axis_std_deg);
  p.axis_offset.roll_deg = rng.normal(0.0, axis_std_deg);
  p.appearance.resize(appearance_dim);
  for (int i = 0; i < appearance_dim; ++i) p.appearance[i] = rng.normal();
  return p;
}

struct LabelRecord {
  Vec3 target_cam;
  UnitGaze gaze_true;
  UnitGaze gaze_label;
};

/// Produces the true gaze and the recorded (deviated) label for one target.
/// The label chain is: perturbed extrinsics move the target, then the
/// person's axis offset rotates the resulting direction.
inline LabelRecord record_label(const ScreenTarget& target,
                                const DomainSpec& spec, const Person& person,
                                const Vec3& origin) {
  LabelRecord rec;
  rec.target_cam = screen_to_camera(target, spec.true_extrinsics);
  rec.gaze_true = gaze_direction(origin, rec.target_cam);
  const Extrinsics measured =
      perturbed_extrinsics(spec.true_extrinsics, spec.calib_error);
  const UnitGaze deviated =
      gaze_direction(origin, screen_to_camera(target, measured));
  // Rotation preserves the unit norm; skipping renormalization keeps the
  // deviation-free path bit-identical to gaze_true.
  rec.gaze_label = UnitGaze{euler_to_rotation(person.axis_offset) * deviated.v};
  return rec;
}

struct FeatureParams {
  int feature_dim = 32;
  int appearance_dim = 8;
  int style_dim = 8;
  double sigma_feat = 0.05;
  // Per-map entry scales; gaze dominates so the regressor can read the
  // label back out, nuisance terms stay strong enough to matter.
  double gaze_gain = 5.0;
  double appearance_gain = 0.25;
  double style_gain = 0.2;
};

/// Frozen random maps that turn (gaze, appearance, style) into an abstract
/// feature vector; one instance is shared by every domain of an experiment.
struct FeatureSpace {
  int feature_dim = 32;
  int appearance_dim = 8;
  int style_dim = 8;
  double sigma_feat = 0.05;
  Eigen::MatrixXd gaze_map;        // feature_dim x 5
  Eigen::MatrixXd appearance_map;  // feature_dim x appearance_dim
  Eigen::MatrixXd style_map;       // feature_dim x style_dim

  static FeatureSpace make(std::uint64_t seed,
                           const FeatureParams& p = FeatureParams()) {
    FeatureSpace s;
    s.feature_dim = p.feature_dim;
    s.appearance_dim = p.appearance_dim;
    s.style_dim = p.style_dim;
    s.sigma_feat = p.sigma_feat;
    Rng rng = Rng::stream(seed, {0x6665617473ULL});  // feature-map stream
    auto fill = [&rng](Eigen::MatrixXd& m, int rows, int cols, double gain) {
      m.resize(rows, cols);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = gain * rng.normal();
    };
    fill(s.gaze_map, p.feature_dim, 5, p.gaze_gain);
    fill(s.appearance_map, p.feature_dim, p.appearance_dim, p.appearance_gain);
    fill(s.style_map, p.feature_dim, p.style_dim, p.style_gain);
    return s;
  }
};

/// Monomial basis of the polar gaze, angles scaled by 1/100 degree.
inline Eigen::Matrix<double, 5, 1> gaze_basis(const UnitGaze& g) {
  const PolarGaze p = vector_to_polar(g);
  const double t = p.theta_deg / 100.0;
  const double f = p.phi_deg / 100.0;
  Eigen::Matrix<double, 5, 1> b;
  b << t, f, t * t, f * f, t * f;
  return b;
}

/// features = gaze_map * basis + appearance_map * a + style_map * s + noise.
inline Eigen::VectorXd synthesize_features(const UnitGaze& gaze_true,
                                           const Eigen::VectorXd& appearance,
                                           const Eigen::VectorXd& style,
                                           const FeatureSpace& space,
                                           Rng& rng) {
  Eigen::VectorXd f = space.gaze_map * gaze_basis(gaze_true) +
                      space.appearance_map * appearance +
                      space.style_map * style;
  if (space.sigma_feat > 0.0) {
    for (int i = 0; i < f.size(); ++i) f[i] += rng.normal(0.0, space.sigma_feat);
  }
  return f;
}

namespace stream {
// Stream tags for derive_seed; IDs double as documentation of the scheme.
inline constexpr std::uint64_t kPerson = 1;
inline constexpr std::uint64_t kSample = 2;
inline constexpr std::uint64_t kDomainSpec = 3;
inline constexpr std::uint64_t kResample = 4;
inline constexpr std::uint64_t kTrain = 5;
inline constexpr std::uint64_t kMonteCarlo = 6;
inline constexpr std::uint64_t kSplit = 7;
}  // namespace stream

/// Generates the full dataset for one domain. Every person and every sample
/// draws from its own derived stream, so the result is bit-identical for a
/// given (spec, space, seed) regardless of generation order.
inline SyntheticDataset generate_domain(const DomainSpec& spec,
                                        const FeatureSpace& space,
                                        std::uint64_t seed) {
  SyntheticDataset ds;
  ds.spec = spec;
  ds.samples.reserve(spec.persons.size() * spec.samples_per_person);
  const std::uint64_t did = static_cast<std::uint64_t>(spec.id);
  for (std::size_t pi = 0; pi < spec.persons.size(); ++pi) {
    const Person& person = spec.persons[pi];
    Rng prng = Rng::stream(seed, {stream::kPerson, did, pi});
    Vec3 origin;
    for (int k = 0; k < 3; ++k)
      origin[k] = prng.normal(spec.origin_mean[k], spec.origin_std[k]);
    for (int si = 0; si < spec.samples_per_person; ++si) {
      Rng srng = Rng::stream(seed, {stream::kSample, did, pi,
                                    static_cast<std::uint64_t>(si)});
      GazeSample s;
      s.domain_id = spec.id;
      s.person_id = person.id;
      s.target_screen.u = srng.uniform(spec.screen.u_min, spec.screen.u_max);
      s.target_screen.v = srng.uniform(spec.screen.v_min, spec.screen.v_max);
      s.origin = origin;
      LabelRecord rec = record_label(s.target_screen, spec, person, origin);
      s.target_cam = rec.target_cam;
      s.gaze_true = rec.gaze_true;
      s.gaze_label = rec.gaze_label;
      s.features = synthesize_features(rec.gaze_true, person.appearance,
                                       spec.style, space, srng);
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

/// High-level knobs for building a DomainSpec with drawn calibration error,
/// style and persons.
struct DomainParams {
  int id = 0;
  int persons = 20;
  int samples_per_person = 200;
  double axis_std_deg = 2.5;
  double calib_tau_deg = 1.0;  // std of the drawn angular calibration error
  double calib_tau_cm = 1.0;   // std of the drawn translational error
  ScreenRect screen;
  Vec3 origin_mean{0.0, 0.0, 60.0};
  Vec3 origin_std{2.0, 2.0, 2.0};
  Extrinsics true_extrinsics;
};

inline DomainSpec make_domain_spec(const DomainParams& p,
                                   const FeatureSpace& space,
                                   std::uint64_t seed) {
  DomainSpec spec;
  spec.id = p.id;
  spec.true_extrinsics = p.true_extrinsics;
  spec.samples_per_person = p.samples_per_person;
  spec.screen = p.screen;
  spec.origin_mean = p.origin_mean;
  spec.origin_std = p.origin_std;

  const std::uint64_t did = static_cast<std::uint64_t>(p.id);
  Rng drng = Rng::stream(seed, {stream::kDomainSpec, did});
  spec.calib_error.pitch_deg = drng.normal(0.0, p.calib_tau_deg);
  spec.calib_error.yaw_deg = drng.normal(0.0, p.calib_tau_deg);
  spec.calib_error.roll_deg = drng.normal(0.0, p.calib_tau_deg);
  spec.calib_error.x_cm = drng.normal(0.0, p.calib_tau_cm);
  spec.calib_error.y_cm = drng.normal(0.0, p.calib_tau_cm);
  spec.calib_error.z_cm = drng.normal(0.0, p.calib_tau_cm);
  spec.style.resize(space.style_dim);
  for (int i = 0; i < space.style_dim; ++i) spec.style[i] = drng.normal();

  spec.persons.reserve(p.persons);
  for (int pi = 0; pi < p.persons; ++pi) {
    Rng prng = Rng::stream(seed, {stream::kDomainSpec, did, stream::kPerson,
                                  static_cast<std::uint64_t>(pi)});
    spec.persons.push_back(
        sample_person(prng, p.axis_std_deg, space.appearance_dim, pi));
  }
  return spec;
}

}  // namespace gla
