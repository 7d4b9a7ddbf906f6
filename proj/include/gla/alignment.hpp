#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "gla/errors.hpp"
#include "gla/geometry.hpp"
#include "gla/simulator.hpp"

// Label alignment: fits one of five function families mapping a domain's
// recorded labels y onto the predictions y_hat of an anchor-convention
// regressor, then re-labels the domain with the fitted function. The three
// polar-space families (offset, per-axis linear, affine) solve a shared
// least-squares objective in closed form; homography and the rigid camera
// transform minimize the angular error directly with Levenberg-Marquardt.

namespace gla {

struct OffsetModel {
  Eigen::Vector2d b = Eigen::Vector2d::Zero();  // degrees (theta, phi)
};

struct LinearModel {
  Eigen::Vector2d k = Eigen::Vector2d::Ones();
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
};

struct AffineModel {
  Eigen::Matrix2d a = Eigen::Matrix2d::Identity();
  Eigen::Vector2d t = Eigen::Vector2d::Zero();
};

struct HomographyModel {
  Eigen::Matrix3d h = Eigen::Matrix3d::Identity();  // h(2,2) pinned to 1
};

struct RigidRTModel {
  EulerRot rotation;             // applied to the camera-space target
  Vec3 translation{0, 0, 0};     // cm
};

using AlignmentModel = std::variant<OffsetModel, LinearModel, AffineModel,
                                    HomographyModel, RigidRTModel>;

enum class AlignmentKind { kOffset, kLinear, kAffine, kHomography, kRigidRT };

inline const char* to_string(AlignmentKind k) {
  switch (k) {
    case AlignmentKind::kOffset: return "offset";
    case AlignmentKind::kLinear: return "linear";
    case AlignmentKind::kAffine: return "affine";
    case AlignmentKind::kHomography: return "homography";
    case AlignmentKind::kRigidRT: return "rt";
  }
  return "?";
}

/// Granularity of one fitted alignment function.
enum class UnitKind { kPerson, kDataset };

/// What one sample contributes to a fit: its recorded label, the anchor
/// model's prediction, and the camera-space geometry for the rigid family.
struct AlignmentSample {
  UnitGaze label;
  UnitGaze predicted;
  Vec3 target_cam{0, 0, 0};
  Vec3 origin{0, 0, 0};
};

struct FitReport {
  double pre_mean_deg = 0.0;   // mean angle(label, prediction)
  double post_mean_deg = 0.0;  // mean angle(aligned label, prediction)
  int iterations = 0;          // 0 for closed-form fits
  bool converged = true;
  bool fallback_offset = false;  // unit too small for the requested family
  bool rank_deficient = false;   // degenerate design matrix, offset used
};

namespace detail {

inline double wrap_deg(double d) { return canonical_deg(d); }

/// Polar coordinates of label and (unwrapped) prediction target. The
/// prediction's phi is unwrapped to sit next to the label's phi so the
/// least-squares residuals never straddle the +-180 seam.
struct PolarPairs {
  Eigen::Matrix2Xd y;  // label (theta; phi) per column, degrees
  Eigen::Matrix2Xd q;  // unwrapped prediction target per column
};

inline PolarPairs polar_pairs(const std::vector<AlignmentSample>& samples) {
  PolarPairs p;
  p.y.resize(2, static_cast<Eigen::Index>(samples.size()));
  p.q.resize(2, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const PolarGaze a = vector_to_polar(samples[i].label);
    const PolarGaze b = vector_to_polar(samples[i].predicted);
    const Eigen::Index c = static_cast<Eigen::Index>(i);
    p.y(0, c) = a.theta_deg;
    p.y(1, c) = a.phi_deg;
    p.q(0, c) = a.theta_deg + (b.theta_deg - a.theta_deg);
    p.q(1, c) = a.phi_deg + wrap_deg(b.phi_deg - a.phi_deg);
  }
  return p;
}

}  // namespace detail

/// Applies a fitted alignment model to one sample. Polar families transform
/// (theta, phi) in degrees; the rigid family re-derives the direction from
/// the transformed camera-space target.
inline UnitGaze apply_alignment(const AlignmentModel& model, const UnitGaze& y,
                                const Vec3& target_cam, const Vec3& origin) {
  if (const auto* rt = std::get_if<RigidRTModel>(&model)) {
    const Vec3 moved =
        euler_to_rotation(rt->rotation) * target_cam + rt->translation - origin;
    if (moved.norm() <= 1e-6)
      throw DegenerateRay("aligned target coincides with the gaze origin");
    return UnitGaze{moved.normalized()};
  }
  const PolarGaze p = vector_to_polar(y);
  const Eigen::Vector2d v(p.theta_deg, p.phi_deg);
  Eigen::Vector2d out;
  if (const auto* off = std::get_if<OffsetModel>(&model)) {
    out = v + off->b;
  } else if (const auto* lin = std::get_if<LinearModel>(&model)) {
    out = lin->k.cwiseProduct(v) + lin->b;
  } else if (const auto* aff = std::get_if<AffineModel>(&model)) {
    out = aff->a * v + aff->t;
  } else {
    const auto& h = std::get<HomographyModel>(model).h;
    const Eigen::Vector3d hv = h * Eigen::Vector3d(v[0], v[1], 1.0);
    if (std::abs(hv[2]) < 1e-9)
      throw ProjectiveDegenerate("homogeneous coordinate vanished");
    out = hv.head<2>() / hv[2];
  }
  return polar_to_vector(PolarGaze{out[0], out[1]});
}

namespace detail {

struct LmOptions {
  int max_iterations = 200;
  double initial_lambda = 1e-3;
  double lambda_factor = 10.0;
  double jacobian_step = 1e-6;
  double step_tolerance = 1e-9;
  double objective_tolerance = 1e-12;
};

struct LmResult {
  Eigen::VectorXd x;
  int iterations = 0;
  bool converged = false;
  double sse = 0.0;
};

/// Damped Gauss-Newton with a central-difference Jacobian. Only improving
/// steps are accepted, so the objective is non-increasing by construction.
template <typename ResidualFn>
LmResult levenberg_marquardt(const ResidualFn& fn, Eigen::VectorXd x,
                             const LmOptions& opt = LmOptions()) {
  LmResult res;
  Eigen::VectorXd r = fn(x);
  double sse = r.squaredNorm();
  double lambda = opt.initial_lambda;
  const Eigen::Index np = x.size();

  Eigen::MatrixXd jac(r.size(), np);
  bool jac_fresh = false;
  while (res.iterations < opt.max_iterations) {
    ++res.iterations;
    if (!jac_fresh) {
      for (Eigen::Index j = 0; j < np; ++j) {
        Eigen::VectorXd xp = x, xm = x;
        xp[j] += opt.jacobian_step;
        xm[j] -= opt.jacobian_step;
        jac.col(j) = (fn(xp) - fn(xm)) / (2.0 * opt.jacobian_step);
      }
      jac_fresh = true;
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd g = jac.transpose() * r;
    Eigen::MatrixXd damped = jtj;
    for (Eigen::Index j = 0; j < np; ++j)
      damped(j, j) += lambda * std::max(jtj(j, j), 1e-12);
    const Eigen::VectorXd step = damped.ldlt().solve(-g);
    if (step.norm() < opt.step_tolerance) {
      res.converged = true;
      break;
    }
    const Eigen::VectorXd r_try = fn(x + step);
    const double sse_try = r_try.squaredNorm();
    if (sse_try < sse) {
      x += step;
      const double improvement = sse - sse_try;
      r = r_try;
      sse = sse_try;
      lambda = std::max(lambda / opt.lambda_factor, 1e-15);
      jac_fresh = false;
      if (improvement <= opt.objective_tolerance * std::max(sse, 1e-30)) {
        res.converged = true;
        break;
      }
    } else {
      lambda *= opt.lambda_factor;
    }
  }
  res.x = x;
  res.sse = sse;
  return res;
}

inline double mean_pre_error(const std::vector<AlignmentSample>& samples) {
  double sum = 0;
  for (const AlignmentSample& s : samples)
    sum += angular_error_deg(s.label, s.predicted);
  return sum / static_cast<double>(samples.size());
}

inline double mean_post_error(const AlignmentModel& model,
                              const std::vector<AlignmentSample>& samples) {
  double sum = 0;
  for (const AlignmentSample& s : samples)
    sum += angular_error_deg(
        apply_alignment(model, s.label, s.target_cam, s.origin), s.predicted);
  return sum / static_cast<double>(samples.size());
}

inline OffsetModel fit_offset(const PolarPairs& p) {
  OffsetModel m;
  m.b = (p.q - p.y).rowwise().mean();
  return m;
}

inline LinearModel fit_linear(const PolarPairs& p, bool& rank_deficient) {
  LinearModel m;
  for (int c = 0; c < 2; ++c) {
    const Eigen::ArrayXd xs = p.y.row(c).transpose().array();
    const Eigen::ArrayXd qs = p.q.row(c).transpose().array();
    const double mx = xs.mean();
    const double mq = qs.mean();
    const double var = (xs - mx).square().sum();
    const double cov = ((xs - mx) * (qs - mq)).sum();
    if (var < 1e-10 * static_cast<double>(xs.size())) {
      rank_deficient = true;
      return LinearModel{};
    }
    m.k[c] = cov / var;
    m.b[c] = mq - m.k[c] * mx;
  }
  return m;
}

inline AffineModel fit_affine(const PolarPairs& p, bool& rank_deficient) {
  const Eigen::Index n = p.y.cols();
  Eigen::MatrixXd design(n, 3);
  design.col(0) = p.y.row(0).transpose();
  design.col(1) = p.y.row(1).transpose();
  design.col(2).setOnes();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(design,
                                        Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  if (smin <= 0.0 || smax / smin > 1e10) {
    rank_deficient = true;
    return AffineModel{};
  }
  const Eigen::MatrixXd sol = svd.solve(p.q.transpose());  // 3 x 2
  AffineModel m;
  m.a = sol.topRows<2>().transpose();
  m.t = sol.row(2).transpose();
  return m;
}

inline HomographyModel fit_homography(const PolarPairs& p,
                                      const std::vector<AlignmentSample>& samples,
                                      FitReport& report) {
  auto residuals = [&](const Eigen::VectorXd& hp) {
    Eigen::Matrix3d h;
    h << hp[0], hp[1], hp[2], hp[3], hp[4], hp[5], hp[6], hp[7], 1.0;
    Eigen::VectorXd r(p.y.cols());
    for (Eigen::Index i = 0; i < p.y.cols(); ++i) {
      const Eigen::Vector3d hv = h * Eigen::Vector3d(p.y(0, i), p.y(1, i), 1.0);
      if (std::abs(hv[2]) < 1e-9) {
        r[i] = 180.0;  // push LM away from the projective horizon
        continue;
      }
      const UnitGaze aligned =
          polar_to_vector(PolarGaze{hv[0] / hv[2], hv[1] / hv[2]});
      r[i] = angular_error_deg(aligned, samples[static_cast<std::size_t>(i)].predicted);
    }
    return r;
  };
  Eigen::VectorXd x0(8);
  x0 << 1, 0, 0, 0, 1, 0, 0, 0;
  const LmResult lm = levenberg_marquardt(residuals, x0);
  report.iterations = lm.iterations;
  report.converged = lm.converged;
  HomographyModel m;
  m.h << lm.x[0], lm.x[1], lm.x[2], lm.x[3], lm.x[4], lm.x[5], lm.x[6], lm.x[7], 1.0;
  return m;
}

inline RigidRTModel fit_rigid(const std::vector<AlignmentSample>& samples,
                              FitReport& report) {
  auto residuals = [&](const Eigen::VectorXd& v) {
    const Mat3 rot = euler_to_rotation(EulerRot{v[0], v[1], v[2]});
    const Vec3 trans(v[3], v[4], v[5]);
    Eigen::VectorXd r(static_cast<Eigen::Index>(samples.size()));
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Vec3 moved = rot * samples[i].target_cam + trans - samples[i].origin;
      const double norm = moved.norm();
      if (norm <= 1e-6) {
        r[static_cast<Eigen::Index>(i)] = 180.0;
        continue;
      }
      r[static_cast<Eigen::Index>(i)] = angular_error_deg(
          UnitGaze{moved / norm}, samples[i].predicted);
    }
    return r;
  };
  const LmResult lm = levenberg_marquardt(residuals, Eigen::VectorXd::Zero(6));
  report.iterations = lm.iterations;
  report.converged = lm.converged;
  RigidRTModel m;
  m.rotation = EulerRot{lm.x[0], lm.x[1], lm.x[2]};
  m.translation = Vec3(lm.x[3], lm.x[4], lm.x[5]);
  return m;
}

}  // namespace detail

/// Samples required before a family is fitted; below this the fit falls
/// back to the offset family (flagged in the report).
inline int min_unit_size(AlignmentKind kind) {
  switch (kind) {
    case AlignmentKind::kOffset: return 1;
    case AlignmentKind::kLinear:
    case AlignmentKind::kAffine: return 10;
    case AlignmentKind::kHomography:
    case AlignmentKind::kRigidRT: return 30;
  }
  return 1;
}

/// Fits one alignment unit. Throws InsufficientSamples on an empty unit.
inline std::pair<AlignmentModel, FitReport> fit_alignment(
    AlignmentKind kind, const std::vector<AlignmentSample>& samples) {
  if (samples.empty())
    throw InsufficientSamples("alignment unit has no samples");

  FitReport report;
  report.pre_mean_deg = detail::mean_pre_error(samples);

  AlignmentKind effective = kind;
  if (static_cast<int>(samples.size()) < min_unit_size(kind)) {
    effective = AlignmentKind::kOffset;
    report.fallback_offset = true;
  }

  const detail::PolarPairs pairs = detail::polar_pairs(samples);
  AlignmentModel model;
  bool rank_deficient = false;
  switch (effective) {
    case AlignmentKind::kOffset:
      model = detail::fit_offset(pairs);
      break;
    case AlignmentKind::kLinear:
      model = detail::fit_linear(pairs, rank_deficient);
      break;
    case AlignmentKind::kAffine:
      model = detail::fit_affine(pairs, rank_deficient);
      break;
    case AlignmentKind::kHomography:
      model = detail::fit_homography(pairs, samples, report);
      break;
    case AlignmentKind::kRigidRT:
      model = detail::fit_rigid(samples, report);
      break;
  }
  if (rank_deficient) {
    report.rank_deficient = true;
    model = detail::fit_offset(pairs);
  }
  report.post_mean_deg = detail::mean_post_error(model, samples);
  return {model, report};
}

/// One fitted unit inside a domain: unit_id is the person id for
/// person-level alignment and -1 for whole-dataset alignment.
struct UnitFit {
  int unit_id = -1;
  AlignmentModel model;
  FitReport report;
};

inline constexpr int kDatasetUnitId = -1;

/// Fits every alignment unit of one domain's sample set. `unit_ids` assigns
/// each sample to its unit (person id or kDatasetUnitId).
inline std::vector<UnitFit> fit_units(AlignmentKind kind,
                                      const std::vector<AlignmentSample>& samples,
                                      const std::vector<int>& unit_ids) {
  std::map<int, std::vector<AlignmentSample>> grouped;
  for (std::size_t i = 0; i < samples.size(); ++i)
    grouped[unit_ids[i]].push_back(samples[i]);
  std::vector<UnitFit> fits;
  fits.reserve(grouped.size());
  for (const auto& [unit_id, unit_samples] : grouped) {
    auto [model, report] = fit_alignment(kind, unit_samples);
    fits.push_back({unit_id, std::move(model), report});
  }
  return fits;
}

/// Re-labels a domain: each sample is transformed by the model of its unit.
/// Original labels are left untouched; the aligned labels come back as a
/// parallel column. Throws UncoveredSample if a unit has no model.
inline std::vector<UnitGaze> relabel_domain(const SyntheticDataset& ds,
                                            const std::vector<UnitGaze>& labels,
                                            const std::vector<UnitFit>& fits,
                                            UnitKind unit_kind) {
  std::map<int, const AlignmentModel*> by_unit;
  for (const UnitFit& f : fits) by_unit[f.unit_id] = &f.model;
  std::vector<UnitGaze> aligned;
  aligned.reserve(ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const GazeSample& s = ds.samples[i];
    const int unit =
        unit_kind == UnitKind::kPerson ? s.person_id : kDatasetUnitId;
    auto it = by_unit.find(unit);
    if (it == by_unit.end())
      throw UncoveredSample("no alignment model for unit " + std::to_string(unit));
    aligned.push_back(
        apply_alignment(*it->second, labels[i], s.target_cam, s.origin));
  }
  return aligned;
}

}  // namespace gla
