#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "gla/regressor.hpp"

using namespace gla;

namespace {

ModelParams random_params(int feature_dim, int hidden_dim, std::uint64_t seed) {
  Rng rng(seed);
  ModelParams m;
  m.extractor = init_extractor(feature_dim, hidden_dim, rng);
  m.head = init_head(hidden_dim, rng);
  return m;
}

// Central-difference gradient of the surrogate loss for one parameter slot;
// the slot pointer aliases into `m`, which is restored before returning.
double numeric_grad(ModelParams& m, double* slot, const Eigen::MatrixXd& x,
                    const Eigen::Matrix3Xd& y) {
  const double h = 1e-5;
  Gradients scratch;
  const double orig = *slot;
  *slot = orig + h;
  const double up = loss_and_gradient(m, x, y, scratch);
  *slot = orig - h;
  const double dn = loss_and_gradient(m, x, y, scratch);
  *slot = orig;
  return (up - dn) / (2.0 * h);
}

void check_grad_block(ModelParams& m, Eigen::Map<Eigen::VectorXd> analytic,
                      double* data, Eigen::Index count, const Eigen::MatrixXd& x,
                      const Eigen::Matrix3Xd& y) {
  for (Eigen::Index i = 0; i < count; ++i) {
    const double num = numeric_grad(m, data + i, x, y);
    const double ana = analytic[i];
    const double denom = std::max({std::abs(num), std::abs(ana), 1e-6});
    REQUIRE(std::abs(num - ana) / denom < 1e-4);
  }
}

}  // namespace

TEST_CASE("analytic gradient matches central differences") {
  const int d = 5, h = 4, n = 8;
  Rng data_rng(123);
  Eigen::MatrixXd x(d, n);
  Eigen::Matrix3Xd y(3, n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) x(k, i) = data_rng.normal();
    y.col(i) = polar_to_vector(PolarGaze{data_rng.uniform(-30, 30),
                                         data_rng.uniform(-40, 40)}).v;
  }

  for (std::uint64_t point = 0; point < 10; ++point) {
    ModelParams m = random_params(d, h, 1000 + point);
    Gradients g;
    loss_and_gradient(m, x, y, g);
    check_grad_block(m, {g.w1.data(), g.w1.size()}, m.extractor.w.data(),
                     m.extractor.w.size(), x, y);
    check_grad_block(m, {g.b1.data(), g.b1.size()}, m.extractor.b.data(),
                     m.extractor.b.size(), x, y);
    check_grad_block(m, {g.w2.data(), g.w2.size()}, m.head.w.data(),
                     m.head.w.size(), x, y);
    check_grad_block(m, {g.b2.data(), g.b2.size()}, m.head.b.data(),
                     m.head.b.size(), x, y);
  }
}

TEST_CASE("surrogate 1 - cos is strictly increasing in the angular error") {
  double prev = -1.0;
  for (double e = 0.0; e <= 180.0; e += 0.5) {
    const double s = 1.0 - std::cos(deg2rad(e));
    REQUIRE(s > prev);
    prev = s;
  }
}

TEST_CASE("predict maps the zero head to the polar origin") {
  ModelParams m;
  m.extractor.w = Eigen::MatrixXd::Zero(4, 3);
  m.extractor.b = Eigen::VectorXd::Zero(4);
  m.head.w = Eigen::MatrixXd::Zero(2, 4);
  m.head.b = Eigen::VectorXd::Zero(2);
  UnitGaze g = predict(m, Eigen::VectorXd::Constant(3, 0.7));
  REQUIRE(g.v.isApprox(Vec3(0, 0, -1), 1e-15));
}

TEST_CASE("predict clamps polar pitch at the pole and counts it") {
  ModelParams m;
  m.extractor.w = Eigen::MatrixXd::Zero(4, 3);
  m.extractor.b = Eigen::VectorXd::Zero(4);
  m.head.w = Eigen::MatrixXd::Zero(2, 4);
  m.head.b = Eigen::VectorXd::Zero(2);
  m.head.b[0] = 2.5;  // radians, way past the pole
  PredictStats stats;
  UnitGaze g = predict(m, Eigen::VectorXd::Zero(3), &stats);
  REQUIRE(stats.clamped == 1);
  PolarGaze p = vector_to_polar(g);
  REQUIRE(p.theta_deg == Catch::Approx(89.9).margin(1e-9));
}

TEST_CASE("predict_batch returns unit vectors for every sample") {
  ModelParams m = random_params(6, 5, 77);
  Rng rng(9);
  Eigen::MatrixXd x(6, 40);
  for (int i = 0; i < 40; ++i)
    for (int k = 0; k < 6; ++k) x(k, i) = rng.normal();
  Eigen::Matrix3Xd pred = predict_batch(m, x);
  REQUIRE(pred.cols() == 40);
  for (int i = 0; i < 40; ++i)
    REQUIRE(std::abs(pred.col(i).norm() - 1.0) < 1e-12);
}

TEST_CASE("zero epochs returns the untouched initialization") {
  Rng data_rng(5);
  Eigen::MatrixXd x(4, 200);
  Eigen::Matrix3Xd y(3, 200);
  for (int i = 0; i < 200; ++i) {
    for (int k = 0; k < 4; ++k) x(k, i) = data_rng.normal();
    y.col(i) = Vec3(0, 0, -1);
  }
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.head_epochs = 0;
  cfg.seed = 42;
  cfg.hidden_dim = 8;
  ModelParams m = train_full(x, y, cfg);

  Rng init_rng = Rng::stream(42, {stream::kTrain, 0});
  Extractor e = init_extractor(4, 8, init_rng);
  Head h = init_head(8, init_rng);
  REQUIRE(m.extractor.w == e.w);
  REQUIRE(m.extractor.b == e.b);
  REQUIRE(m.head.w == h.w);
  REQUIRE(m.head.b == h.b);

  Rng head_rng = Rng::stream(42, {stream::kTrain, 2});
  Head h0 = train_head(m.extractor, x, y, cfg);
  Head want = init_head(8, head_rng);
  REQUIRE(h0.w == want.w);
  REQUIRE(h0.b == want.b);
}

TEST_CASE("training is deterministic in the seed") {
  Rng data_rng(6);
  Eigen::MatrixXd x(4, 300);
  Eigen::Matrix3Xd y(3, 300);
  for (int i = 0; i < 300; ++i) {
    for (int k = 0; k < 4; ++k) x(k, i) = data_rng.normal();
    y.col(i) = polar_to_vector(PolarGaze{x(0, i), x(1, i)}).v;
  }
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.head_epochs = 5;
  cfg.seed = 11;
  cfg.hidden_dim = 8;
  cfg.batch_size = 64;
  ModelParams a = train_full(x, y, cfg);
  ModelParams b = train_full(x, y, cfg);
  REQUIRE(a.extractor.w == b.extractor.w);
  REQUIRE(a.head.w == b.head.w);

  Head ha = train_head(a.extractor, x, y, cfg);
  Head hb = train_head(a.extractor, x, y, cfg);
  REQUIRE(ha.w == hb.w);
  REQUIRE(ha.b == hb.b);
}

TEST_CASE("train_head leaves the frozen extractor bit-identical") {
  Rng data_rng(8);
  Eigen::MatrixXd x(4, 200);
  Eigen::Matrix3Xd y(3, 200);
  for (int i = 0; i < 200; ++i) {
    for (int k = 0; k < 4; ++k) x(k, i) = data_rng.normal();
    y.col(i) = polar_to_vector(PolarGaze{2 * x(0, i), 3 * x(1, i)}).v;
  }
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 21;
  cfg.hidden_dim = 8;
  cfg.batch_size = 50;
  ModelParams m = train_full(x, y, cfg);
  const Eigen::MatrixXd w_before = m.extractor.w;
  const Eigen::VectorXd b_before = m.extractor.b;
  (void)train_head(m.extractor, x, y, cfg);
  REQUIRE(m.extractor.w == w_before);
  REQUIRE(m.extractor.b == b_before);
}

TEST_CASE("clean features train below one degree") {
  FeatureParams fp;
  fp.sigma_feat = 0.0;
  FeatureSpace space = FeatureSpace::make(100, fp);
  DomainParams dp;
  dp.persons = 10;
  dp.samples_per_person = 200;
  dp.axis_std_deg = 0.0;
  dp.calib_tau_deg = 0.0;
  dp.calib_tau_cm = 0.0;
  DomainSpec spec = make_domain_spec(dp, space, 100);
  SyntheticDataset ds = generate_domain(spec, space, 100);

  Eigen::MatrixXd x = features_of(ds);
  Eigen::Matrix3Xd y(3, ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    y.col(static_cast<Eigen::Index>(i)) = ds.samples[i].gaze_label.v;

  TrainConfig cfg;
  cfg.seed = 1;
  ModelParams m = train_full(x, y, cfg);
  const double full_err = mean_angular_error(m, x, y);
  REQUIRE(full_err < 1.0);

  Head h = train_head(m.extractor, x, y, cfg);
  ModelParams head_model{m.extractor, h};
  REQUIRE(mean_angular_error(head_model, x, y) <= 1.2 * full_err);
}

TEST_CASE("non-finite features abort with the batch index") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(3, 200);
  x(0, 5) = std::numeric_limits<double>::quiet_NaN();
  Eigen::Matrix3Xd y(3, 200);
  for (int i = 0; i < 200; ++i) y.col(i) = Vec3(0, 0, -1);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.seed = 2;
  cfg.hidden_dim = 4;
  REQUIRE_THROWS_AS(train_full(x, y, cfg), NonFiniteLoss);
}

TEST_CASE("resample_balanced takes the minimum count from each domain") {
  FeatureSpace space = FeatureSpace::make(3);
  DomainParams dp;
  dp.persons = 2;
  dp.samples_per_person = 50;
  dp.calib_tau_deg = 0;
  dp.calib_tau_cm = 0;
  DomainSpec s0 = make_domain_spec(dp, space, 1);
  dp.persons = 1;
  dp.samples_per_person = 40;
  dp.id = 1;
  DomainSpec s1 = make_domain_spec(dp, space, 1);
  SyntheticDataset a = generate_domain(s0, space, 1);
  SyntheticDataset b = generate_domain(s1, space, 1);

  SECTION("equal sizes keep everything") {
    Rng rng(3);
    auto pooled = resample_balanced({&a, &a}, rng);
    REQUIRE(pooled.size() == 200);
  }
  SECTION("unequal sizes are clipped to the smallest") {
    Rng rng(3);
    auto pooled = resample_balanced({&a, &b}, rng);
    REQUIRE(pooled.size() == 80);
    int from_a = 0, from_b = 0;
    std::set<int> seen_a, seen_b;
    for (const PooledIndex& p : pooled) {
      if (p.domain == 0) {
        ++from_a;
        seen_a.insert(p.sample);
      } else {
        ++from_b;
        seen_b.insert(p.sample);
      }
    }
    REQUIRE(from_a == 40);
    REQUIRE(from_b == 40);
    REQUIRE(seen_a.size() == 40);  // without replacement
    REQUIRE(seen_b.size() == 40);
  }
  SECTION("deterministic under the same seed") {
    Rng r1(3), r2(3);
    auto p1 = resample_balanced({&a, &b}, r1);
    auto p2 = resample_balanced({&a, &b}, r2);
    REQUIRE(p1.size() == p2.size());
    for (std::size_t i = 0; i < p1.size(); ++i) {
      REQUIRE(p1[i].domain == p2[i].domain);
      REQUIRE(p1[i].sample == p2[i].sample);
    }
  }
}

TEST_CASE("a duplicated domain pools every sample exactly twice") {
  FeatureSpace space = FeatureSpace::make(3);
  DomainParams dp;
  dp.persons = 2;
  dp.samples_per_person = 30;
  DomainSpec s0 = make_domain_spec(dp, space, 1);
  SyntheticDataset a = generate_domain(s0, space, 1);

  Rng rng(5);
  auto pooled = resample_balanced({&a, &a}, rng);
  REQUIRE(pooled.size() == 120);
  std::vector<int> count(60, 0);
  for (const PooledIndex& p : pooled) ++count[static_cast<std::size_t>(p.sample)];
  for (int c : count) REQUIRE(c == 2);

  // Training depends only on the pooled list and the seed.
  Eigen::MatrixXd x(a.samples[0].features.size(), pooled.size());
  Eigen::Matrix3Xd y(3, pooled.size());
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    x.col(static_cast<Eigen::Index>(i)) =
        a.samples[static_cast<std::size_t>(pooled[i].sample)].features;
    y.col(static_cast<Eigen::Index>(i)) =
        a.samples[static_cast<std::size_t>(pooled[i].sample)].gaze_label.v;
  }
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 9;
  cfg.hidden_dim = 8;
  ModelParams m1 = train_full(x, y, cfg);
  ModelParams m2 = train_full(x, y, cfg);
  REQUIRE(m1.extractor.w == m2.extractor.w);
  REQUIRE(m1.head.w == m2.head.w);
}
