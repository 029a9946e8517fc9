#include "dtlab/daverify.hpp"

#include <cmath>

#include "doctest.h"
#include "dtlab/rng.hpp"

using namespace dtlab;

namespace {

TrainedModel scalar_model(const Network& extractor, const Vector& head_w, double head_b = 0.0) {
  TrainedModel m;
  m.extractor = extractor;
  m.head_weight = Matrix(1, head_w.size());
  m.head_weight.row(0) = head_w.transpose();
  m.head_bias = Vector{{head_b}};
  return m;
}

Network identity_net(int dim) {
  return Network({Layer{Matrix::Identity(dim, dim), Vector::Zero(dim), Activation::kIdentity}});
}

EmpiricalDataset random_scalar_data(int n, int m, std::uint64_t seed) {
  SplitMix64 rng(seed);
  EmpiricalDataset ds;
  ds.inputs = Matrix(n, m);
  ds.targets = Matrix(n, 1);
  for (int i = 0; i < n * m; ++i) ds.inputs.data()[i] = rng.gaussian();
  for (int i = 0; i < n; ++i) ds.targets(i, 0) = rng.gaussian();
  return ds;
}

}  // namespace

TEST_CASE("omega_exact: feature level, 1-D rademacher W gives s^2 E[x^2] w^2") {
  const double s = 0.2, w = 1.7;
  EmpiricalDataset ds = random_scalar_data(16, 1, 3);
  AugmentationSpec spec;
  spec.level = AugLevel::kFeature;
  spec.w_kind = WDistKind::kRademacherDiagonal;
  spec.w_scale = s;
  const TrainedModel model = scalar_model(identity_net(1), Vector{{w}});
  const OmegaBreakdown omega = omega_exact(model, ds, spec);
  const double expect = s * s * ds.inputs.array().square().mean() * w * w;
  CHECK(omega.total == doctest::Approx(expect).epsilon(1e-12));
  CHECK(omega.b_feature_term == 0.0);
}

TEST_CASE("omega_exact: data level, linear f(x)=Ax with gaussian b gives sigma^2 ||A^T w||^2") {
  Matrix a(3, 2);
  a << 1.0, -0.5, 0.25, 2.0, -1.5, 0.75;
  const Network f({Layer{a, Vector::Zero(3), Activation::kIdentity}});
  const Vector w{{0.5, -1.0, 0.25}};
  const TrainedModel model = scalar_model(f, w);
  EmpiricalDataset ds = random_scalar_data(8, 2, 5);
  AugmentationSpec spec;
  spec.level = AugLevel::kData;
  spec.algorithm = AugAlgorithm::kLossAveraging;
  spec.b_kind = BDistKind::kGaussianIso;
  spec.b_sigma = 0.3;
  const OmegaBreakdown omega = omega_exact(model, ds, spec);
  const double expect = 0.09 * (a.transpose() * w).squaredNorm();
  CHECK(omega.jac_b_term == doctest::Approx(expect).epsilon(1e-12));
  CHECK(omega.jac_w_term == 0.0);
  CHECK(std::abs(omega.hessian_term) <= 1e-10);  // linear net has no curvature
  CHECK(omega.total == doctest::Approx(omega.hessian_term + omega.jac_b_term + omega.jac_w_term));
}

TEST_CASE("omega_exact: relu nets raise the zero-hessian flag") {
  const Network f = random_network({2, 6, 3}, Activation::kRelu, 7);
  const TrainedModel model = scalar_model(f, Vector{{1.0, -0.5, 0.25}});
  EmpiricalDataset ds = random_scalar_data(8, 2, 9);
  AugmentationSpec spec;
  spec.level = AugLevel::kData;
  spec.algorithm = AugAlgorithm::kPredictionAveraging;
  spec.b_kind = BDistKind::kGaussianIso;
  spec.b_sigma = 0.1;
  const OmegaBreakdown omega = omega_exact(model, ds, spec);
  CHECK(omega.corollary_relu);
  CHECK(omega.hessian_term == 0.0);
  CHECK(omega.total == 0.0);  // prediction averaging keeps only the hessian term
  // loss averaging keeps the nonnegative jacobian terms
  spec.algorithm = AugAlgorithm::kLossAveraging;
  const OmegaBreakdown omega_l = omega_exact(model, ds, spec);
  CHECK(omega_l.total == doctest::Approx(omega_l.jac_b_term));
  CHECK(omega_l.jac_b_term >= 0.0);
}

TEST_CASE("omega terms: loss-averaging minus prediction-averaging is the two nonnegative terms") {
  const Network f = random_network({3, 6, 4}, Activation::kTanh, 11);
  const TrainedModel model = scalar_model(f, Vector{{0.4, -0.2, 0.7, 0.1}}, 0.2);
  EmpiricalDataset ds = random_scalar_data(10, 3, 13);
  AugmentationSpec spec;
  spec.level = AugLevel::kData;
  spec.w_kind = WDistKind::kRademacherDiagonal;
  spec.w_scale = 0.05;
  spec.b_kind = BDistKind::kGaussianIso;
  spec.b_sigma = 0.05;
  spec.algorithm = AugAlgorithm::kLossAveraging;
  const OmegaBreakdown la = omega_exact(model, ds, spec);
  spec.algorithm = AugAlgorithm::kPredictionAveraging;
  const OmegaBreakdown pa = omega_exact(model, ds, spec);
  CHECK(la.jac_w_term >= 0.0);
  CHECK(la.jac_b_term >= 0.0);
  CHECK(la.total - pa.total == doctest::Approx(la.jac_w_term + la.jac_b_term).epsilon(1e-12));
}

TEST_CASE("mc_da_loss: identity + zero equals the plain objective exactly") {
  const Network f = random_network({2, 5, 3}, Activation::kTanh, 15);
  const TrainedModel model = scalar_model(f, Vector{{0.3, 0.3, -0.6}});
  EmpiricalDataset ds = random_scalar_data(12, 2, 17);
  AugmentationSpec spec;  // identity W, zero b
  spec.level = AugLevel::kData;
  const McLoss mc = mc_da_loss(model, ds, spec, 10, 1);
  CHECK(mc.exact);
  CHECK(mc.std_error == 0.0);
  CHECK(mc.value == doctest::Approx(evaluate(model, ds, EvalMode::kSquaredLoss)).epsilon(1e-15));
}

TEST_CASE("mc_da_loss: rademacher support is enumerated with zero stderr") {
  const Network f = random_network({2, 4, 2}, Activation::kTanh, 19);
  const TrainedModel model = scalar_model(f, Vector{{1.0, 0.5}});
  EmpiricalDataset ds = random_scalar_data(6, 2, 21);
  AugmentationSpec spec;
  spec.level = AugLevel::kData;
  spec.w_kind = WDistKind::kRademacherDiagonal;
  spec.w_scale = 0.1;
  const McLoss mc = mc_da_loss(model, ds, spec, 5, 1);
  CHECK(mc.exact);
  CHECK(mc.std_error == 0.0);
}

TEST_CASE("mc_da_loss: gaussian stderr shrinks like 1/sqrt(n_mc)") {
  const Network f = identity_net(2);
  const TrainedModel model = scalar_model(f, Vector{{1.0, -1.0}});
  EmpiricalDataset ds = random_scalar_data(8, 2, 23);
  AugmentationSpec spec;
  spec.level = AugLevel::kData;
  spec.b_kind = BDistKind::kGaussianIso;
  spec.b_sigma = 0.2;
  const McLoss coarse = mc_da_loss(model, ds, spec, 500, 5);
  const McLoss fine = mc_da_loss(model, ds, spec, 8000, 6);
  CHECK_FALSE(coarse.exact);
  CHECK(coarse.std_error > 0.0);
  const double ratio = coarse.std_error / fine.std_error;
  CHECK(ratio == doctest::Approx(4.0).epsilon(0.35));  // sqrt(8000/500) = 4
}

TEST_CASE("verify_da_identity: feature level is exact under enumeration") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Network f = random_network({3, 8, 4}, Activation::kTanh, 100 + seed);
    SplitMix64 rng(200 + seed);
    Vector w(4);
    for (int i = 0; i < 4; ++i) w[i] = rng.gaussian();
    const TrainedModel model = scalar_model(f, w, 0.1);
    EmpiricalDataset ds = random_scalar_data(16, 3, 300 + seed);
    AugmentationSpec spec;
    spec.level = AugLevel::kFeature;
    spec.w_kind = WDistKind::kRademacherDiagonal;
    spec.w_scale = 1.0;
    const DaVerifyResult res = verify_da_identity(model, ds, spec, {0.2, 0.1, 0.05, 0.025}, 10, seed);
    CHECK(res.exact_identity_expected);
    CHECK(res.pass);
    for (const OmegaReport& row : res.rows) {
      CHECK(row.exact);
      CHECK(row.residual <= 1e-10);
    }
  }
}

TEST_CASE("verify_da_identity: feature level with gaussian b stays within MC error") {
  const Network f = random_network({2, 6, 3}, Activation::kTanh, 31);
  const TrainedModel model = scalar_model(f, Vector{{0.8, -0.3, 0.5}});
  EmpiricalDataset ds = random_scalar_data(12, 2, 33);
  AugmentationSpec spec;
  spec.level = AugLevel::kFeature;
  spec.b_kind = BDistKind::kGaussianIso;
  spec.b_sigma = 1.0;
  const DaVerifyResult res = verify_da_identity(model, ds, spec, {0.2, 0.1, 0.05, 0.025}, 20000, 35);
  CHECK(res.pass);
}

TEST_CASE("verify_da_identity: smooth data-level residual decays at cubic order or faster") {
  int passed = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Network f = random_network({3, 8, 3}, Activation::kTanh, 400 + seed);
    SplitMix64 rng(500 + seed);
    Vector w(3);
    for (int i = 0; i < 3; ++i) w[i] = 1.0 + std::abs(rng.gaussian());
    const TrainedModel model = scalar_model(f, w);
    EmpiricalDataset ds = random_scalar_data(12, 3, 600 + seed);
    AugmentationSpec spec;
    spec.level = AugLevel::kData;
    spec.algorithm = AugAlgorithm::kLossAveraging;
    spec.w_kind = WDistKind::kRademacherDiagonal;
    spec.w_scale = 1.0;
    const DaVerifyResult res =
        verify_da_identity(model, ds, spec, {0.1, 0.05, 0.025, 0.0125}, 10, 700 + seed);
    CHECK_FALSE(res.exact_identity_expected);
    CHECK(res.slope_defined);
    if (res.pass) ++passed;
    CHECK(res.slope >= 2.7);
  }
  CHECK(passed == 5);
}

TEST_CASE("verify_da_identity: linear extractor has no higher-order terms") {
  const Network f = identity_net(3);
  const TrainedModel model = scalar_model(f, Vector{{0.5, -0.25, 1.0}});
  EmpiricalDataset ds = random_scalar_data(10, 3, 41);
  AugmentationSpec spec;
  spec.level = AugLevel::kData;
  spec.algorithm = AugAlgorithm::kLossAveraging;
  spec.w_kind = WDistKind::kRademacherDiagonal;
  spec.w_scale = 1.0;
  const DaVerifyResult res = verify_da_identity(model, ds, spec, {0.2, 0.1, 0.05, 0.025}, 10, 43);
  CHECK(res.exact_identity_expected);
  CHECK(res.pass);
}

TEST_CASE("verify_da_identity: condition violations surface as first-order residuals") {
  const Network f = random_network({3, 6, 3}, Activation::kTanh, 45);
  const TrainedModel model = scalar_model(f, Vector{{0.7, 0.2, -0.4}});
  EmpiricalDataset ds = random_scalar_data(12, 3, 47);

  AugmentationSpec rot;
  rot.level = AugLevel::kData;
  rot.algorithm = AugAlgorithm::kLossAveraging;
  rot.w_kind = WDistKind::kFixedPlaneRotation;
  rot.w_theta = 1.0;
  rot.w_prob = 0.5;
  const DaVerifyResult rot_res =
      verify_da_identity(model, ds, rot, {0.02, 0.01, 0.005, 0.0025}, 10, 49);
  CHECK(rot_res.slope_defined);
  CHECK(rot_res.slope == doctest::Approx(1.0).epsilon(0.2));
  CHECK_FALSE(rot_res.pass);
  for (const OmegaReport& row : rot_res.rows) CHECK(row.exact);  // finite support, no MC excuse

  AugmentationSpec shift;
  shift.level = AugLevel::kData;
  shift.algorithm = AugAlgorithm::kLossAveraging;
  shift.b_kind = BDistKind::kFixedShift;
  shift.b_shift = Vector{{1.0, 1.0, -1.0}};
  shift.b_prob = 0.5;
  const DaVerifyResult shift_res =
      verify_da_identity(model, ds, shift, {0.02, 0.01, 0.005, 0.0025}, 10, 51);
  CHECK(shift_res.slope == doctest::Approx(1.0).epsilon(0.2));
  CHECK_FALSE(shift_res.pass);
}

TEST_CASE("hand-expanded quadratic toy: residual is exactly w^2 sigma^4 (slope 4)") {
  // f(x) = x^2, head w, data-level b = +-sigma each with probability 1/2:
  // E[loss] - (plain + omega) = w^2 sigma^4 per the closed-form expansion.
  const double w = 1.3, x = 0.7, y = 0.4;
  std::vector<double> sigmas{0.2, 0.1, 0.05, 0.025};
  std::vector<double> residuals;
  for (double sigma : sigmas) {
    const double r = w * x * x - y;
    const double lhs = 0.5 * (std::pow(w * (x + sigma) * (x + sigma) - y, 2) +
                              std::pow(w * (x - sigma) * (x - sigma) - y, 2));
    const double omega = 2.0 * r * w * sigma * sigma       // hessian trace term
                         + 4.0 * w * w * sigma * sigma * x * x;  // jacobian b-term
    const double rhs = r * r + omega;
    residuals.push_back(std::abs(lhs - rhs));
    CHECK(std::abs(lhs - rhs) == doctest::Approx(w * w * std::pow(sigma, 4)).epsilon(1e-9));
  }
  CHECK(fit_loglog_slope(sigmas, residuals) == doctest::Approx(4.0).epsilon(1e-6));
}

TEST_CASE("verify_da_identity input validation") {
  const Network f = identity_net(2);
  const TrainedModel model = scalar_model(f, Vector{{1.0, 1.0}});
  EmpiricalDataset ds = random_scalar_data(6, 2, 53);
  AugmentationSpec spec;
  spec.level = AugLevel::kData;
  CHECK_THROWS_AS(verify_da_identity(model, ds, spec, {0.1, 0.05, 0.025}, 10, 1),
                  std::invalid_argument);

  TrainedModel vector_head;
  vector_head.extractor = f;
  vector_head.head_weight = Matrix::Identity(2, 2);
  vector_head.head_bias = Vector::Zero(2);
  CHECK_THROWS_AS(omega_exact(vector_head, ds, spec), std::invalid_argument);
}
