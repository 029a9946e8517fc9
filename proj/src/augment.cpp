#include "dtlab/augment.hpp"

#include <cmath>
#include <stdexcept>

namespace dtlab {

namespace {

Matrix plane_rotation(double theta, int dim) {
  if (dim < 2) throw std::invalid_argument("fixed-plane-rotation needs dim >= 2");
  Matrix r = Matrix::Identity(dim, dim);
  r(0, 0) = std::cos(theta);
  r(0, 1) = -std::sin(theta);
  r(1, 0) = std::sin(theta);
  r(1, 1) = std::cos(theta);
  return r;
}

}  // namespace

void AugmentationSpec::validate() const {
  if (w_scale < 0.0 || b_sigma < 0.0) throw std::invalid_argument("augment: scales must be >= 0");
  if (w_prob < 0.0 || w_prob > 1.0 || b_prob < 0.0 || b_prob > 1.0) {
    throw std::invalid_argument("augment: probabilities must lie in [0,1]");
  }
  if (level == AugLevel::kFeature && algorithm != AugAlgorithm::kLossAveraging) {
    throw std::invalid_argument("feature-level DA supports loss-averaging only");
  }
  if (b_kind == BDistKind::kFixedShift && b_shift.size() == 0) {
    throw std::invalid_argument("fixed-shift needs a shift vector");
  }
  if (!independent &&
      !(w_kind == WDistKind::kRademacherDiagonal && b_kind == BDistKind::kGaussianIso)) {
    throw std::invalid_argument(
        "dependent sampling is only defined for rademacher-diagonal W with gaussian-iso b");
  }
}

AugmentationSpec with_magnitude(const AugmentationSpec& spec, double s) {
  AugmentationSpec out = spec;
  switch (spec.w_kind) {
    case WDistKind::kIdentity: break;
    case WDistKind::kRademacherDiagonal: out.w_scale = s; break;
    case WDistKind::kFixedPlaneRotation: out.w_theta = s; break;
  }
  switch (spec.b_kind) {
    case BDistKind::kZero: break;
    case BDistKind::kGaussianIso: out.b_sigma = s; break;
    case BDistKind::kFixedShift: {
      const double norm = spec.b_shift.norm();
      if (norm == 0.0) throw std::invalid_argument("with_magnitude: zero shift direction");
      out.b_shift = (s / norm) * spec.b_shift;
      break;
    }
  }
  return out;
}

TransformSampler::TransformSampler(const AugmentationSpec& spec, int dim)
    : spec_(spec),
      dim_(dim),
      w_rng_(SplitMix64::substream(spec.seed, 17)),
      b_rng_(SplitMix64::substream(spec.seed, 31)) {
  spec_.validate();
  if (dim < 1) throw std::invalid_argument("TransformSampler: dim must be >= 1");
}

std::pair<Matrix, Vector> TransformSampler::sample() {
  Matrix w;
  Vector b = Vector::Zero(dim_);
  Vector rademacher_signs;

  switch (spec_.w_kind) {
    case WDistKind::kIdentity:
      w = Matrix::Identity(dim_, dim_);
      break;
    case WDistKind::kRademacherDiagonal: {
      rademacher_signs = Vector(dim_);
      for (int i = 0; i < dim_; ++i) rademacher_signs[i] = w_rng_.rademacher();
      w = Matrix::Identity(dim_, dim_);
      w.diagonal() += spec_.w_scale * rademacher_signs;
      break;
    }
    case WDistKind::kFixedPlaneRotation: {
      const bool rotate = w_rng_.uniform01() < spec_.w_prob;
      w = rotate ? plane_rotation(spec_.w_theta, dim_) : Matrix::Identity(dim_, dim_);
      break;
    }
  }

  switch (spec_.b_kind) {
    case BDistKind::kZero:
      break;
    case BDistKind::kGaussianIso: {
      if (spec_.independent) {
        for (int i = 0; i < dim_; ++i) b[i] = spec_.b_sigma * b_rng_.gaussian();
      } else {
        // Coupled draw: reuse the W signs so that cov(W_jj, b_j) > 0 while
        // the marginal of b stays N(0, sigma^2) by symmetry of |g| * sign.
        for (int i = 0; i < dim_; ++i) {
          b[i] = spec_.b_sigma * std::abs(b_rng_.gaussian()) * rademacher_signs[i];
        }
      }
      break;
    }
    case BDistKind::kFixedShift: {
      if (spec_.b_shift.size() != dim_) {
        throw std::invalid_argument("fixed-shift vector dim mismatch");
      }
      if (b_rng_.uniform01() < spec_.b_prob) b = spec_.b_shift;
      break;
    }
  }
  return {std::move(w), std::move(b)};
}

std::pair<Matrix, Vector> sample_transform(const AugmentationSpec& spec, TransformSampler& sampler) {
  (void)spec;
  return sampler.sample();
}

ConditionReport condition_check(const AugmentationSpec& spec, int dim, int n_mc) {
  if (n_mc < 1000) throw std::invalid_argument("condition_check: n_mc must be >= 1000");
  spec.validate();
  TransformSampler sampler(spec, dim);

  Matrix w_sum = Matrix::Zero(dim, dim);
  Matrix w_sumsq = Matrix::Zero(dim, dim);
  Vector b_sum = Vector::Zero(dim);
  Vector b_sumsq = Vector::Zero(dim);
  // Pair statistics for the independence check.
  double trw_sum = 0.0, sb_sum = 0.0, trw_sb_sum = 0.0, trw_sq = 0.0, sb_sq = 0.0;
  Vector diag_cross = Vector::Zero(dim);  // sum of W_jj * b_j
  Vector diag_sum = Vector::Zero(dim);

  for (int t = 0; t < n_mc; ++t) {
    auto [w, b] = sampler.sample();
    w_sum += w;
    w_sumsq += w.cwiseProduct(w);
    b_sum += b;
    b_sumsq += b.cwiseProduct(b);
    const double trw = w.trace();
    const double sb = b.sum();
    trw_sum += trw;
    sb_sum += sb;
    trw_sb_sum += trw * sb;
    trw_sq += trw * trw;
    sb_sq += sb * sb;
    diag_cross += w.diagonal().cwiseProduct(b);
    diag_sum += w.diagonal();
  }
  const double n = static_cast<double>(n_mc);
  const Matrix w_mean = w_sum / n;
  const Matrix w_var = (w_sumsq / n - w_mean.cwiseProduct(w_mean)).cwiseMax(0.0);
  const Vector b_mean = b_sum / n;
  const Vector b_var = (b_sumsq / n - b_mean.cwiseProduct(b_mean)).cwiseMax(0.0);

  ConditionReport report;
  report.n_mc = n_mc;

  // Aggregate 3-sigma band: the squared Frobenius deviation of the sample
  // mean has expectation sum(se^2) under the null, sd about sqrt(2 sum se^4).
  {
    const Matrix se2 = w_var / n;
    const double mean_chi = se2.sum();
    const double sd_chi = std::sqrt(2.0 * se2.cwiseProduct(se2).sum());
    const double dev2 = (w_mean - Matrix::Identity(dim, dim)).squaredNorm();
    report.mean_w.deviation = std::sqrt(dev2);
    report.mean_w.threshold = std::sqrt(mean_chi + 3.0 * sd_chi);
    report.mean_w.pass = dev2 <= mean_chi + 3.0 * sd_chi;
  }
  {
    const Vector se2 = b_var / n;
    const double mean_chi = se2.sum();
    const double sd_chi = std::sqrt(2.0 * se2.cwiseProduct(se2).sum());
    const double dev2 = b_mean.squaredNorm();
    report.mean_b.deviation = std::sqrt(dev2);
    report.mean_b.threshold = std::sqrt(mean_chi + 3.0 * sd_chi);
    report.mean_b.pass = dev2 <= mean_chi + 3.0 * sd_chi;
  }
  report.w_nonconstant = w_var.sum() > 1e-12;

  {
    // z-score of cov(tr W, 1^T b) plus the largest diagonal-pair z-score.
    const double trw_mean = trw_sum / n;
    const double sb_mean = sb_sum / n;
    const double cov = trw_sb_sum / n - trw_mean * sb_mean;
    const double var_trw = std::max(0.0, trw_sq / n - trw_mean * trw_mean);
    const double var_sb = std::max(0.0, sb_sq / n - sb_mean * sb_mean);
    double zmax = 0.0;
    // A constant statistic on either side carries no dependence signal.
    if (var_trw > 1e-12 && var_sb > 1e-12) {
      zmax = std::abs(cov) / std::sqrt(var_trw * var_sb / n);
    }
    for (int j = 0; j < dim; ++j) {
      if (w_var(j, j) <= 1e-12 || b_var[j] <= 1e-12) continue;
      const double c = diag_cross[j] / n - (diag_sum[j] / n) * b_mean[j];
      const double s = std::sqrt(w_var(j, j) * b_var[j] / n);
      zmax = std::max(zmax, std::abs(c) / s);
    }
    report.independence.deviation = zmax;
    report.independence.threshold = 4.0;  // max over ~dim+1 null z-scores
    report.independence.pass = zmax <= 4.0;
  }
  return report;
}

TransformMoments transform_moments(const AugmentationSpec& spec, int dim) {
  spec.validate();
  TransformMoments m;
  m.mean_w_delta = Matrix::Zero(dim, dim);
  m.b_mean = Vector::Zero(dim);
  m.b_second_moment = Matrix::Zero(dim, dim);
  if (spec.w_kind == WDistKind::kFixedPlaneRotation) {
    m.mean_w_delta = spec.w_prob * (plane_rotation(spec.w_theta, dim) - Matrix::Identity(dim, dim));
  }
  switch (spec.b_kind) {
    case BDistKind::kZero:
      break;
    case BDistKind::kGaussianIso:
      m.b_second_moment = spec.b_sigma * spec.b_sigma * Matrix::Identity(dim, dim);
      break;
    case BDistKind::kFixedShift:
      if (spec.b_shift.size() != dim) throw std::invalid_argument("fixed-shift vector dim mismatch");
      m.b_mean = spec.b_prob * spec.b_shift;
      m.b_second_moment = spec.b_prob * spec.b_shift * spec.b_shift.transpose();
      break;
  }
  return m;
}

}  // namespace dtlab
