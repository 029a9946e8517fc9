#include "dtlab/daverify.hpp"

#include <cmath>
#include <stdexcept>

#include "dtlab/rng.hpp"

namespace dtlab {

namespace {

struct Atom {
  Matrix w;
  Vector b;
  double prob = 1.0;
};

Matrix rotation_matrix(double theta, int dim) {
  Matrix r = Matrix::Identity(dim, dim);
  r(0, 0) = std::cos(theta);
  r(0, 1) = -std::sin(theta);
  r(1, 0) = std::sin(theta);
  r(1, 1) = std::cos(theta);
  return r;
}

// Finite support of the W / b distributions, or empty when unbounded or too
// large to enumerate (cap 64 joint atoms).
std::vector<Atom> enumerate_support(const AugmentationSpec& spec, int dim) {
  std::vector<std::pair<Matrix, double>> ws;
  switch (spec.w_kind) {
    case WDistKind::kIdentity:
      ws.push_back({Matrix::Identity(dim, dim), 1.0});
      break;
    case WDistKind::kRademacherDiagonal: {
      if (spec.w_scale == 0.0) {
        ws.push_back({Matrix::Identity(dim, dim), 1.0});
        break;
      }
      if (dim > 6) return {};
      const int count = 1 << dim;
      for (int mask = 0; mask < count; ++mask) {
        Matrix w = Matrix::Identity(dim, dim);
        for (int j = 0; j < dim; ++j) {
          w(j, j) += (mask >> j & 1) ? spec.w_scale : -spec.w_scale;
        }
        ws.push_back({std::move(w), 1.0 / count});
      }
      break;
    }
    case WDistKind::kFixedPlaneRotation: {
      const Matrix r = rotation_matrix(spec.w_theta, dim);
      if (spec.w_prob >= 1.0) {
        ws.push_back({r, 1.0});
      } else if (spec.w_prob <= 0.0) {
        ws.push_back({Matrix::Identity(dim, dim), 1.0});
      } else {
        ws.push_back({Matrix::Identity(dim, dim), 1.0 - spec.w_prob});
        ws.push_back({r, spec.w_prob});
      }
      break;
    }
  }
  std::vector<std::pair<Vector, double>> bs;
  switch (spec.b_kind) {
    case BDistKind::kZero:
      bs.push_back({Vector::Zero(dim), 1.0});
      break;
    case BDistKind::kGaussianIso:
      if (spec.b_sigma == 0.0) {
        bs.push_back({Vector::Zero(dim), 1.0});
        break;
      }
      return {};  // continuous support
    case BDistKind::kFixedShift: {
      if (spec.b_prob >= 1.0) {
        bs.push_back({spec.b_shift, 1.0});
      } else if (spec.b_prob <= 0.0) {
        bs.push_back({Vector::Zero(dim), 1.0});
      } else {
        bs.push_back({Vector::Zero(dim), 1.0 - spec.b_prob});
        bs.push_back({spec.b_shift, spec.b_prob});
      }
      break;
    }
  }
  if (ws.size() * bs.size() > 64) return {};
  std::vector<Atom> atoms;
  atoms.reserve(ws.size() * bs.size());
  for (const auto& [w, pw] : ws) {
    for (const auto& [b, pb] : bs) {
      atoms.push_back({w, b, pw * pb});
    }
  }
  return atoms;
}

// E[(Delta_W^T v)(Delta_W^T v)^T]: the second moment that drives both the
// hessian trace and the loss-averaging jacobian term.
Matrix second_moment_wT(const AugmentationSpec& spec, const Vector& v) {
  const int dim = static_cast<int>(v.size());
  switch (spec.w_kind) {
    case WDistKind::kIdentity:
      return Matrix::Zero(dim, dim);
    case WDistKind::kRademacherDiagonal:
      return (spec.w_scale * spec.w_scale) * v.cwiseProduct(v).asDiagonal();
    case WDistKind::kFixedPlaneRotation: {
      const Vector u = (rotation_matrix(spec.w_theta, dim) - Matrix::Identity(dim, dim)).transpose() * v;
      return spec.w_prob * u * u.transpose();
    }
  }
  return Matrix::Zero(dim, dim);
}

// E[(Delta_W v)(Delta_W v)^T]: the feature-level counterpart (untransposed).
Matrix second_moment_w(const AugmentationSpec& spec, const Vector& v) {
  const int dim = static_cast<int>(v.size());
  switch (spec.w_kind) {
    case WDistKind::kIdentity:
      return Matrix::Zero(dim, dim);
    case WDistKind::kRademacherDiagonal:
      return (spec.w_scale * spec.w_scale) * v.cwiseProduct(v).asDiagonal();
    case WDistKind::kFixedPlaneRotation: {
      const Vector u = (rotation_matrix(spec.w_theta, dim) - Matrix::Identity(dim, dim)) * v;
      return spec.w_prob * u * u.transpose();
    }
  }
  return Matrix::Zero(dim, dim);
}

Vector mean_wT(const AugmentationSpec& spec, const Vector& v) {
  const int dim = static_cast<int>(v.size());
  if (spec.w_kind == WDistKind::kFixedPlaneRotation) {
    return spec.w_prob *
           (rotation_matrix(spec.w_theta, dim) - Matrix::Identity(dim, dim)).transpose() * v;
  }
  return Vector::Zero(dim);
}

void require_scalar_head(const TrainedModel& model) {
  if (model.head_weight.rows() != 1) {
    throw std::invalid_argument("omega analysis needs a scalar-output head");
  }
}

}  // namespace

OmegaBreakdown omega_exact(const TrainedModel& model, const EmpiricalDataset& data,
                           const AugmentationSpec& spec) {
  spec.validate();
  data.validate();
  require_scalar_head(model);
  const int n = data.size();
  const Vector w = model.head_weight.row(0).transpose();  // d
  OmegaBreakdown out;

  if (spec.level == AugLevel::kFeature) {
    const int d = model.feature_dim();
    const TransformMoments moments = transform_moments(spec, d);
    out.b_feature_term = (w.transpose() * moments.b_second_moment * w)(0, 0);
    double wterm = 0.0;
    for (int i = 0; i < n; ++i) {
      const Vector z = predict(model.extractor, data.inputs.row(i).transpose());
      wterm += (w.transpose() * second_moment_w(spec, z) * w)(0, 0);
    }
    out.w_feature_term = wterm / n;
    out.total = out.w_feature_term + out.b_feature_term;
    return out;
  }

  // data level
  const int m = data.input_dim();
  const TransformMoments moments = transform_moments(spec, m);
  const bool relu = model.extractor.has_relu();
  out.corollary_relu = relu;

  double hess = 0.0, jw = 0.0, jb = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vector x = data.inputs.row(i).transpose();
    const Vector z = predict(model.extractor, x);
    const double resid = (w.dot(z) + model.head_bias[0]) - data.targets(i, 0);

    const Matrix wxx = second_moment_wT(spec, x);
    const Vector mwx = mean_wT(spec, x);
    Matrix second = wxx + moments.b_second_moment;
    second += mwx * moments.b_mean.transpose();
    second += moments.b_mean * mwx.transpose();

    if (!relu) {
      for (int k = 0; k < model.feature_dim(); ++k) {
        if (w[k] == 0.0) continue;
        const Matrix hk = hessian_input_fd(model.extractor, x, k);
        hess += w[k] * resid * (second.cwiseProduct(hk)).sum();  // tr(second * hk), hk symmetric
      }
    }
    const Matrix jac = jacobian_input(model.extractor, x);  // d x m
    const Vector u = jac.transpose() * w;                   // m
    jw += u.dot(wxx * u);
    jb += u.dot(moments.b_second_moment * u);
  }
  out.hessian_term = hess / n;
  out.jac_w_term = jw / n;
  out.jac_b_term = jb / n;
  out.total = spec.algorithm == AugAlgorithm::kPredictionAveraging
                  ? out.hessian_term
                  : out.hessian_term + out.jac_w_term + out.jac_b_term;
  return out;
}

McLoss mc_da_loss(const TrainedModel& model, const EmpiricalDataset& data,
                  const AugmentationSpec& spec, int n_mc, std::uint64_t seed) {
  spec.validate();
  data.validate();
  require_scalar_head(model);
  if (n_mc < 1) throw std::invalid_argument("mc_da_loss: n_mc must be >= 1");
  const int n = data.size();
  const int dim = spec.level == AugLevel::kData ? data.input_dim() : model.feature_dim();

  // Feature-level transforms only touch the (fixed) extractor outputs.
  std::vector<Vector> features;
  if (spec.level == AugLevel::kFeature) {
    features.reserve(n);
    for (int i = 0; i < n; ++i) {
      features.push_back(predict(model.extractor, data.inputs.row(i).transpose()));
    }
  }

  auto prediction = [&](int i, const Matrix& w, const Vector& b) {
    if (spec.level == AugLevel::kData) {
      const Vector x = data.inputs.row(i).transpose();
      return model.predict(w.transpose() * x + b)[0];
    }
    return (model.head_weight * (w * features[i] + b) + model.head_bias)[0];
  };

  const std::vector<Atom> support = enumerate_support(spec, dim);
  McLoss result;
  if (!support.empty()) {
    result.exact = true;
    result.n_mc = 0;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      const double y = data.targets(i, 0);
      if (spec.algorithm == AugAlgorithm::kPredictionAveraging) {
        double mean_pred = 0.0;
        for (const Atom& a : support) mean_pred += a.prob * prediction(i, a.w, a.b);
        total += (mean_pred - y) * (mean_pred - y);
      } else {
        for (const Atom& a : support) {
          const double p = prediction(i, a.w, a.b);
          total += a.prob * (p - y) * (p - y);
        }
      }
    }
    result.value = total / n;
    return result;
  }

  result.n_mc = n_mc;
  if (spec.algorithm == AugAlgorithm::kLossAveraging) {
    // One fresh transform per sample per repetition; repetition means are iid.
    AugmentationSpec local = spec;
    local.seed = seed;
    TransformSampler sampler(local, dim);
    double sum = 0.0, sumsq = 0.0;
    for (int t = 0; t < n_mc; ++t) {
      double rep = 0.0;
      for (int i = 0; i < n; ++i) {
        auto [w, b] = sampler.sample();
        const double p = prediction(i, w, b);
        const double y = data.targets(i, 0);
        rep += (p - y) * (p - y);
      }
      rep /= n;
      sum += rep;
      sumsq += rep * rep;
    }
    result.value = sum / n_mc;
    const double var = std::max(0.0, sumsq / n_mc - result.value * result.value);
    result.std_error = std::sqrt(var / n_mc);
    return result;
  }

  // Prediction averaging: per-sample mean prediction, bias-corrected squared
  // residual, delta-method standard error.
  double total = 0.0, var_total = 0.0;
  for (int i = 0; i < n; ++i) {
    AugmentationSpec local = spec;
    local.seed = seed + 7919 * static_cast<std::uint64_t>(i + 1);
    TransformSampler sampler(local, dim);
    double psum = 0.0, psumsq = 0.0;
    for (int t = 0; t < n_mc; ++t) {
      auto [w, b] = sampler.sample();
      const double p = prediction(i, w, b);
      psum += p;
      psumsq += p * p;
    }
    const double pmean = psum / n_mc;
    const double pvar = std::max(0.0, psumsq / n_mc - pmean * pmean);
    const double y = data.targets(i, 0);
    total += (pmean - y) * (pmean - y) - pvar / n_mc;
    const double se_i = 2.0 * std::abs(pmean - y) * std::sqrt(pvar / n_mc);
    var_total += se_i * se_i;
  }
  result.value = total / n;
  result.std_error = std::sqrt(var_total) / n;
  return result;
}

double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("fit_loglog_slope: need matching arrays with >= 2 points");
  }
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] <= 0.0 || y[i] <= 0.0) {
      throw std::invalid_argument("fit_loglog_slope: entries must be positive");
    }
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double n = static_cast<double>(x.size());
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw std::invalid_argument("fit_loglog_slope: degenerate abscissae");
  return (n * sxy - sx * sy) / denom;
}

DaVerifyResult verify_da_identity(const TrainedModel& model, const EmpiricalDataset& data,
                                  const AugmentationSpec& spec, const std::vector<double>& s_grid,
                                  int n_mc, std::uint64_t seed) {
  if (s_grid.size() < 4) {
    throw std::invalid_argument("verify_da_identity: slope test needs at least 4 magnitudes");
  }
  const double plain = evaluate(model, data, EvalMode::kSquaredLoss);
  bool linear_extractor = true;
  for (const Layer& l : model.extractor.layers()) {
    if (l.activation != Activation::kIdentity) linear_extractor = false;
  }

  DaVerifyResult result;
  result.exact_identity_expected = spec.level == AugLevel::kFeature || linear_extractor;
  for (std::size_t i = 0; i < s_grid.size(); ++i) {
    const AugmentationSpec spec_s = with_magnitude(spec, s_grid[i]);
    const McLoss lhs = mc_da_loss(model, data, spec_s, n_mc, seed + 101 * i);
    const OmegaBreakdown omega = omega_exact(model, data, spec_s);
    OmegaReport row;
    row.s = s_grid[i];
    row.lhs = lhs.value;
    row.lhs_stderr = lhs.std_error;
    row.rhs = plain + omega.total;
    row.residual = std::abs(lhs.value - row.rhs);
    row.n_mc = lhs.n_mc;
    row.exact = lhs.exact;
    row.residual_ok = row.residual <= std::max(3.0 * lhs.std_error, 1e-10);
    result.rows.push_back(row);
  }

  std::vector<double> xs, ys;
  for (const OmegaReport& row : result.rows) {
    if (row.residual > 0.0) {
      xs.push_back(row.s);
      ys.push_back(row.residual);
    }
  }
  if (xs.size() >= 2) {
    result.slope = fit_loglog_slope(xs, ys);
    result.slope_defined = true;
  }

  if (result.exact_identity_expected) {
    result.pass = true;
    for (const OmegaReport& row : result.rows) result.pass = result.pass && row.residual_ok;
  } else {
    result.pass = result.slope_defined && result.slope >= 2.7;
  }
  return result;
}

}  // namespace dtlab
