#include "dtlab/advverify.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "dtlab/rng.hpp"

namespace dtlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct SingularTriple {
  double sigma = 0.0;
  Vector right;  // top right singular vector
  Vector left;
};

SingularTriple top_singular(const Matrix& m) {
  SingularTriple out;
  out.right = Vector::Zero(m.cols());
  out.left = Vector::Zero(m.rows());
  if (m.size() == 0 || m.norm() == 0.0) return out;
  const Matrix gram = m.transpose() * m;  // cols x cols
  const int dim = static_cast<int>(gram.rows());

  auto run_from = [&](Vector v) {
    v.normalize();
    double rayleigh = v.dot(gram * v);
    for (int it = 0; it < 20000; ++it) {
      Vector w = gram * v;
      const double nw = w.norm();
      if (nw == 0.0) break;
      v = w / nw;
      const double r = v.dot(gram * v);
      if (std::abs(r - rayleigh) <= 1e-14 * std::max(r, 1e-30)) {
        rayleigh = r;
        break;
      }
      rayleigh = r;
    }
    return std::make_pair(rayleigh, v);
  };

  SplitMix64 rng(0x5eed5eedULL);
  std::vector<Vector> starts;
  starts.push_back(Vector::Ones(dim));
  for (int s = 0; s < 3; ++s) {
    Vector v(dim);
    for (int i = 0; i < dim; ++i) v[i] = rng.gaussian();
    starts.push_back(std::move(v));
  }
  double best = -1.0;
  Vector best_v = Vector::Zero(dim);
  for (Vector& v0 : starts) {
    if (v0.norm() == 0.0) continue;
    auto [r, v] = run_from(v0);
    if (r > best) {
      best = r;
      best_v = v;
    }
  }
  out.sigma = std::sqrt(std::max(0.0, best));
  out.right = best_v;
  if (out.sigma > 0.0) out.left = (m * best_v) / out.sigma;
  return out;
}

void require_relu_hidden(const Network& net) {
  for (int j = 0; j + 1 < net.depth(); ++j) {
    if (net.layers()[j].activation != Activation::kRelu) {
      throw std::invalid_argument("operation needs relu hidden layers");
    }
  }
}

Matrix project_rows(Matrix h, double delta) {
  for (int r = 0; r < h.rows(); ++r) {
    const double norm = h.row(r).norm();
    if (norm < delta) {
      if (norm == 0.0) {
        h(r, 0) = delta;
      } else {
        h.row(r) *= delta / norm;
      }
    }
  }
  return h;
}

}  // namespace

double spectral_norm(const Matrix& m) { return top_singular(m).sigma; }

ActivationPattern activation_pattern(const Network& net, const Vector& x) {
  require_relu_hidden(net);
  const ForwardTrace trace = forward(net, x);
  ActivationPattern pattern;
  for (int j = 0; j + 1 < net.depth(); ++j) {
    std::vector<std::uint8_t> bits(trace.preactivations[j].size());
    for (int k = 0; k < trace.preactivations[j].size(); ++k) {
      bits[k] = trace.preactivations[j][k] > 0.0 ? 1 : 0;
    }
    pattern.bits.push_back(std::move(bits));
  }
  return pattern;
}

RegionRadius region_radius(const Network& net, const Vector& x) {
  require_relu_hidden(net);
  const ForwardTrace trace = forward(net, x);
  RegionRadius out;
  out.value = kInf;
  out.exact = net.depth() <= 2;  // a single hidden layer: exact hyperplane distances
  double lip_prefix = 1.0;       // Lipschitz bound for the input of the current layer
  for (int j = 0; j + 1 < net.depth(); ++j) {
    const Matrix& w = net.layers()[j].weight;
    for (int k = 0; k < w.rows(); ++k) {
      const double row_norm = w.row(k).norm();
      const double lip = row_norm * lip_prefix;
      if (lip == 0.0) {
        ++out.skipped_rows;
        continue;
      }
      out.value = std::min(out.value, std::abs(trace.preactivations[j][k]) / lip);
    }
    lip_prefix *= spectral_norm(w);
  }
  return out;
}

JacEquivReport verify_jacobian_equivalence(const Network& net, const Vector& x, int n_probe,
                                           std::uint64_t seed) {
  JacEquivReport report;
  const RegionRadius rr = region_radius(net, x);
  report.epsilon = std::isfinite(rr.value) ? rr.value : 1.0;
  if (report.epsilon == 0.0) {
    report.skipped = true;
    return report;
  }
  const double eps = report.epsilon;
  const Matrix jac = jacobian_input(net, x);
  const SingularTriple top = top_singular(jac);
  report.eps_times_opnorm = eps * top.sigma;

  const Vector f0 = predict(net, x);
  auto deviation = [&](const Vector& direction) {
    return (predict(net, x + eps * direction) - f0).norm();
  };
  double sup = 0.0;
  if (top.sigma > 0.0) {
    sup = std::max(deviation(top.right), deviation(-top.right));
  }
  SplitMix64 rng(seed);
  const Matrix gram = jac.transpose() * jac;
  for (int p = 0; p < n_probe; ++p) {
    Vector d(x.size());
    for (int i = 0; i < d.size(); ++i) d[i] = rng.gaussian();
    if (d.norm() == 0.0) continue;
    d.normalize();
    // Projected ascent on ||J d||^2 over the unit sphere.
    for (int it = 0; it < 50; ++it) {
      Vector g = gram * d;
      const double ng = g.norm();
      if (ng == 0.0) break;
      d = g / ng;
    }
    sup = std::max(sup, deviation(d));
  }
  report.sup_dev = sup;
  const double denom = std::max(report.eps_times_opnorm, 1e-300);
  report.rel_gap = std::abs(report.sup_dev - report.eps_times_opnorm) / denom;
  if (report.eps_times_opnorm == 0.0 && report.sup_dev == 0.0) report.rel_gap = 0.0;
  return report;
}

double aobj_zero(const EmpiricalDataset& data) {
  data.validate();
  return data.targets.array().square().rowwise().sum().mean();
}

double aobj_eval(const Matrix& head, const Network& extractor, const EmpiricalDataset& data,
                 const AobjConfig& cfg) {
  data.validate();
  if (head.cols() != extractor.output_dim() || head.rows() != data.target_dim()) {
    throw std::invalid_argument("aobj_eval: head dimensions do not match");
  }
  const int n = data.size();
  double risk = 0.0;
  double penalty = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vector x = data.inputs.row(i).transpose();
    const Vector z = predict(extractor, x);
    risk += (head * z - data.targets.row(i).transpose()).squaredNorm();
    if (cfg.lambda > 0.0) {
      penalty += spectral_norm(head * jacobian_input(extractor, x));
    }
  }
  return risk / n + cfg.lambda * cfg.epsilon * penalty / n;
}

MembershipReport class_membership(const Network& extractor, const EmpiricalDataset& data,
                                  const AobjConfig& cfg, double delta,
                                  const std::vector<Matrix>& extra_candidates) {
  if (delta <= 0.0) throw std::invalid_argument("class_membership: delta must be > 0");
  data.validate();
  const int n = data.size();
  const int dfeat = extractor.output_dim();
  const int dy = data.target_dim();

  Matrix z(n, dfeat);
  for (int i = 0; i < n; ++i) z.row(i) = predict(extractor, data.inputs.row(i).transpose()).transpose();

  MembershipReport report;
  report.zero_obj = aobj_zero(data);

  std::vector<Matrix> candidates;
  candidates.push_back(project_rows(
      Matrix(z.completeOrthogonalDecomposition().solve(data.targets).transpose()), delta));
  for (const Matrix& extra : extra_candidates) {
    if (extra.rows() != dy || extra.cols() != dfeat) {
      throw std::invalid_argument("class_membership: extra candidate has wrong shape");
    }
    candidates.push_back(project_rows(extra, delta));
  }

  Matrix best;
  double best_obj = kInf;
  for (const Matrix& h : candidates) {
    const double obj = aobj_eval(h, extractor, data, cfg);
    if (obj < best_obj) {
      best_obj = obj;
      best = h;
    }
  }

  // Monotone projected gradient refinement from the best candidate.
  std::vector<Matrix> jacobians;
  if (cfg.lambda > 0.0) {
    jacobians.reserve(n);
    for (int i = 0; i < n; ++i) {
      jacobians.push_back(jacobian_input(extractor, data.inputs.row(i).transpose()));
    }
  }
  Matrix h = best;
  double obj = best_obj;
  double step = 0.5;
  for (int it = 0; it < 500 && step > 1e-14; ++it) {
    Matrix grad = Matrix::Zero(dy, dfeat);
    for (int i = 0; i < n; ++i) {
      const Vector zi = z.row(i).transpose();
      grad += 2.0 * (h * zi - data.targets.row(i).transpose()) * zi.transpose();
    }
    grad /= n;
    if (cfg.lambda > 0.0) {
      for (int i = 0; i < n; ++i) {
        const SingularTriple top = top_singular(h * jacobians[i]);
        if (top.sigma > 0.0) {
          grad += (cfg.lambda * cfg.epsilon / n) * top.left * (jacobians[i] * top.right).transpose();
        }
      }
    }
    const double gnorm = grad.norm();
    if (gnorm <= 1e-15 * std::max(1.0, obj)) break;
    const Matrix trial = project_rows(h - (step / gnorm) * grad, delta);
    const double trial_obj = aobj_eval(trial, extractor, data, cfg);
    if (trial_obj < obj - 1e-15) {
      h = trial;
      obj = trial_obj;
      step *= 1.25;
    } else {
      step *= 0.5;
    }
  }
  if (obj < best_obj) {
    best_obj = obj;
    best = h;
  }

  report.best_head = best;
  report.best_obj = best_obj;
  report.member = best_obj <= report.zero_obj + 1e-9;
  return report;
}

Network witness_network(int input_dim, double alpha, double c) {
  Matrix w1 = Matrix::Zero(2, input_dim);
  w1(0, 0) = alpha;
  Vector b1 = Vector::Zero(2);
  b1[0] = c;
  Matrix w2 = Matrix::Zero(2, 2);
  w2(0, 0) = 1.0;
  return Network({Layer{w1, b1, Activation::kRelu},
                  Layer{w2, Vector::Zero(2), Activation::kIdentity}});
}

double witness_inner_inf(const EmpiricalDataset& data, double alpha, double c, double lambda,
                         double epsilon, double delta) {
  data.validate();
  const int n = data.size();
  double m2 = 0.0;
  Vector v = Vector::Zero(data.target_dim());
  double mean_yy = 0.0;
  for (int i = 0; i < n; ++i) {
    const double a = alpha * data.inputs(i, 0) + c;
    if (a <= 0.0) {
      throw std::invalid_argument("witness_inner_inf: inactive relu (need c > alpha * max|x_1|)");
    }
    m2 += a * a;
    v += a * data.targets.row(i).transpose();
    mean_yy += data.targets.row(i).squaredNorm();
  }
  m2 /= n;
  v /= n;
  mean_yy /= n;
  const double vn = v.norm();
  const double linear = lambda * epsilon * alpha;
  const double t_unc = (2.0 * vn - linear) / (2.0 * m2);
  const double t = std::max(delta, t_unc);
  return m2 * t * t - 2.0 * vn * t + mean_yy + linear * t;
}

NestingReport verify_nesting(const EmpiricalDataset& data, const std::vector<double>& lambda_grid,
                             double delta, const AobjConfig& cfg, int max_b_doublings) {
  data.validate();
  if (lambda_grid.size() < 2) throw std::invalid_argument("verify_nesting: need >= 2 lambdas");
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
    if (lambda_grid[i] < 0.0) throw std::invalid_argument("verify_nesting: lambdas must be >= 0");
    if (i > 0 && lambda_grid[i] <= lambda_grid[i - 1]) {
      throw std::invalid_argument("verify_nesting: grid must be strictly ascending");
    }
  }
  if (delta <= 0.0) throw std::invalid_argument("verify_nesting: delta must be > 0");

  const Vector ybar = data.targets.colwise().mean().transpose();
  NestingReport report;
  report.ybar_norm = ybar.norm();
  if (report.ybar_norm == 0.0) {
    throw std::invalid_argument("verify_nesting: mean target must be nonzero");
  }
  const double r_bound = std::max(data.inputs.cwiseAbs().maxCoeff(),
                                  std::sqrt(data.targets.array().square().rowwise().sum().maxCoeff()));
  const double zero_obj = aobj_zero(data);
  const double c0 = report.ybar_norm / delta;

  for (std::size_t p = 0; p + 1 < lambda_grid.size(); ++p) {
    const double l1 = lambda_grid[p];
    const double l2 = lambda_grid[p + 1];
    NestingPairReport pair;
    pair.lambda1 = l1;
    pair.lambda2 = l2;

    // The relu stays active: alpha_0 * max|x_1| <= c0 / 2, preserved when
    // both are scaled by (1 + t).
    double alpha0 = r_bound > 0.0 ? c0 / (2.0 * r_bound) : 1.0;
    int halvings = 0;
    while (witness_inner_inf(data, alpha0, c0, l1, cfg.epsilon, delta) >= zero_obj) {
      alpha0 *= 0.5;
      if (++halvings > 200) {
        throw std::runtime_error("verify_nesting: could not find an interior start");
      }
    }

    auto u_of = [&](double t) {
      return witness_inner_inf(data, (1.0 + t) * alpha0, (1.0 + t) * c0, l1, cfg.epsilon, delta);
    };
    double hi = 1.0;
    while (u_of(hi) <= zero_obj) {
      hi *= 2.0;
      if (hi > 1e6) {
        throw std::runtime_error(
            "verify_nesting: bisection bracket not found in t <= 1e6 (U(t) stayed at " +
            std::to_string(u_of(1e6)) + " vs zero objective " + std::to_string(zero_obj) + ")");
      }
    }
    double lo = 0.0;
    double mid = hi;
    for (int it = 0; it < 200; ++it) {
      mid = 0.5 * (lo + hi);
      const double u = u_of(mid);
      if (std::abs(u - zero_obj) <= 1e-12 * std::max(1.0, zero_obj)) break;
      if (u < zero_obj) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    pair.witness_t = mid;
    pair.witness_alpha = (1.0 + mid) * alpha0;
    pair.witness_c = (1.0 + mid) * c0;

    const double at_l1 = witness_inner_inf(data, pair.witness_alpha, pair.witness_c, l1,
                                           cfg.epsilon, delta);
    if (std::abs(at_l1 - zero_obj) > 1e-8 * std::max(1.0, zero_obj)) {
      throw std::runtime_error("verify_nesting: bisection did not converge to the zero bar");
    }
    pair.member_lambda1 = at_l1 <= zero_obj + 1e-8;
    const double at_l2 = witness_inner_inf(data, pair.witness_alpha, pair.witness_c, l2,
                                           cfg.epsilon, delta);
    pair.margin_lambda2 = at_l2 - zero_obj;
    pair.member_lambda2 = at_l2 <= zero_obj + 1e-9;

    // Exclusion witness for F (scaled identity with saturating bias).
    {
      const int m = data.input_dim();
      double b = 1.0;
      for (int k = 0; k <= max_b_doublings; ++k) {
        std::vector<Layer> layers;
        layers.push_back(Layer{Matrix::Identity(m, m), Vector::Constant(m, r_bound),
                               Activation::kRelu});
        layers.push_back(Layer{b * Matrix::Identity(m, m), Vector::Zero(m), Activation::kIdentity});
        const Network fb(std::move(layers));
        const bool certified = l1 * cfg.epsilon * b * delta > zero_obj + 1e-9;
        bool member = true;
        if (!certified) {
          AobjConfig cfg1 = cfg;
          cfg1.lambda = l1;
          member = class_membership(fb, data, cfg1, delta).member;
        }
        if (certified || !member) {
          pair.b_doublings = k;
          pair.b_found = b;
          pair.b_certified = certified;
          break;
        }
        b *= 2.0;
      }
    }
    report.pairs.push_back(pair);
  }
  return report;
}

}  // namespace dtlab
