#include "dtlab/pseudometric.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "dtlab/rng.hpp"
#include "dtlab/robustness.hpp"

using namespace dtlab;

namespace {

Network identity_net(int dim) {
  return Network({Layer{Matrix::Identity(dim, dim), Vector::Zero(dim), Activation::kIdentity}});
}

EmpiricalDataset dataset_1d(std::initializer_list<double> xs, std::initializer_list<double> ys) {
  EmpiricalDataset ds;
  ds.inputs = Matrix(static_cast<int>(xs.size()), 1);
  ds.targets = Matrix(static_cast<int>(ys.size()), 1);
  int i = 0;
  for (double v : xs) ds.inputs(i++, 0) = v;
  i = 0;
  for (double v : ys) ds.targets(i++, 0) = v;
  return ds;
}

EmpiricalDataset random_dataset(int n, int m, int d, std::uint64_t seed, double scale = 1.0) {
  SplitMix64 rng(seed);
  EmpiricalDataset ds;
  ds.inputs = Matrix(n, m);
  ds.targets = Matrix(n, d);
  for (int i = 0; i < n * m; ++i) ds.inputs.data()[i] = rng.gaussian();
  for (int i = 0; i < n * d; ++i) ds.targets.data()[i] = scale * rng.gaussian();
  return ds;
}

// No-intercept least-squares loss, an independent oracle for the infimum
// over weight-only linear heads.
double no_intercept_inf(const Network& f, const EmpiricalDataset& data) {
  const int n = data.size();
  Matrix z(n, f.output_dim());
  for (int i = 0; i < n; ++i) z.row(i) = predict(f, data.inputs.row(i).transpose()).transpose();
  const Matrix w = z.completeOrthogonalDecomposition().solve(data.targets);
  return (z * w - data.targets).squaredNorm() / n;
}

FunctionClassSample random_class(int count, int m, int dfeat, std::uint64_t seed) {
  FunctionClassSample cls;
  for (int i = 0; i < count; ++i) {
    cls.extractors.push_back(random_network({m, 6, dfeat}, Activation::kTanh, seed + i));
  }
  return cls;
}

}  // namespace

TEST_CASE("inf_finetune_loss: identity extractor fits y=2x exactly") {
  const EmpiricalDataset ds = dataset_1d({-1.0, 0.5, 2.0}, {-2.0, 1.0, 4.0});
  CHECK(inf_finetune_loss(identity_net(1), ds) <= 1e-20);
}

TEST_CASE("inf_finetune_loss: y=x^2 on {-1,0,1} (intercept 2/9; no-intercept oracle 2/3)") {
  const EmpiricalDataset ds = dataset_1d({-1.0, 0.0, 1.0}, {1.0, 0.0, 1.0});
  const Network id = identity_net(1);
  CHECK(inf_finetune_loss(id, ds) == doctest::Approx(2.0 / 9.0).epsilon(1e-12));
  CHECK(no_intercept_inf(id, ds) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("inf_finetune_loss: all-zero targets give zero") {
  const EmpiricalDataset ds = dataset_1d({0.3, -0.7, 1.1}, {0.0, 0.0, 0.0});
  const Network f = random_network({1, 4, 2}, Activation::kTanh, 5);
  CHECK(inf_finetune_loss(f, ds) <= 1e-20);
}

TEST_CASE("estimate_pseudometric: weak zero property is exact") {
  const EmpiricalDataset ds = random_dataset(20, 2, 1, 7);
  const FunctionClassSample cls = random_class(4, 2, 3, 11);
  const PseudometricEstimate est = estimate_pseudometric(cls, ds, ds);
  CHECK(est.value == 0.0);
}

TEST_CASE("estimate_pseudometric: symmetric-x teacher pair is indistinguishable") {
  // y = 2x vs y = -2x: both are exactly fit by a linear head on identity
  // features, so every gap is zero.
  EmpiricalDataset s = dataset_1d({-1.0, -0.5, 0.5, 1.0}, {-2.0, -1.0, 1.0, 2.0});
  EmpiricalDataset t = dataset_1d({-1.0, -0.5, 0.5, 1.0}, {2.0, 1.0, -1.0, -2.0});
  FunctionClassSample cls;
  cls.extractors.push_back(identity_net(1));
  const PseudometricEstimate est = estimate_pseudometric(cls, s, t);
  CHECK(est.value <= 1e-20);
}

TEST_CASE("estimate_pseudometric: gap equals the composed infima") {
  const EmpiricalDataset s = dataset_1d({-1.0, 0.0, 1.0}, {-2.0, 0.0, 2.0});
  const EmpiricalDataset t = dataset_1d({-1.0, 0.0, 1.0}, {1.0, 0.0, 1.0});
  FunctionClassSample cls;
  cls.extractors.push_back(identity_net(1));
  const PseudometricEstimate est = estimate_pseudometric(cls, s, t);
  CHECK(est.value == doctest::Approx(2.0 / 9.0).epsilon(1e-12));
  CHECK(est.argmax_extractor == 0);
  CHECK(est.per_extractor.size() == 1);
}

TEST_CASE("pseudometric axioms over random triples") {
  const FunctionClassSample cls = random_class(5, 2, 3, 17);
  for (int trial = 0; trial < 10; ++trial) {
    const EmpiricalDataset a = random_dataset(16, 2, 2, 100 + trial);
    const EmpiricalDataset b = random_dataset(16, 2, 2, 200 + trial);
    const EmpiricalDataset c = random_dataset(16, 2, 2, 300 + trial);
    const double dab = estimate_pseudometric(cls, a, b).value;
    const double dba = estimate_pseudometric(cls, b, a).value;
    const double dac = estimate_pseudometric(cls, a, c).value;
    const double dcb = estimate_pseudometric(cls, c, b).value;
    CHECK(dab == dba);                     // symmetry, exact
    CHECK(dab <= dac + dcb + 1e-9);        // triangle
    CHECK(estimate_pseudometric(cls, a, a).value == 0.0);
  }
}

TEST_CASE("pseudometric class monotonicity over prefix subsets") {
  const EmpiricalDataset s = random_dataset(20, 2, 1, 31);
  const EmpiricalDataset t = random_dataset(20, 2, 1, 32);
  const FunctionClassSample big = random_class(6, 2, 3, 33);
  FunctionClassSample small = big;
  small.extractors.resize(3);
  CHECK(estimate_pseudometric(small, s, t).value <= estimate_pseudometric(big, s, t).value);
}

TEST_CASE("check_transfer_bound holds and rejects foreign extractors") {
  SplitMix64 rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const EmpiricalDataset s = random_dataset(16, 2, 2, 400 + trial);
    const EmpiricalDataset t = random_dataset(16, 2, 2, 500 + trial);
    FunctionClassSample cls = random_class(4, 2, 3, 600 + trial);
    const int pick = static_cast<int>(rng.below(4));
    TrainedModel model;
    model.extractor = cls.extractors[pick];
    const FineTuneResult ls = fine_tune_linear(model.extractor, s, 0.0);
    model.head_weight = ls.head_weight;
    model.head_bias = ls.head_bias;
    if (trial % 2 == 1) {
      // A worse source head only shrinks tau; the bound must still hold.
      model.head_weight *= 0.5;
    }
    const TransferBoundReport report = check_transfer_bound(model, cls, s, t);
    CHECK(report.holds);
    CHECK(report.tau <= report.d + 1e-9);
  }
  // same-distribution case: tau <= 0 = d
  const EmpiricalDataset s = random_dataset(16, 2, 2, 999);
  FunctionClassSample cls = random_class(3, 2, 3, 1000);
  TrainedModel model;
  model.extractor = cls.extractors[0];
  const FineTuneResult ls = fine_tune_linear(model.extractor, s, 0.0);
  model.head_weight = ls.head_weight;
  model.head_bias = ls.head_bias;
  const TransferBoundReport same = check_transfer_bound(model, cls, s, s);
  CHECK(same.tau <= 1e-12);
  CHECK(same.holds);

  model.extractor = random_network({2, 6, 3}, Activation::kTanh, 4242);
  CHECK_THROWS_AS(check_transfer_bound(model, cls, s, s), std::invalid_argument);
}

TEST_CASE("rademacher_mc_values: singleton class concentrates at zero") {
  SplitMix64 rng(51);
  Matrix losses(1, 10);
  for (int i = 0; i < 10; ++i) losses(0, i) = std::abs(rng.gaussian());
  const RademacherEstimate coarse = rademacher_mc_values(losses, 200, 1);
  const RademacherEstimate fine = rademacher_mc_values(losses, 20000, 1);
  CHECK(std::abs(fine.value) <= std::abs(coarse.value) + 3.0 * coarse.std_error);
  CHECK(std::abs(fine.value) <= 4.0 * fine.std_error);
}

TEST_CASE("rademacher_mc_values: {h,-h} matches the exact enumeration") {
  const int n = 8;
  SplitMix64 rng(53);
  Vector h(n);
  for (int i = 0; i < n; ++i) h[i] = rng.gaussian();
  Matrix losses(2, n);
  losses.row(0) = h.transpose();
  losses.row(1) = -h.transpose();
  // exact E|sum xi h| over all 2^n sign vectors
  double exact = 0.0;
  for (int mask = 0; mask < (1 << n); ++mask) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += (mask >> i & 1) ? h[i] : -h[i];
    exact += std::abs(s);
  }
  exact /= (1 << n) * static_cast<double>(n);
  const RademacherEstimate est = rademacher_mc_values(losses, 40000, 7);
  CHECK(std::abs(est.value - exact) <= 4.0 * est.std_error);
}

TEST_CASE("rademacher_mc_values: monotone in the class under shared draws") {
  SplitMix64 rng(57);
  Matrix big(6, 12);
  for (int i = 0; i < big.size(); ++i) big.data()[i] = rng.gaussian();
  const Matrix small = big.topRows(3);
  CHECK(rademacher_mc_values(small, 500, 9).value <= rademacher_mc_values(big, 500, 9).value);
}

TEST_CASE("rademacher_mc over a function class is monotone in prefix subsets") {
  const EmpiricalDataset ds = random_dataset(12, 2, 1, 61);
  const FunctionClassSample big = random_class(4, 2, 3, 62);
  FunctionClassSample small = big;
  small.extractors.resize(2);
  const RademacherEstimate rb = rademacher_mc(big, ds, 300, 16, 5);
  const RademacherEstimate rs = rademacher_mc(small, ds, 300, 16, 5);
  CHECK(rs.value <= rb.value + 1e-12);
  CHECK(rb.std_error > 0.0);
}

TEST_CASE("solve_assignment matches brute force on small instances") {
  SplitMix64 rng(63);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(4));  // 2..5
    Matrix cost(n, n);
    for (int i = 0; i < cost.size(); ++i) cost.data()[i] = rng.uniform(0.0, 10.0);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
      double total = 0.0;
      for (int i = 0; i < n; ++i) total += cost(i, perm[i]);
      best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(solve_assignment(cost) == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("wasserstein_exact basics") {
  const EmpiricalDataset a = random_dataset(10, 2, 1, 71);
  CHECK(wasserstein_exact(a, a) == doctest::Approx(0.0));

  EmpiricalDataset p, q;
  p.inputs = Matrix::Zero(1, 1);
  p.targets = Matrix::Zero(1, 1);
  q.inputs = Matrix(1, 1);
  q.inputs << 3.0;
  q.targets = Matrix(1, 1);
  q.targets << 4.0;
  CHECK(wasserstein_exact(p, q) == doctest::Approx(5.0));

  const EmpiricalDataset b = random_dataset(9, 2, 1, 72);
  CHECK_THROWS_AS(wasserstein_exact(a, b), std::invalid_argument);
}

TEST_CASE("wasserstein_exact matches the 1-D sorted-coupling closed form") {
  SplitMix64 rng(73);
  const int n = 24;
  EmpiricalDataset a, b;
  a.inputs = Matrix(n, 1);
  b.inputs = Matrix(n, 1);
  a.targets = Matrix::Zero(n, 1);
  b.targets = Matrix::Zero(n, 1);
  for (int i = 0; i < n; ++i) {
    a.inputs(i, 0) = rng.gaussian();
    b.inputs(i, 0) = 0.5 + rng.gaussian();
  }
  std::vector<double> xs(n), ys(n);
  for (int i = 0; i < n; ++i) {
    xs[i] = a.inputs(i, 0);
    ys[i] = b.inputs(i, 0);
  }
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  double oracle = 0.0;
  for (int i = 0; i < n; ++i) oracle += std::abs(xs[i] - ys[i]);
  oracle /= n;
  CHECK(wasserstein_exact(a, b) == doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("tv_discrete") {
  CHECK(tv_discrete({0.5, 0.5}, {0.5, 0.5}) == 0.0);
  CHECK(tv_discrete({0.5, 0.5, 0.0, 0.0}, {0.0, 0.0, 0.5, 0.5}) == doctest::Approx(1.0));
  CHECK(tv_discrete({0.5, 0.5}, {0.9, 0.1}) == doctest::Approx(0.4));
  CHECK_THROWS_AS(tv_discrete({0.6, 0.6}, {0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("lipschitz-Wasserstein bound holds on generated fixtures") {
  for (int trial = 0; trial < 5; ++trial) {
    const EmpiricalDataset s = random_dataset(16, 2, 1, 800 + trial, 0.7);
    const EmpiricalDataset t = random_dataset(16, 2, 1, 900 + trial, 0.7);
    const FunctionClassSample cls = random_class(3, 2, 2, 950 + trial);
    const double d_hat = estimate_pseudometric(cls, s, t).value;
    const double w1 = wasserstein_exact(s, t);

    // Empirical Lipschitz constant of the per-sample loss h(x,y) over the
    // least-squares heads that realize the infima, sampled on both datasets
    // and along random cross segments, with a 1.5 safety factor.
    double lip = 0.0;
    SplitMix64 rng(1000 + trial);
    for (const Network& f : cls.extractors) {
      for (const EmpiricalDataset* head_ds : {&s, &t}) {
        const FineTuneResult ls = fine_tune_linear(f, *head_ds, 0.0);
        auto grad_norm = [&](const Vector& x, const Vector& y) {
          const Vector r = ls.head_weight * predict(f, x) + ls.head_bias - y;
          const Vector gx = 2.0 * jacobian_input(f, x).transpose() * ls.head_weight.transpose() * r;
          const Vector gy = -2.0 * r;
          return std::sqrt(gx.squaredNorm() + gy.squaredNorm());
        };
        for (int i = 0; i < s.size(); ++i) {
          lip = std::max(lip, grad_norm(s.inputs.row(i).transpose(), s.targets.row(i).transpose()));
          lip = std::max(lip, grad_norm(t.inputs.row(i).transpose(), t.targets.row(i).transpose()));
        }
        for (int probe = 0; probe < 100; ++probe) {
          const int i = static_cast<int>(rng.below(s.size()));
          const int j = static_cast<int>(rng.below(t.size()));
          const double u = rng.uniform01();
          const Vector x = (1 - u) * s.inputs.row(i).transpose() + u * t.inputs.row(j).transpose();
          const Vector y = (1 - u) * s.targets.row(i).transpose() + u * t.targets.row(j).transpose();
          lip = std::max(lip, grad_norm(x, y));
        }
      }
    }
    CHECK(d_hat <= 1.5 * lip * w1 + 1e-9);
  }
}

TEST_CASE("zero-one loss pseudometric is bounded by total variation") {
  // Shared support, different masses, materialized as weighted atoms.
  SplitMix64 rng(85);
  const int support = 6;
  Matrix xs(support, 2);
  Matrix ys = Matrix::Zero(support, 2);
  for (int i = 0; i < support; ++i) {
    xs(i, 0) = rng.gaussian();
    xs(i, 1) = rng.gaussian();
    ys(i, i % 2) = 1.0;  // one-hot labels
  }
  std::vector<double> p(support), q(support);
  double sp = 0.0, sq = 0.0;
  for (int i = 0; i < support; ++i) {
    p[i] = rng.uniform(0.1, 1.0);
    q[i] = rng.uniform(0.1, 1.0);
    sp += p[i];
    sq += q[i];
  }
  for (int i = 0; i < support; ++i) {
    p[i] /= sp;
    q[i] /= sq;
  }
  const double tv = tv_discrete(p, q);

  const FunctionClassSample cls = random_class(4, 2, 3, 86);
  // Brute force over extractors x a shared random head grid.
  double d01 = 0.0;
  for (const Network& f : cls.extractors) {
    double inf_p = 1.0, inf_q = 1.0;
    SplitMix64 head_rng(87);
    for (int h = 0; h < 64; ++h) {
      Matrix w(2, 3);
      for (int i = 0; i < w.size(); ++i) w.data()[i] = head_rng.gaussian();
      double err_p = 0.0, err_q = 0.0;
      for (int i = 0; i < support; ++i) {
        const Vector pred = w * predict(f, xs.row(i).transpose());
        const bool wrong = argmax_index(pred) != argmax_index(ys.row(i).transpose());
        if (wrong) {
          err_p += p[i];
          err_q += q[i];
        }
      }
      inf_p = std::min(inf_p, err_p);
      inf_q = std::min(inf_q, err_q);
    }
    d01 = std::max(d01, std::abs(inf_p - inf_q));
  }
  CHECK(d01 <= tv + 1e-12);
}

TEST_CASE("check_emp_bound assembles the finite-sample inequality") {
  const EmpiricalDataset s = random_dataset(24, 2, 1, 91, 0.5);
  const EmpiricalDataset t = random_dataset(24, 2, 1, 92, 0.5);
  FunctionClassSample cls = random_class(3, 2, 2, 93);
  TrainedModel model;
  model.extractor = cls.extractors[1];
  const FineTuneResult ls = fine_tune_linear(model.extractor, s, 0.0);
  model.head_weight = ls.head_weight;
  model.head_bias = ls.head_bias;

  const EmpBoundReport rep = check_emp_bound(model, cls, s, t, 0.05, 50.0, 100, 7);
  CHECK(rep.holds);
  CHECK(rep.estimate_based);
  CHECK(rep.concentration == doctest::Approx(9.0 * 50.0 * std::sqrt(std::log(8.0 / 0.05) / 48.0)));

  // doubling c doubles the concentration term exactly
  const EmpBoundReport rep2 = check_emp_bound(model, cls, s, t, 0.05, 100.0, 100, 7);
  CHECK(rep2.concentration == doctest::Approx(2.0 * rep.concentration).epsilon(1e-12));

  // same-distribution: tau <= 0 <= rhs
  const EmpBoundReport same = check_emp_bound(model, cls, s, s, 0.05, 50.0, 100, 7);
  CHECK(same.tau <= 1e-12);
  CHECK(same.holds);

  // c below the observed losses errors out
  CHECK_THROWS_AS(check_emp_bound(model, cls, s, t, 0.05, 1e-6, 50, 7), std::invalid_argument);
}
