#include "dtlab/pseudometric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dtlab/rng.hpp"

namespace dtlab {

namespace {

double per_sample_loss(const TrainedModel& model, const EmpiricalDataset& data, int i) {
  return (model.predict(data.inputs.row(i).transpose()) - data.targets.row(i).transpose())
      .squaredNorm();
}

}  // namespace

void FunctionClassSample::validate() const {
  if (extractors.empty()) throw std::invalid_argument("function class: needs extractors");
  const int d = extractors.front().output_dim();
  for (const Network& f : extractors) {
    if (f.output_dim() != d) {
      throw std::invalid_argument("function class: extractors disagree on feature dim");
    }
  }
  if (ridge < 0.0) throw std::invalid_argument("function class: ridge must be >= 0");
}

double inf_finetune_loss(const Network& extractor, const EmpiricalDataset& data, double ridge) {
  return fine_tune_linear(extractor, data, ridge).loss;
}

PseudometricEstimate estimate_pseudometric(const FunctionClassSample& cls,
                                           const EmpiricalDataset& ds,
                                           const EmpiricalDataset& dt) {
  cls.validate();
  ds.validate();
  dt.validate();
  PseudometricEstimate est;
  est.per_extractor.reserve(cls.extractors.size());
  for (std::size_t i = 0; i < cls.extractors.size(); ++i) {
    PerExtractorLosses losses;
    losses.loss_s = inf_finetune_loss(cls.extractors[i], ds, cls.ridge);
    losses.loss_t = inf_finetune_loss(cls.extractors[i], dt, cls.ridge);
    const double gap = std::abs(losses.loss_s - losses.loss_t);
    if (gap > est.value || est.argmax_extractor < 0) {
      est.value = gap;
      est.argmax_extractor = static_cast<int>(i);
    }
    est.per_extractor.push_back(losses);
  }
  return est;
}

TransferBoundReport check_transfer_bound(const TrainedModel& model, const FunctionClassSample& cls,
                                         const EmpiricalDataset& ds, const EmpiricalDataset& dt) {
  cls.validate();
  const auto member = std::find_if(cls.extractors.begin(), cls.extractors.end(),
                                   [&](const Network& f) { return networks_equal(f, model.extractor); });
  if (member == cls.extractors.end()) {
    throw std::invalid_argument("check_transfer_bound: model extractor is not in the class");
  }
  TransferBoundReport report;
  report.source_loss = evaluate(model, ds, EvalMode::kSquaredLoss);
  report.target_inf = inf_finetune_loss(model.extractor, dt, cls.ridge);
  report.tau = report.target_inf - report.source_loss;
  report.d = estimate_pseudometric(cls, ds, dt).value;
  report.holds = report.tau <= report.d + 1e-9;
  return report;
}

RademacherEstimate rademacher_mc_values(const Matrix& loss_values, int n_draws, std::uint64_t seed) {
  if (loss_values.rows() < 1) throw std::invalid_argument("rademacher: empty loss grid");
  if (n_draws < 1) throw std::invalid_argument("rademacher: n_draws must be >= 1");
  const int n = static_cast<int>(loss_values.cols());
  SplitMix64 rng(seed);
  double sum = 0.0, sumsq = 0.0;
  Vector xi(n);
  for (int t = 0; t < n_draws; ++t) {
    for (int i = 0; i < n; ++i) xi[i] = rng.rademacher();
    const double sup = (loss_values * xi).maxCoeff();
    const double val = sup / n;
    sum += val;
    sumsq += val * val;
  }
  RademacherEstimate est;
  est.n_draws = n_draws;
  est.value = sum / n_draws;
  const double var = std::max(0.0, sumsq / n_draws - est.value * est.value);
  est.std_error = std::sqrt(var / n_draws);
  return est;
}

RademacherEstimate rademacher_mc(const FunctionClassSample& cls, const EmpiricalDataset& data,
                                 int n_draws, int heads_per_extractor, std::uint64_t seed) {
  cls.validate();
  data.validate();
  if (heads_per_extractor < 1) throw std::invalid_argument("rademacher: need at least one head");
  const int n = data.size();
  const int dy = data.target_dim();
  Matrix losses(static_cast<int>(cls.extractors.size()) * heads_per_extractor, n);
  int row = 0;
  for (std::size_t fi = 0; fi < cls.extractors.size(); ++fi) {
    const Network& f = cls.extractors[fi];
    const int dfeat = f.output_dim();
    Matrix feats(n, dfeat);
    for (int i = 0; i < n; ++i) {
      feats.row(i) = predict(f, data.inputs.row(i).transpose()).transpose();
    }
    const FineTuneResult ls = fine_tune_linear(f, data, cls.ridge);
    SplitMix64 head_rng = SplitMix64::substream(seed, 1000 + fi);
    const double scale = 0.25 * std::max(1.0, ls.head_weight.norm());
    for (int h = 0; h < heads_per_extractor; ++h, ++row) {
      Matrix w = ls.head_weight;
      Vector b = ls.head_bias;
      if (h > 0) {
        for (int r = 0; r < w.rows(); ++r) {
          for (int c = 0; c < w.cols(); ++c) w(r, c) += scale * head_rng.gaussian();
        }
        for (int r = 0; r < b.size(); ++r) b[r] += scale * head_rng.gaussian();
      }
      for (int i = 0; i < n; ++i) {
        const Vector pred = w * feats.row(i).transpose() + b;
        losses(row, i) = (pred - data.targets.row(i).transpose()).squaredNorm();
      }
    }
    (void)dy;
  }
  return rademacher_mc_values(losses, n_draws, seed);
}

// Shortest augmenting path assignment (Jonker-Volgenant style): one
// Dijkstra-like scan per row over the dual-adjusted costs.
double solve_assignment(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw std::invalid_argument("assignment: cost matrix must be square");
  if (n == 0) return 0.0;
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match_col(n + 1, 0);  // 1-based; match_col[j] = row matched to column j
  std::vector<int> way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match_col[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match_col[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match_col[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match_col[j0] != 0);
    do {
      const int j1 = way[j0];
      match_col[j0] = match_col[j1];
      j0 = j1;
    } while (j0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j) total += cost(match_col[j] - 1, j - 1);
  return total;
}

double wasserstein_exact(const EmpiricalDataset& a, const EmpiricalDataset& b) {
  a.validate();
  b.validate();
  if (a.size() != b.size()) {
    throw std::invalid_argument("wasserstein_exact: sample counts differ (resample upstream)");
  }
  if (a.size() > 256) throw std::invalid_argument("wasserstein_exact: n capped at 256");
  if (a.input_dim() != b.input_dim() || a.target_dim() != b.target_dim()) {
    throw std::invalid_argument("wasserstein_exact: dimension mismatch");
  }
  const int n = a.size();
  Matrix cost(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double dx = (a.inputs.row(i) - b.inputs.row(j)).squaredNorm();
      const double dy = (a.targets.row(i) - b.targets.row(j)).squaredNorm();
      cost(i, j) = std::sqrt(dx + dy);
    }
  }
  return solve_assignment(cost) / n;
}

double tv_discrete(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("tv_discrete: support size mismatch");
  double sp = 0.0, sq = 0.0, tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0) throw std::invalid_argument("tv_discrete: negative mass");
    sp += p[i];
    sq += q[i];
    tv += std::abs(p[i] - q[i]);
  }
  if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9) {
    throw std::invalid_argument("tv_discrete: masses must sum to 1");
  }
  return 0.5 * tv;
}

EmpBoundReport check_emp_bound(const TrainedModel& model, const FunctionClassSample& cls,
                               const EmpiricalDataset& ds, const EmpiricalDataset& dt,
                               double delta, double c, int rad_draws, std::uint64_t seed) {
  if (delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("check_emp_bound: delta in (0,1)");
  if (c <= 0.0) throw std::invalid_argument("check_emp_bound: c must be > 0");
  cls.validate();
  for (int i = 0; i < ds.size(); ++i) {
    if (per_sample_loss(model, ds, i) > c) {
      throw std::invalid_argument("check_emp_bound: observed source loss exceeds c");
    }
  }
  for (int i = 0; i < dt.size(); ++i) {
    if (per_sample_loss(model, dt, i) > c) {
      throw std::invalid_argument("check_emp_bound: observed target loss exceeds c");
    }
  }

  EmpBoundReport report;
  report.delta = delta;
  report.c = c;
  report.n = std::min(ds.size(), dt.size());
  report.d_hat = estimate_pseudometric(cls, ds, dt).value;
  report.rad_s = rademacher_mc(cls, ds, rad_draws, 64, seed).value;
  report.rad_t = rademacher_mc(cls, dt, rad_draws, 64, seed + 1).value;
  report.concentration = 9.0 * c * std::sqrt(std::log(8.0 / delta) / (2.0 * report.n));
  report.rhs = report.d_hat + 2.0 * report.rad_t + 4.0 * report.rad_s + report.concentration;

  const double source_loss = evaluate(model, ds, EvalMode::kSquaredLoss);
  const double target_inf = inf_finetune_loss(model.extractor, dt, cls.ridge);
  report.tau = target_inf - source_loss;
  report.slack = report.rhs - report.tau;
  report.holds = report.tau <= report.rhs + 1e-9;
  return report;
}

}  // namespace dtlab
