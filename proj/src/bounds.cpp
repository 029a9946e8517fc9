#include "dtlab/bounds.hpp"

#include <cmath>
#include <stdexcept>

namespace dtlab {

std::vector<ToyCurvePoint> toy_curve(const ToyInstance& instance, const std::vector<double>& c_grid) {
  for (std::size_t i = 0; i < c_grid.size(); ++i) {
    if (c_grid[i] < 0.0) throw std::invalid_argument("toy_curve: budgets must be >= 0");
    if (i > 0 && c_grid[i] < c_grid[i - 1]) {
      throw std::invalid_argument("toy_curve: grid must be ascending");
    }
  }
  const int n = static_cast<int>(instance.atoms.rows());
  std::vector<ToyCurvePoint> curve;
  curve.reserve(c_grid.size());
  for (double c : c_grid) {
    const double scale = instance.norm_ys > 0.0 ? std::min(1.0, c / instance.norm_ys) : 1.0;
    ToyCurvePoint pt;
    pt.c = c;
    pt.loss_s = (1.0 - scale) * instance.norm_ys;
    double lt = 0.0;
    for (int i = 0; i < n; ++i) {
      lt += (scale * instance.ys.row(i) - instance.yt.row(i)).norm();
    }
    pt.loss_t = lt / n;
    pt.relative = pt.loss_t - pt.loss_s;
    curve.push_back(pt);
  }
  return curve;
}

TightnessConstruction tightness_construct(const EmpiricalDataset& source, const Matrix& marginal_inputs) {
  source.validate();
  if (marginal_inputs.rows() < 1) throw std::invalid_argument("tightness_construct: empty marginal");
  const int d = source.target_dim();
  TightnessConstruction out;
  out.radius = std::sqrt(source.targets.array().square().rowwise().sum().mean());
  out.atoms = Matrix::Zero(2, d);
  out.atoms(0, 0) = out.radius;
  out.atoms(1, 0) = -out.radius;
  out.weights = Vector::Constant(2, 0.5);

  const int m = static_cast<int>(marginal_inputs.rows());
  out.target.inputs = Matrix(2 * m, marginal_inputs.cols());
  out.target.targets = Matrix(2 * m, d);
  for (int i = 0; i < m; ++i) {
    out.target.inputs.row(2 * i) = marginal_inputs.row(i);
    out.target.inputs.row(2 * i + 1) = marginal_inputs.row(i);
    out.target.targets.row(2 * i) = out.atoms.row(0);
    out.target.targets.row(2 * i + 1) = out.atoms.row(1);
  }
  return out;
}

TightnessReport tightness_verify(const FunctionClassSample& cls, const TrainedModel& model,
                                 const EmpiricalDataset& ds, const TightnessConstruction& construction) {
  cls.validate();
  TightnessReport report;
  const double source_loss = evaluate(model, ds, EvalMode::kSquaredLoss);
  const double target_inf_model = inf_finetune_loss(model.extractor, construction.target, cls.ridge);
  report.tau = target_inf_model - source_loss;

  double best_source_inf = std::numeric_limits<double>::infinity();
  double d = 0.0;
  for (const Network& f : cls.extractors) {
    const double inf_s = inf_finetune_loss(f, ds, cls.ridge);
    const double inf_t = inf_finetune_loss(f, construction.target, cls.ridge);
    best_source_inf = std::min(best_source_inf, inf_s);
    d = std::max(d, std::abs(inf_t - inf_s));
  }
  report.d = d;
  report.eps_opt = source_loss - best_source_inf;
  report.gap = report.d - report.tau;
  report.holds = report.gap >= -1e-9 && report.gap <= report.eps_opt + 1e-9;
  return report;
}

}  // namespace dtlab
