#ifndef DTLAB_BOUNDS_HPP_
#define DTLAB_BOUNDS_HPP_

#include <vector>

#include "dtlab/dataset.hpp"
#include "dtlab/pseudometric.hpp"

namespace dtlab {

struct ToyCurvePoint {
  double c = 0.0;
  double loss_s = 0.0;
  double loss_t = 0.0;
  double relative = 0.0;  // loss_t - loss_s
};

// Closed-form norm-constrained minimizer f_c = y_S * min(1, c / ||y_S||_D)
// evaluated against both domains over an ascending grid of budgets.
std::vector<ToyCurvePoint> toy_curve(const ToyInstance& instance, const std::vector<double>& c_grid);

// Sphere-atom target conditional: antipodal pair at radius r along a fixed
// unit direction, weights 1/2 each, so the atom gradients of the squared
// loss at zero cancel exactly and l(0, y_i) = r^2 >= loss_S(0).
struct TightnessConstruction {
  double radius = 0.0;
  Matrix atoms;    // 2 x d
  Vector weights;  // (1/2, 1/2)
  EmpiricalDataset target;  // marginal inputs duplicated, one row per atom
};

TightnessConstruction tightness_construct(const EmpiricalDataset& source, const Matrix& marginal_inputs);

struct TightnessReport {
  double tau = 0.0;
  double d = 0.0;
  double eps_opt = 0.0;  // measured training suboptimality over the class
  double gap = 0.0;      // d - tau
  bool holds = false;    // -1e-9 <= gap <= eps_opt + 1e-9
};

TightnessReport tightness_verify(const FunctionClassSample& cls, const TrainedModel& model,
                                 const EmpiricalDataset& ds, const TightnessConstruction& construction);

}  // namespace dtlab

#endif  // DTLAB_BOUNDS_HPP_
