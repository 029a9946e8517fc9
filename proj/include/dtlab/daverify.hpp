#ifndef DTLAB_DAVERIFY_HPP_
#define DTLAB_DAVERIFY_HPP_

#include <cstdint>
#include <vector>

#include "dtlab/augment.hpp"
#include "dtlab/dataset.hpp"
#include "dtlab/train.hpp"

namespace dtlab {

// Closed-form regularizer induced by an augmentation spec on g o f with a
// scalar head. The feature terms apply at the feature level, the hessian and
// jacobian terms at the data level; `total` is the sum for the spec's level
// and algorithm.
struct OmegaBreakdown {
  double total = 0.0;
  // feature level
  double w_feature_term = 0.0;
  double b_feature_term = 0.0;
  // data level
  double hessian_term = 0.0;  // prediction-averaging part
  double jac_w_term = 0.0;    // loss-averaging extras, each >= 0
  double jac_b_term = 0.0;
  bool corollary_relu = false;  // hessian term forced to zero (piecewise linear net)
};

OmegaBreakdown omega_exact(const TrainedModel& model, const EmpiricalDataset& data,
                           const AugmentationSpec& spec);

struct McLoss {
  double value = 0.0;
  double std_error = 0.0;  // zero when the transform support was enumerated
  bool exact = false;
  int n_mc = 0;
};

// Augmented objective, exact by enumeration when the transform support has
// at most 64 atoms, Monte Carlo otherwise (bias-corrected for
// prediction-averaging).
McLoss mc_da_loss(const TrainedModel& model, const EmpiricalDataset& data,
                  const AugmentationSpec& spec, int n_mc, std::uint64_t seed);

struct OmegaReport {
  double s = 0.0;
  double lhs = 0.0;
  double lhs_stderr = 0.0;
  double rhs = 0.0;
  double residual = 0.0;
  int n_mc = 0;
  bool exact = false;
  bool residual_ok = false;  // residual <= max(3 stderr, 1e-10)
};

struct DaVerifyResult {
  std::vector<OmegaReport> rows;
  double slope = 0.0;  // log-log residual slope vs magnitude
  bool slope_defined = false;
  bool exact_identity_expected = false;  // feature level or linear extractor
  bool pass = false;  // residual rule when exact, slope >= 2.7 otherwise
};

// Evaluates lhs (augmented objective) against rhs (plain objective + omega)
// over a descending magnitude grid. Errors with fewer than 4 grid points.
DaVerifyResult verify_da_identity(const TrainedModel& model, const EmpiricalDataset& data,
                                  const AugmentationSpec& spec, const std::vector<double>& s_grid,
                                  int n_mc, std::uint64_t seed);

// Least-squares slope of log(y) against log(x); requires positive entries.
double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace dtlab

#endif  // DTLAB_DAVERIFY_HPP_
