#ifndef DTLAB_AUGMENT_HPP_
#define DTLAB_AUGMENT_HPP_

#include <cstdint>
#include <string>
#include <utility>

#include "dtlab/network.hpp"
#include "dtlab/rng.hpp"

namespace dtlab {

enum class AugLevel { kFeature, kData };
enum class AugAlgorithm { kLossAveraging, kPredictionAveraging };

enum class WDistKind { kIdentity, kRademacherDiagonal, kFixedPlaneRotation };
enum class BDistKind { kZero, kGaussianIso, kFixedShift };

// Distribution over affine transforms (W, b). Applied as W z + b at the
// feature level and as W^T x + b at the data level.
struct AugmentationSpec {
  AugLevel level = AugLevel::kData;
  AugAlgorithm algorithm = AugAlgorithm::kLossAveraging;

  WDistKind w_kind = WDistKind::kIdentity;
  double w_scale = 0.0;     // rademacher-diagonal s
  double w_theta = 0.0;     // fixed-plane-rotation angle (radians)
  double w_prob = 1.0;      // fixed-plane-rotation probability

  BDistKind b_kind = BDistKind::kZero;
  double b_sigma = 0.0;     // gaussian-iso sigma
  Vector b_shift;           // fixed-shift vector
  double b_prob = 1.0;      // fixed-shift probability

  bool independent = true;
  std::uint64_t seed = 0;

  void validate() const;
};

// Returns a spec whose transform magnitude is s: rademacher scale, gaussian
// sigma, rotation angle, or shift length (direction preserved).
AugmentationSpec with_magnitude(const AugmentationSpec& spec, double s);

// Paired per-draw state. Streams for W and b are separate unless the spec
// couples them (independent = false).
class TransformSampler {
 public:
  TransformSampler(const AugmentationSpec& spec, int dim);

  // Draw (W, b). identity/zero variants return exact I / 0.
  std::pair<Matrix, Vector> sample();

 private:
  AugmentationSpec spec_;
  int dim_;
  SplitMix64 w_rng_;
  SplitMix64 b_rng_;
};

std::pair<Matrix, Vector> sample_transform(const AugmentationSpec& spec, TransformSampler& sampler);

struct MomentCheck {
  double deviation = 0.0;  // Frobenius / Euclidean distance from the required moment
  double threshold = 0.0;  // 3-sigma-equivalent Monte Carlo band
  bool pass = false;
};

struct ConditionReport {
  MomentCheck mean_w;       // E[W] = I
  MomentCheck mean_b;       // E[b] = 0
  bool w_nonconstant = false;
  MomentCheck independence;  // cov(tr W, 1^T b) and diagonal pair covariances
  int n_mc = 0;
};

// Monte Carlo check of the moment conditions a transform distribution must
// satisfy to act as a regularizer. n_mc >= 1000.
ConditionReport condition_check(const AugmentationSpec& spec, int dim, int n_mc);

// Closed-form first/second moments used by the exact regularizer formulas.
// mean_w_delta = E[W] - I; b_mean = E[b]; b_cov2 = E[b b^T].
struct TransformMoments {
  Matrix mean_w_delta;
  Vector b_mean;
  Matrix b_second_moment;
};
TransformMoments transform_moments(const AugmentationSpec& spec, int dim);

}  // namespace dtlab

#endif  // DTLAB_AUGMENT_HPP_
