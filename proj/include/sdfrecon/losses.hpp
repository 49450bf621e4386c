#pragma once

#include <functional>
#include <optional>

#include "sdfrecon/dataset.hpp"
#include "sdfrecon/renderer.hpp"

namespace sdfrecon {

struct LossWeights {
  double sdf = 3.0;
  double rgb = 1.0;
  double ray_last = 1.0;
  double ray_other = 0.1;
  double eik = 0.01;
  void validate() const;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_views = 16;
  int pixels_per_view = 1024;
  int depth_samples = 5;            // samples per exterior pixel in the bound loss
  double margin = 0.01;             // hinge margin in the ray loss
  double depth_range_margin = 1.2;  // z sampled in [dist - m, dist + m] (clipped at 1)
  int eikonal_samples = 1024;
  double eikonal_roi = 1.2;         // half width of the eikonal sampling cube
  int iterations = 2000;
  uint64_t seed = 0;
  bool float64 = false;
  int march_steps = 10;
  int bisection_iters = 10;
  bool importance_weighting = true;
  bool occupancy_loss = false;   // binary-occupancy ablation of the bound loss
  double occupancy_tau = 0.05;
  bool rgb_all_pixels = false;   // rendering loss on all pixels instead of interior only
  double boundary_guard_px = 1.0;  // subtracted from the DT before bound evaluation
  int checkpoint_interval = 0;   // 0 = final checkpoint only
  bool deterministic = false;
  void validate() const;
};

std::string train_config_to_json(const TrainConfig& cfg, const LossWeights& w);
void train_config_from_json(const std::string& text, TrainConfig& cfg, LossWeights& w);

inline std::pair<double, double> depth_sample_range(const Camera& cam, double margin) {
  double d = cam.distance_to_origin();
  return {std::max(kNearDepth, d - margin), d + margin};
}

// Substream purposes for the training RNG.
enum : uint64_t {
  kStreamViewPick = 0x5649,
  kStreamPixels = 0x5058,
  kStreamDepths = 0x5a54,
  kStreamEik = 0x454b,
};

// Shared precomputation of the bound loss: sampled depths, object-frame
// points, per-sample bound values and normalized importance weights. Both
// the differentiable loss and the analytic oracle consume this, so they
// see identical samples.
struct SdfLossSamples {
  Eigen::Matrix3Xd points_obj;  // 3 x (pixels * M)
  Eigen::VectorXd bounds;
  Eigen::VectorXd weights;      // per column; already normalized, replicated per sample
  int usable_pixels = 0;
};

SdfLossSamples make_sdf_loss_samples(const View& view, const std::vector<PixelSample>& exterior,
                                     const TrainConfig& cfg, RngStream& rng);

// Hinge (or occupancy-BCE) loss of an arbitrary object-frame field over
// precomputed samples; the oracle path for the differentiable loss below.
double sdf_loss_value(const std::function<double(const Vec3&)>& field_obj,
                      const SdfLossSamples& samples, const TrainConfig& cfg);

// Mean squared eikonal residual of an arbitrary field gradient over uniform
// samples in the cube.
double eik_loss_value(const std::function<Vec3(const Vec3&)>& grad_obj, int n_samples,
                      double roi_halfwidth, RngStream& rng);

// ---- differentiable builders (one view per tape) ---------------------------

template <typename T>
struct ViewLossRefs {
  typename Tape<T>::Ref sdf, rgb, ray_last, ray_other;  // invalid when absent
  typename Tape<T>::Ref total;                           // weighted sum
  double sdf_value = 0, rgb_value = 0, ray_last_value = 0, ray_other_value = 0;
};

template <typename T>
typename Tape<T>::Ref build_sdf_loss(NetGraph<T>& net, const SdfLossSamples& samples,
                                     const TrainConfig& cfg);

template <typename T>
void build_ray_loss(NetGraph<T>& net, const View& view, const PixelBatch<T>& px,
                    const MarchBatch<T>& mb, const TrainConfig& cfg,
                    typename Tape<T>::Ref& last_out, typename Tape<T>::Ref& other_out);

template <typename T>
typename Tape<T>::Ref build_rgb_loss(NetGraph<T>& net, const View& view,
                                     const PixelBatch<T>& px, const MarchBatch<T>& mb,
                                     const TrainConfig& cfg);

template <typename T>
typename Tape<T>::Ref build_eik_loss(NetGraph<T>& net, const TrainConfig& cfg, RngStream& rng);

// Full per-view objective: march + bisection + the three image-space losses.
template <typename T>
ViewLossRefs<T> build_view_loss(NetGraph<T>& net, const FieldParams<T>& params, const View& view,
                                const std::vector<PixelSample>& batch, const TrainConfig& cfg,
                                const LossWeights& w, RngStream& rng);

// Audit of the lower bound against an analytic scene over a whole view.
struct BoundAudit {
  int64_t checked = 0;
  int64_t violations = 0;
  double worst_margin = std::numeric_limits<double>::infinity();  // min(f - b)
};

BoundAudit audit_bound(const AnalyticScene& scene, const View& view, int depths_per_pixel,
                       double guard_px, uint64_t seed);

}  // namespace sdfrecon
