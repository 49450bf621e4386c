#pragma once

#include <functional>
#include <ostream>

#include "sdfrecon/losses.hpp"
#include "sdfrecon/optim.hpp"

namespace sdfrecon {

// Shortest round-trip decimal form; keeps loss logs byte-stable.
std::string format_double(double v);

struct FitResult {
  int iterations_run = 0;
  bool diverged = false;
  double initial_total = 0.0;
  double final_total = 0.0;
};

// Scene fitting: per iteration samples a view batch and per-view pixel
// batches, marches, assembles the weighted objective, and takes one Adam
// step. The CSV loss log (iteration, each term, total) goes to loss_log when
// given. Gradients are reduced in view order, so runs are reproducible for
// any worker count. On divergence (non-finite total or 1000x the initial)
// the last good parameters are restored and the result is flagged.
template <typename T>
FitResult fit_scene(FieldParams<T>& params, const Dataset& data, const TrainConfig& cfg,
                    const LossWeights& weights, std::ostream* loss_log = nullptr,
                    const std::function<void(int, const FieldParams<T>&)>& on_checkpoint = {});

// Fits f to the SDF of a zero-centered sphere of the given radius over
// uniform samples in [-1,1]^3; returns the final mean squared residual on a
// held-out sample batch. Throws on divergence.
template <typename T>
double pretrain_sphere(FieldParams<T>& params, double radius, int iterations,
                       int points_per_iter, double learning_rate, uint64_t seed);

extern template FitResult fit_scene<float>(FieldParams<float>&, const Dataset&,
                                           const TrainConfig&, const LossWeights&, std::ostream*,
                                           const std::function<void(int, const FieldParams<float>&)>&);
extern template FitResult fit_scene<double>(FieldParams<double>&, const Dataset&,
                                            const TrainConfig&, const LossWeights&, std::ostream*,
                                            const std::function<void(int, const FieldParams<double>&)>&);
extern template double pretrain_sphere<float>(FieldParams<float>&, double, int, int, double,
                                              uint64_t);
extern template double pretrain_sphere<double>(FieldParams<double>&, double, int, int, double,
                                               uint64_t);

}  // namespace sdfrecon
