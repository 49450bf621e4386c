#include "sdfrecon/train.hpp"

#include <charconv>
#include <cmath>

namespace sdfrecon {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

// Distinct view ids, uniform without replacement.
std::vector<int> pick_views(int total, int count, uint64_t seed) {
  std::vector<int> ids(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) ids[std::size_t(i)] = i;
  RngStream rng(seed);
  int take = std::min(count, total);
  for (int i = 0; i < take; ++i) {
    int j = i + int(rng.below(uint64_t(total - i)));
    std::swap(ids[std::size_t(i)], ids[std::size_t(j)]);
  }
  ids.resize(std::size_t(take));
  return ids;
}

}  // namespace

template <typename T>
FitResult fit_scene(FieldParams<T>& params, const Dataset& data, const TrainConfig& cfg,
                    const LossWeights& weights, std::ostream* loss_log,
                    const std::function<void(int, const FieldParams<T>&)>& on_checkpoint) {
  cfg.validate();
  weights.validate();
  if (data.views.empty()) throw std::invalid_argument("fit_scene: dataset has no views");

  std::vector<T> flat = params.to_flat();
  std::vector<T> last_good = flat;
  Adam<T> adam(flat.size(), T(cfg.learning_rate));
  FitResult result;

  if (loss_log)
    (*loss_log) << "iteration,loss_sdf,loss_rgb,loss_ray_last,loss_ray_other,loss_eik,total\n";

  const int n_views = int(data.views.size());
  const int vb = std::min(cfg.batch_views, n_views);

  struct ViewOut {
    std::vector<T> grads;
    double sdf = 0, rgb = 0, ray_last = 0, ray_other = 0;
  };

  for (int it = 0; it < cfg.iterations; ++it) {
    auto view_ids =
        pick_views(n_views, vb, RngStream::derive(cfg.seed, (kStreamViewPick << 32) | uint64_t(it)));

    std::vector<ViewOut> outs(static_cast<std::size_t>(vb));
    parallel_chunks(std::size_t(vb), [&](std::size_t lo, std::size_t hi) {
      for (std::size_t k = lo; k < hi; ++k) {
        const View& view = data.views[std::size_t(view_ids[k])];
        ViewOut& out = outs[k];
        out.grads.assign(flat.size(), T(0));
        auto batch = sample_pixels(
            view.sil, cfg.pixels_per_view,
            RngStream::derive(cfg.seed, (kStreamPixels << 32) | uint64_t(it), uint64_t(view_ids[k])));
        RngStream depth_rng = RngStream::substream(
            cfg.seed, (kStreamDepths << 32) | uint64_t(it), uint64_t(view_ids[k]));
        Tape<T> tape;
        NetGraph<T> net(tape, params, true);
        auto parts = build_view_loss(net, params, view, batch, cfg, weights, depth_rng);
        tape.backward(tape.scale(parts.total, T(1.0 / vb)));
        net.accumulate_gradients(out.grads);
        out.sdf = parts.sdf_value;
        out.rgb = parts.rgb_value;
        out.ray_last = parts.ray_last_value;
        out.ray_other = parts.ray_other_value;
      }
    });

    std::vector<T> grads(flat.size(), T(0));
    double sdf_sum = 0, rgb_sum = 0, last_sum = 0, other_sum = 0;
    for (const auto& out : outs) {  // fixed view order
      for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += out.grads[i];
      sdf_sum += out.sdf;
      rgb_sum += out.rgb;
      last_sum += out.ray_last;
      other_sum += out.ray_other;
    }

    double eik_value = 0;
    {
      Tape<T> tape;
      NetGraph<T> net(tape, params, true);
      RngStream eik_rng = RngStream::substream(cfg.seed, (kStreamEik << 32) | uint64_t(it));
      auto eik = build_eik_loss(net, cfg, eik_rng);
      eik_value = double(tape.value(eik)(0, 0));
      if (weights.eik > 0) {
        tape.backward(tape.scale(eik, T(weights.eik)));
        net.accumulate_gradients(grads);
      }
    }

    double sdf_avg = sdf_sum / vb, rgb_avg = rgb_sum / vb;
    double last_avg = last_sum / vb, other_avg = other_sum / vb;
    double total = weights.sdf * sdf_avg + weights.rgb * rgb_avg + weights.ray_last * last_avg +
                   weights.ray_other * other_avg + weights.eik * eik_value;

    if (loss_log) {
      (*loss_log) << it << ',' << format_double(sdf_avg) << ',' << format_double(rgb_avg) << ','
                  << format_double(last_avg) << ',' << format_double(other_avg) << ','
                  << format_double(eik_value) << ',' << format_double(total) << '\n';
    }

    if (it == 0) result.initial_total = total;
    bool blown_up = !std::isfinite(total) ||
                    total > 1e3 * std::max(result.initial_total, 1e-12);
    if (blown_up) {
      params.from_flat(last_good);
      result.diverged = true;
      result.iterations_run = it;
      result.final_total = total;
      return result;
    }
    last_good = flat;
    result.final_total = total;

    adam.step(flat, grads);
    params.from_flat(flat);

    if (on_checkpoint && cfg.checkpoint_interval > 0 && (it + 1) % cfg.checkpoint_interval == 0)
      on_checkpoint(it + 1, params);
    result.iterations_run = it + 1;
  }
  return result;
}

template <typename T>
double pretrain_sphere(FieldParams<T>& params, double radius, int iterations,
                       int points_per_iter, double learning_rate, uint64_t seed) {
  if (radius <= 0) throw std::invalid_argument("pretrain_sphere: radius must be positive");
  if (iterations < 1 || points_per_iter < 1)
    throw std::invalid_argument("pretrain_sphere: counts must be positive");

  std::vector<T> flat = params.to_flat();
  Adam<T> adam(flat.size(), T(learning_rate));

  auto make_batch = [&](uint64_t stream, int it, MatX<T>& pts, MatX<T>& target) {
    RngStream rng = RngStream::substream(seed, (stream << 32) | uint64_t(it));
    pts.resize(3, points_per_iter);
    target.resize(1, points_per_iter);
    for (int i = 0; i < points_per_iter; ++i) {
      double x = rng.uniform(-1, 1), y = rng.uniform(-1, 1), z = rng.uniform(-1, 1);
      pts(0, i) = T(x);
      pts(1, i) = T(y);
      pts(2, i) = T(z);
      target(0, i) = T(std::sqrt(x * x + y * y + z * z) - radius);
    }
  };

  constexpr uint64_t kTrain = 0x5052, kHoldout = 0x484f;
  for (int it = 0; it < iterations; ++it) {
    // cosine decay to 1% of the base rate: converges fast early while the
    // late iterations stop re-exciting high-frequency encoding modes
    double phase = iterations > 1 ? double(it) / (iterations - 1) : 1.0;
    adam.set_learning_rate(T(learning_rate * (0.01 + 0.99 * 0.5 * (1.0 + std::cos(phase * M_PI)))));
    MatX<T> pts, target;
    make_batch(kTrain, it, pts, target);
    Tape<T> tape;
    NetGraph<T> net(tape, params, true);
    auto diff = tape.sub(net.sdf(tape.constant(std::move(pts))), tape.constant(std::move(target)));
    auto loss = tape.scale(tape.sum(tape.square(diff)), T(1.0 / points_per_iter));
    double value = double(tape.value(loss)(0, 0));
    if (!std::isfinite(value))
      throw std::runtime_error("pretrain_sphere: loss diverged at iteration " +
                               std::to_string(it) + " (non-finite)");
    tape.backward(loss);
    std::vector<T> grads(flat.size(), T(0));
    net.accumulate_gradients(grads);
    adam.step(flat, grads);
    params.from_flat(flat);
  }

  // Held-out residual.
  MatX<T> pts, target;
  make_batch(kHoldout, 0, pts, target);
  MatX<T> f = eval_sdf_batch(params, pts);
  double mse = double((f - target).array().square().mean());
  return mse;
}

template FitResult fit_scene<float>(FieldParams<float>&, const Dataset&, const TrainConfig&,
                                    const LossWeights&, std::ostream*,
                                    const std::function<void(int, const FieldParams<float>&)>&);
template FitResult fit_scene<double>(FieldParams<double>&, const Dataset&, const TrainConfig&,
                                     const LossWeights&, std::ostream*,
                                     const std::function<void(int, const FieldParams<double>&)>&);
template double pretrain_sphere<float>(FieldParams<float>&, double, int, int, double, uint64_t);
template double pretrain_sphere<double>(FieldParams<double>&, double, int, int, double, uint64_t);

}  // namespace sdfrecon
