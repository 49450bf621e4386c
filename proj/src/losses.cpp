#include "sdfrecon/losses.hpp"

#include <json.hpp>

#include <cmath>

namespace sdfrecon {

using nlohmann::json;

void LossWeights::validate() const {
  if (sdf < 0 || rgb < 0 || ray_last < 0 || ray_other < 0 || eik < 0)
    throw std::invalid_argument("LossWeights: weights must be nonnegative");
}

void TrainConfig::validate() const {
  if (learning_rate <= 0) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
  if (batch_views < 1 || pixels_per_view < 1 || depth_samples < 1 || iterations < 0 ||
      eikonal_samples < 1 || march_steps < 2 || bisection_iters < 1)
    throw std::invalid_argument("TrainConfig: counts must be positive");
  if (margin <= 0) throw std::invalid_argument("TrainConfig: margin must be > 0");
  if (boundary_guard_px < 0) throw std::invalid_argument("TrainConfig: negative boundary guard");
}

std::string train_config_to_json(const TrainConfig& cfg, const LossWeights& w) {
  json j;
  j["learning_rate"] = cfg.learning_rate;
  j["batch_views"] = cfg.batch_views;
  j["pixels_per_view"] = cfg.pixels_per_view;
  j["depth_samples"] = cfg.depth_samples;
  j["margin"] = cfg.margin;
  j["depth_range_margin"] = cfg.depth_range_margin;
  j["eikonal_samples"] = cfg.eikonal_samples;
  j["eikonal_roi"] = cfg.eikonal_roi;
  j["iterations"] = cfg.iterations;
  j["seed"] = cfg.seed;
  j["float64"] = cfg.float64;
  j["march_steps"] = cfg.march_steps;
  j["bisection_iters"] = cfg.bisection_iters;
  j["importance_weighting"] = cfg.importance_weighting;
  j["occupancy_loss"] = cfg.occupancy_loss;
  j["occupancy_tau"] = cfg.occupancy_tau;
  j["rgb_all_pixels"] = cfg.rgb_all_pixels;
  j["boundary_guard_px"] = cfg.boundary_guard_px;
  j["checkpoint_interval"] = cfg.checkpoint_interval;
  j["deterministic"] = cfg.deterministic;
  j["weights"] = {{"sdf", w.sdf},
                  {"rgb", w.rgb},
                  {"ray_last", w.ray_last},
                  {"ray_other", w.ray_other},
                  {"eik", w.eik}};
  return j.dump(2);
}

void train_config_from_json(const std::string& text, TrainConfig& cfg, LossWeights& w) {
  json j = json::parse(text);
  for (auto& [key, val] : j.items()) {
    if (key == "learning_rate") cfg.learning_rate = val.get<double>();
    else if (key == "batch_views") cfg.batch_views = val.get<int>();
    else if (key == "pixels_per_view") cfg.pixels_per_view = val.get<int>();
    else if (key == "depth_samples") cfg.depth_samples = val.get<int>();
    else if (key == "margin") cfg.margin = val.get<double>();
    else if (key == "depth_range_margin") cfg.depth_range_margin = val.get<double>();
    else if (key == "eikonal_samples") cfg.eikonal_samples = val.get<int>();
    else if (key == "eikonal_roi") cfg.eikonal_roi = val.get<double>();
    else if (key == "iterations") cfg.iterations = val.get<int>();
    else if (key == "seed") cfg.seed = val.get<uint64_t>();
    else if (key == "float64") cfg.float64 = val.get<bool>();
    else if (key == "march_steps") cfg.march_steps = val.get<int>();
    else if (key == "bisection_iters") cfg.bisection_iters = val.get<int>();
    else if (key == "importance_weighting") cfg.importance_weighting = val.get<bool>();
    else if (key == "occupancy_loss") cfg.occupancy_loss = val.get<bool>();
    else if (key == "occupancy_tau") cfg.occupancy_tau = val.get<double>();
    else if (key == "rgb_all_pixels") cfg.rgb_all_pixels = val.get<bool>();
    else if (key == "boundary_guard_px") cfg.boundary_guard_px = val.get<double>();
    else if (key == "checkpoint_interval") cfg.checkpoint_interval = val.get<int>();
    else if (key == "deterministic") cfg.deterministic = val.get<bool>();
    else if (key == "weights") {
      w.sdf = val.value("sdf", w.sdf);
      w.rgb = val.value("rgb", w.rgb);
      w.ray_last = val.value("ray_last", w.ray_last);
      w.ray_other = val.value("ray_other", w.ray_other);
      w.eik = val.value("eik", w.eik);
    } else {
      throw std::invalid_argument("train config: unknown key \"" + key + "\"");
    }
  }
  cfg.validate();
  w.validate();
}

SdfLossSamples make_sdf_loss_samples(const View& view, const std::vector<PixelSample>& exterior,
                                     const TrainConfig& cfg, RngStream& rng) {
  SdfLossSamples s;
  std::vector<const PixelSample*> usable;
  std::vector<double> d_px;
  for (const auto& p : exterior) {
    if (p.interior) continue;
    double d = view.sil.d_ext(p.x, p.y);
    if (d > 0 && std::isfinite(d)) {
      usable.push_back(&p);
      d_px.push_back(d);
    }
  }
  s.usable_pixels = int(usable.size());
  if (usable.empty()) return s;

  const int m = cfg.depth_samples;
  const double px_to_norm = 2.0 / view.sil.width;
  auto [zlo, zhi] = depth_sample_range(view.cam, cfg.depth_range_margin);

  std::vector<double> w(usable.size());
  double wsum = 0;
  for (std::size_t i = 0; i < usable.size(); ++i) {
    w[i] = cfg.importance_weighting ? 1.0 / (d_px[i] * px_to_norm) : 1.0;
    wsum += w[i];
  }

  s.points_obj.resize(3, Eigen::Index(usable.size()) * m);
  s.bounds.resize(Eigen::Index(usable.size()) * m);
  s.weights.resize(Eigen::Index(usable.size()) * m);
  for (std::size_t i = 0; i < usable.size(); ++i) {
    const PixelSample& p = *usable[i];
    Vec2 u = pixel_to_normalized(p.x, p.y, view.cam);
    double d_guarded = std::max(0.0, d_px[i] - cfg.boundary_guard_px) * px_to_norm;
    for (int k = 0; k < m; ++k) {
      double z = rng.uniform(zlo, zhi);
      Eigen::Index col = Eigen::Index(i) * m + k;
      s.points_obj.col(col) = view.cam.to_object(backproject(u, z, view.cam));
      s.bounds[col] = sdf_lower_bound(u, z, d_guarded, view.cam);
      s.weights[col] = w[i] / wsum;
    }
  }
  return s;
}

double sdf_loss_value(const std::function<double(const Vec3&)>& field_obj,
                      const SdfLossSamples& samples, const TrainConfig& cfg) {
  if (samples.usable_pixels == 0) return 0.0;
  double loss = 0;
  for (Eigen::Index c = 0; c < samples.bounds.size(); ++c) {
    double f = field_obj(samples.points_obj.col(c));
    double term;
    if (cfg.occupancy_loss) {
      double x = -f / cfg.occupancy_tau;
      term = x > 30 ? x : std::log1p(std::exp(x));
    } else {
      term = std::max(0.0, samples.bounds[c] - f);
    }
    loss += samples.weights[c] * term;
  }
  return loss;
}

double eik_loss_value(const std::function<Vec3(const Vec3&)>& grad_obj, int n_samples,
                      double roi_halfwidth, RngStream& rng) {
  double acc = 0;
  for (int i = 0; i < n_samples; ++i) {
    Vec3 x(rng.uniform(-roi_halfwidth, roi_halfwidth),
           rng.uniform(-roi_halfwidth, roi_halfwidth),
           rng.uniform(-roi_halfwidth, roi_halfwidth));
    double r = grad_obj(x).norm() - 1.0;
    acc += r * r;
  }
  return acc / n_samples;
}

template <typename T>
typename Tape<T>::Ref build_sdf_loss(NetGraph<T>& net, const SdfLossSamples& samples,
                                     const TrainConfig& cfg) {
  if (samples.usable_pixels == 0) return {};
  auto& tp = net.tape();
  MatX<T> pts = samples.points_obj.cast<T>();
  MatX<T> wrow = samples.weights.transpose().cast<T>();
  auto f = net.sdf(tp.constant(std::move(pts)));
  typename Tape<T>::Ref per_sample;
  if (cfg.occupancy_loss) {
    per_sample = tp.softplus(tp.scale(f, T(-1.0 / cfg.occupancy_tau)));
  } else {
    MatX<T> brow = samples.bounds.transpose().cast<T>();
    per_sample = tp.relu(tp.sub(tp.constant(std::move(brow)), f));
  }
  return tp.sum(tp.cwise_mul(per_sample, tp.constant(std::move(wrow))));
}

template <typename T>
void build_ray_loss(NetGraph<T>& net, const View& view, const PixelBatch<T>& px,
                    const MarchBatch<T>& mb, const TrainConfig& cfg,
                    typename Tape<T>::Ref& last_out, typename Tape<T>::Ref& other_out) {
  auto& tp = net.tape();
  const int b = int(px.pixels.size());
  const int n = int(mb.z.size()) - 1;
  const double px_to_norm = 2.0 / view.sil.width;

  MatX<T> wrow(1, b);
  double wsum = 0;
  for (int i = 0; i < b; ++i) {
    const auto& p = px.pixels[std::size_t(i)];
    double d = view.sil.d_own(p.x, p.y);
    double w = 0.0;
    if (d > 0 && std::isfinite(d)) w = cfg.importance_weighting ? 1.0 / (d * px_to_norm) : 1.0;
    wrow(0, i) = T(w);
    wsum += w;
  }
  if (wsum <= 0) {
    wrow.setConstant(T(1.0 / b));
  } else {
    wrow /= T(wsum);
  }
  auto wnode = tp.constant(std::move(wrow));

  MatX<T> alpha_other(1, b), alpha_last(1, b);
  for (int i = 0; i < b; ++i) {
    alpha_other(0, i) = T(-1);
    alpha_last(0, i) = px.pixels[std::size_t(i)].interior ? T(1) : T(-1);
  }
  auto a_other = tp.constant(std::move(alpha_other));
  auto a_last = tp.constant(std::move(alpha_last));

  typename Tape<T>::Ref other;
  for (int j = 0; j <= n; ++j) {
    auto alpha = j == n ? a_last : a_other;
    auto term = tp.relu(tp.add_scalar(tp.cwise_mul(mb.f[std::size_t(j)], alpha), T(cfg.margin)));
    auto s = tp.sum(tp.cwise_mul(term, wnode));
    if (j == n) {
      last_out = s;
    } else {
      other = other.valid() ? tp.add(other, s) : s;
    }
  }
  other_out = other;
}

template <typename T>
typename Tape<T>::Ref build_rgb_loss(NetGraph<T>& net, const View& view,
                                     const PixelBatch<T>& px, const MarchBatch<T>& mb,
                                     const TrainConfig& cfg) {
  auto& tp = net.tape();
  std::vector<int> idx;
  for (int i = 0; i < int(px.pixels.size()); ++i)
    if (cfg.rgb_all_pixels || px.pixels[std::size_t(i)].interior) idx.push_back(i);
  if (idx.empty()) return {};

  PixelBatch<T> sub;
  sub.uv.resize(2, Eigen::Index(idx.size()));
  sub.dirs.resize(3, Eigen::Index(idx.size()));
  MatX<T> target(3, Eigen::Index(idx.size()));
  sub.pixels.reserve(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& p = px.pixels[std::size_t(idx[k])];
    sub.pixels.push_back(p);
    sub.uv.col(Eigen::Index(k)) = px.uv.col(idx[k]);
    sub.dirs.col(Eigen::Index(k)) = px.dirs.col(idx[k]);
    for (int c = 0; c < 3; ++c) target(c, Eigen::Index(k)) = T(view.rgb.at(p.x, p.y, c) / 255.0);
  }
  auto zsel = tp.gather_cols(mb.z_star, idx);
  auto colors = net.rgb(object_points(tp, view.cam, sub, zsel));
  auto diff = tp.sub(colors, tp.constant(std::move(target)));
  return tp.scale(tp.sum(tp.square(diff)), T(1.0 / double(idx.size())));
}

template <typename T>
typename Tape<T>::Ref build_eik_loss(NetGraph<T>& net, const TrainConfig& cfg, RngStream& rng) {
  auto& tp = net.tape();
  const int s = cfg.eikonal_samples;
  MatX<T> pts(3, s);
  for (int i = 0; i < s; ++i)
    for (int k = 0; k < 3; ++k)
      pts(k, i) = T(rng.uniform(-cfg.eikonal_roi, cfg.eikonal_roi));
  auto jet = net.jet_sdf(net.jet_feature(net.jet_points(pts)));
  auto norm_sq = tp.add(tp.add(tp.square(jet.j[0]), tp.square(jet.j[1])), tp.square(jet.j[2]));
  auto resid = tp.add_scalar(tp.sqrt(norm_sq), T(-1));
  return tp.scale(tp.sum(tp.square(resid)), T(1.0 / s));
}

template <typename T>
ViewLossRefs<T> build_view_loss(NetGraph<T>& net, const FieldParams<T>& params, const View& view,
                                const std::vector<PixelSample>& batch, const TrainConfig& cfg,
                                const LossWeights& w, RngStream& rng) {
  auto& tp = net.tape();
  ViewLossRefs<T> out;

  auto px = make_pixel_batch<T>(view.cam, batch);
  auto mb = ray_march(net, view.cam, px, cfg.march_steps);
  bisection_refine(net, params, view.cam, px, mb, cfg.bisection_iters);

  build_ray_loss(net, view, px, mb, cfg, out.ray_last, out.ray_other);
  out.rgb = build_rgb_loss(net, view, px, mb, cfg);
  auto samples = make_sdf_loss_samples(view, batch, cfg, rng);
  out.sdf = build_sdf_loss(net, samples, cfg);

  typename Tape<T>::Ref total;
  auto add_term = [&](typename Tape<T>::Ref term, double weight, double* value) {
    if (!term.valid()) return;
    *value = double(tp.value(term)(0, 0));
    if (weight == 0) return;
    auto scaled = tp.scale(term, T(weight));
    total = total.valid() ? tp.add(total, scaled) : scaled;
  };
  add_term(out.sdf, w.sdf, &out.sdf_value);
  add_term(out.rgb, w.rgb, &out.rgb_value);
  add_term(out.ray_last, w.ray_last, &out.ray_last_value);
  add_term(out.ray_other, w.ray_other, &out.ray_other_value);
  if (!total.valid()) total = tp.leaf(MatX<T>::Zero(1, 1), false);
  out.total = total;
  return out;
}

BoundAudit audit_bound(const AnalyticScene& scene, const View& view, int depths_per_pixel,
                       double guard_px, uint64_t seed) {
  BoundAudit audit;
  const auto& sil = view.sil;
  const double px_to_norm = 2.0 / sil.width;
  auto [zlo, zhi] = depth_sample_range(view.cam, 1.2);

  struct Slot {
    int64_t checked = 0, violations = 0;
    double worst = std::numeric_limits<double>::infinity();
  };
  std::vector<Slot> slots(static_cast<std::size_t>(sil.height));
  parallel_chunks(std::size_t(sil.height), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t y = lo; y < hi; ++y) {
      Slot& slot = slots[y];
      RngStream rng = RngStream::substream(seed, 0xB0D17, y);
      for (int x = 0; x < sil.width; ++x) {
        if (sil.interior(x, int(y))) continue;
        double d = sil.d_ext(x, int(y));
        if (!(d > 0) || !std::isfinite(d)) continue;
        double d_guarded = std::max(0.0, d - guard_px) * px_to_norm;
        Vec2 u = pixel_to_normalized(x, int(y), view.cam);
        for (int k = 0; k < depths_per_pixel; ++k) {
          double z = rng.uniform(zlo, zhi);
          double b = sdf_lower_bound(u, z, d_guarded, view.cam);
          double f = scene.eval(view.cam.to_object(backproject(u, z, view.cam)));
          ++slot.checked;
          double margin = f - b;
          slot.worst = std::min(slot.worst, margin);
          if (margin < 0) ++slot.violations;
        }
      }
    }
  });
  for (const auto& s : slots) {
    audit.checked += s.checked;
    audit.violations += s.violations;
    audit.worst_margin = std::min(audit.worst_margin, s.worst);
  }
  return audit;
}

template typename Tape<float>::Ref build_sdf_loss<float>(NetGraph<float>&, const SdfLossSamples&,
                                                         const TrainConfig&);
template typename Tape<double>::Ref build_sdf_loss<double>(NetGraph<double>&,
                                                           const SdfLossSamples&,
                                                           const TrainConfig&);
template void build_ray_loss<float>(NetGraph<float>&, const View&, const PixelBatch<float>&,
                                    const MarchBatch<float>&, const TrainConfig&,
                                    Tape<float>::Ref&, Tape<float>::Ref&);
template void build_ray_loss<double>(NetGraph<double>&, const View&, const PixelBatch<double>&,
                                     const MarchBatch<double>&, const TrainConfig&,
                                     Tape<double>::Ref&, Tape<double>::Ref&);
template typename Tape<float>::Ref build_rgb_loss<float>(NetGraph<float>&, const View&,
                                                         const PixelBatch<float>&,
                                                         const MarchBatch<float>&,
                                                         const TrainConfig&);
template typename Tape<double>::Ref build_rgb_loss<double>(NetGraph<double>&, const View&,
                                                           const PixelBatch<double>&,
                                                           const MarchBatch<double>&,
                                                           const TrainConfig&);
template typename Tape<float>::Ref build_eik_loss<float>(NetGraph<float>&, const TrainConfig&,
                                                         RngStream&);
template typename Tape<double>::Ref build_eik_loss<double>(NetGraph<double>&, const TrainConfig&,
                                                           RngStream&);
template ViewLossRefs<float> build_view_loss<float>(NetGraph<float>&, const FieldParams<float>&,
                                                    const View&, const std::vector<PixelSample>&,
                                                    const TrainConfig&, const LossWeights&,
                                                    RngStream&);
template ViewLossRefs<double> build_view_loss<double>(NetGraph<double>&,
                                                      const FieldParams<double>&, const View&,
                                                      const std::vector<PixelSample>&,
                                                      const TrainConfig&, const LossWeights&,
                                                      RngStream&);

}  // namespace sdfrecon
