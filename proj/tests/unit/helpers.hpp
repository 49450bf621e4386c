#pragma once

#include "sdfrecon/dataset.hpp"
#include "sdfrecon/train.hpp"

namespace sdfrecon::testing {

inline NetConfig tiny_net_config() {
  NetConfig cfg;
  cfg.width = 16;
  cfg.lstm_hidden = 8;
  cfg.pe_levels = 2;
  return cfg;
}

inline NetConfig small_net_config() {
  NetConfig cfg;
  cfg.width = 32;
  cfg.lstm_hidden = 8;
  cfg.pe_levels = 4;
  return cfg;
}

// Cached quick sphere fit, good to ~1e-2 residual; enough for renderer and
// loss checks that need a well-behaved field.
inline const FieldParams<double>& pretrained_small_sphere() {
  static FieldParams<double> params = [] {
    auto p = FieldParams<double>::init(small_net_config(), 1234);
    pretrain_sphere(p, 0.5, 1000, 3000, 1e-3, 1234);
    return p;
  }();
  return params;
}

// Camera on the +x side at distance 2 looking at the origin.
inline Camera test_camera(int res = 64, double dist = 2.0) {
  return make_look_at_camera(Vec3(dist, 0, 0), Vec3::Zero(), CameraModel::kPerspective, res,
                             res);
}

inline Dataset sphere_dataset(int views = 6, int res = 48) {
  SynthConfig cfg;
  cfg.n_views = views;
  cfg.resolution = res;
  return generate_dataset(AnalyticScene::preset("sphere"), cfg);
}

}  // namespace sdfrecon::testing
