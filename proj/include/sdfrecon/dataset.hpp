#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sdfrecon/geometry.hpp"
#include "sdfrecon/image_io.hpp"
#include "sdfrecon/scene.hpp"
#include "sdfrecon/silhouette.hpp"

namespace sdfrecon {

struct View {
  Camera cam;
  SilhouetteMap sil;
  ImageU8 rgb;               // P6, white background
  std::optional<DepthMap> depth;
};

struct Dataset {
  std::vector<View> views;
  std::string scene_json;  // empty when the views did not come from an analytic scene
  int resolution = 0;

  bool has_scene() const { return !scene_json.empty(); }
  AnalyticScene scene() const { return AnalyticScene::from_json(scene_json); }
};

struct SynthConfig {
  int n_views = 24;
  int resolution = 64;
  double camera_distance = 2.0;
  double elevation_deg = 15.0;
  CameraModel model = CameraModel::kPerspective;
  uint64_t seed = 0;
  int trace_steps = 512;
  double trace_tol = 1e-7;
};

// Cameras on a fixed-elevation azimuth ring looking at the origin; per view a
// sphere-traced silhouette, Lambert-shaded RGB (headlight), a depth map, and
// the camera JSON. The scene must clear the [-1,1]^3 walls or be rejected.
// Writes view_%03d.ppm / mask_%03d.pgm / depth_%03d.pgm / camera_%03d.json
// and manifest.json into out_dir, and also returns the dataset in memory.
Dataset generate_dataset(const AnalyticScene& scene, const SynthConfig& cfg,
                         const std::string& out_dir);

// In-memory only variant (no files touched).
Dataset generate_dataset(const AnalyticScene& scene, const SynthConfig& cfg);

Dataset load_dataset(const std::string& dir);

}  // namespace sdfrecon
