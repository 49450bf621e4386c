#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdfrecon/geometry.hpp"
#include "sdfrecon/tape.hpp"
#include "sdfrecon/util.hpp"

namespace sdfrecon {

// Architecture of the implicit field networks: a shared MLP backbone feeding
// an SDF head, an RGB head, and a recurrent ray-step cell. The positional
// encoding of the input point is concatenated to the inputs of layers 2..depth.
struct NetConfig {
  int width = 128;       // backbone hidden units
  int depth = 4;         // backbone affine layers
  int lstm_hidden = 32;  // ray-step cell state size
  int pe_levels = 6;     // encoding frequencies L
  double ln_eps = 1e-5;

  int enc_dim() const { return 3 * (1 + 2 * pe_levels); }
  int layer_in(int layer) const { return layer == 0 ? enc_dim() : width + enc_dim(); }
  int64_t param_count() const;
  bool operator==(const NetConfig&) const = default;
};

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

// All learnable weights. LSTM gate rows are ordered (input, forget, cell,
// output); the forget bias starts at +1.
template <typename T>
struct FieldParams {
  using Mat = MatX<T>;

  NetConfig cfg;
  std::vector<Mat> W, b, ln_gain, ln_bias;  // one per backbone layer
  Mat sdf_W, sdf_b;
  Mat rgb_W, rgb_b;
  Mat lstm_Wih, lstm_Whh, lstm_bih, lstm_bhh;
  Mat step_W, step_b;

  static FieldParams zeros(const NetConfig& cfg);
  // Fan-in-scaled uniform init, reproducible from the seed.
  static FieldParams init(const NetConfig& cfg, uint64_t seed);

  // Visits every matrix in declaration order; the single source of truth for
  // flattening, serialization, and gradient layout.
  template <class F>
  void for_each(F&& f) {
    for (int l = 0; l < cfg.depth; ++l) {
      f(W[l]); f(b[l]); f(ln_gain[l]); f(ln_bias[l]);
    }
    f(sdf_W); f(sdf_b);
    f(rgb_W); f(rgb_b);
    f(lstm_Wih); f(lstm_Whh); f(lstm_bih); f(lstm_bhh);
    f(step_W); f(step_b);
  }
  template <class F>
  void for_each(F&& f) const { const_cast<FieldParams*>(this)->for_each(f); }

  std::vector<T> to_flat() const;
  void from_flat(const std::vector<T>& flat);
  bool all_finite() const;

  template <typename U>
  FieldParams<U> cast() const {
    FieldParams<U> out = FieldParams<U>::zeros(cfg);
    std::vector<const Mat*> src;
    for_each([&](const Mat& m) { src.push_back(&m); });
    std::size_t i = 0;
    out.for_each([&](MatX<U>& m) { m = src[i++]->template cast<U>(); });
    return out;
  }
};

// Checkpoint file: 8-byte magic "SDFSRN01", a little-endian uint32 with the
// JSON header size, the JSON header (dims, L, dtype, blob byte length), then
// the raw little-endian parameter blob in declaration order (row-major per
// matrix). Round-trips bit-exactly for the stored dtype.
template <typename T>
void save_checkpoint(const FieldParams<T>& params, const std::string& path);
template <typename T>
FieldParams<T> load_checkpoint(const std::string& path);

// Tape-side view of the network: parameters registered as leaves (trainable
// or frozen) plus builders for the forward graphs.
template <typename T>
class NetGraph {
 public:
  using Ref = typename Tape<T>::Ref;
  using Mat = MatX<T>;

  NetGraph(Tape<T>& tape, const FieldParams<T>& params, bool trainable);

  Tape<T>& tape() { return *tape_; }
  const NetConfig& config() const { return cfg_; }

  // Backbone feature of a 3xB point batch.
  Ref feature(Ref points);
  Ref sdf_from_feature(Ref feat) { return tape_->affine(sdf_W_, feat, sdf_b_); }
  Ref rgb_from_feature(Ref feat) {
    return tape_->sigmoid(tape_->affine(rgb_W_, feat, rgb_b_));
  }
  Ref sdf(Ref points) { return sdf_from_feature(feature(points)); }
  Ref rgb(Ref points) { return rgb_from_feature(feature(points)); }

  struct LstmState {
    Ref h, c;
  };
  LstmState initial_state(int batch);
  // One recurrent step on a backbone feature; returns the new state and the
  // nonnegative depth increment row (1xB).
  std::pair<LstmState, Ref> step_cell(Ref feat, LstmState state);

  // Forward-mode jet (value + spatial tangents), built from composable tape
  // primitives so parameter gradients of d/dx quantities come out of the same
  // backward pass.
  struct Jet {
    Ref v;
    Ref j[3];
  };
  Jet jet_points(const Mat& pts);  // constant points, identity tangents
  Jet jet_feature(Jet x);
  Jet jet_sdf(Jet x);

  // Gradients of the registered parameter leaves, flattened in declaration
  // order. Call after tape().backward().
  void accumulate_gradients(std::vector<T>& flat_grads);

 private:
  Jet jet_layernorm(Jet x, Ref gain, Ref bias);
  Jet jet_relu(Jet x);
  Jet jet_posenc(Jet x);
  Jet jet_concat(Jet a, Jet b);

  Tape<T>* tape_;
  NetConfig cfg_;
  std::vector<Ref> leaves_;  // declaration order
  std::vector<Ref> W_, b_, lng_, lnb_;
  Ref sdf_W_, sdf_b_, rgb_W_, rgb_b_;
  Ref lstm_Wih_, lstm_Whh_, lstm_bih_, lstm_bhh_;
  Ref step_W_, step_b_;
};

// Convenience evaluators (fresh throwaway tape per call).
template <typename T>
MatX<T> eval_sdf_batch(const FieldParams<T>& params, const MatX<T>& pts);
template <typename T>
MatX<T> eval_rgb_batch(const FieldParams<T>& params, const MatX<T>& pts);
template <typename T>
void eval_sdf_grad_batch(const FieldParams<T>& params, const MatX<T>& pts, MatX<T>& f,
                         MatX<T>& grad);

template <typename T>
T eval_sdf(const FieldParams<T>& params, const Vec3& x);
template <typename T>
Vec3 eval_rgb(const FieldParams<T>& params, const Vec3& x);
template <typename T>
Vec3 grad_sdf(const FieldParams<T>& params, const Vec3& x);

extern template struct FieldParams<float>;
extern template struct FieldParams<double>;
extern template class NetGraph<float>;
extern template class NetGraph<double>;

}  // namespace sdfrecon
