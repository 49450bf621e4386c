#include "sdfrecon/net.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace sdfrecon {

using nlohmann::json;

int64_t NetConfig::param_count() const {
  int64_t n = 0;
  for (int l = 0; l < depth; ++l) n += int64_t(width) * layer_in(l) + 3 * width;
  n += width + 1;      // sdf head
  n += 3 * width + 3;  // rgb head
  int64_t h = lstm_hidden;
  n += 4 * h * width + 4 * h * h + 8 * h;
  n += h + 1;  // step head
  return n;
}

namespace {

template <typename T>
void fill_uniform(MatX<T>& m, RngStream& rng, double limit) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = T(rng.uniform(-limit, limit));
}

template <typename T>
void append_rowmajor(const MatX<T>& m, std::vector<T>& out) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
}

template <typename T>
void read_rowmajor(MatX<T>& m, const std::vector<T>& flat, std::size_t& pos) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = flat[pos++];
}

template <typename T>
const char* dtype_name();
template <>
const char* dtype_name<float>() { return "float32"; }
template <>
const char* dtype_name<double>() { return "float64"; }

}  // namespace

template <typename T>
FieldParams<T> FieldParams<T>::zeros(const NetConfig& cfg) {
  FieldParams p;
  p.cfg = cfg;
  const int w = cfg.width, h = cfg.lstm_hidden;
  for (int l = 0; l < cfg.depth; ++l) {
    p.W.push_back(Mat::Zero(w, cfg.layer_in(l)));
    p.b.push_back(Mat::Zero(w, 1));
    p.ln_gain.push_back(Mat::Zero(w, 1));
    p.ln_bias.push_back(Mat::Zero(w, 1));
  }
  p.sdf_W = Mat::Zero(1, w);
  p.sdf_b = Mat::Zero(1, 1);
  p.rgb_W = Mat::Zero(3, w);
  p.rgb_b = Mat::Zero(3, 1);
  p.lstm_Wih = Mat::Zero(4 * h, w);
  p.lstm_Whh = Mat::Zero(4 * h, h);
  p.lstm_bih = Mat::Zero(4 * h, 1);
  p.lstm_bhh = Mat::Zero(4 * h, 1);
  p.step_W = Mat::Zero(1, h);
  p.step_b = Mat::Zero(1, 1);
  return p;
}

template <typename T>
FieldParams<T> FieldParams<T>::init(const NetConfig& cfg, uint64_t seed) {
  FieldParams p = zeros(cfg);
  RngStream rng(seed);
  const int h = cfg.lstm_hidden;
  for (int l = 0; l < cfg.depth; ++l) {
    double lim = 1.0 / std::sqrt(double(cfg.layer_in(l)));
    fill_uniform(p.W[l], rng, lim);
    fill_uniform(p.b[l], rng, lim);
    p.ln_gain[l].setOnes();
  }
  double lim = 1.0 / std::sqrt(double(cfg.width));
  fill_uniform(p.sdf_W, rng, lim);
  fill_uniform(p.sdf_b, rng, lim);
  fill_uniform(p.rgb_W, rng, lim);
  fill_uniform(p.rgb_b, rng, lim);
  fill_uniform(p.lstm_Wih, rng, lim);
  fill_uniform(p.lstm_Whh, rng, 1.0 / std::sqrt(double(h)));
  p.lstm_bih.block(h, 0, h, 1).setOnes();  // forget gate opens at init
  fill_uniform(p.step_W, rng, 1.0 / std::sqrt(double(h)));
  fill_uniform(p.step_b, rng, 1.0 / std::sqrt(double(h)));
  return p;
}

template <typename T>
std::vector<T> FieldParams<T>::to_flat() const {
  std::vector<T> flat;
  flat.reserve(std::size_t(cfg.param_count()));
  for_each([&](const Mat& m) { append_rowmajor(m, flat); });
  return flat;
}

template <typename T>
void FieldParams<T>::from_flat(const std::vector<T>& flat) {
  if (flat.size() != std::size_t(cfg.param_count()))
    throw std::invalid_argument("FieldParams::from_flat: size mismatch");
  std::size_t pos = 0;
  for_each([&](Mat& m) { read_rowmajor(m, flat, pos); });
}

template <typename T>
bool FieldParams<T>::all_finite() const {
  bool ok = true;
  for_each([&](const Mat& m) { ok = ok && m.allFinite(); });
  return ok;
}

// ---- checkpoint io ----------------------------------------------------------

static constexpr char kCkptMagic[8] = {'S', 'D', 'F', 'S', 'R', 'N', '0', '1'};

template <typename T>
void save_checkpoint(const FieldParams<T>& params, const std::string& path) {
  std::vector<T> flat = params.to_flat();
  json hdr;
  hdr["width"] = params.cfg.width;
  hdr["depth"] = params.cfg.depth;
  hdr["lstm_hidden"] = params.cfg.lstm_hidden;
  hdr["pe_levels"] = params.cfg.pe_levels;
  hdr["ln_eps"] = params.cfg.ln_eps;
  hdr["dtype"] = dtype_name<T>();
  hdr["param_bytes"] = flat.size() * sizeof(T);
  std::string htext = hdr.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(kCkptMagic, 8);
  uint32_t hlen = uint32_t(htext.size());
  char lenbuf[4] = {char(hlen & 0xff), char(hlen >> 8 & 0xff), char(hlen >> 16 & 0xff),
                    char(hlen >> 24 & 0xff)};
  out.write(lenbuf, 4);
  out.write(htext.data(), std::streamsize(htext.size()));
  // Little-endian host assumed (x86/arm); parameters in declaration order.
  out.write(reinterpret_cast<const char*>(flat.data()),
            std::streamsize(flat.size() * sizeof(T)));
  if (!out) throw IoError("short write: " + path);
}

namespace {

struct RawCheckpoint {
  NetConfig cfg;
  std::string dtype;
  std::vector<char> blob;
};

RawCheckpoint load_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw FormatError("not a checkpoint file: " + path);
  unsigned char lenbuf[4];
  in.read(reinterpret_cast<char*>(lenbuf), 4);
  uint32_t hlen = uint32_t(lenbuf[0]) | uint32_t(lenbuf[1]) << 8 | uint32_t(lenbuf[2]) << 16 |
                  uint32_t(lenbuf[3]) << 24;
  if (!in || hlen > (1u << 20)) throw FormatError("bad checkpoint header: " + path);
  std::string htext(hlen, '\0');
  in.read(htext.data(), hlen);
  if (in.gcount() != std::streamsize(hlen))
    throw FormatError("truncated checkpoint header: " + path);
  json hdr = json::parse(htext);
  RawCheckpoint raw;
  raw.cfg.width = hdr.at("width").get<int>();
  raw.cfg.depth = hdr.at("depth").get<int>();
  raw.cfg.lstm_hidden = hdr.at("lstm_hidden").get<int>();
  raw.cfg.pe_levels = hdr.at("pe_levels").get<int>();
  raw.cfg.ln_eps = hdr.value("ln_eps", 1e-5);
  raw.dtype = hdr.at("dtype").get<std::string>();
  std::size_t nbytes = hdr.at("param_bytes").get<std::size_t>();
  std::size_t esize = raw.dtype == "float64" ? 8 : 4;
  if (raw.dtype != "float32" && raw.dtype != "float64")
    throw FormatError("unknown checkpoint dtype: " + raw.dtype);
  if (nbytes != std::size_t(raw.cfg.param_count()) * esize)
    throw FormatError("checkpoint blob length disagrees with architecture: " + path);
  raw.blob.resize(nbytes);
  in.read(raw.blob.data(), std::streamsize(nbytes));
  if (in.gcount() != std::streamsize(nbytes))
    throw FormatError("truncated checkpoint blob: " + path);
  return raw;
}

template <typename T, typename S>
std::vector<T> blob_to_flat(const std::vector<char>& blob) {
  std::vector<T> flat(blob.size() / sizeof(S));
  const S* src = reinterpret_cast<const S*>(blob.data());
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = T(src[i]);
  return flat;
}

}  // namespace

template <typename T>
FieldParams<T> load_checkpoint(const std::string& path) {
  RawCheckpoint raw = load_raw(path);
  FieldParams<T> p = FieldParams<T>::zeros(raw.cfg);
  std::vector<T> flat = raw.dtype == "float64" ? blob_to_flat<T, double>(raw.blob)
                                               : blob_to_flat<T, float>(raw.blob);
  p.from_flat(flat);
  return p;
}

// ---- graph builders --------------------------------------------------------

template <typename T>
NetGraph<T>::NetGraph(Tape<T>& tape, const FieldParams<T>& params, bool trainable)
    : tape_(&tape), cfg_(params.cfg) {
  params.for_each([&](const Mat& m) { leaves_.push_back(tape_->leaf(m, trainable)); });
  std::size_t i = 0;
  for (int l = 0; l < cfg_.depth; ++l) {
    W_.push_back(leaves_[i++]);
    b_.push_back(leaves_[i++]);
    lng_.push_back(leaves_[i++]);
    lnb_.push_back(leaves_[i++]);
  }
  sdf_W_ = leaves_[i++];
  sdf_b_ = leaves_[i++];
  rgb_W_ = leaves_[i++];
  rgb_b_ = leaves_[i++];
  lstm_Wih_ = leaves_[i++];
  lstm_Whh_ = leaves_[i++];
  lstm_bih_ = leaves_[i++];
  lstm_bhh_ = leaves_[i++];
  step_W_ = leaves_[i++];
  step_b_ = leaves_[i++];
}

template <typename T>
typename NetGraph<T>::Ref NetGraph<T>::feature(Ref points) {
  Ref enc = tape_->posenc(points, cfg_.pe_levels);
  Ref h;
  for (int l = 0; l < cfg_.depth; ++l) {
    Ref in = l == 0 ? enc : tape_->concat_rows(h, enc);
    Ref lin = tape_->affine(W_[l], in, b_[l]);
    Ref norm = tape_->layernorm(lin, lng_[l], lnb_[l], T(cfg_.ln_eps));
    h = tape_->relu(norm);
  }
  return h;
}

template <typename T>
typename NetGraph<T>::LstmState NetGraph<T>::initial_state(int batch) {
  return {tape_->constant(Mat::Zero(cfg_.lstm_hidden, batch)),
          tape_->constant(Mat::Zero(cfg_.lstm_hidden, batch))};
}

template <typename T>
std::pair<typename NetGraph<T>::LstmState, typename NetGraph<T>::Ref> NetGraph<T>::step_cell(
    Ref feat, LstmState state) {
  const int h = cfg_.lstm_hidden;
  Ref gates =
      tape_->add(tape_->affine(lstm_Wih_, feat, lstm_bih_),
                 tape_->affine(lstm_Whh_, state.h, lstm_bhh_));
  Ref gi = tape_->sigmoid(tape_->slice_rows(gates, 0, h));
  Ref gf = tape_->sigmoid(tape_->slice_rows(gates, h, h));
  Ref gg = tape_->tanh(tape_->slice_rows(gates, 2 * h, h));
  Ref go = tape_->sigmoid(tape_->slice_rows(gates, 3 * h, h));
  Ref c_new = tape_->add(tape_->cwise_mul(gf, state.c), tape_->cwise_mul(gi, gg));
  Ref h_new = tape_->cwise_mul(go, tape_->tanh(c_new));
  Ref dz = tape_->abs(tape_->affine(step_W_, h_new, step_b_));
  return {{h_new, c_new}, dz};
}

template <typename T>
typename NetGraph<T>::Jet NetGraph<T>::jet_points(const Mat& pts) {
  Jet out;
  out.v = tape_->constant(pts);
  for (int k = 0; k < 3; ++k) {
    Mat tangent = Mat::Zero(3, pts.cols());
    tangent.row(k).setOnes();
    out.j[k] = tape_->constant(std::move(tangent));
  }
  return out;
}

template <typename T>
typename NetGraph<T>::Jet NetGraph<T>::jet_posenc(Jet x) {
  auto& tp = *tape_;
  const int L = cfg_.pe_levels;
  Jet out;
  Ref blocks_v;
  Ref blocks_j[3];
  for (int r = 0; r < 3; ++r) {
    Ref p = tp.slice_rows(x.v, r, 1);
    Ref jp[3];
    for (int k = 0; k < 3; ++k) jp[k] = tp.slice_rows(x.j[k], r, 1);
    Ref bv = p;
    Ref bj[3] = {jp[0], jp[1], jp[2]};
    T freq = T(1);
    for (int lev = 0; lev < L; ++lev, freq *= T(2)) {
      Ref arg = tp.scale(p, freq);
      Ref c = tp.cos(arg);
      Ref s = tp.sin(arg);
      bv = tp.concat_rows(tp.concat_rows(bv, c), s);
      for (int k = 0; k < 3; ++k) {
        Ref dc = tp.cwise_mul(jp[k], tp.scale(s, -freq));
        Ref ds = tp.cwise_mul(jp[k], tp.scale(c, freq));
        bj[k] = tp.concat_rows(tp.concat_rows(bj[k], dc), ds);
      }
    }
    if (r == 0) {
      blocks_v = bv;
      for (int k = 0; k < 3; ++k) blocks_j[k] = bj[k];
    } else {
      blocks_v = tp.concat_rows(blocks_v, bv);
      for (int k = 0; k < 3; ++k) blocks_j[k] = tp.concat_rows(blocks_j[k], bj[k]);
    }
  }
  out.v = blocks_v;
  for (int k = 0; k < 3; ++k) out.j[k] = blocks_j[k];
  return out;
}

template <typename T>
typename NetGraph<T>::Jet NetGraph<T>::jet_layernorm(Jet x, Ref gain, Ref bias) {
  auto& tp = *tape_;
  const int d = int(tp.value(x.v).rows());
  const int bsz = int(tp.value(x.v).cols());
  const T eps = T(cfg_.ln_eps);
  Ref mu = tp.colmean(x.v);
  Ref centered = tp.sub(x.v, tp.broadcast_rows(mu, d));
  Ref var = tp.colmean(tp.square(centered));
  Ref denom = tp.sqrt(tp.add_scalar(var, eps));
  Ref denom_b = tp.broadcast_rows(denom, d);
  Ref xhat = tp.cwise_div(centered, denom_b);
  Ref gain_b = tp.broadcast_cols(gain, bsz);
  Jet out;
  out.v = tp.add(tp.cwise_mul(gain_b, xhat), tp.broadcast_cols(bias, bsz));
  for (int k = 0; k < 3; ++k) {
    Ref dmu = tp.colmean(x.j[k]);
    Ref dc = tp.sub(x.j[k], tp.broadcast_rows(dmu, d));
    Ref dvar = tp.scale(tp.colmean(tp.cwise_mul(centered, dc)), T(2));
    Ref ddenom = tp.cwise_div(dvar, tp.scale(denom, T(2)));
    Ref term1 = tp.cwise_div(dc, denom_b);
    Ref term2 = tp.cwise_div(tp.cwise_mul(centered, tp.broadcast_rows(ddenom, d)),
                             tp.broadcast_rows(tp.square(denom), d));
    out.j[k] = tp.cwise_mul(gain_b, tp.sub(term1, term2));
  }
  return out;
}

template <typename T>
typename NetGraph<T>::Jet NetGraph<T>::jet_relu(Jet x) {
  auto& tp = *tape_;
  Mat mask = (tp.value(x.v).array() > T(0)).template cast<T>();
  Ref mask_c = tp.constant(std::move(mask));
  Jet out;
  out.v = tp.relu(x.v);
  for (int k = 0; k < 3; ++k) out.j[k] = tp.cwise_mul(x.j[k], mask_c);
  return out;
}

template <typename T>
typename NetGraph<T>::Jet NetGraph<T>::jet_concat(Jet a, Jet b) {
  Jet out;
  out.v = tape_->concat_rows(a.v, b.v);
  for (int k = 0; k < 3; ++k) out.j[k] = tape_->concat_rows(a.j[k], b.j[k]);
  return out;
}

template <typename T>
typename NetGraph<T>::Jet NetGraph<T>::jet_feature(Jet x) {
  auto& tp = *tape_;
  Jet enc = jet_posenc(x);
  Jet h;
  for (int l = 0; l < cfg_.depth; ++l) {
    Jet in = l == 0 ? enc : jet_concat(h, enc);
    Jet lin;
    lin.v = tp.affine(W_[l], in.v, b_[l]);
    for (int k = 0; k < 3; ++k) lin.j[k] = tp.matmul(W_[l], in.j[k]);
    Jet norm = jet_layernorm(lin, lng_[l], lnb_[l]);
    h = jet_relu(norm);
  }
  return h;
}

template <typename T>
typename NetGraph<T>::Jet NetGraph<T>::jet_sdf(Jet x) {
  Jet out;
  out.v = tape_->affine(sdf_W_, x.v, sdf_b_);
  for (int k = 0; k < 3; ++k) out.j[k] = tape_->matmul(sdf_W_, x.j[k]);
  return out;
}

template <typename T>
void NetGraph<T>::accumulate_gradients(std::vector<T>& flat) {
  if (flat.size() != std::size_t(cfg_.param_count()))
    throw std::invalid_argument("accumulate_gradients: flat size mismatch");
  std::size_t pos = 0;
  for (Ref leaf : leaves_) {
    Mat g = tape_->gradient(leaf);
    for (Eigen::Index r = 0; r < g.rows(); ++r)
      for (Eigen::Index c = 0; c < g.cols(); ++c) flat[pos++] += g(r, c);
  }
}

// ---- convenience evaluators --------------------------------------------------

template <typename T>
MatX<T> eval_sdf_batch(const FieldParams<T>& params, const MatX<T>& pts) {
  Tape<T> tape;
  NetGraph<T> net(tape, params, false);
  return tape.value(net.sdf(tape.constant(pts)));
}

template <typename T>
MatX<T> eval_rgb_batch(const FieldParams<T>& params, const MatX<T>& pts) {
  Tape<T> tape;
  NetGraph<T> net(tape, params, false);
  return tape.value(net.rgb(tape.constant(pts)));
}

template <typename T>
void eval_sdf_grad_batch(const FieldParams<T>& params, const MatX<T>& pts, MatX<T>& f,
                         MatX<T>& grad) {
  Tape<T> tape;
  NetGraph<T> net(tape, params, false);
  auto jp = net.jet_points(pts);
  auto jf = net.jet_sdf(net.jet_feature(jp));
  f = tape.value(jf.v);
  grad.resize(3, pts.cols());
  for (int k = 0; k < 3; ++k) grad.row(k) = tape.value(jf.j[k]);
}

template <typename T>
T eval_sdf(const FieldParams<T>& params, const Vec3& x) {
  MatX<T> pts = x.cast<T>();
  return eval_sdf_batch(params, pts)(0, 0);
}

template <typename T>
Vec3 eval_rgb(const FieldParams<T>& params, const Vec3& x) {
  MatX<T> pts = x.cast<T>();
  MatX<T> c = eval_rgb_batch(params, pts);
  return Vec3(double(c(0, 0)), double(c(1, 0)), double(c(2, 0)));
}

template <typename T>
Vec3 grad_sdf(const FieldParams<T>& params, const Vec3& x) {
  MatX<T> pts = x.cast<T>();
  MatX<T> f, g;
  eval_sdf_grad_batch(params, pts, f, g);
  return Vec3(double(g(0, 0)), double(g(1, 0)), double(g(2, 0)));
}

template struct FieldParams<float>;
template struct FieldParams<double>;
template class NetGraph<float>;
template class NetGraph<double>;

template void save_checkpoint<float>(const FieldParams<float>&, const std::string&);
template void save_checkpoint<double>(const FieldParams<double>&, const std::string&);
template FieldParams<float> load_checkpoint<float>(const std::string&);
template FieldParams<double> load_checkpoint<double>(const std::string&);

template MatX<float> eval_sdf_batch<float>(const FieldParams<float>&, const MatX<float>&);
template MatX<double> eval_sdf_batch<double>(const FieldParams<double>&, const MatX<double>&);
template MatX<float> eval_rgb_batch<float>(const FieldParams<float>&, const MatX<float>&);
template MatX<double> eval_rgb_batch<double>(const FieldParams<double>&, const MatX<double>&);
template void eval_sdf_grad_batch<float>(const FieldParams<float>&, const MatX<float>&,
                                         MatX<float>&, MatX<float>&);
template void eval_sdf_grad_batch<double>(const FieldParams<double>&, const MatX<double>&,
                                          MatX<double>&, MatX<double>&);
template float eval_sdf<float>(const FieldParams<float>&, const Vec3&);
template double eval_sdf<double>(const FieldParams<double>&, const Vec3&);
template Vec3 eval_rgb<float>(const FieldParams<float>&, const Vec3&);
template Vec3 eval_rgb<double>(const FieldParams<double>&, const Vec3&);
template Vec3 grad_sdf<float>(const FieldParams<float>&, const Vec3&);
template Vec3 grad_sdf<double>(const FieldParams<double>&, const Vec3&);

}  // namespace sdfrecon
