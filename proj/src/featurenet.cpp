#include "featmetric/featurenet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace featmetric {

void ArchSpec::validate() const {
  if (in_channels != 1 && in_channels != 3)
    throw InvalidConfig("ArchSpec: in_channels must be 1 or 3");
  if (feature_channels < 2) throw InvalidConfig("ArchSpec: feature_channels must be >= 2");
  if (scales < 1 || scales > 3) throw InvalidConfig("ArchSpec: scales must be in {1,2,3}");
}

namespace {

ConvLayer make_layer(int in_ch, int out_ch) {
  ConvLayer l;
  l.in_ch = in_ch;
  l.out_ch = out_ch;
  l.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out_ch) * in_ch * 9);
  l.bias = Eigen::VectorXd::Zero(out_ch);
  return l;
}

// mt19937_64 -> uniform double in [0,1), independent of the standard
// library's distribution implementation.
class UniformRng {
 public:
  explicit UniformRng(std::uint64_t seed) : gen_(seed) {}
  double next() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * next(); }

 private:
  std::mt19937_64 gen_;
};

void glorot_fill(ConvLayer& layer, UniformRng& rng) {
  const double fan_in = layer.in_ch * 9.0;
  const double fan_out = layer.out_ch * 9.0;
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index i = 0; i < layer.weights.size(); ++i)
    layer.weights[i] = rng.uniform(-limit, limit);
  layer.bias.setZero();
}

}  // namespace

AutoencoderParams AutoencoderParams::zeros(const ArchSpec& arch) {
  arch.validate();
  AutoencoderParams p;
  p.arch = arch;
  const int f = arch.feature_channels;
  p.enc1 = make_layer(arch.in_channels, f);
  p.enc2 = make_layer(f, f);
  p.dec1 = make_layer(f, f);
  p.dec2 = make_layer(f, arch.in_channels);
  return p;
}

AutoencoderParams AutoencoderParams::init(const ArchSpec& arch, std::uint64_t seed) {
  AutoencoderParams p = zeros(arch);
  UniformRng rng(seed);
  glorot_fill(p.enc1, rng);
  glorot_fill(p.enc2, rng);
  glorot_fill(p.dec1, rng);
  glorot_fill(p.dec2, rng);
  return p;
}

Eigen::Index AutoencoderParams::parameter_count() const {
  return enc1.weights.size() + enc1.bias.size() + enc2.weights.size() + enc2.bias.size() +
         dec1.weights.size() + dec1.bias.size() + dec2.weights.size() + dec2.bias.size();
}

Eigen::VectorXd AutoencoderParams::to_vector() const {
  Eigen::VectorXd flat(parameter_count());
  Eigen::Index off = 0;
  for (const ConvLayer* l : {&enc1, &enc2, &dec1, &dec2}) {
    flat.segment(off, l->weights.size()) = l->weights;
    off += l->weights.size();
    flat.segment(off, l->bias.size()) = l->bias;
    off += l->bias.size();
  }
  return flat;
}

void AutoencoderParams::from_vector(const Eigen::VectorXd& flat) {
  if (flat.size() != parameter_count())
    throw ShapeMismatch("AutoencoderParams: flat vector size mismatch");
  Eigen::Index off = 0;
  for (ConvLayer* l : {&enc1, &enc2, &dec1, &dec2}) {
    l->weights = flat.segment(off, l->weights.size());
    off += l->weights.size();
    l->bias = flat.segment(off, l->bias.size());
    off += l->bias.size();
  }
}

namespace detail {

namespace {

// Reflect-pad one channel plane by one pixel (mirror across the edge pixel).
PlaneMatrix reflect_pad1(ConstPlaneRef m) {
  const int h = static_cast<int>(m.rows());
  const int w = static_cast<int>(m.cols());
  PlaneMatrix p(h + 2, w + 2);
  p.block(1, 1, h, w) = m;
  p.row(0).segment(1, w) = m.row(1);
  p.row(h + 1).segment(1, w) = m.row(h - 2);
  p.col(0).segment(1, h) = m.col(1);
  p.col(w + 1).segment(1, h) = m.col(w - 2);
  p(0, 0) = m(1, 1);
  p(0, w + 1) = m(1, w - 2);
  p(h + 1, 0) = m(h - 2, 1);
  p(h + 1, w + 1) = m(h - 2, w - 2);
  return p;
}

void require_conv_dims(const RasterMap& input) {
  if (input.width() < 2 || input.height() < 2)
    throw DimensionTooSmall("conv3x3: width and height must be >= 2");
}

}  // namespace

RasterMap conv3x3(const ConvLayer& layer, const RasterMap& input) {
  if (input.channels() != layer.in_ch) throw ShapeMismatch("conv3x3: channel mismatch");
  require_conv_dims(input);
  const int h = input.height();
  const int w = input.width();
  std::vector<PlaneMatrix> padded;
  padded.reserve(static_cast<size_t>(layer.in_ch));
  for (int ci = 0; ci < layer.in_ch; ++ci) padded.push_back(reflect_pad1(input.plane(ci)));

  RasterMap out(w, h, layer.out_ch);
  for (int co = 0; co < layer.out_ch; ++co) {
    PlaneRef o = out.plane(co);
    o.setConstant(layer.bias[co]);
    for (int ci = 0; ci < layer.in_ch; ++ci)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx)
          o += layer.w(co, ci, ky, kx) * padded[static_cast<size_t>(ci)].block(ky, kx, h, w);
  }
  return out;
}

RasterMap conv3x3_backward_input(const ConvLayer& layer, const RasterMap& upstream) {
  if (upstream.channels() != layer.out_ch)
    throw ShapeMismatch("conv3x3_backward_input: channel mismatch");
  const int h = upstream.height();
  const int w = upstream.width();
  RasterMap grad(w, h, layer.in_ch);
  PlaneMatrix dpad(h + 2, w + 2);
  for (int ci = 0; ci < layer.in_ch; ++ci) {
    dpad.setZero();
    for (int co = 0; co < layer.out_ch; ++co) {
      ConstPlaneRef up = upstream.plane(co);
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx)
          dpad.block(ky, kx, h, w) += layer.w(co, ci, ky, kx) * up;
    }
    // Fold the reflected border back: rows first, then columns, which routes
    // the corners through both reflections.
    PlaneMatrix rows = dpad.block(1, 0, h, w + 2);
    rows.row(1) += dpad.row(0);
    rows.row(h - 2) += dpad.row(h + 1);
    PlaneRef g = grad.plane(ci);
    g = rows.block(0, 1, h, w);
    g.col(1) += rows.col(0);
    g.col(w - 2) += rows.col(w + 1);
  }
  return grad;
}

void conv3x3_backward_params(const ConvLayer& layer, const RasterMap& input,
                             const RasterMap& upstream, ConvLayer& grad) {
  const int h = input.height();
  const int w = input.width();
  for (int ci = 0; ci < layer.in_ch; ++ci) {
    PlaneMatrix padded = reflect_pad1(input.plane(ci));
    for (int co = 0; co < layer.out_ch; ++co) {
      ConstPlaneRef up = upstream.plane(co);
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx)
          grad.w(co, ci, ky, kx) +=
              (up.array() * padded.block(ky, kx, h, w).array()).sum();
    }
  }
  for (int co = 0; co < layer.out_ch; ++co) grad.bias[co] += upstream.plane(co).sum();
}

}  // namespace detail

namespace {

RasterMap tanh_map(const RasterMap& in) {
  RasterMap out(in.width(), in.height(), in.channels());
  out.data() = in.data().array().tanh();
  return out;
}

RasterMap logistic_map(const RasterMap& in) {
  RasterMap out(in.width(), in.height(), in.channels());
  out.data() = 1.0 / (1.0 + (-in.data().array()).exp());
  return out;
}

struct Forward {
  RasterMap z1;                      // tanh(conv(enc1, I))
  RasterMap phi;                     // tanh(conv(enc2, z1))
  RasterMap hidden;                  // tanh(conv(dec1, phi))
  std::vector<RasterMap> hiddens;    // hidden box-downsampled per scale
  std::vector<RasterMap> recons;     // sigmoid(conv(dec2, hiddens[k]))
};

Forward run_forward(const AutoencoderParams& params, const RasterMap& image) {
  params.arch.validate();
  if (image.channels() != params.arch.in_channels)
    throw ShapeMismatch("featurenet: image channel count does not match ArchSpec");
  Forward f;
  f.z1 = tanh_map(detail::conv3x3(params.enc1, image));
  f.phi = tanh_map(detail::conv3x3(params.enc2, f.z1));
  f.hidden = tanh_map(detail::conv3x3(params.dec1, f.phi));
  f.hiddens.push_back(f.hidden);
  for (int k = 1; k < params.arch.scales; ++k)
    f.hiddens.push_back(downsample2(f.hiddens.back()));
  for (const auto& hk : f.hiddens)
    f.recons.push_back(logistic_map(detail::conv3x3(params.dec2, hk)));
  return f;
}

double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Adjoint of the first-derivative operator dx + dy (central interior,
// one-sided borders), applied per channel.
void grad1_adjoint_accumulate(const RasterMap& upstream, RasterMap& out, double scale) {
  const int h = upstream.height();
  const int w = upstream.width();
  for (int c = 0; c < upstream.channels(); ++c) {
    ConstPlaneRef s = upstream.plane(c);
    PlaneRef o = out.plane(c);
    // dx^T
    o.block(0, 2, h, w - 2) += scale * 0.5 * s.block(0, 1, h, w - 2);
    o.block(0, 0, h, w - 2) -= scale * 0.5 * s.block(0, 1, h, w - 2);
    o.col(1) += scale * s.col(0);
    o.col(0) -= scale * s.col(0);
    o.col(w - 1) += scale * s.col(w - 1);
    o.col(w - 2) -= scale * s.col(w - 1);
    // dy^T
    o.block(2, 0, h - 2, w) += scale * 0.5 * s.block(1, 0, h - 2, w);
    o.block(0, 0, h - 2, w) -= scale * 0.5 * s.block(1, 0, h - 2, w);
    o.row(1) += scale * s.row(0);
    o.row(0) -= scale * s.row(0);
    o.row(h - 1) += scale * s.row(h - 1);
    o.row(h - 2) -= scale * s.row(h - 1);
  }
}

// Adjoint of grad2 (interior-only stencil), applied per channel.
void grad2_adjoint_accumulate(const RasterMap& upstream, RasterMap& out, double scale) {
  const int h = upstream.height();
  const int w = upstream.width();
  const int ih = h - 2, iw = w - 2;
  for (int c = 0; c < upstream.channels(); ++c) {
    ConstPlaneRef s = upstream.plane(c);
    PlaneRef o = out.plane(c);
    auto si = s.block(1, 1, ih, iw);
    o.block(1, 0, ih, iw) += scale * si;
    o.block(1, 2, ih, iw) += scale * si;
    o.block(0, 1, ih, iw) += scale * si;
    o.block(2, 1, ih, iw) += scale * si;
    o.block(1, 1, ih, iw) -= 4.0 * scale * si;
    o.block(2, 2, ih, iw) += 0.5 * scale * si;
    o.block(2, 0, ih, iw) -= 0.5 * scale * si;
    o.block(0, 2, ih, iw) -= 0.5 * scale * si;
    o.block(0, 0, ih, iw) += 0.5 * scale * si;
  }
}

// Adjoint of the 2x2 box downsample: each coarse gradient spreads /4 onto its
// fine 2x2 block; dropped odd row/column receives nothing.
RasterMap downsample2_adjoint(const RasterMap& coarse, int fine_w, int fine_h) {
  RasterMap out(fine_w, fine_h, coarse.channels());
  for (int c = 0; c < coarse.channels(); ++c) {
    ConstPlaneRef s = coarse.plane(c);
    PlaneRef o = out.plane(c);
    for (int y = 0; y < coarse.height(); ++y)
      for (int x = 0; x < coarse.width(); ++x) {
        const double v = 0.25 * s(y, x);
        o(2 * y, 2 * x) += v;
        o(2 * y, 2 * x + 1) += v;
        o(2 * y + 1, 2 * x) += v;
        o(2 * y + 1, 2 * x + 1) += v;
      }
  }
  return out;
}

}  // namespace

RasterMap encode(const AutoencoderParams& params, const RasterMap& image) {
  params.arch.validate();
  if (image.channels() != params.arch.in_channels)
    throw ShapeMismatch("encode: image channel count does not match ArchSpec");
  return tanh_map(detail::conv3x3(params.enc2,
                                  tanh_map(detail::conv3x3(params.enc1, image))));
}

std::vector<RasterMap> decode(const AutoencoderParams& params, const RasterMap& phi) {
  params.arch.validate();
  if (phi.channels() != params.arch.feature_channels)
    throw ShapeMismatch("decode: feature channel count does not match ArchSpec");
  RasterMap hidden = tanh_map(detail::conv3x3(params.dec1, phi));
  std::vector<RasterMap> recons;
  RasterMap level = hidden;
  for (int k = 0; k < params.arch.scales; ++k) {
    if (k > 0) level = downsample2(level);
    recons.push_back(logistic_map(detail::conv3x3(params.dec2, level)));
  }
  return recons;
}

std::pair<LossReport, AutoencoderParams> loss_and_gradients(const AutoencoderParams& params,
                                                            const RasterMap& image,
                                                            const LossConfig& cfg) {
  Forward f = run_forward(params, image);
  LossReport report = single_view_loss(image, f.recons, f.phi, cfg);

  AutoencoderParams grads = AutoencoderParams::zeros(params.arch);
  const int w = image.width();
  const int h = image.height();

  // Reconstruction path: d(rec)/d(recon_k) = sign(r - I_k)/Npix_k, chained
  // through the logistic output and the shared dec2 kernel at every scale.
  std::vector<RasterMap> dhidden_direct;
  RasterMap input_level = image;
  for (size_t k = 0; k < f.recons.size(); ++k) {
    if (k > 0) input_level = downsample2(input_level);
    const RasterMap& rk = f.recons[k];
    RasterMap da(rk.width(), rk.height(), rk.channels());
    const double inv_n = 1.0 / (static_cast<double>(rk.width()) * rk.height());
    for (Eigen::Index i = 0; i < da.data().size(); ++i) {
      double r = rk.data()[i];
      da.data()[i] = inv_n * sign0(r - input_level.data()[i]) * r * (1.0 - r);
    }
    detail::conv3x3_backward_params(params.dec2, f.hiddens[k], da, grads.dec2);
    dhidden_direct.push_back(detail::conv3x3_backward_input(params.dec2, da));
  }
  RasterMap dhidden = dhidden_direct.back();
  for (int k = static_cast<int>(dhidden_direct.size()) - 2; k >= 0; --k) {
    RasterMap up = downsample2_adjoint(dhidden, f.hiddens[static_cast<size_t>(k)].width(),
                                       f.hiddens[static_cast<size_t>(k)].height());
    up.data() += dhidden_direct[static_cast<size_t>(k)].data();
    dhidden = std::move(up);
  }
  RasterMap da3(w, h, dhidden.channels());
  da3.data() = dhidden.data().array() * (1.0 - f.hidden.data().array().square());
  detail::conv3x3_backward_params(params.dec1, f.phi, da3, grads.dec1);
  RasterMap dphi = detail::conv3x3_backward_input(params.dec1, da3);

  // Discriminative path: d(dis)/d(grad1 phi_c) = -exp(-|grad1 I|_1) sign(.).
  {
    RasterMap weight = channel_abs_sum(grad1(image));
    RasterMap g1 = grad1(f.phi);
    RasterMap upstream(w, h, f.phi.channels());
    for (int c = 0; c < f.phi.channels(); ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          upstream.at(x, y, c) = -std::exp(-weight.at(x, y)) * sign0(g1.at(x, y, c));
    grad1_adjoint_accumulate(upstream, dphi, cfg.alpha);
  }
  // Convergent path: d(cvt)/d(grad2 phi_c) = sign(.); the border ring of
  // grad2 is identically zero so it contributes nothing.
  {
    RasterMap g2 = grad2(f.phi);
    RasterMap upstream(w, h, f.phi.channels());
    for (Eigen::Index i = 0; i < g2.data().size(); ++i)
      upstream.data()[i] = sign0(g2.data()[i]);
    grad2_adjoint_accumulate(upstream, dphi, cfg.beta);
  }

  RasterMap da2(w, h, f.phi.channels());
  da2.data() = dphi.data().array() * (1.0 - f.phi.data().array().square());
  detail::conv3x3_backward_params(params.enc2, f.z1, da2, grads.enc2);
  RasterMap dz1 = detail::conv3x3_backward_input(params.enc2, da2);

  RasterMap da1(w, h, f.z1.channels());
  da1.data() = dz1.data().array() * (1.0 - f.z1.data().array().square());
  detail::conv3x3_backward_params(params.enc1, image, da1, grads.enc1);

  return {std::move(report), std::move(grads)};
}

AdamState AdamState::zeros(Eigen::Index n) {
  AdamState s;
  s.m = Eigen::VectorXd::Zero(n);
  s.v = Eigen::VectorXd::Zero(n);
  s.t = 0;
  return s;
}

Eigen::VectorXd adam_step(AdamState& state, const Eigen::VectorXd& grads, const TrainConfig& cfg) {
  if (state.m.size() != grads.size())
    throw ShapeMismatch("adam_step: state dimension does not match gradients");
  state.t += 1;
  state.m = cfg.adam_beta1 * state.m + (1.0 - cfg.adam_beta1) * grads;
  state.v = cfg.adam_beta2 * state.v.array().matrix() +
            (1.0 - cfg.adam_beta2) * grads.array().square().matrix();
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.t));
  Eigen::ArrayXd m_hat = state.m.array() / bc1;
  Eigen::ArrayXd v_hat = state.v.array() / bc2;
  return (-cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps)).matrix();
}

TrainResult train(AutoencoderParams params, const std::vector<RasterMap>& dataset,
                  const TrainConfig& cfg, const AdamState* resume_adam, long start_step) {
  params.arch.validate();
  if (dataset.empty()) throw InvalidConfig("train: dataset must be nonempty");
  if (cfg.steps < 1) throw InvalidConfig("train: steps must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw InvalidConfig("train: learning_rate must be positive");

  TrainResult result;
  result.adam = resume_adam ? *resume_adam : AdamState::zeros(params.parameter_count());
  if (result.adam.m.size() != params.parameter_count())
    throw ShapeMismatch("train: resumed Adam state does not match parameters");

  Eigen::VectorXd flat = params.to_vector();
  const double inv_images = 1.0 / static_cast<double>(dataset.size());
  for (long s = 0; s < cfg.steps; ++s) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(flat.size());
    double total = 0, rec = 0, dis = 0, cvt = 0;
    for (const auto& image : dataset) {
      auto [report, g] = loss_and_gradients(params, image, cfg.loss);
      grad += g.to_vector();
      total += report.total;
      rec += report.per_term.at("rec");
      dis += report.per_term.at("dis");
      cvt += report.per_term.at("cvt");
    }
    grad *= inv_images;
    total *= inv_images;
    rec *= inv_images;
    dis *= inv_images;
    cvt *= inv_images;
    if (!std::isfinite(total)) throw Diverged("train: loss is not finite");

    flat += adam_step(result.adam, grad, cfg);
    params.from_vector(flat);
    result.history.push_back({start_step + s + 1, total, rec, dis, cvt});
  }
  result.params = std::move(params);
  result.total_steps = start_step + cfg.steps;
  return result;
}

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_array(std::ostream& out, const Eigen::VectorXd& v) {
  write_u64(out, static_cast<std::uint64_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}
std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
Eigen::VectorXd read_array(std::istream& in, Eigen::Index expected) {
  std::uint64_t n = read_u64(in);
  if (expected >= 0 && static_cast<Eigen::Index>(n) != expected)
    throw ParseError("checkpoint: array size mismatch");
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  return v;
}

constexpr char kMagic[5] = {'F', 'M', 'A', 'E', '1'};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, static_cast<std::uint32_t>(ckpt.params.arch.in_channels));
  write_u32(out, static_cast<std::uint32_t>(ckpt.params.arch.feature_channels));
  write_u32(out, static_cast<std::uint32_t>(ckpt.params.arch.scales));
  write_u64(out, static_cast<std::uint64_t>(ckpt.trained_steps));
  write_u32(out, ckpt.has_adam ? 1 : 0);
  for (const ConvLayer* l : {&ckpt.params.enc1, &ckpt.params.enc2, &ckpt.params.dec1,
                             &ckpt.params.dec2}) {
    write_array(out, l->weights);
    write_array(out, l->bias);
  }
  if (ckpt.has_adam) {
    write_u64(out, static_cast<std::uint64_t>(ckpt.adam.t));
    write_array(out, ckpt.adam.m);
    write_array(out, ckpt.adam.v);
  }
  if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  char magic[5];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ParseError("load_checkpoint: bad magic in " + path);
  ArchSpec arch;
  arch.in_channels = static_cast<int>(read_u32(in));
  arch.feature_channels = static_cast<int>(read_u32(in));
  arch.scales = static_cast<int>(read_u32(in));
  arch.validate();
  Checkpoint ckpt;
  ckpt.trained_steps = static_cast<long>(read_u64(in));
  ckpt.has_adam = read_u32(in) != 0;
  ckpt.params = AutoencoderParams::zeros(arch);
  for (ConvLayer* l : {&ckpt.params.enc1, &ckpt.params.enc2, &ckpt.params.dec1,
                       &ckpt.params.dec2}) {
    l->weights = read_array(in, l->weights.size());
    l->bias = read_array(in, l->bias.size());
  }
  if (ckpt.has_adam) {
    ckpt.adam.t = static_cast<long>(read_u64(in));
    ckpt.adam.m = read_array(in, ckpt.params.parameter_count());
    ckpt.adam.v = read_array(in, ckpt.params.parameter_count());
  } else {
    ckpt.adam = AdamState::zeros(ckpt.params.parameter_count());
  }
  if (!in) throw ParseError("load_checkpoint: truncated file " + path);
  return ckpt;
}

}  // namespace featmetric
