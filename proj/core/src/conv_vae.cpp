#include "egopose/conv_vae.hpp"

#include <algorithm>
#include <cmath>

#include "egopose/errors.hpp"
#include "egopose/random.hpp"

namespace egopose {

using Eigen::Index;
using Eigen::MatrixXd;

void VaeArchitecture::validate() const {
  if (input_channels < 1 || length < 1 || latent_dim < 1 || kernel < 1 || padding < 0) {
    throw ValidationError("VAE architecture: non-positive dimension");
  }
  for (int c : hidden_channels) {
    if (c < 1) throw ValidationError("VAE architecture: non-positive channel count");
  }
  int len = length;
  for (int s : strides) {
    if (s < 1) throw ValidationError("VAE architecture: stride must be >= 1");
    len = (len + 2 * padding - kernel) / s + 1;
    if (len < 1) throw ValidationError("VAE architecture: sequence too short for the encoder strides");
  }
  if (!(leaky_slope > 0.0 && leaky_slope <= 1.0)) throw ValidationError("VAE architecture: leaky slope must be in (0, 1]");
}

VaeArchitecture VaeArchitecture::pose_default(int length) {
  VaeArchitecture a;
  a.length = length;
  return a;
}

VaeArchitecture VaeArchitecture::tiny() {
  VaeArchitecture a;
  a.input_channels = 2;
  a.length = 4;
  a.latent_dim = 2;
  a.hidden_channels = {3, 3, 4, 4, 3};
  return a;
}

namespace {

// cols(kk * ch + c, n * short_len + t) = src(c, n * long_len + t * s - p + kk)
void im2col(const MatrixXd& src, int ch, int long_len, int short_len, int k, int s, int p, Index n, MatrixXd& cols) {
  cols.setZero(static_cast<Index>(k) * ch, static_cast<Index>(short_len) * n);
  for (Index b = 0; b < n; ++b) {
    for (int t = 0; t < short_len; ++t) {
      const Index col = b * short_len + t;
      for (int kk = 0; kk < k; ++kk) {
        const int pos = t * s - p + kk;
        if (pos < 0 || pos >= long_len) continue;
        cols.block(static_cast<Index>(kk) * ch, col, ch, 1) = src.col(b * long_len + pos);
      }
    }
  }
}

void col2im(const MatrixXd& cols, int ch, int long_len, int short_len, int k, int s, int p, Index n, MatrixXd& dst) {
  dst.setZero(ch, static_cast<Index>(long_len) * n);
  for (Index b = 0; b < n; ++b) {
    for (int t = 0; t < short_len; ++t) {
      const Index col = b * short_len + t;
      for (int kk = 0; kk < k; ++kk) {
        const int pos = t * s - p + kk;
        if (pos < 0 || pos >= long_len) continue;
        dst.col(b * long_len + pos) += cols.block(static_cast<Index>(kk) * ch, col, ch, 1);
      }
    }
  }
}

MatrixXd leaky(const MatrixXd& pre, double slope) {
  return pre.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
}

// In place: d *= leaky'(pre)
void leaky_backward(MatrixXd& d, const MatrixXd& pre, double slope) {
  if (slope == 1.0) return;
  d = d.binaryExpr(pre, [slope](double g, double v) { return v > 0.0 ? g : slope * g; });
}

}  // namespace

struct ConvVae::EncoderTrace {
  Index n = 0;
  std::array<MatrixXd, 6> act;
  std::array<MatrixXd, 5> pre;
  std::array<MatrixXd, 5> cols;
  MatrixXd mu, logvar_raw, logvar;
};

struct ConvVae::DecoderTrace {
  Index n = 0;
  MatrixXd z;
  MatrixXd pre0, act0;
  std::array<MatrixXd, 5> pre, act;
  MatrixXd out;
};

ConvVae::ConvVae(const VaeArchitecture& arch) : arch_(arch) {
  arch_.validate();
  const int k = arch_.kernel, p = arch_.padding;
  static constexpr const char* kEncW[5] = {"enc0.weight", "enc1.weight", "enc2.weight", "enc3.weight", "enc4.weight"};
  static constexpr const char* kEncB[5] = {"enc0.bias", "enc1.bias", "enc2.bias", "enc3.bias", "enc4.bias"};
  static constexpr const char* kDecW[5] = {"dec0.weight", "dec1.weight", "dec2.weight", "dec3.weight", "dec4.weight"};
  static constexpr const char* kDecB[5] = {"dec0.bias", "dec1.bias", "dec2.bias", "dec3.bias", "dec4.bias"};

  int ch = arch_.input_channels;
  int len = arch_.length;
  std::array<int, 6> chans{};
  chans[0] = ch;
  for (std::size_t l = 0; l < 5; ++l) {
    const int out_ch = arch_.hidden_channels[l];
    const int s = arch_.strides[l];
    const int out_len = (len + 2 * p - k) / s + 1;
    ConvLayer layer{ch, out_ch, len, out_len, s, false, 0, 0};
    layer.w = add_tensor(kEncW[l], static_cast<std::size_t>(out_ch * ch * k));
    layer.b = add_tensor(kEncB[l], static_cast<std::size_t>(out_ch));
    enc_[l] = layer;
    ch = out_ch;
    len = out_len;
    chans[l + 1] = ch;
  }
  const int flat = ch * len;
  const int d = arch_.latent_dim;
  head_mu_ = {flat, d, add_tensor("head_mu.weight", static_cast<std::size_t>(flat * d)),
              add_tensor("head_mu.bias", static_cast<std::size_t>(d))};
  head_logvar_ = {flat, d, add_tensor("head_logvar.weight", static_cast<std::size_t>(flat * d)),
                  add_tensor("head_logvar.bias", static_cast<std::size_t>(d))};
  expand_ = {d, flat, add_tensor("expand.weight", static_cast<std::size_t>(flat * d)),
             add_tensor("expand.bias", static_cast<std::size_t>(flat))};

  // Mirror: channels chans[5] -> chans[4] -> ... -> chans[0], strides reversed.
  for (std::size_t l = 0; l < 5; ++l) {
    const int in_ch = chans[5 - l];
    const int out_ch = (l == 4) ? arch_.input_channels : chans[4 - l];
    const int s = arch_.strides[4 - l];
    const int out_len = (len - 1) * s - 2 * p + k;
    if (out_len < 1) throw ValidationError("VAE architecture: decoder length collapses");
    ConvLayer layer{in_ch, out_ch, len, out_len, s, true, 0, 0};
    layer.w = add_tensor(kDecW[l], static_cast<std::size_t>(out_ch * k * in_ch));
    layer.b = add_tensor(kDecB[l], static_cast<std::size_t>(out_ch));
    dec_[l] = layer;
    len = out_len;
  }
  refit_w_ = add_tensor("refit.weight", static_cast<std::size_t>(arch_.length * len));
  refit_b_ = add_tensor("refit.bias", static_cast<std::size_t>(arch_.length));
  theta_ = Eigen::VectorXd::Zero(static_cast<Index>(tensors_.back().offset + tensors_.back().size));
}

std::size_t ConvVae::add_tensor(const char* name, std::size_t size) {
  const std::size_t off = tensors_.empty() ? 0 : tensors_.back().offset + tensors_.back().size;
  tensors_.push_back({name, off, size});
  return off;
}

Eigen::Map<const MatrixXd> ConvVae::mat(std::size_t off, Index rows, Index cols) const {
  return Eigen::Map<const MatrixXd>(theta_.data() + off, rows, cols);
}

Eigen::Map<const Eigen::VectorXd> ConvVae::vec(std::size_t off, Index n) const {
  return Eigen::Map<const Eigen::VectorXd>(theta_.data() + off, n);
}

void ConvVae::initialize(std::uint64_t seed) {
  Rng rng = make_rng(seed, "vae-init");
  theta_.setZero();
  const double slope = arch_.leaky_slope;
  auto fill = [&](std::size_t off, std::size_t count, double fan_in) {
    const double bound = std::sqrt(6.0 / ((1.0 + slope * slope) * fan_in));
    for (std::size_t i = 0; i < count; ++i) theta_[static_cast<Index>(off + i)] = uniform(rng, -bound, bound);
  };
  const int k = arch_.kernel;
  for (const auto& l : enc_) fill(l.w, static_cast<std::size_t>(l.out_ch * l.in_ch * k), l.in_ch * k);
  fill(head_mu_.w, static_cast<std::size_t>(head_mu_.in * head_mu_.out), head_mu_.in);
  fill(head_logvar_.w, static_cast<std::size_t>(head_logvar_.in * head_logvar_.out), head_logvar_.in);
  for (std::size_t i = 0; i < static_cast<std::size_t>(head_logvar_.in * head_logvar_.out); ++i) {
    theta_[static_cast<Index>(head_logvar_.w + i)] *= 0.1;
  }
  fill(expand_.w, static_cast<std::size_t>(expand_.in * expand_.out), expand_.in);
  for (const auto& l : dec_) fill(l.w, static_cast<std::size_t>(l.out_ch * l.in_ch * k), l.in_ch * k);

  // Refit starts as linear resampling from the decoder length to B.
  const int ld = decoder_length();
  const int b = arch_.length;
  Eigen::Map<MatrixXd> A(theta_.data() + refit_w_, b, ld);
  for (int i = 0; i < b; ++i) {
    const double pos = (b > 1 && ld > 1) ? static_cast<double>(i) * (ld - 1) / (b - 1) : 0.0;
    const int lo = std::min(static_cast<int>(pos), ld - 1);
    const int hi = std::min(lo + 1, ld - 1);
    const double f = pos - lo;
    A(i, lo) += 1.0 - f;
    A(i, hi) += f;
  }
}

void ConvVae::round_to_float() {
  for (Index i = 0; i < theta_.size(); ++i) theta_[i] = static_cast<double>(static_cast<float>(theta_[i]));
}

MatrixXd ConvVae::conv_forward(const ConvLayer& l, const MatrixXd& x, Index n, MatrixXd* cols) const {
  const int k = arch_.kernel, p = arch_.padding;
  MatrixXd pre;
  if (!l.transposed) {
    MatrixXd local;
    MatrixXd& c = cols ? *cols : local;
    im2col(x, l.in_ch, l.in_len, l.out_len, k, l.stride, p, n, c);
    pre.noalias() = mat(l.w, l.out_ch, static_cast<Index>(k) * l.in_ch) * c;
  } else {
    MatrixXd c;
    c.noalias() = mat(l.w, static_cast<Index>(k) * l.out_ch, l.in_ch) * x;
    col2im(c, l.out_ch, l.out_len, l.in_len, k, l.stride, p, n, pre);
  }
  pre.colwise() += vec(l.b, l.out_ch);
  return pre;
}

MatrixXd ConvVae::conv_backward(const ConvLayer& l, const MatrixXd& x, const MatrixXd& cols, const MatrixXd& dpre,
                                Index n, double* grad, bool need_dx) const {
  const int k = arch_.kernel, p = arch_.padding;
  MatrixXd dx;
  if (!l.transposed) {
    if (grad) {
      Eigen::Map<MatrixXd>(grad + l.w, l.out_ch, static_cast<Index>(k) * l.in_ch).noalias() += dpre * cols.transpose();
      Eigen::Map<Eigen::VectorXd>(grad + l.b, l.out_ch) += dpre.rowwise().sum();
    }
    if (need_dx) {
      MatrixXd dcols;
      dcols.noalias() = mat(l.w, l.out_ch, static_cast<Index>(k) * l.in_ch).transpose() * dpre;
      col2im(dcols, l.in_ch, l.in_len, l.out_len, k, l.stride, p, n, dx);
    }
  } else {
    MatrixXd dcols;
    im2col(dpre, l.out_ch, l.out_len, l.in_len, k, l.stride, p, n, dcols);
    if (grad) {
      Eigen::Map<MatrixXd>(grad + l.w, static_cast<Index>(k) * l.out_ch, l.in_ch).noalias() += dcols * x.transpose();
      Eigen::Map<Eigen::VectorXd>(grad + l.b, l.out_ch) += dpre.rowwise().sum();
    }
    if (need_dx) dx.noalias() = mat(l.w, static_cast<Index>(k) * l.out_ch, l.in_ch).transpose() * dcols;
  }
  return dx;
}

void ConvVae::encoder_forward(const MatrixXd& x, EncoderTrace& tr) const {
  if (x.rows() != arch_.input_channels || x.cols() % arch_.length != 0) {
    throw ValidationError("VAE encode: expected " + std::to_string(arch_.input_channels) + " channels and a multiple of " +
                          std::to_string(arch_.length) + " columns");
  }
  tr.n = x.cols() / arch_.length;
  tr.act[0] = x;
  for (std::size_t l = 0; l < 5; ++l) {
    tr.pre[l] = conv_forward(enc_[l], tr.act[l], tr.n, &tr.cols[l]);
    tr.act[l + 1] = leaky(tr.pre[l], arch_.leaky_slope);
  }
  const Eigen::Map<const MatrixXd> flat(tr.act[5].data(), head_mu_.in, tr.n);
  tr.mu.noalias() = mat(head_mu_.w, head_mu_.out, head_mu_.in) * flat;
  tr.mu.colwise() += vec(head_mu_.b, head_mu_.out);
  tr.logvar_raw.noalias() = mat(head_logvar_.w, head_logvar_.out, head_logvar_.in) * flat;
  tr.logvar_raw.colwise() += vec(head_logvar_.b, head_logvar_.out);
  tr.logvar = tr.logvar_raw.cwiseMax(kLogVarMin).cwiseMin(kLogVarMax);
}

void ConvVae::encoder_backward(EncoderTrace& tr, const MatrixXd& dmu, const MatrixXd& dlogvar, double* grad) const {
  const MatrixXd dlv = dlogvar.binaryExpr(tr.logvar_raw, [](double g, double v) {
    return (v >= kLogVarMin && v <= kLogVarMax) ? g : 0.0;
  });
  const Eigen::Map<const MatrixXd> flat(tr.act[5].data(), head_mu_.in, tr.n);
  Eigen::Map<MatrixXd>(grad + head_mu_.w, head_mu_.out, head_mu_.in).noalias() += dmu * flat.transpose();
  Eigen::Map<Eigen::VectorXd>(grad + head_mu_.b, head_mu_.out) += dmu.rowwise().sum();
  Eigen::Map<MatrixXd>(grad + head_logvar_.w, head_logvar_.out, head_logvar_.in).noalias() += dlv * flat.transpose();
  Eigen::Map<Eigen::VectorXd>(grad + head_logvar_.b, head_logvar_.out) += dlv.rowwise().sum();

  MatrixXd dflat = mat(head_mu_.w, head_mu_.out, head_mu_.in).transpose() * dmu;
  dflat.noalias() += mat(head_logvar_.w, head_logvar_.out, head_logvar_.in).transpose() * dlv;
  MatrixXd dact = Eigen::Map<const MatrixXd>(dflat.data(), enc_[4].out_ch, static_cast<Index>(enc_[4].out_len) * tr.n);
  for (std::size_t l = 5; l-- > 0;) {
    leaky_backward(dact, tr.pre[l], arch_.leaky_slope);
    dact = conv_backward(enc_[l], tr.act[l], tr.cols[l], dact, tr.n, grad, l > 0);
  }
}

void ConvVae::decoder_forward(const MatrixXd& z, DecoderTrace& tr) const {
  if (z.rows() != arch_.latent_dim) throw ValidationError("VAE decode: latent dimension mismatch");
  tr.n = z.cols();
  tr.z = z;
  MatrixXd flat = mat(expand_.w, expand_.out, expand_.in) * z;
  flat.colwise() += vec(expand_.b, expand_.out);
  tr.pre0 = Eigen::Map<const MatrixXd>(flat.data(), dec_[0].in_ch, static_cast<Index>(dec_[0].in_len) * tr.n);
  tr.act0 = leaky(tr.pre0, arch_.leaky_slope);
  for (std::size_t l = 0; l < 5; ++l) {
    const MatrixXd& in = (l == 0) ? tr.act0 : tr.act[l - 1];
    tr.pre[l] = conv_forward(dec_[l], in, tr.n, nullptr);
    tr.act[l] = (l < 4) ? leaky(tr.pre[l], arch_.leaky_slope) : tr.pre[l];
  }
  const int ld = decoder_length();
  const int b = arch_.length;
  const auto A = mat(refit_w_, b, ld);
  const auto a = vec(refit_b_, b);
  tr.out.resize(arch_.input_channels, static_cast<Index>(b) * tr.n);
  for (Index s = 0; s < tr.n; ++s) {
    tr.out.middleCols(s * b, b).noalias() = tr.act[4].middleCols(s * ld, ld) * A.transpose();
    tr.out.middleCols(s * b, b).rowwise() += a.transpose();
  }
}

MatrixXd ConvVae::decoder_backward(const DecoderTrace& tr, const MatrixXd& dout, double* grad) const {
  const int ld = decoder_length();
  const int b = arch_.length;
  const auto A = mat(refit_w_, b, ld);
  MatrixXd dact(arch_.input_channels, static_cast<Index>(ld) * tr.n);
  for (Index s = 0; s < tr.n; ++s) {
    const auto ds = dout.middleCols(s * b, b);
    if (grad) {
      Eigen::Map<MatrixXd>(grad + refit_w_, b, ld).noalias() += ds.transpose() * tr.act[4].middleCols(s * ld, ld);
      Eigen::Map<Eigen::VectorXd>(grad + refit_b_, b) += ds.colwise().sum().transpose();
    }
    dact.middleCols(s * ld, ld).noalias() = ds * A;
  }
  for (std::size_t l = 5; l-- > 0;) {
    if (l < 4) leaky_backward(dact, tr.pre[l], arch_.leaky_slope);
    const MatrixXd& in = (l == 0) ? tr.act0 : tr.act[l - 1];
    dact = conv_backward(dec_[l], in, MatrixXd(), dact, tr.n, grad, true);
  }
  leaky_backward(dact, tr.pre0, arch_.leaky_slope);
  const Eigen::Map<const MatrixXd> dflat(dact.data(), expand_.out, tr.n);
  if (grad) {
    Eigen::Map<MatrixXd>(grad + expand_.w, expand_.out, expand_.in).noalias() += dflat * tr.z.transpose();
    Eigen::Map<Eigen::VectorXd>(grad + expand_.b, expand_.out) += dflat.rowwise().sum();
  }
  return mat(expand_.w, expand_.out, expand_.in).transpose() * dflat;
}

ConvVae::Code ConvVae::encode(const MatrixXd& x) const {
  EncoderTrace tr;
  encoder_forward(x, tr);
  return {std::move(tr.mu), std::move(tr.logvar)};
}

MatrixXd ConvVae::decode(const MatrixXd& z) const {
  DecoderTrace tr;
  decoder_forward(z, tr);
  return std::move(tr.out);
}

MatrixXd ConvVae::decode_vjp(const MatrixXd& z, const MatrixXd& cotangent) const {
  DecoderTrace tr;
  decoder_forward(z, tr);
  if (cotangent.rows() != tr.out.rows() || cotangent.cols() != tr.out.cols()) {
    throw ValidationError("VAE decode_vjp: cotangent shape mismatch");
  }
  return decoder_backward(tr, cotangent, nullptr);
}

ConvVae::Tape::Tape() = default;
ConvVae::Tape::~Tape() = default;
ConvVae::Tape::Tape(Tape&&) noexcept = default;
ConvVae::Tape& ConvVae::Tape::operator=(Tape&&) noexcept = default;

MatrixXd ConvVae::decode(const MatrixXd& z, Tape& tape) const {
  if (!tape.trace_) tape.trace_ = std::make_unique<DecoderTrace>();
  decoder_forward(z, *tape.trace_);
  return tape.trace_->out;
}

MatrixXd ConvVae::vjp(const Tape& tape, const MatrixXd& cotangent) const {
  if (!tape.trace_) throw ValidationError("VAE vjp: tape holds no forward pass");
  const auto& tr = *tape.trace_;
  if (cotangent.rows() != tr.out.rows() || cotangent.cols() != tr.out.cols()) {
    throw ValidationError("VAE vjp: cotangent shape mismatch");
  }
  return decoder_backward(tr, cotangent, nullptr);
}

ConvVae::Loss ConvVae::loss(const MatrixXd& x, const MatrixXd& eps, double c1, double c2, std::span<double> grad) const {
  if (c1 < 0.0 || c2 < 0.0) throw ValidationError("VAE loss: weights must be non-negative");
  if (!grad.empty() && grad.size() != parameter_count()) throw ValidationError("VAE loss: gradient buffer size mismatch");
  EncoderTrace et;
  encoder_forward(x, et);
  if (eps.rows() != arch_.latent_dim || eps.cols() != et.n) throw ValidationError("VAE loss: noise shape mismatch");
  const MatrixXd sigma = (0.5 * et.logvar.array()).exp().matrix();
  const MatrixXd z = et.mu + sigma.cwiseProduct(eps);
  DecoderTrace dt;
  decoder_forward(z, dt);

  const double inv_n = 1.0 / static_cast<double>(et.n);
  const MatrixXd diff = dt.out - x;
  Loss out;
  out.recon = c1 * diff.squaredNorm() * inv_n;
  out.kl = c2 * 0.5 * (et.mu.array().square() + et.logvar.array().exp() - et.logvar.array() - 1.0).sum() * inv_n;
  out.total = out.recon + out.kl;
  if (grad.empty()) return out;

  double* g = grad.data();
  const MatrixXd dz = decoder_backward(dt, (2.0 * c1 * inv_n) * diff, g);
  const MatrixXd dmu = dz + (c2 * inv_n) * et.mu;
  const MatrixXd dlv = (dz.array() * eps.array() * 0.5 * sigma.array() +
                        (c2 * inv_n * 0.5) * (et.logvar.array().exp() - 1.0))
                           .matrix();
  encoder_backward(et, dmu, dlv, g);
  return out;
}

}  // namespace egopose
