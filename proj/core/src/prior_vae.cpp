#include "egopose/prior_vae.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>

#include "egopose/adam.hpp"
#include "egopose/binary_io.hpp"
#include "egopose/errors.hpp"

namespace egopose {

namespace {

constexpr char kMagic[] = "EGOPRIOR";

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

Eigen::MatrixXd NormalizationStats::normalize(const Eigen::MatrixXd& channels) const {
  return (channels.colwise() - mean).array().colwise() / scale.array();
}

Eigen::MatrixXd NormalizationStats::denormalize(const Eigen::MatrixXd& channels) const {
  return (channels.array().colwise() * scale.array()).matrix().colwise() + mean;
}

NormalizationStats compute_normalization(std::span<const PoseSeq> corpus) {
  if (corpus.empty()) throw ValidationError("normalization: empty corpus");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(kPoseChannels);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(kPoseChannels);
  double count = 0.0;
  for (const auto& seq : corpus) {
    for (const auto& f : seq.frames) {
      const Eigen::Map<const Eigen::VectorXd> v(f.data(), kPoseChannels);
      sum += v;
      count += 1.0;
    }
  }
  NormalizationStats s;
  s.mean = sum / count;
  for (const auto& seq : corpus) {
    for (const auto& f : seq.frames) {
      const Eigen::Map<const Eigen::VectorXd> v(f.data(), kPoseChannels);
      sq += (v - s.mean).cwiseAbs2();
    }
  }
  s.scale = (sq / count).cwiseSqrt().cwiseMax(kMinChannelScale);
  s.mean = s.mean.unaryExpr(&round_f32);
  s.scale = s.scale.unaryExpr(&round_f32);
  if (!s.mean.allFinite() || !s.scale.allFinite()) throw NumericalError("normalization: non-finite statistics");
  return s;
}

Eigen::MatrixXd to_channels(const PoseSeq& seq) {
  Eigen::MatrixXd c(kPoseChannels, static_cast<Eigen::Index>(seq.length()));
  for (std::size_t i = 0; i < seq.length(); ++i) {
    c.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(seq[i].data(), kPoseChannels);
  }
  return c;
}

PoseFrames from_channels(const Eigen::MatrixXd& channels) {
  if (channels.rows() != kPoseChannels) throw ValidationError("from_channels: expected 45 rows");
  PoseFrames frames(static_cast<std::size_t>(channels.cols()));
  for (std::size_t i = 0; i < frames.size(); ++i) {
    Eigen::Map<Eigen::VectorXd>(frames[i].data(), kPoseChannels) = channels.col(static_cast<Eigen::Index>(i));
  }
  return frames;
}

PriorModel::PriorModel(const VaeArchitecture& arch, Space space) : net_(arch), space_(space) {
  if (arch.input_channels != kPoseChannels) throw ValidationError("prior: pose models need 45 input channels");
}

void PriorModel::check_segment(const PoseSeq& seq) const {
  if (static_cast<int>(seq.length()) != length()) {
    throw ValidationError("prior: segment has " + std::to_string(seq.length()) + " frames, model expects " +
                          std::to_string(length()));
  }
  if (seq.space != space_) {
    throw ValidationError("prior: segment space " + std::string(to_string(seq.space)) + " does not match model space " +
                          std::string(to_string(space_)));
  }
}

Eigen::MatrixXd PriorModel::pack(std::span<const PoseSeq> batch) const {
  const Eigen::Index b = length();
  Eigen::MatrixXd x(kPoseChannels, b * static_cast<Eigen::Index>(batch.size()));
  for (std::size_t n = 0; n < batch.size(); ++n) {
    check_segment(batch[n]);
    x.middleCols(static_cast<Eigen::Index>(n) * b, b) = stats_.normalize(to_channels(batch[n]));
  }
  return x;
}

GaussianCode PriorModel::encode(const PoseSeq& seq) const {
  auto code = net_.encode(pack(std::span<const PoseSeq>(&seq, 1)));
  return {code.mu.col(0), code.log_var.col(0)};
}

Eigen::MatrixXd PriorModel::encode_mu(std::span<const PoseSeq> batch) const { return net_.encode(pack(batch)).mu; }

PoseSeq PriorModel::decode(const LatentVec& z) const {
  if (z.size() != latent_dim()) throw ValidationError("prior: latent vector has wrong dimension");
  return PoseSeq(from_channels(stats_.denormalize(net_.decode(z))), space_);
}

std::vector<PoseSeq> PriorModel::decode_batch(const Eigen::MatrixXd& z) const {
  if (z.rows() != latent_dim()) throw ValidationError("prior: latent batch has wrong dimension");
  const Eigen::MatrixXd y = stats_.denormalize(net_.decode(z));
  const Eigen::Index b = length();
  std::vector<PoseSeq> out;
  out.reserve(static_cast<std::size_t>(z.cols()));
  for (Eigen::Index n = 0; n < z.cols(); ++n) out.emplace_back(from_channels(y.middleCols(n * b, b)), space_);
  return out;
}

namespace {

Eigen::MatrixXd cotangent_channels(const PoseFrames& cotangent, int length, const NormalizationStats& stats) {
  if (static_cast<int>(cotangent.size()) != length) throw ValidationError("prior: cotangent has wrong length");
  Eigen::MatrixXd c(kPoseChannels, length);
  for (std::size_t i = 0; i < cotangent.size(); ++i) {
    c.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(cotangent[i].data(), kPoseChannels);
  }
  c.array().colwise() *= stats.scale.array();
  return c;
}

}  // namespace

LatentVec PriorModel::decode_vjp(const LatentVec& z, const PoseFrames& cotangent) const {
  if (z.size() != latent_dim()) throw ValidationError("prior: latent vector has wrong dimension");
  return net_.decode_vjp(z, cotangent_channels(cotangent, length(), stats_)).col(0);
}

PoseSeq PriorModel::decode(const LatentVec& z, ConvVae::Tape& tape) const {
  if (z.size() != latent_dim()) throw ValidationError("prior: latent vector has wrong dimension");
  return PoseSeq(from_channels(stats_.denormalize(net_.decode(z, tape))), space_);
}

LatentVec PriorModel::vjp(const ConvVae::Tape& tape, const PoseFrames& cotangent) const {
  return net_.vjp(tape, cotangent_channels(cotangent, length(), stats_)).col(0);
}

ElboTerms elbo_loss(const PriorModel& model, std::span<const PoseSeq> batch, double c1, double c2,
                    const Eigen::MatrixXd& eps, std::span<double> grad) {
  if (batch.empty()) throw ValidationError("elbo_loss: empty batch");
  const auto l = model.network().loss(model.pack(batch), eps, c1, c2, grad);
  return {l.total, l.recon, l.kl};
}

ElboTerms elbo_loss(const PriorModel& model, std::span<const PoseSeq> batch, double c1, double c2, Rng& rng,
                    std::span<double> grad) {
  Eigen::MatrixXd eps(model.latent_dim(), static_cast<Eigen::Index>(batch.size()));
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = standard_normal(rng);
  return elbo_loss(model, batch, c1, c2, eps, grad);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("train: epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("train: batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("train: learning rate must be positive");
  if (c1 < 0.0 || c2 < 0.0) throw ValidationError("train: loss weights must be non-negative");
  if (kl_warmup_fraction < 0.0 || kl_warmup_fraction > 1.0) throw ValidationError("train: warmup fraction out of [0, 1]");
  architecture.validate();
}

TrainResult train(std::span<const PoseSeq> corpus, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (corpus.empty()) throw ValidationError("train: empty corpus");
  const Space space = corpus.front().space;
  for (const auto& s : corpus) {
    if (s.space != space) throw ValidationError("train: corpus mixes local and world segments");
  }

  TrainResult result{PriorModel(config.architecture, space), {}};
  PriorModel& model = result.model;
  model.normalization() = compute_normalization(corpus);
  model.network().initialize(derive_seed(config.seed, "prior-init"));

  const Eigen::MatrixXd data = model.pack(corpus);
  const Eigen::Index b = model.length();
  const Eigen::Index d = model.latent_dim();
  const std::size_t n = corpus.size();
  ConvVae& net = model.network();
  Adam adam(net.parameter_count(), AdamConfig{config.learning_rate, 0.9, 0.999, 1e-8});
  std::vector<double> grad(net.parameter_count());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng eps_rng = make_rng(config.seed, "prior-eps");
  Rng shuffle_rng = make_rng(config.seed, "prior-shuffle");
  const double warmup_epochs = config.kl_warmup_fraction * config.epochs;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates with the fixed-algorithm index draw.
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(shuffle_rng, i)]);
    const double c2 =
        warmup_epochs > 0.0 ? config.c2 * std::min(1.0, static_cast<double>(epoch + 1) / warmup_epochs) : config.c2;
    if (config.cosine_decay) {
      adam.set_learning_rate(config.learning_rate * 0.5 *
                             (1.0 + std::cos(std::numbers::pi * epoch / static_cast<double>(config.epochs))));
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.c2 = c2;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), n - start);
      Eigen::MatrixXd x(kPoseChannels, b * static_cast<Eigen::Index>(count));
      for (std::size_t k = 0; k < count; ++k) {
        x.middleCols(static_cast<Eigen::Index>(k) * b, b) = data.middleCols(static_cast<Eigen::Index>(order[start + k]) * b, b);
      }
      Eigen::MatrixXd eps(d, static_cast<Eigen::Index>(count));
      for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = standard_normal(eps_rng);
      std::fill(grad.begin(), grad.end(), 0.0);
      const auto l = net.loss(x, eps, config.c1, c2, grad);
      if (!std::isfinite(l.total)) {
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch));
      }
      adam.step(net.parameters(), grad);
      const double w = static_cast<double>(count) / static_cast<double>(n);
      stats.total += w * l.total;
      stats.recon += w * l.recon;
      stats.kl += w * l.kl;
    }
    result.curve.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  net.round_to_float();
  return result;
}

std::vector<PoseSeq> interpolate(const PriorModel& model, const LatentVec& z_a, const LatentVec& z_b, int steps) {
  if (steps < 2) throw ValidationError("interpolate: steps must be >= 2");
  if (z_a.size() != model.latent_dim() || z_b.size() != model.latent_dim()) {
    throw ValidationError("interpolate: latent vector has wrong dimension");
  }
  std::vector<PoseSeq> out;
  out.reserve(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(steps - 1);
    out.push_back(model.decode((1.0 - t) * z_a + t * z_b));
  }
  return out;
}

double reconstruction_mpjpe(const PriorModel& model, std::span<const PoseSeq> segments) {
  if (segments.empty()) throw ValidationError("reconstruction_mpjpe: no segments");
  double sum = 0.0;
  std::size_t count = 0;
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < segments.size(); start += kChunk) {
    const auto chunk = segments.subspan(start, std::min(kChunk, segments.size() - start));
    const auto rec = model.decode_batch(model.encode_mu(chunk));
    for (std::size_t s = 0; s < chunk.size(); ++s) {
      for (std::size_t i = 0; i < chunk[s].length(); ++i) {
        sum += (rec[s][i] - chunk[s][i]).colwise().norm().sum();
        count += kNumJoints;
      }
    }
  }
  return 1000.0 * sum / static_cast<double>(count);
}

void save_prior(const PriorModel& model, const std::filesystem::path& path) {
  const auto& arch = model.network().architecture();
  ByteWriter w;
  w.text(std::string_view(kMagic, 8));
  w.u32(kCheckpointVersion);
  w.u32(model.space() == Space::Local ? 0u : 1u);
  w.u32(static_cast<std::uint32_t>(arch.input_channels));
  w.u32(static_cast<std::uint32_t>(arch.length));
  w.u32(static_cast<std::uint32_t>(arch.latent_dim));
  w.u32(static_cast<std::uint32_t>(arch.kernel));
  w.u32(static_cast<std::uint32_t>(arch.padding));
  for (int c : arch.hidden_channels) w.u32(static_cast<std::uint32_t>(c));
  for (int s : arch.strides) w.u32(static_cast<std::uint32_t>(s));
  std::uint64_t slope_bits = 0;
  std::memcpy(&slope_bits, &arch.leaky_slope, sizeof slope_bits);
  w.u64(slope_bits);
  const auto& st = model.normalization();
  w.u32(static_cast<std::uint32_t>(st.mean.size()));
  for (Eigen::Index i = 0; i < st.mean.size(); ++i) w.f32(static_cast<float>(st.mean[i]));
  for (Eigen::Index i = 0; i < st.scale.size(); ++i) w.f32(static_cast<float>(st.scale[i]));
  const auto params = model.network().parameters();
  w.u64(params.size());
  for (double v : params) w.f32(static_cast<float>(v));
  write_file_bytes(path, w.data());
}

PriorModel load_prior(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes, path.string());
  if (r.remaining() < 8 || r.text(8) != std::string_view(kMagic, 8)) {
    throw IoError(path.string() + ": not a prior checkpoint (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError(path.string() + ": checkpoint version " + std::to_string(version) + ", expected " +
                  std::to_string(kCheckpointVersion));
  }
  const std::uint32_t space_tag = r.u32();
  if (space_tag > 1) throw IoError(path.string() + ": unknown space tag " + std::to_string(space_tag));
  VaeArchitecture arch;
  arch.input_channels = static_cast<int>(r.u32());
  arch.length = static_cast<int>(r.u32());
  arch.latent_dim = static_cast<int>(r.u32());
  arch.kernel = static_cast<int>(r.u32());
  arch.padding = static_cast<int>(r.u32());
  for (int& c : arch.hidden_channels) c = static_cast<int>(r.u32());
  for (int& s : arch.strides) s = static_cast<int>(r.u32());
  const std::uint64_t slope_bits = r.u64();
  std::memcpy(&arch.leaky_slope, &slope_bits, sizeof slope_bits);
  try {
    arch.validate();
  } catch (const ValidationError& e) {
    throw IoError(path.string() + ": corrupt architecture descriptor (" + e.what() + ")");
  }
  if (arch.input_channels != kPoseChannels) throw IoError(path.string() + ": checkpoint is not a 45-channel pose model");
  PriorModel model(arch, space_tag == 0 ? Space::Local : Space::World);
  const std::uint32_t channels = r.u32();
  if (channels != static_cast<std::uint32_t>(kPoseChannels)) {
    throw IoError(path.string() + ": normalization block has " + std::to_string(channels) + " channels");
  }
  auto& st = model.normalization();
  for (Eigen::Index i = 0; i < kPoseChannels; ++i) st.mean[i] = r.f32();
  for (Eigen::Index i = 0; i < kPoseChannels; ++i) st.scale[i] = r.f32();
  const std::uint64_t count = r.u64();
  auto params = model.network().parameters();
  if (count != params.size()) {
    throw IoError(path.string() + ": checkpoint holds " + std::to_string(count) + " weights, architecture needs " +
                  std::to_string(params.size()));
  }
  for (double& v : params) v = r.f32();
  if (r.remaining() != 0) throw IoError(path.string() + ": " + std::to_string(r.remaining()) + " trailing bytes");
  for (double v : params) {
    if (!std::isfinite(v)) throw IoError(path.string() + ": non-finite weight");
  }
  if (!st.mean.allFinite() || !(st.scale.array() > 0.0).all()) {
    throw IoError(path.string() + ": invalid normalization statistics");
  }
  return model;
}

RigidTransform canonicalizing_transform(const Pose& first_frame) {
  const Eigen::Vector3d lateral = first_frame.col(kRightHip) - first_frame.col(kLeftHip);
  const double heading = std::hypot(lateral.x(), lateral.y()) > 1e-9 ? std::atan2(lateral.y(), lateral.x()) : 0.0;
  RigidTransform T;
  T.R = rotation_about_z(-heading);
  T.t = -(T.R * first_frame.col(kNeck));
  return T;
}

PoseSeq apply_transform(const PoseSeq& seq, const RigidTransform& T) {
  PoseSeq out(seq.frames, seq.space);
  for (auto& f : out.frames) f = transform_pose(f, T);
  return out;
}

}  // namespace egopose
