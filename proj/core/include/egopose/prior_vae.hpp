#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "egopose/conv_vae.hpp"
#include "egopose/fisheye.hpp"
#include "egopose/random.hpp"
#include "egopose/skeleton.hpp"

namespace egopose {

/// Per-channel z-scoring applied to the 45 x B network input.
struct NormalizationStats {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(kPoseChannels);
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(kPoseChannels);

  Eigen::MatrixXd normalize(const Eigen::MatrixXd& channels) const;
  Eigen::MatrixXd denormalize(const Eigen::MatrixXd& channels) const;
};

inline constexpr double kMinChannelScale = 0.05;  // meters; keeps near-constant channels from amplifying noise

/// Mean and standard deviation of every channel over all frames of the
/// corpus, scale floored at kMinChannelScale, rounded to float32.
NormalizationStats compute_normalization(std::span<const PoseSeq> corpus);

/// 45 x B matrix, row 3 * joint + axis.
Eigen::MatrixXd to_channels(const PoseSeq& seq);
PoseFrames from_channels(const Eigen::MatrixXd& channels);

using LatentVec = Eigen::VectorXd;

struct GaussianCode {
  Eigen::VectorXd mu;
  Eigen::VectorXd log_var;  // clamped to [kLogVarMin, kLogVarMax]
};

/// Sequence VAE over B-frame segments tagged with the space it models.
class PriorModel {
 public:
  PriorModel(const VaeArchitecture& arch, Space space);

  Space space() const { return space_; }
  int length() const { return net_.architecture().length; }
  int latent_dim() const { return net_.architecture().latent_dim; }

  ConvVae& network() { return net_; }
  const ConvVae& network() const { return net_; }
  NormalizationStats& normalization() { return stats_; }
  const NormalizationStats& normalization() const { return stats_; }

  GaussianCode encode(const PoseSeq& seq) const;
  PoseSeq decode(const LatentVec& z) const;
  /// (d decode / d z)^T cotangent, with the cotangent laid out like the poses.
  LatentVec decode_vjp(const LatentVec& z, const PoseFrames& cotangent) const;
  /// decode + vjp sharing one forward pass.
  PoseSeq decode(const LatentVec& z, ConvVae::Tape& tape) const;
  LatentVec vjp(const ConvVae::Tape& tape, const PoseFrames& cotangent) const;

  /// Batched forms: one column per segment.
  Eigen::MatrixXd encode_mu(std::span<const PoseSeq> batch) const;
  std::vector<PoseSeq> decode_batch(const Eigen::MatrixXd& z) const;

  /// Normalized batch, C x (B * N).
  Eigen::MatrixXd pack(std::span<const PoseSeq> batch) const;

 private:
  void check_segment(const PoseSeq& seq) const;

  ConvVae net_;
  NormalizationStats stats_;
  Space space_;
};

struct ElboTerms {
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

/// Loss on normalized data: recon = c1 times the batch mean of the summed
/// squared error over all 45 * B entries of a segment, kl = c2 times the
/// batch mean of the closed-form KL to N(0, I). `eps` holds the
/// reparameterization noise, d x N. Accumulates the weight gradient into
/// `grad` when non-empty.
ElboTerms elbo_loss(const PriorModel& model, std::span<const PoseSeq> batch, double c1, double c2,
                    const Eigen::MatrixXd& eps, std::span<double> grad = {});
/// Same, drawing eps from `rng`.
ElboTerms elbo_loss(const PriorModel& model, std::span<const PoseSeq> batch, double c1, double c2, Rng& rng,
                    std::span<double> grad = {});

struct TrainConfig {
  int epochs = 200;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double c1 = 1.0;
  double c2 = 1e-3;
  double kl_warmup_fraction = 0.1;  // c2 ramps linearly from 0 over this share of epochs
  bool cosine_decay = true;  // learning rate follows half a cosine from learning_rate to 0
  std::uint64_t seed = 1;
  VaeArchitecture architecture = VaeArchitecture::pose_default();

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double c2 = 0.0;  // warmed-up KL weight used in this epoch
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

struct TrainResult {
  PriorModel model;
  std::vector<EpochStats> curve;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch Adam training. Deterministic for a given seed; final weights
/// are rounded to float32 so a saved checkpoint reloads bit-identically.
TrainResult train(std::span<const PoseSeq> corpus, const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Decodes (1 - t) z_a + t z_b for `steps` evenly spaced t in [0, 1].
std::vector<PoseSeq> interpolate(const PriorModel& model, const LatentVec& z_a, const LatentVec& z_b, int steps);

/// Mean joint error (mm) of decode(encode(x).mu) against x, over the segments.
double reconstruction_mpjpe(const PriorModel& model, std::span<const PoseSeq> segments);

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_prior(const PriorModel& model, const std::filesystem::path& path);
PriorModel load_prior(const std::filesystem::path& path);

/// World-to-canonical transform of a segment: moves the first frame's neck to
/// the origin and turns about the vertical so the first frame's left-to-right
/// hip axis points along +x.
RigidTransform canonicalizing_transform(const Pose& first_frame);
PoseSeq apply_transform(const PoseSeq& seq, const RigidTransform& T);

}  // namespace egopose
