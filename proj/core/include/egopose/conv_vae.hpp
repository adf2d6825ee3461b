#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace egopose {

/// Shape description of the sequence VAE: five strided 1D convolutions
/// (leaky rectifier after each), linear heads to (mu, log_var), then a linear
/// expansion, five transposed convolutions mirroring the encoder (linear on
/// the last) and a linear temporal refit to the input length.
struct VaeArchitecture {
  int input_channels = 45;
  int length = 10;
  int latent_dim = 32;
  int kernel = 3;
  int padding = 1;
  std::array<int, 5> hidden_channels{64, 128, 128, 256, 256};
  std::array<int, 5> strides{1, 2, 1, 2, 1};
  double leaky_slope = 0.2;  // 1.0 turns the network affine

  void validate() const;
  bool operator==(const VaeArchitecture&) const = default;

  static VaeArchitecture pose_default(int length = 10);
  /// 2 channels, B = 4: small enough for exhaustive finite differences.
  static VaeArchitecture tiny();
};

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

/// Named slice of the flat parameter vector.
struct ParameterTensor {
  const char* name;
  std::size_t offset;
  std::size_t size;
};

/// Batched network over column blocks: a batch of N signals with C channels
/// and length L is a C x (L * N) matrix, sample n in columns [n L, (n+1) L).
class ConvVae {
 public:
  explicit ConvVae(const VaeArchitecture& arch);

  const VaeArchitecture& architecture() const { return arch_; }
  int decoder_length() const { return dec_[4].out_len; }
  int bottleneck_length() const { return enc_[4].out_len; }

  std::span<double> parameters() { return {theta_.data(), static_cast<std::size_t>(theta_.size())}; }
  std::span<const double> parameters() const { return {theta_.data(), static_cast<std::size_t>(theta_.size())}; }
  std::size_t parameter_count() const { return static_cast<std::size_t>(theta_.size()); }
  const std::vector<ParameterTensor>& tensors() const { return tensors_; }

  /// He-uniform weights, zero biases, refit starting as linear interpolation.
  void initialize(std::uint64_t seed);
  /// Rounds every parameter to the nearest float32 so checkpoints are exact.
  void round_to_float();

  struct Code {
    Eigen::MatrixXd mu;       // d x N
    Eigen::MatrixXd log_var;  // d x N, clamped
  };
  Code encode(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd decode(const Eigen::MatrixXd& z) const;
  /// (d decode / d z)^T cotangent, per sample; returns d x N.
  Eigen::MatrixXd decode_vjp(const Eigen::MatrixXd& z, const Eigen::MatrixXd& cotangent) const;

  struct DecoderTrace;
  /// Forward activations kept for a later vjp, so an optimizer that needs
  /// both the output and its pullback runs the decoder once.
  class Tape {
   public:
    Tape();
    ~Tape();
    Tape(Tape&&) noexcept;
    Tape& operator=(Tape&&) noexcept;

   private:
    friend class ConvVae;
    std::unique_ptr<DecoderTrace> trace_;
  };
  Eigen::MatrixXd decode(const Eigen::MatrixXd& z, Tape& tape) const;
  Eigen::MatrixXd vjp(const Tape& tape, const Eigen::MatrixXd& cotangent) const;

  struct Loss {
    double total = 0.0;
    double recon = 0.0;
    double kl = 0.0;
  };
  /// Batch-averaged c1 * ||decode(mu + exp(log_var/2) eps) - x||^2 plus
  /// c2 * KL(q || N(0, I)). Accumulates d total / d theta into `grad` when it
  /// is non-empty (size parameter_count()).
  Loss loss(const Eigen::MatrixXd& x, const Eigen::MatrixXd& eps, double c1, double c2,
            std::span<double> grad = {}) const;

 private:
  struct ConvLayer {
    int in_ch, out_ch, in_len, out_len, stride;
    bool transposed;
    std::size_t w, b;
  };
  struct DenseLayer {
    int in, out;
    std::size_t w, b;
  };
  struct EncoderTrace;

  std::size_t add_tensor(const char* name, std::size_t size);
  Eigen::Map<const Eigen::MatrixXd> mat(std::size_t off, Eigen::Index rows, Eigen::Index cols) const;
  Eigen::Map<const Eigen::VectorXd> vec(std::size_t off, Eigen::Index n) const;

  Eigen::MatrixXd conv_forward(const ConvLayer& l, const Eigen::MatrixXd& x, Eigen::Index n,
                               Eigen::MatrixXd* cols) const;
  Eigen::MatrixXd conv_backward(const ConvLayer& l, const Eigen::MatrixXd& x, const Eigen::MatrixXd& cols,
                                const Eigen::MatrixXd& dpre, Eigen::Index n, double* grad, bool need_dx) const;

  void encoder_forward(const Eigen::MatrixXd& x, EncoderTrace& tr) const;
  void encoder_backward(EncoderTrace& tr, const Eigen::MatrixXd& dmu, const Eigen::MatrixXd& dlogvar,
                        double* grad) const;
  void decoder_forward(const Eigen::MatrixXd& z, DecoderTrace& tr) const;
  Eigen::MatrixXd decoder_backward(const DecoderTrace& tr, const Eigen::MatrixXd& dout, double* grad) const;

  VaeArchitecture arch_;
  std::array<ConvLayer, 5> enc_{};
  DenseLayer head_mu_{}, head_logvar_{}, expand_{};
  std::array<ConvLayer, 5> dec_{};
  std::size_t refit_w_ = 0, refit_b_ = 0;
  std::vector<ParameterTensor> tensors_;
  Eigen::VectorXd theta_;
};

}  // namespace egopose
