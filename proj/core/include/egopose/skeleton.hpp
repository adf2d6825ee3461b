#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace egopose {

inline constexpr int kNumJoints = 15;
inline constexpr int kNumBones = kNumJoints - 1;
inline constexpr int kPoseChannels = 3 * kNumJoints;

/// Joint indices of the 15-joint egocentric body model. Parents always
/// precede their children, so index order is a valid root-outward order.
enum Joint : int {
  kNeck = 0,
  kRightShoulder,
  kRightElbow,
  kRightWrist,
  kLeftShoulder,
  kLeftElbow,
  kLeftWrist,
  kRightHip,
  kRightKnee,
  kRightAnkle,
  kRightToe,
  kLeftHip,
  kLeftKnee,
  kLeftAnkle,
  kLeftToe,
};

/// One frame: column j holds joint j in meters. Column-major storage makes
/// channel index = 3 * joint + axis.
using Pose = Eigen::Matrix<double, 3, kNumJoints>;
using BoneLengths = Eigen::Matrix<double, kNumBones, 1>;
/// Gradient or cotangent with the same layout as a pose sequence.
using PoseFrames = std::vector<Pose>;

enum class Space { Local, World };

std::string_view to_string(Space space);
Space parse_space(std::string_view text);

struct Skeleton {
  std::array<std::string_view, kNumJoints> joint_names{};
  std::array<int, kNumJoints> parent{};  // -1 for the root
  std::array<std::pair<int, int>, kNumBones> bones{};  // (parent, child)
  int root_index = kNeck;

  int parent_of(int joint) const { return parent[static_cast<std::size_t>(joint)]; }
  int find(std::string_view name) const;  // -1 if unknown
};

/// Neck-rooted topology with shoulder/elbow/wrist and hip/knee/ankle/toe chains.
const Skeleton& default_skeleton();

/// Checks the tree invariants (single root, 14 bones, acyclic parent links).
bool is_valid_skeleton(const Skeleton& skel);

struct PoseSeq {
  PoseFrames frames;
  Space space = Space::Local;

  PoseSeq() = default;
  PoseSeq(PoseFrames f, Space s) : frames(std::move(f)), space(s) {}

  std::size_t length() const { return frames.size(); }
  Pose& operator[](std::size_t i) { return frames[i]; }
  const Pose& operator[](std::size_t i) const { return frames[i]; }

  PoseSeq slice(std::size_t first, std::size_t count) const;
};

PoseFrames zero_frames(std::size_t count);

/// Euclidean length of every bone, in bone order. Throws ValidationError on
/// non-finite coordinates; zero lengths are allowed.
BoneLengths bone_lengths(const Pose& pose, const Skeleton& skel = default_skeleton());

struct Diagnostic {
  enum class Kind { NonFinite, ZeroLengthBone, TooShort };
  Kind kind;
  int frame = -1;
  int joint = -1;  // joint index, or child joint of the bone for ZeroLengthBone
  std::string message;
};

inline constexpr double kZeroBoneLength = 1e-9;

/// Pure report of NaN/Inf entries, zero-length bones and too-short sequences.
std::vector<Diagnostic> validate_sequence(const PoseSeq& seq, const Skeleton& skel = default_skeleton());

}  // namespace egopose
