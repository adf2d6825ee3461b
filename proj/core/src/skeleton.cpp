#include "egopose/skeleton.hpp"

#include <cmath>

#include "egopose/errors.hpp"

namespace egopose {

std::string_view to_string(Space space) { return space == Space::Local ? "local" : "world"; }

Space parse_space(std::string_view text) {
  if (text == "local") return Space::Local;
  if (text == "world" || text == "global") return Space::World;
  throw ValidationError("unknown space tag '" + std::string(text) + "' (expected local or world)");
}

int Skeleton::find(std::string_view name) const {
  for (int j = 0; j < kNumJoints; ++j) {
    if (joint_names[static_cast<std::size_t>(j)] == name) return j;
  }
  return -1;
}

const Skeleton& default_skeleton() {
  static const Skeleton skel = [] {
    Skeleton s;
    s.joint_names = {"neck",       "right_shoulder", "right_elbow", "right_wrist", "left_shoulder",
                     "left_elbow", "left_wrist",     "right_hip",   "right_knee",  "right_ankle",
                     "right_toe",  "left_hip",       "left_knee",   "left_ankle",  "left_toe"};
    s.parent = {-1,         kNeck,     kRightShoulder, kRightElbow, kNeck,
                kLeftShoulder, kLeftElbow, kNeck,       kRightHip,   kRightKnee,
                kRightAnkle,   kNeck,      kLeftHip,    kLeftKnee,   kLeftAnkle};
    s.root_index = kNeck;
    std::size_t b = 0;
    for (int j = 0; j < kNumJoints; ++j) {
      if (s.parent[static_cast<std::size_t>(j)] >= 0) s.bones[b++] = {s.parent[static_cast<std::size_t>(j)], j};
    }
    return s;
  }();
  return skel;
}

bool is_valid_skeleton(const Skeleton& skel) {
  if (skel.root_index < 0 || skel.root_index >= kNumJoints) return false;
  int roots = 0;
  for (int j = 0; j < kNumJoints; ++j) {
    const int p = skel.parent_of(j);
    if (p < 0) {
      ++roots;
      if (j != skel.root_index) return false;
      continue;
    }
    if (p >= kNumJoints) return false;
    // Walk to the root; a cycle would exceed kNumJoints steps.
    int cur = j;
    int steps = 0;
    while (cur != skel.root_index) {
      cur = skel.parent_of(cur);
      if (cur < 0 || ++steps > kNumJoints) return false;
    }
  }
  if (roots != 1) return false;
  std::array<bool, kNumJoints> seen{};
  for (const auto& [p, c] : skel.bones) {
    if (c < 0 || c >= kNumJoints || skel.parent_of(c) != p || seen[static_cast<std::size_t>(c)]) return false;
    seen[static_cast<std::size_t>(c)] = true;
  }
  return true;
}

PoseSeq PoseSeq::slice(std::size_t first, std::size_t count) const {
  if (first + count > frames.size()) throw ValidationError("slice out of range");
  return PoseSeq(PoseFrames(frames.begin() + static_cast<std::ptrdiff_t>(first),
                            frames.begin() + static_cast<std::ptrdiff_t>(first + count)),
                 space);
}

PoseFrames zero_frames(std::size_t count) { return PoseFrames(count, Pose::Zero()); }

BoneLengths bone_lengths(const Pose& pose, const Skeleton& skel) {
  if (!pose.allFinite()) throw ValidationError("bone_lengths: non-finite joint coordinates");
  BoneLengths out;
  for (int k = 0; k < kNumBones; ++k) {
    const auto [p, c] = skel.bones[static_cast<std::size_t>(k)];
    out(k) = (pose.col(c) - pose.col(p)).norm();
  }
  return out;
}

std::vector<Diagnostic> validate_sequence(const PoseSeq& seq, const Skeleton& skel) {
  std::vector<Diagnostic> out;
  if (seq.length() < 2) {
    out.push_back({Diagnostic::Kind::TooShort, -1, -1,
                   "sequence has " + std::to_string(seq.length()) + " frame(s); too short for temporal terms"});
  }
  for (std::size_t i = 0; i < seq.length(); ++i) {
    const Pose& pose = seq[i];
    bool finite = true;
    for (int j = 0; j < kNumJoints; ++j) {
      if (!pose.col(j).allFinite()) {
        finite = false;
        out.push_back({Diagnostic::Kind::NonFinite, static_cast<int>(i), j,
                       "non-finite coordinate at frame " + std::to_string(i) + ", joint " +
                           std::string(skel.joint_names[static_cast<std::size_t>(j)])});
      }
    }
    if (!finite) continue;
    for (const auto& [p, c] : skel.bones) {
      if ((pose.col(c) - pose.col(p)).norm() <= kZeroBoneLength) {
        out.push_back({Diagnostic::Kind::ZeroLengthBone, static_cast<int>(i), c,
                       "zero-length bone " + std::string(skel.joint_names[static_cast<std::size_t>(p)]) + "-" +
                           std::string(skel.joint_names[static_cast<std::size_t>(c)]) + " at frame " +
                           std::to_string(i)});
      }
    }
  }
  return out;
}

}  // namespace egopose
