#pragma once

#include <array>
#include <filesystem>
#include <span>

#include <Eigen/Core>

#include "egopose/skeleton.hpp"

namespace egopose {

/// One joint's probability grid, [row][column] in memory.
using HeatmapGrid = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-frame stack of 15 grids. Cell (row, col) covers image pixels around
/// ((col + 0.5) * stride, (row + 0.5) * stride).
struct HeatmapStack {
  std::array<HeatmapGrid, kNumJoints> grids;
  double stride = 10.0;  // image pixels per cell

  int width() const { return static_cast<int>(grids[0].cols()); }
  int height() const { return static_cast<int>(grids[0].rows()); }
  void validate() const;
};

inline constexpr int kDefaultHeatmapResolution = 64;

HeatmapStack zero_heatmaps(int width, int height, double stride);

/// Bilinear read at image coordinates; zero outside the cell-center lattice.
double sample(const HeatmapGrid& grid, const Eigen::Vector2d& uv, double stride);

/// d sample / d(u, v); zero outside the lattice.
Eigen::Vector2d sample_gradient(const HeatmapGrid& grid, const Eigen::Vector2d& uv, double stride);

/// Image coordinates of the highest cell center (first one on ties).
Eigen::Vector2d argmax_uv(const HeatmapGrid& grid, double stride);

struct JointOcclusion {
  bool occluded = false;                     // bimodal map with a dominant spurious mode
  Eigen::Vector2d spurious_offset = {0, 0};  // pixels from the true position
  bool suppressed = false;                   // all-zero map (joint outside the calibrated range)
};

inline constexpr double kTruePeakOccluded = 0.5;
inline constexpr double kSpuriousPeak = 0.8;

/// Synthetic detector output: a unit Gaussian bump per visible joint; an
/// occluded joint gets max(0.5 g(true), 0.8 g(true + offset)).
HeatmapStack synth_heatmap(std::span<const Eigen::Vector2d> gt_uv, double sigma_px,
                           std::span<const JointOcclusion> occlusion, int width = kDefaultHeatmapResolution,
                           int height = kDefaultHeatmapResolution, double stride = 10.0);

/// Little-endian float32, [joint][row][column].
void write_heatmap_blob(const std::filesystem::path& path, const HeatmapStack& stack);
HeatmapStack read_heatmap_blob(const std::filesystem::path& path, int width, int height, double stride);

}  // namespace egopose
