#include "egopose/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "egopose/binary_io.hpp"
#include "egopose/errors.hpp"

namespace egopose {

void HeatmapStack::validate() const {
  const auto rows = grids[0].rows();
  const auto cols = grids[0].cols();
  if (rows < 2 || cols < 2) throw ValidationError("heatmap: grids must be at least 2x2");
  if (!(stride > 0.0)) throw ValidationError("heatmap: stride must be positive");
  for (const auto& g : grids) {
    if (g.rows() != rows || g.cols() != cols) throw ValidationError("heatmap: joints have different resolutions");
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const float v = g.data()[i];
      if (!std::isfinite(v) || v < 0.0f || v > 1.0f + 1e-6f) {
        throw ValidationError("heatmap: value out of [0, 1]: " + std::to_string(v));
      }
    }
  }
}

HeatmapStack zero_heatmaps(int width, int height, double stride) {
  HeatmapStack s;
  for (auto& g : s.grids) g = HeatmapGrid::Zero(height, width);
  s.stride = stride;
  return s;
}

namespace {

struct Cell {
  Eigen::Index x0, y0;
  double fx, fy;
};

// Lattice of cell centers spans [0, W-1] x [0, H-1] in heatmap coordinates.
bool locate(const HeatmapGrid& grid, const Eigen::Vector2d& uv, double stride, Cell& cell) {
  const double hx = uv.x() / stride - 0.5;
  const double hy = uv.y() / stride - 0.5;
  const auto w = grid.cols();
  const auto h = grid.rows();
  if (!(hx >= 0.0 && hy >= 0.0 && hx <= static_cast<double>(w - 1) && hy <= static_cast<double>(h - 1))) {
    return false;
  }
  cell.x0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(hx), w - 2);
  cell.y0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(hy), h - 2);
  cell.fx = hx - static_cast<double>(cell.x0);
  cell.fy = hy - static_cast<double>(cell.y0);
  return true;
}

}  // namespace

double sample(const HeatmapGrid& grid, const Eigen::Vector2d& uv, double stride) {
  Cell c;
  if (!locate(grid, uv, stride, c)) return 0.0;
  const double a = grid(c.y0, c.x0), b = grid(c.y0, c.x0 + 1);
  const double d = grid(c.y0 + 1, c.x0), e = grid(c.y0 + 1, c.x0 + 1);
  return (1.0 - c.fy) * ((1.0 - c.fx) * a + c.fx * b) + c.fy * ((1.0 - c.fx) * d + c.fx * e);
}

Eigen::Vector2d sample_gradient(const HeatmapGrid& grid, const Eigen::Vector2d& uv, double stride) {
  Cell c;
  if (!locate(grid, uv, stride, c)) return Eigen::Vector2d::Zero();
  const double a = grid(c.y0, c.x0), b = grid(c.y0, c.x0 + 1);
  const double d = grid(c.y0 + 1, c.x0), e = grid(c.y0 + 1, c.x0 + 1);
  const double dfx = (1.0 - c.fy) * (b - a) + c.fy * (e - d);
  const double dfy = (1.0 - c.fx) * (d - a) + c.fx * (e - b);
  return Eigen::Vector2d(dfx, dfy) / stride;
}

Eigen::Vector2d argmax_uv(const HeatmapGrid& grid, double stride) {
  // Plain scan: Eigen's vectorized maxCoeff does not promise the first maximum.
  Eigen::Index r = 0, c = 0;
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    for (Eigen::Index j = 0; j < grid.cols(); ++j) {
      if (grid(i, j) > grid(r, c)) r = i, c = j;
    }
  }
  return {(static_cast<double>(c) + 0.5) * stride, (static_cast<double>(r) + 0.5) * stride};
}

HeatmapStack synth_heatmap(std::span<const Eigen::Vector2d> gt_uv, double sigma_px,
                           std::span<const JointOcclusion> occlusion, int width, int height, double stride) {
  if (!(sigma_px > 0.0)) throw ValidationError("synth_heatmap: sigma must be positive");
  if (gt_uv.size() != kNumJoints) throw ValidationError("synth_heatmap: expected 15 joint positions");
  if (!occlusion.empty() && occlusion.size() != kNumJoints) {
    throw ValidationError("synth_heatmap: occlusion spec must be empty or cover 15 joints");
  }
  HeatmapStack s = zero_heatmaps(width, height, stride);
  const double inv2s2 = 1.0 / (2.0 * sigma_px * sigma_px);
  for (int j = 0; j < kNumJoints; ++j) {
    const JointOcclusion occ = occlusion.empty() ? JointOcclusion{} : occlusion[static_cast<std::size_t>(j)];
    if (occ.suppressed) continue;
    const Eigen::Vector2d mu = gt_uv[static_cast<std::size_t>(j)];
    const Eigen::Vector2d spur = mu + occ.spurious_offset;
    auto& g = s.grids[static_cast<std::size_t>(j)];
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const Eigen::Vector2d center((c + 0.5) * stride, (r + 0.5) * stride);
        const double gt = std::exp(-(center - mu).squaredNorm() * inv2s2);
        double v = gt;
        if (occ.occluded) {
          const double gs = std::exp(-(center - spur).squaredNorm() * inv2s2);
          v = std::max(kTruePeakOccluded * gt, kSpuriousPeak * gs);
        }
        g(r, c) = static_cast<float>(v);
      }
    }
  }
  return s;
}

void write_heatmap_blob(const std::filesystem::path& path, const HeatmapStack& stack) {
  std::vector<float> data;
  data.reserve(static_cast<std::size_t>(kNumJoints * stack.width() * stack.height()));
  for (const auto& g : stack.grids) data.insert(data.end(), g.data(), g.data() + g.size());
  write_f32_file(path, data);
}

HeatmapStack read_heatmap_blob(const std::filesystem::path& path, int width, int height, double stride) {
  const std::size_t per_joint = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  const auto data = read_f32_file(path, per_joint * kNumJoints);
  HeatmapStack s = zero_heatmaps(width, height, stride);
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(j * per_joint), per_joint, s.grids[j].data());
  }
  return s;
}

}  // namespace egopose
