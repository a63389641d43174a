#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "ovpseg/tensor.hpp"

namespace ovpseg {

/// Unordered point set in meters, with an optional per-point intensity
/// channel (empty vector = absent).
struct PointCloud {
  Tensor points;  // N x 3
  std::vector<double> intensity;

  int count() const { return points.rows(); }
  std::array<double, 3> point(int i) const {
    return {points.at(i, 0), points.at(i, 1), points.at(i, 2)};
  }
};

// Validates N >= 1, a 3-wide layout, and intensity length (0 or N).
PointCloud make_point_cloud(Tensor points, std::vector<double> intensity = {});

/// Pinhole camera: 3x3 intrinsics plus a 4x4 world-to-camera rigid
/// transform. Construction checks fx, fy > 0 and rotation orthonormality.
class CameraModel {
 public:
  CameraModel(double fx, double fy, double cx, double cy, Tensor extrinsics,
              int width, int height);

  double fx() const { return fx_; }
  double fy() const { return fy_; }
  double cx() const { return cx_; }
  double cy() const { return cy_; }
  int width() const { return width_; }
  int height() const { return height_; }
  const Tensor& extrinsics() const { return extrinsics_; }
  Tensor intrinsics() const;  // 3x3 [[fx,0,cx],[0,fy,cy],[0,0,1]]

  // World point to camera frame.
  std::array<double, 3> to_camera(const std::array<double, 3>& p) const;

 private:
  double fx_, fy_, cx_, cy_;
  Tensor extrinsics_;  // 4 x 4
  int width_, height_;
};

/// Axis-aligned voxel lattice: cubic voxels of edge `size` starting at
/// `origin`, `extents[k]` voxels along axis k.
struct VoxelGrid {
  double size = 1.0;
  std::array<double, 3> origin{0.0, 0.0, 0.0};
  std::array<int, 3> extents{1, 1, 1};

  std::array<double, 3> center(const std::array<int, 3>& idx) const {
    return {origin[0] + (idx[0] + 0.5) * size,
            origin[1] + (idx[1] + 0.5) * size,
            origin[2] + (idx[2] + 0.5) * size};
  }
};

void validate_grid(const VoxelGrid& grid);

struct OccupiedVoxel {
  std::array<int, 3> index{};
  std::vector<int> members;  // point indices
};

/// Result of voxelize(): per-point voxel slot (kOutOfBounds for points
/// outside the grid) and occupied voxels in lexicographic index order.
struct VoxelAssignment {
  static constexpr int kOutOfBounds = -1;

  std::vector<int> point_voxel;       // N entries, slot into voxels or -1
  std::vector<OccupiedVoxel> voxels;  // V entries

  int voxel_count() const { return static_cast<int>(voxels.size()); }
};

// floor((p - origin)/size) per axis; deterministic. Out-of-extent points are
// flagged, never dropped.
VoxelAssignment voxelize(const PointCloud& cloud, const VoxelGrid& grid);

// World point to continuous pixel coordinates, or nullopt when the point is
// behind the camera or lands outside the image.
std::optional<std::array<double, 2>> project(const std::array<double, 3>& p,
                                             const CameraModel& cam);

/// F_vclip rows with a validity flag per voxel; invalid rows are exactly
/// zero (padding for voxels no camera sees).
struct LiftedFeatures {
  Tensor f_vclip;                      // V x D_emb
  std::vector<std::uint8_t> validity;  // V entries, 0 or 1
};

// Per point: nearest-pixel embedding from the first camera that sees it.
// Per voxel: mean over member points that found a pixel. `maps` are
// H x W x D_emb tensors, one per camera, matching each camera's image size.
LiftedFeatures lift_features(const VoxelAssignment& assign,
                             const PointCloud& cloud,
                             const std::vector<CameraModel>& cams,
                             const std::vector<Tensor>& maps);

}  // namespace ovpseg
