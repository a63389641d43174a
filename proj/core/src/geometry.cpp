#include "ovpseg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ovpseg/errors.hpp"

namespace ovpseg {

PointCloud make_point_cloud(Tensor points, std::vector<double> intensity) {
  if (points.ndim() != 2 || points.cols() != 3) {
    throw DimensionError("point cloud must be N x 3");
  }
  if (points.rows() < 1) throw DimensionError("point cloud needs at least one point");
  if (!intensity.empty() &&
      intensity.size() != static_cast<std::size_t>(points.rows())) {
    throw DimensionError("intensity length does not match point count");
  }
  for (double v : intensity) {
    if (!std::isfinite(v)) throw DimensionError("non-finite intensity value");
  }
  return PointCloud{std::move(points), std::move(intensity)};
}

CameraModel::CameraModel(double fx, double fy, double cx, double cy,
                         Tensor extrinsics, int width, int height)
    : fx_(fx), fy_(fy), cx_(cx), cy_(cy),
      extrinsics_(std::move(extrinsics)), width_(width), height_(height) {
  if (fx_ <= 0.0 || fy_ <= 0.0) throw ConfigError("camera focal lengths must be positive");
  if (width_ < 1 || height_ < 1) throw ConfigError("camera image size must be at least 1x1");
  if (extrinsics_.ndim() != 2 || extrinsics_.rows() != 4 || extrinsics_.cols() != 4) {
    throw DimensionError("camera extrinsics must be 4 x 4");
  }
  // Rotation block must be orthonormal: R^T R = I within 1e-9.
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += extrinsics_.at(k, i) * extrinsics_.at(k, j);
      const double want = i == j ? 1.0 : 0.0;
      if (std::fabs(acc - want) > 1e-9) {
        throw ConfigError("camera extrinsics rotation block is not orthonormal");
      }
    }
  }
  const double bottom[4] = {extrinsics_.at(3, 0), extrinsics_.at(3, 1),
                            extrinsics_.at(3, 2), extrinsics_.at(3, 3)};
  if (bottom[0] != 0.0 || bottom[1] != 0.0 || bottom[2] != 0.0 || bottom[3] != 1.0) {
    throw ConfigError("camera extrinsics bottom row must be [0 0 0 1]");
  }
}

Tensor CameraModel::intrinsics() const {
  return Tensor::row_matrix({{fx_, 0.0, cx_}, {0.0, fy_, cy_}, {0.0, 0.0, 1.0}});
}

std::array<double, 3> CameraModel::to_camera(const std::array<double, 3>& p) const {
  std::array<double, 3> out{};
  for (int r = 0; r < 3; ++r) {
    out[r] = extrinsics_.at(r, 0) * p[0] + extrinsics_.at(r, 1) * p[1] +
             extrinsics_.at(r, 2) * p[2] + extrinsics_.at(r, 3);
  }
  return out;
}

void validate_grid(const VoxelGrid& grid) {
  if (!(grid.size > 0.0)) throw ConfigError("voxel size must be positive");
  for (int e : grid.extents) {
    if (e < 1) throw ConfigError("voxel grid extents must be at least 1");
  }
  for (double o : grid.origin) {
    if (!std::isfinite(o)) throw ConfigError("voxel grid origin must be finite");
  }
}

VoxelAssignment voxelize(const PointCloud& cloud, const VoxelGrid& grid) {
  validate_grid(grid);
  const int n = cloud.count();
  const auto [ex, ey, ez] = grid.extents;

  // Linear key (ix*ey + iy)*ez + iz sorts identically to (ix, iy, iz).
  std::vector<std::pair<std::int64_t, int>> keyed;  // (key, point index)
  keyed.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto p = cloud.point(i);
    const int ix = static_cast<int>(std::floor((p[0] - grid.origin[0]) / grid.size));
    const int iy = static_cast<int>(std::floor((p[1] - grid.origin[1]) / grid.size));
    const int iz = static_cast<int>(std::floor((p[2] - grid.origin[2]) / grid.size));
    if (ix < 0 || ix >= ex || iy < 0 || iy >= ey || iz < 0 || iz >= ez) continue;
    const std::int64_t key = (std::int64_t(ix) * ey + iy) * ez + iz;
    keyed.push_back({key, i});
  }
  std::sort(keyed.begin(), keyed.end());

  VoxelAssignment out;
  out.point_voxel.assign(static_cast<std::size_t>(n), VoxelAssignment::kOutOfBounds);
  std::int64_t last_key = -1;
  for (const auto& [key, point] : keyed) {
    if (out.voxels.empty() || key != last_key) {
      last_key = key;
      const int iz = static_cast<int>(key % ez);
      const int iy = static_cast<int>((key / ez) % ey);
      const int ix = static_cast<int>(key / (std::int64_t(ey) * ez));
      out.voxels.push_back({{ix, iy, iz}, {}});
    }
    out.point_voxel[static_cast<std::size_t>(point)] =
        static_cast<int>(out.voxels.size()) - 1;
    out.voxels.back().members.push_back(point);
  }
  return out;
}

std::optional<std::array<double, 2>> project(const std::array<double, 3>& p,
                                             const CameraModel& cam) {
  const auto c = cam.to_camera(p);
  if (c[2] <= 0.0) return std::nullopt;
  const double u = cam.fx() * c[0] / c[2] + cam.cx();
  const double v = cam.fy() * c[1] / c[2] + cam.cy();
  if (u < 0.0 || u >= cam.width() || v < 0.0 || v >= cam.height()) {
    return std::nullopt;
  }
  return std::array<double, 2>{u, v};
}

LiftedFeatures lift_features(const VoxelAssignment& assign,
                             const PointCloud& cloud,
                             const std::vector<CameraModel>& cams,
                             const std::vector<Tensor>& maps) {
  if (cams.size() != maps.size()) {
    throw ConfigError("camera count " + std::to_string(cams.size()) +
                      " does not match embedding map count " +
                      std::to_string(maps.size()));
  }
  if (cams.empty()) throw ConfigError("lift_features needs at least one camera");
  const int d = maps[0].dim(2);
  for (std::size_t c = 0; c < cams.size(); ++c) {
    const Tensor& m = maps[c];
    if (m.ndim() != 3 || m.dim(0) != cams[c].height() ||
        m.dim(1) != cams[c].width() || m.dim(2) != d) {
      throw ConfigError("embedding map " + std::to_string(c) +
                        " does not match its camera image size");
    }
  }

  const int v_count = assign.voxel_count();
  LiftedFeatures out;
  out.f_vclip = Tensor::zeros({v_count, d});
  out.validity.assign(static_cast<std::size_t>(v_count), 0);

  for (int vi = 0; vi < v_count; ++vi) {
    double* row = out.f_vclip.data() + std::size_t(vi) * d;
    int hits = 0;
    for (int point : assign.voxels[static_cast<std::size_t>(vi)].members) {
      const auto pw = cloud.point(point);
      for (std::size_t c = 0; c < cams.size(); ++c) {
        const auto px = project(pw, cams[c]);
        if (!px) continue;
        const int x = static_cast<int>(std::floor((*px)[0]));
        const int y = static_cast<int>(std::floor((*px)[1]));
        const double* e =
            maps[c].data() + (std::size_t(y) * cams[c].width() + x) * d;
        for (int k = 0; k < d; ++k) row[k] += e[k];
        ++hits;
        break;  // first visible camera wins
      }
    }
    if (hits > 0) {
      for (int k = 0; k < d; ++k) row[k] /= hits;
      out.validity[static_cast<std::size_t>(vi)] = 1;
    }
  }
  return out;
}

}  // namespace ovpseg
