#pragma once

#include <cstdint>
#include <vector>

#include "ovpseg/geometry.hpp"
#include "ovpseg/tensor.hpp"
#include "ovpseg/vocab.hpp"

namespace ovpseg {

/// A labeled synthetic scene: points with per-point ground truth, a camera
/// rig, and per-camera pixel embedding maps (the frozen "backbone" output —
/// stored, never recomputed).
struct Scene {
  PointCloud cloud;
  std::vector<int> semantic;   // N class ids
  std::vector<int> instance;   // N ids; 0 for stuff, >= 1 for things
  std::vector<CameraModel> rig;
  std::vector<Tensor> maps;    // per camera, H x W x D_emb
  std::uint64_t id = 0;

  int count() const { return cloud.count(); }
};

// Throws ContractError when gt lengths, ids, or class indices are broken.
void validate_scene(const Scene& scene, const Vocabulary& vocab);

/// Knobs for the generator. World is the box [0,world_x] x [0,world_y] x
/// [0,world_z]; stuff classes tile the floor as y-strips, thing instances
/// are disjoint boxes resting on it, and a band of the world along +x stays
/// outside every camera frustum.
struct SceneConfig {
  double world_x = 16.0;
  double world_y = 16.0;
  double world_z = 4.0;
  double voxel_size = 0.8;
  int image_w = 64;
  int image_h = 64;
  int d_emb = 16;
  double sigma = 0.05;            // embedding map pixel noise
  double hidden_fraction = 0.15;  // x-fraction of the world no camera sees
  int things_min = 1;             // instances per thing class
  int things_max = 3;
  int instance_points_min = 60;
  int instance_points_max = 140;
  int stuff_points = 500;  // per stuff class
  double thing_half_min = 0.45;  // footprint half-extent, meters
  double thing_half_max = 0.90;
  double thing_height_min = 0.6;
  double thing_height_max = 1.6;
  double intensity_noise = 0.05;
};

void validate_scene_config(const SceneConfig& config);

// Voxel lattice covering the configured world box.
VoxelGrid make_grid(const SceneConfig& config);

// Fixed embedding for pixels no geometry covers, orthogonal to every class
// prototype (off the class manifold on purpose).
Tensor unknown_vector(const PrototypeProvider& provider);

// Deterministic per (config, vocab, provider, seed). Throws GenerationError
// when instance placement cannot satisfy disjointness.
Scene generate_scene(const SceneConfig& config, const Vocabulary& vocab,
                     const PrototypeProvider& provider, std::uint64_t seed);

// n_scenes scenes with per-scene seeds derived from `seed`; resamples until
// every scene holds base and novel geometry and every novel class appears
// somewhere in the set.
std::vector<Scene> make_dataset(const SceneConfig& config,
                                const Vocabulary& vocab,
                                const PrototypeProvider& provider,
                                int n_scenes, std::uint64_t seed);

}  // namespace ovpseg
