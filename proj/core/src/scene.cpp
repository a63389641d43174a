#include "ovpseg/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "ovpseg/errors.hpp"
#include "ovpseg/rng.hpp"

namespace ovpseg {

void validate_scene(const Scene& scene, const Vocabulary& vocab) {
  const std::size_t n = static_cast<std::size_t>(scene.count());
  if (scene.semantic.size() != n || scene.instance.size() != n) {
    throw ContractError("scene ground truth length does not match point count");
  }
  if (scene.rig.size() != scene.maps.size()) {
    throw ContractError("scene camera count does not match map count");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const int c = scene.semantic[i];
    if (c < 0 || c >= vocab.size()) {
      throw ContractError("point " + std::to_string(i) +
                          " has semantic index outside the vocabulary");
    }
    const bool thing = vocab.at(c).is_thing;
    if (thing && scene.instance[i] < 1) {
      throw ContractError("thing point " + std::to_string(i) +
                          " lacks an instance id");
    }
    if (!thing && scene.instance[i] != 0) {
      throw ContractError("stuff point " + std::to_string(i) +
                          " carries a nonzero instance id");
    }
  }
}

void validate_scene_config(const SceneConfig& c) {
  if (c.world_x <= 0 || c.world_y <= 0 || c.world_z <= 0) {
    throw ConfigError("world extents must be positive");
  }
  if (c.voxel_size <= 0) throw ConfigError("voxel size must be positive");
  if (c.image_w < 1 || c.image_h < 1) throw ConfigError("image size must be positive");
  if (c.d_emb < 4) throw ConfigError("embedding width must be at least 4");
  if (c.sigma < 0) throw ConfigError("pixel noise must be nonnegative");
  if (c.hidden_fraction < 0 || c.hidden_fraction >= 1) {
    throw ConfigError("hidden fraction must lie in [0, 1)");
  }
  if (c.things_min < 0 || c.things_max < c.things_min) {
    throw ConfigError("thing instance count range is empty");
  }
  if (c.instance_points_min < 1 || c.instance_points_max < c.instance_points_min) {
    throw ConfigError("instance point count range is empty");
  }
  if (c.stuff_points < 0) throw ConfigError("stuff point count must be nonnegative");
  if (c.thing_half_min <= 0 || c.thing_half_max < c.thing_half_min) {
    throw ConfigError("thing footprint range is empty");
  }
  if (c.thing_height_min <= 0 || c.thing_height_max < c.thing_height_min) {
    throw ConfigError("thing height range is empty");
  }
  if (c.intensity_noise < 0) throw ConfigError("intensity noise must be nonnegative");
  if (2.0 * c.thing_half_max + 0.6 > c.world_x ||
      2.0 * c.thing_half_max + 0.6 > c.world_y) {
    throw ConfigError("world too small for the largest thing footprint");
  }
}

VoxelGrid make_grid(const SceneConfig& c) {
  VoxelGrid g;
  g.size = c.voxel_size;
  g.origin = {0.0, 0.0, 0.0};
  g.extents = {static_cast<int>(std::ceil(c.world_x / c.voxel_size)),
               static_cast<int>(std::ceil(c.world_y / c.voxel_size)),
               static_cast<int>(std::ceil(c.world_z / c.voxel_size))};
  return g;
}

Tensor unknown_vector(const PrototypeProvider& provider) {
  const int d = provider.d_emb();
  const int c = provider.class_count();
  if (c >= d) {
    throw CapacityError("no direction orthogonal to all prototypes exists");
  }
  // Orthonormalize the prototypes, then strip their span from a seeded
  // gaussian draw. Retry against unlucky draws inside the span.
  std::vector<std::vector<double>> basis;
  for (int i = 0; i < c; ++i) {
    std::vector<double> v(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) v[std::size_t(k)] = provider.prototypes().at(i, k);
    for (const auto& b : basis) {
      double dot = 0.0;
      for (int k = 0; k < d; ++k) dot += v[std::size_t(k)] * b[std::size_t(k)];
      for (int k = 0; k < d; ++k) v[std::size_t(k)] -= dot * b[std::size_t(k)];
    }
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    if (n2 > 1e-20) {
      const double n = std::sqrt(n2);
      for (double& x : v) x /= n;
      basis.push_back(std::move(v));
    }
  }

  Rng rng(Rng::mix(provider.seed(), Rng::hash_string("unknown")));
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<double> v(static_cast<std::size_t>(d));
    for (double& x : v) x = rng.gaussian();
    for (const auto& b : basis) {
      double dot = 0.0;
      for (int k = 0; k < d; ++k) dot += v[std::size_t(k)] * b[std::size_t(k)];
      for (int k = 0; k < d; ++k) v[std::size_t(k)] -= dot * b[std::size_t(k)];
    }
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    if (n2 > 1e-12) {
      Tensor out = Tensor::zeros({d});
      const double n = std::sqrt(n2);
      for (int k = 0; k < d; ++k) out[std::size_t(k)] = v[std::size_t(k)] / n;
      return out;
    }
  }
  throw CapacityError("failed to find a direction orthogonal to the prototypes");
}

namespace {

struct ThingBox {
  double cx, cy, hx, hy, height;
};

bool boxes_collide(const ThingBox& a, const ThingBox& b, double pad) {
  return std::fabs(a.cx - b.cx) < a.hx + b.hx + pad &&
         std::fabs(a.cy - b.cy) < a.hy + b.hy + pad;
}

// 180-degree rotation about x: camera looks straight down -z from height h.
Tensor overhead_extrinsics(double cam_x, double cam_y, double cam_h) {
  return Tensor::row_matrix({{1, 0, 0, -cam_x},
                             {0, -1, 0, cam_y},
                             {0, 0, -1, cam_h},
                             {0, 0, 0, 1}});
}

}  // namespace

Scene generate_scene(const SceneConfig& config, const Vocabulary& vocab,
                     const PrototypeProvider& provider, std::uint64_t seed) {
  validate_scene_config(config);
  if (vocab.size() > provider.class_count()) {
    throw ConfigError("prototype provider does not cover the vocabulary");
  }
  if (provider.d_emb() != config.d_emb) {
    throw ConfigError("provider embedding width does not match scene config");
  }

  Rng rng(Rng::mix(seed, Rng::hash_string("scene")));
  const double kStuffTop = 0.2;  // stuff occupies z in [0, kStuffTop)

  std::vector<double> xs, ys, zs, intensity;
  std::vector<int> semantic, instance;
  auto push_point = [&](double x, double y, double z, int cls, int inst) {
    xs.push_back(x);
    ys.push_back(y);
    zs.push_back(z);
    semantic.push_back(cls);
    instance.push_back(inst);
    intensity.push_back((cls + 1.0) / (vocab.size() + 1.0) +
                        config.intensity_noise * rng.gaussian());
  };

  // Thing instances first: disjoint boxes resting on the stuff layer. Stuff
  // points are sampled afterwards, outside the footprints, so the floor
  // carries an occlusion shadow under every instance.
  std::vector<ThingBox> placed;
  int next_instance = 1;
  constexpr double kPad = 0.3;
  constexpr int kPlacementTries = 200;
  for (int c = 0; c < vocab.size(); ++c) {
    if (!vocab.at(c).is_thing) continue;
    const int count = rng.uniform_int(config.things_min, config.things_max);
    for (int inst = 0; inst < count; ++inst) {
      ThingBox box{};
      bool ok = false;
      for (int attempt = 0; attempt < kPlacementTries; ++attempt) {
        box.hx = rng.uniform(config.thing_half_min, config.thing_half_max);
        box.hy = rng.uniform(config.thing_half_min, config.thing_half_max);
        box.height = rng.uniform(config.thing_height_min, config.thing_height_max);
        box.cx = rng.uniform(box.hx, config.world_x - box.hx);
        box.cy = rng.uniform(box.hy, config.world_y - box.hy);
        ok = true;
        for (const ThingBox& other : placed) {
          if (boxes_collide(box, other, kPad)) {
            ok = false;
            break;
          }
        }
        if (ok) break;
      }
      if (!ok) {
        throw GenerationError("could not place instance " +
                              std::to_string(next_instance) + " of class '" +
                              vocab.at(c).name + "' after " +
                              std::to_string(kPlacementTries) + " tries");
      }
      placed.push_back(box);
      const int points =
          rng.uniform_int(config.instance_points_min, config.instance_points_max);
      const double top = std::min(kStuffTop + box.height, config.world_z);
      for (int i = 0; i < points; ++i) {
        push_point(rng.uniform(box.cx - box.hx, box.cx + box.hx),
                   rng.uniform(box.cy - box.hy, box.cy + box.hy),
                   rng.uniform(kStuffTop, top), c, next_instance);
      }
      ++next_instance;
    }
  }

  // Stuff classes tile the floor as y-strips in class-id order, skipping a
  // clearance ring around every footprint (at least a map pixel wide, so a
  // floor point never shares a pixel with an occluding instance).
  constexpr double kStuffClearance = 0.25;
  std::vector<int> stuff_ids;
  for (int c = 0; c < vocab.size(); ++c) {
    if (!vocab.at(c).is_thing) stuff_ids.push_back(c);
  }
  const int strips = static_cast<int>(stuff_ids.size());
  for (int s = 0; s < strips; ++s) {
    const double y0 = config.world_y * s / strips;
    const double y1 = config.world_y * (s + 1) / strips;
    for (int i = 0; i < config.stuff_points; ++i) {
      bool ok = false;
      for (int attempt = 0; attempt < kPlacementTries && !ok; ++attempt) {
        const double x = rng.uniform(0.0, config.world_x);
        const double y = rng.uniform(y0, y1);
        ok = true;
        for (const ThingBox& box : placed) {
          if (std::fabs(x - box.cx) < box.hx + kStuffClearance &&
              std::fabs(y - box.cy) < box.hy + kStuffClearance) {
            ok = false;
            break;
          }
        }
        if (ok) {
          push_point(x, y, rng.uniform(0.0, kStuffTop),
                     stuff_ids[std::size_t(s)], 0);
        }
      }
      if (!ok) {
        throw GenerationError("no free floor left in strip " +
                              std::to_string(s));
      }
    }
  }

  const int n = static_cast<int>(xs.size());
  if (n == 0) throw GenerationError("scene config produced no points");
  Tensor points = Tensor::zeros({n, 3});
  for (int i = 0; i < n; ++i) {
    points.at(i, 0) = xs[std::size_t(i)];
    points.at(i, 1) = ys[std::size_t(i)];
    points.at(i, 2) = zs[std::size_t(i)];
  }

  Scene scene;
  scene.id = seed;
  scene.cloud = make_point_cloud(std::move(points), std::move(intensity));
  scene.semantic = std::move(semantic);
  scene.instance = std::move(instance);

  // Two overhead cameras split the visible x-range; the band beyond
  // visible_x stays outside both frustums. Focal lengths are sized so the
  // floor maps just past each camera's slab (2% overlap), which keeps the
  // hidden band hidden at every depth that matters.
  const double cam_h = config.world_z + 6.0;
  const double visible_x = (1.0 - config.hidden_fraction) * config.world_x;
  const int cams = 2;
  for (int c = 0; c < cams; ++c) {
    const double slab_half = visible_x / (2.0 * cams);
    const double cam_x = (2.0 * c + 1.0) * slab_half;
    const double cam_y = config.world_y / 2.0;
    // With a hidden band, fx keeps the frustum 2% inside the slab even at
    // floor depth, so nothing beyond visible_x is ever imaged (at the cost
    // of thin blind seams between slabs). Without one there is nothing to
    // hide: fx is sized like fy, 2% past the slab at the minimum depth, and
    // the whole world stays visible at every height.
    const double fx =
        config.hidden_fraction > 0.0
            ? (config.image_w / 2.0) * cam_h * 1.02 / slab_half
            : (config.image_w / 2.0) * (cam_h - config.world_z) /
                  (1.02 * slab_half);
    const double fy = (config.image_h / 2.0) * (cam_h - config.world_z) /
                      (1.02 * config.world_y / 2.0);
    scene.rig.emplace_back(fx, fy, config.image_w / 2.0, config.image_h / 2.0,
                           overhead_extrinsics(cam_x, cam_y, cam_h),
                           config.image_w, config.image_h);
  }

  // Render the embedding maps: nearest point wins each pixel (z-buffer on
  // camera depth), pixel = normalize(prototype + sigma * gaussian); empty
  // pixels get the fixed unknown vector, no noise.
  const Tensor unknown = unknown_vector(provider);
  const int w = config.image_w, h = config.image_h, d = config.d_emb;
  for (const CameraModel& cam : scene.rig) {
    std::vector<double> depth(static_cast<std::size_t>(w) * h,
                              std::numeric_limits<double>::infinity());
    std::vector<int> winner(static_cast<std::size_t>(w) * h, -1);
    for (int i = 0; i < n; ++i) {
      const auto px = project(scene.cloud.point(i), cam);
      if (!px) continue;
      const double z = cam.to_camera(scene.cloud.point(i))[2];
      const int x = static_cast<int>(std::floor((*px)[0]));
      const int y = static_cast<int>(std::floor((*px)[1]));
      const std::size_t slot = static_cast<std::size_t>(y) * w + x;
      if (z < depth[slot]) {
        depth[slot] = z;
        winner[slot] = i;
      }
    }
    Tensor map = Tensor::zeros({h, w, d});
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t slot = static_cast<std::size_t>(y) * w + x;
        double* pixel = map.data() + slot * d;
        if (winner[slot] < 0) {
          for (int k = 0; k < d; ++k) pixel[k] = unknown[std::size_t(k)];
          continue;
        }
        const int cls = scene.semantic[static_cast<std::size_t>(winner[slot])];
        if (config.sigma == 0.0) {
          // Noise-free pixels reproduce the prototype bit-for-bit; a
          // renormalize here would dirty the last mantissa bits.
          for (int k = 0; k < d; ++k) pixel[k] = provider.prototypes().at(cls, k);
          continue;
        }
        double n2 = 0.0;
        for (int k = 0; k < d; ++k) {
          pixel[k] = provider.prototypes().at(cls, k) +
                     config.sigma * rng.gaussian();
          n2 += pixel[k] * pixel[k];
        }
        if (n2 == 0.0) throw GenerationError("degenerate embedding pixel");
        const double norm = std::sqrt(n2);
        for (int k = 0; k < d; ++k) pixel[k] /= norm;
      }
    }
    scene.maps.push_back(std::move(map));
  }

  validate_scene(scene, vocab);
  return scene;
}

std::vector<Scene> make_dataset(const SceneConfig& config,
                                const Vocabulary& vocab,
                                const PrototypeProvider& provider,
                                int n_scenes, std::uint64_t seed) {
  if (n_scenes < 1) throw ConfigError("dataset needs at least one scene");

  auto has_base_and_novel = [&](const Scene& s) {
    bool base = false, novel = false;
    for (int c : s.semantic) {
      if (vocab.at(c).is_base) base = true;
      else novel = true;
    }
    return base && (novel || vocab.novel_count() == 0);
  };

  std::vector<Scene> scenes;
  scenes.reserve(static_cast<std::size_t>(n_scenes));
  constexpr int kResampleTries = 20;
  for (int i = 0; i < n_scenes; ++i) {
    Scene s;
    bool ok = false;
    for (int attempt = 0; attempt < kResampleTries; ++attempt) {
      s = generate_scene(
          config, vocab, provider,
          Rng::mix(seed, static_cast<std::uint64_t>(i) +
                             static_cast<std::uint64_t>(attempt) * 1000003ull));
      if (has_base_and_novel(s)) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw GenerationError("scene " + std::to_string(i) +
                            " never contained both base and novel geometry");
    }
    scenes.push_back(std::move(s));
  }

  // Every novel class must appear somewhere; resample the last scene on a
  // shifted seed stream until the set is covered.
  auto missing_novel = [&]() {
    std::vector<bool> seen(static_cast<std::size_t>(vocab.size()), false);
    for (const Scene& s : scenes) {
      for (int c : s.semantic) seen[static_cast<std::size_t>(c)] = true;
    }
    for (int c = 0; c < vocab.size(); ++c) {
      if (!vocab.at(c).is_base && !seen[static_cast<std::size_t>(c)]) return true;
    }
    return false;
  };
  for (int attempt = 0; missing_novel(); ++attempt) {
    if (attempt >= kResampleTries) {
      throw GenerationError("dataset never covered every novel class");
    }
    scenes.back() = generate_scene(
        config, vocab, provider,
        Rng::mix(seed, 7777777ull + static_cast<std::uint64_t>(attempt)));
  }
  return scenes;
}

}  // namespace ovpseg
