#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ovpseg/scene.hpp"
#include "ovpseg/vocab.hpp"

namespace ovpseg {

// Scene files are length-prefixed binary: a 4-byte magic "OVSC", a u32
// format version, then tagged sections (tag, u64 payload size, payload).
// All integers are little-endian fixed width; doubles are raw IEEE-754
// bits, so round-trips are exact. Layout details live in the README.
inline constexpr std::uint32_t kSceneFileVersion = 1;

// Dataset manifests are flat "key = value" text, one entry per line.
inline constexpr std::uint32_t kManifestVersion = 1;

void save_scene(const Scene& scene, const std::string& path);

// Throws ParseError (with byte offset) on malformed or truncated files and
// VersionError when the format version is not supported.
Scene load_scene(const std::string& path);

// Everything needed to reconstruct the vocabulary, prototypes, and text
// embeddings that a stored dataset was generated against.
struct DatasetManifest {
  std::uint32_t version = kManifestVersion;
  std::string split;  // "train" or "eval"
  std::uint64_t generation_seed = 0;
  std::uint64_t prototype_seed = 0;
  int embedding_dim = 0;
  double label_noise = 0.0;
  double pixel_noise = 0.0;
  std::vector<ClassInfo> classes;
  std::vector<std::string> scene_files;  // ordered, relative to the manifest
};

void save_manifest(const DatasetManifest& manifest, const std::string& path);

// Throws ParseError on malformed text and VersionError on an unknown
// manifest_version value.
DatasetManifest load_manifest(const std::string& path);

// Writes `dir/manifest.txt` plus one `scene_NNNNN.ovsc` file per scene and
// returns the manifest actually written (scene_files filled in).
DatasetManifest save_dataset(const std::vector<Scene>& scenes,
                             DatasetManifest manifest, const std::string& dir);

struct Dataset {
  DatasetManifest manifest;
  std::vector<Scene> scenes;
};

// Loads `dir/manifest.txt` and every scene file it lists, in order.
Dataset load_dataset(const std::string& dir);

// Canonical fingerprint of the vocabulary and embedding space a dataset was
// generated with (class list, embedding width, prototype seed, label noise).
// Checkpoints store it; training and evaluation refuse a dataset whose
// signature differs from the checkpoint's. Deliberately excludes the
// generation seed so train/eval splits of the same vocabulary agree.
std::string dataset_signature(const DatasetManifest& manifest);

}  // namespace ovpseg
