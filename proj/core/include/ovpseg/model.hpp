#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ovpseg/autodiff.hpp"
#include "ovpseg/geometry.hpp"
#include "ovpseg/params.hpp"
#include "ovpseg/tensor.hpp"
#include "ovpseg/vocab.hpp"

namespace ovpseg {

// Width of the per-voxel statistics row produced by voxel_stats().
inline constexpr int kVoxelStatWidth = 8;

/// Architecture knobs. Frozen at model construction; checkpoints refuse to
/// load into a model whose parameter shapes differ.
struct ModelConfig {
  int d_emb = 16;      // image-embedding width carried through fusion
  int d_lidar = 8;     // learned per-voxel geometry feature width
  int enc_hidden = 16; // hidden width of the two-layer voxel encoder
  int d_q = 32;        // query width
  int q_learn = 16;    // free (thing-capable) queries
  int layers = 2;      // cross-attention decoder layers
  double t_init = 0.07;  // initial softmax temperature (stored as log T)
  // When false, the voxel encoder is dropped entirely: the decoder and mask
  // head see only the lifted image embeddings (the baseline configuration).
  bool fuse_lidar = true;
};

void validate_model_config(const ModelConfig& config);  // ConfigError

/// Everything the differentiable pipeline produces for one scene. All
/// members share one graph, so a single backward() from any scalar loss
/// reaches every parameter that influenced it.
struct ModelForward {
  Var f_lidar;      // V x d_lidar      learned geometry features
                    //                  (undefined when fusion is off)
  Var fused;        // V x (d_lidar + d_emb), or V x d_emb without fusion
  Var queries;      // Q x d_q          refined queries, stuff rows first
  Var mask_logits;  // Q x V            inner products, pre-sigmoid
  Var v_q;          // Q x d_emb        per-query class embedding
  std::vector<Var> attention;  // per layer, Q x V, rows sum to 1
};

/// Query-based segmenter over voxelized scenes.
///
/// Query layout: rows [0, stuff_query_count) are bound to the base stuff
/// classes in vocabulary order (query k predicts the mask of the k-th base
/// stuff class; its values still train). Rows after that are free queries
/// that bind to instances through matching.
class Model {
 public:
  Model(const ModelConfig& config, int stuff_query_count, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  int stuff_query_count() const { return stuff_queries_; }
  int query_count() const { return stuff_queries_ + config_.q_learn; }

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // T = exp(log T): positive by construction, trainable through the log.
  Var temperature() const;

  // stats:     V x kVoxelStatWidth   (voxel_stats)
  // f_vclip:   V x d_emb             lifted image embeddings; treated as a
  //                                  frozen input — no gradient ever reaches
  //                                  the caller's tensor
  // positions: V x 3                 normalized voxel centers (voxel_positions)
  ModelForward forward(const Tensor& stats, const Var& f_vclip,
                       const Tensor& positions) const;
  ModelForward forward(const Tensor& stats, const Tensor& f_vclip,
                       const Tensor& positions) const;

  // Per-class logits: cosine(v_q, label row) / T per label, reduced to one
  // column per class by max over that class's labels. Label rows are frozen
  // inside (text embeddings never receive gradient).
  Var class_logits(const Var& v_q, const Var& label_rows,
                   const std::vector<int>& label_class, int n_classes) const;
  Var class_logits(const Var& v_q, const TextEmbeddings& embeds) const;

 private:
  ModelConfig config_;
  int stuff_queries_ = 0;
  ParamStore params_;
};

// V x kVoxelStatWidth statistics per occupied voxel: log1p(point count),
// centroid offset from the voxel center over the voxel size (3), coordinate
// variance over size^2 (3), mean intensity (0 when the cloud carries none).
// Accumulation runs in a canonical member order (coordinates, then
// intensity), so any permutation of the input points yields bitwise-identical
// rows.
Tensor voxel_stats(const PointCloud& cloud, const VoxelAssignment& assign,
                   const VoxelGrid& grid);

// V x 3 voxel centers scaled into [0, 1] by the grid span (attention keys
// get these as extra coordinates).
Tensor voxel_positions(const VoxelAssignment& assign, const VoxelGrid& grid);

}  // namespace ovpseg
