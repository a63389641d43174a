#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "ovpseg/autodiff.hpp"
#include "ovpseg/geometry.hpp"
#include "ovpseg/scene.hpp"
#include "ovpseg/tensor.hpp"
#include "ovpseg/vocab.hpp"

namespace ovpseg {

/// One annotated segment on the voxel axis: the target side of matching.
struct GroundTruthSegment {
  int class_id = 0;
  int instance_id = 0;             // 0 for stuff, >= 1 for things
  std::vector<std::uint8_t> mask;  // V entries, majority-vote ownership
  int voxel_count = 0;             // number of set mask entries
};

// Builds segments for one scene: every voxel goes to the (class, instance)
// pair holding the majority of its points (ties to the lowest pair), then
// voxels group into segments. Segments that win no voxel are dropped.
// Ordered by (class id, instance id).
std::vector<GroundTruthSegment> ground_truth_segments(
    const Scene& scene, const VoxelAssignment& assign);

/// Query-to-segment pairing for one scene. Stuff queries pair by class
/// binding; learnable queries pair through minimum-cost matching.
struct Matching {
  std::vector<std::pair<int, int>> pairs;  // (query, segment), query-ascending
  int query_count = 0;

  int segment_for(int query) const {
    for (const auto& [q, s] : pairs) {
      if (q == query) return s;
    }
    return -1;
  }
  bool is_matched(int query) const { return segment_for(query) >= 0; }
};

struct LossWeights {
  double w_alpha = 1.0;   // classification
  double w_beta = 1.0;    // mask
  double w_lambda = 1.0;  // object-level distillation
  double w_gamma = 0.1;   // voxel-level distillation
};

void validate_loss_weights(const LossWeights& weights);  // ConfigError

struct FocalParams {
  double gamma = 2.0;
  double alpha = 0.25;
};

// Pairs ground truth with queries. Base stuff class k binds to fixed query
// k whenever its segment exists; base thing segments go to the learnable
// queries (global index stuff_query_count + j) by minimum-cost assignment on
//   w_alpha * (1 - softmax class prob of the GT class)
// + w_beta  * (1 - dice(sigmoid mask row, GT mask)).
// Passing stuff_query_count = 0 selects the shared-query configuration: no
// fixed bindings, and base stuff segments compete for queries through the
// same minimum-cost assignment as things. A nonzero count must cover the
// base stuff classes exactly (ContractError otherwise).
// Novel-class segments never match: training treats them as unannotated.
// More competing segments than available queries -> CapacityError.
Matching match_queries(const Tensor& class_logits,  // Q x C_B
                       const Tensor& mask_logits,   // Q x V
                       const std::vector<GroundTruthSegment>& segments,
                       const Vocabulary& vocab, int stuff_query_count,
                       const LossWeights& weights);

// Mean over all queries of the one-vs-all focal loss on base-class
// probabilities (softmax of the class logits, computed by the caller);
// unmatched queries train toward the all-zero (no-object) target.
Var loss_cls(const Var& class_probs, const Matching& matching,
             const std::vector<GroundTruthSegment>& segments,
             const Vocabulary& vocab, const FocalParams& focal = {});

// Mean over matched pairs of BCE + dice between the sigmoid mask row and
// the GT membership; logits are clipped to [-20, 20] first. The mask head
// is class-agnostic, so unmatched queries get no mask penalty.
Var loss_mask(const Var& mask_logits, const Matching& matching,
              const std::vector<GroundTruthSegment>& segments);

// Pooled image embedding of one predicted mask: mean F_vclip row over
// {prob > 0.5 and valid}; if that set is empty, the validity-masked
// probability-weighted average. No valid voxel at all -> nullopt (the
// caller skips this query's distillation target). Plain tensors in and out:
// the target carries no gradient by design.
std::optional<Tensor> mask_pool(const Tensor& probs,  // V entries
                                const Tensor& f_vclip,
                                const std::vector<std::uint8_t>& validity);

// Mean over matched queries of 1 - cosine(v_q, pooled target); queries with
// no pooled target (or a zero-norm one) drop out of the mean.
Var loss_object_distill(const Var& v_q, const Matching& matching,
                        const Tensor& mask_probs,  // Q x V, sigmoid, plain
                        const Tensor& f_vclip,
                        const std::vector<std::uint8_t>& validity);

// Per-voxel convex recombination of query embeddings: weights are the
// softmax over queries of each voxel's mask logits, so row v of the result
// lies in the convex hull of the query embeddings. Involves every query.
Var reconstruct_voxel_features(const Var& mask_logits,  // Q x V
                               const Var& f_qemb);      // Q x D_emb

// Mean absolute error between reconstruction and lifted embeddings over
// valid voxels only; zero-padded voxels are coverage gaps, not targets.
// No valid voxels -> constant 0.
Var loss_voxel_distill(const Var& f_rec, const Tensor& f_vclip,
                       const std::vector<std::uint8_t>& validity);

// w_alpha*L_cls + w_beta*L_mask + w_lambda*L_O + w_gamma*L_V.
Var total_loss(const Var& l_cls, const Var& l_mask, const Var& l_object,
               const Var& l_voxel, const LossWeights& weights);

}  // namespace ovpseg
