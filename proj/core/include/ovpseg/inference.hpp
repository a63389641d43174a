#pragma once

// Panoptic decoding: turn per-query class scores and voxel mask logits into
// a per-point labeling with instance ids, in the same shape ground truth is
// expressed, so the metrics can consume either side.

#include <vector>

#include "ovpseg/geometry.hpp"
#include "ovpseg/scene.hpp"
#include "ovpseg/tensor.hpp"
#include "ovpseg/vocab.hpp"

namespace ovpseg {

// Semantic label for points no prediction (or no voxel) covers.
inline constexpr int kVoidClass = -1;

struct InferenceParams {
  // Queries whose best class probability falls below this never claim voxels.
  double confidence_threshold = 0.25;
};

// Throws ConfigError unless the threshold lies in [0, 1].
void validate_inference_params(const InferenceParams& params);

// One (class, instance) group of points.
struct SegmentInfo {
  int class_id = kVoidClass;
  int instance_id = 0;  // 0 for stuff; dense ids starting at 1 for things
  double confidence = 1.0;
};

// Per-point panoptic labeling plus the segment table behind it.
struct PanopticPrediction {
  std::vector<int> semantic;  // class id per point, kVoidClass when uncovered
  std::vector<int> instance;  // instance id per point (0 for stuff and void)
  std::vector<SegmentInfo> segments;

  int count() const { return static_cast<int>(semantic.size()); }
};

// Decode query outputs into per-point labels.
//
// `scores` is Q x C (class probabilities per query, columns indexed by class
// id over the full vocabulary); `mask_logits` is Q x V over the occupied
// voxels of `assign`. Each query's prediction is its best-scoring class, and
// queries whose best score falls below the confidence threshold are dropped.
// Every voxel then goes to the surviving query maximizing
//   (query's best class probability) * sigmoid(mask logit at that voxel),
// ties resolved toward the lowest query index. Winning queries predicting
// thing classes mint dense instance ids (in query order, starting at 1);
// voxels won by stuff-predicting queries merge into one segment per class.
// Points inherit their voxel's label; points outside the grid — and every
// point when no query survives the threshold — come back void.
//
// Throws DimensionError when the score/mask/vocabulary shapes disagree.
PanopticPrediction panoptic_inference(const Tensor& scores,
                                      const Tensor& mask_logits,
                                      const VoxelAssignment& assign,
                                      const Vocabulary& vocab,
                                      const InferenceParams& params = {});

// Ground-truth view of a scene in the shape the metrics consume. Segment
// confidences are 1; segments are ordered by (class, instance).
PanopticPrediction ground_truth_prediction(const Scene& scene);

}  // namespace ovpseg
