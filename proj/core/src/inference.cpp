#include "ovpseg/inference.hpp"

#include <algorithm>
#include <map>
#include <string>
#include <utility>

#include "ovpseg/autodiff.hpp"
#include "ovpseg/errors.hpp"

namespace ovpseg {

void validate_inference_params(const InferenceParams& params) {
  if (!(params.confidence_threshold >= 0.0 &&
        params.confidence_threshold <= 1.0)) {
    throw ConfigError("confidence threshold must lie in [0, 1], got " +
                      std::to_string(params.confidence_threshold));
  }
}

PanopticPrediction panoptic_inference(const Tensor& scores,
                                      const Tensor& mask_logits,
                                      const VoxelAssignment& assign,
                                      const Vocabulary& vocab,
                                      const InferenceParams& params) {
  validate_inference_params(params);
  if (scores.ndim() != 2 || mask_logits.ndim() != 2) {
    throw DimensionError("panoptic_inference: scores and masks must be 2-D");
  }
  const int q = scores.rows();
  const int v = assign.voxel_count();
  if (mask_logits.rows() != q) {
    throw DimensionError("panoptic_inference: " + std::to_string(q) +
                         " score rows vs " +
                         std::to_string(mask_logits.rows()) + " mask rows");
  }
  if (mask_logits.cols() != v) {
    throw DimensionError("panoptic_inference: mask columns " +
                         std::to_string(mask_logits.cols()) +
                         " do not cover the " + std::to_string(v) +
                         " occupied voxels");
  }
  if (scores.cols() != vocab.size()) {
    throw DimensionError("panoptic_inference: score columns " +
                         std::to_string(scores.cols()) +
                         " do not cover the " + std::to_string(vocab.size()) +
                         "-class vocabulary");
  }

  // Per-query prediction: best class and its probability, thresholded.
  std::vector<int> query_class(static_cast<std::size_t>(q), kVoidClass);
  std::vector<double> query_conf(static_cast<std::size_t>(q), 0.0);
  std::vector<std::uint8_t> kept(static_cast<std::size_t>(q), 0);
  for (int i = 0; i < q; ++i) {
    int best = 0;
    for (int c = 1; c < vocab.size(); ++c) {
      if (scores.at(i, c) > scores.at(i, best)) best = c;
    }
    query_class[std::size_t(i)] = best;
    query_conf[std::size_t(i)] = scores.at(i, best);
    kept[std::size_t(i)] = query_conf[std::size_t(i)] >=
                                   params.confidence_threshold
                               ? 1
                               : 0;
  }

  // Per-voxel winner: highest confidence x mask probability among survivors.
  std::vector<int> voxel_winner(static_cast<std::size_t>(v), -1);
  for (int j = 0; j < v; ++j) {
    int winner = -1;
    double best = -1.0;
    for (int i = 0; i < q; ++i) {
      if (!kept[std::size_t(i)]) continue;
      const double product =
          query_conf[std::size_t(i)] * sigmoid_scalar(mask_logits.at(i, j));
      if (product > best) {
        best = product;
        winner = i;
      }
    }
    voxel_winner[std::size_t(j)] = winner;
  }

  // Winning thing queries mint dense instance ids in query order; stuff
  // voxels merge per class into instance 0.
  std::vector<std::uint8_t> won(static_cast<std::size_t>(q), 0);
  for (const int w : voxel_winner) {
    if (w >= 0) won[std::size_t(w)] = 1;
  }
  std::vector<int> query_instance(static_cast<std::size_t>(q), 0);
  std::map<int, double> stuff_conf;  // class id -> best contributing conf
  std::vector<SegmentInfo> things;
  int next_instance = 1;
  for (int i = 0; i < q; ++i) {
    if (!won[std::size_t(i)]) continue;
    const int c = query_class[std::size_t(i)];
    if (vocab.at(c).is_thing) {
      query_instance[std::size_t(i)] = next_instance++;
      things.push_back({c, query_instance[std::size_t(i)],
                        query_conf[std::size_t(i)]});
    } else {
      auto [it, fresh] = stuff_conf.try_emplace(c, query_conf[std::size_t(i)]);
      if (!fresh) it->second = std::max(it->second, query_conf[std::size_t(i)]);
    }
  }

  PanopticPrediction pred;
  for (const auto& [c, conf] : stuff_conf) {
    pred.segments.push_back({c, 0, conf});
  }
  pred.segments.insert(pred.segments.end(), things.begin(), things.end());

  const int n = static_cast<int>(assign.point_voxel.size());
  pred.semantic.assign(static_cast<std::size_t>(n), kVoidClass);
  pred.instance.assign(static_cast<std::size_t>(n), 0);
  for (int p = 0; p < n; ++p) {
    const int voxel = assign.point_voxel[std::size_t(p)];
    if (voxel == VoxelAssignment::kOutOfBounds) continue;
    const int w = voxel_winner[std::size_t(voxel)];
    if (w < 0) continue;  // no query survived the threshold
    pred.semantic[std::size_t(p)] = query_class[std::size_t(w)];
    pred.instance[std::size_t(p)] = query_instance[std::size_t(w)];
  }
  return pred;
}

PanopticPrediction ground_truth_prediction(const Scene& scene) {
  PanopticPrediction gt;
  gt.semantic = scene.semantic;
  gt.instance = scene.instance;
  std::map<std::pair<int, int>, bool> seen;
  for (std::size_t p = 0; p < gt.semantic.size(); ++p) {
    seen.emplace(std::make_pair(gt.semantic[p], gt.instance[p]), true);
  }
  for (const auto& [key, unused] : seen) {
    gt.segments.push_back({key.first, key.second, 1.0});
  }
  return gt;
}

}  // namespace ovpseg
