#include "ovpseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "ovpseg/errors.hpp"
#include "ovpseg/hungarian.hpp"

namespace ovpseg {
namespace {

Var zero_scalar() { return Var::constant(Tensor::scalar(0.0)); }

Tensor mask_to_tensor(const std::vector<std::uint8_t>& mask) {
  Tensor t = Tensor::zeros({static_cast<int>(mask.size())});
  for (std::size_t i = 0; i < mask.size(); ++i) {
    t.values()[i] = mask[i] ? 1.0 : 0.0;
  }
  return t;
}

// Smoothed dice similarity between a probability row and a binary mask —
// the same smoothing the differentiable dice loss uses, so matching costs
// and training losses agree about what "perfect" means.
double dice_similarity(const Tensor& probs, int row,
                       const std::vector<std::uint8_t>& mask) {
  double inter = 0.0, psum = 0.0, gsum = 0.0;
  for (int v = 0; v < static_cast<int>(mask.size()); ++v) {
    const double p = probs.at(row, v);
    const double g = mask[static_cast<std::size_t>(v)] ? 1.0 : 0.0;
    inter += p * g;
    psum += p;
    gsum += g;
  }
  return (2.0 * inter + 1.0) / (psum + gsum + 1.0);
}

}  // namespace

std::vector<GroundTruthSegment> ground_truth_segments(
    const Scene& scene, const VoxelAssignment& assign) {
  const int v_count = assign.voxel_count();
  std::vector<GroundTruthSegment> out;
  std::map<std::pair<int, int>, std::size_t> slot;

  for (int v = 0; v < v_count; ++v) {
    // Majority (class, instance) pair among the voxel's points; ties go to
    // the lowest pair so the result never depends on member order.
    std::map<std::pair<int, int>, int> votes;
    for (const int point : assign.voxels[static_cast<std::size_t>(v)].members) {
      const std::pair<int, int> key = {
          scene.semantic[static_cast<std::size_t>(point)],
          scene.instance[static_cast<std::size_t>(point)]};
      ++votes[key];
    }
    if (votes.empty()) {
      throw ContractError("occupied voxel " + std::to_string(v) +
                          " has no member points");
    }
    std::pair<int, int> winner = votes.begin()->first;
    int best = votes.begin()->second;
    for (const auto& [key, count] : votes) {
      if (count > best) {
        winner = key;
        best = count;
      }
    }

    auto it = slot.find(winner);
    if (it == slot.end()) {
      GroundTruthSegment seg;
      seg.class_id = winner.first;
      seg.instance_id = winner.second;
      seg.mask.assign(static_cast<std::size_t>(v_count), 0);
      it = slot.emplace(winner, out.size()).first;
      out.push_back(std::move(seg));
    }
    out[it->second].mask[static_cast<std::size_t>(v)] = 1;
    ++out[it->second].voxel_count;
  }

  // slot is ordered by (class, instance); emit segments in that order.
  std::vector<GroundTruthSegment> ordered;
  ordered.reserve(out.size());
  for (const auto& [key, index] : slot) {
    ordered.push_back(std::move(out[index]));
  }
  return ordered;
}

void validate_loss_weights(const LossWeights& weights) {
  if (weights.w_alpha < 0.0 || weights.w_beta < 0.0 ||
      weights.w_lambda < 0.0 || weights.w_gamma < 0.0) {
    throw ConfigError("loss weights must be nonnegative");
  }
}

Matching match_queries(const Tensor& class_logits, const Tensor& mask_logits,
                       const std::vector<GroundTruthSegment>& segments,
                       const Vocabulary& vocab, int stuff_query_count,
                       const LossWeights& weights) {
  validate_loss_weights(weights);
  const int q_count = class_logits.rows();
  if (mask_logits.rows() != q_count) {
    throw DimensionError("match_queries: class and mask rows disagree");
  }
  if (class_logits.cols() != vocab.base_count()) {
    throw DimensionError(
        "match_queries: class logits must span the base classes");
  }
  const auto& stuff_ids = vocab.base_stuff_ids();
  // 0 means the shared-query configuration (no fixed bindings at all);
  // anything else must cover the base stuff classes one to one.
  if (stuff_query_count != 0 &&
      stuff_query_count != static_cast<int>(stuff_ids.size())) {
    throw ContractError("match_queries: stuff query count " +
                        std::to_string(stuff_query_count) +
                        " does not cover the " +
                        std::to_string(stuff_ids.size()) +
                        " base stuff classes");
  }
  const int learnable = q_count - stuff_query_count;
  if (learnable < 0) {
    throw ContractError("match_queries: fewer queries than stuff classes");
  }
  const int v_count = mask_logits.cols();
  for (const GroundTruthSegment& seg : segments) {
    if (static_cast<int>(seg.mask.size()) != v_count) {
      throw DimensionError("match_queries: segment mask length mismatch");
    }
  }

  Matching matching;
  matching.query_count = q_count;

  // Fixed binding: base stuff class k <-> query k, when the segment exists.
  for (int k = 0; k < stuff_query_count; ++k) {
    for (std::size_t s = 0; s < segments.size(); ++s) {
      if (segments[s].instance_id == 0 &&
          segments[s].class_id == stuff_ids[static_cast<std::size_t>(k)]) {
        matching.pairs.emplace_back(k, static_cast<int>(s));
        break;
      }
    }
  }

  // Base thing segments compete for the learnable queries — and in the
  // shared-query configuration base stuff segments compete right alongside
  // them. Novel segments are invisible to training.
  std::vector<int> things;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    if (!vocab.at(segments[s].class_id).is_base) continue;
    if (segments[s].instance_id >= 1 || stuff_query_count == 0) {
      things.push_back(static_cast<int>(s));
    }
  }
  if (static_cast<int>(things.size()) > learnable) {
    throw CapacityError("scene holds " + std::to_string(things.size()) +
                        " competing segments but only " +
                        std::to_string(learnable) +
                        " assignable queries are available");
  }
  if (!things.empty()) {
    // Softmax class probabilities per learnable query, then the
    // classification + dice cost against every thing segment.
    Tensor mask_probs = Tensor::zeros({q_count, v_count});
    for (int q = stuff_query_count; q < q_count; ++q) {
      for (int v = 0; v < v_count; ++v) {
        mask_probs.at(q, v) = sigmoid_scalar(mask_logits.at(q, v));
      }
    }
    Tensor cost =
        Tensor::zeros({static_cast<int>(things.size()), learnable});
    for (int j = 0; j < learnable; ++j) {
      const int q = stuff_query_count + j;
      Tensor row = Tensor::zeros({vocab.base_count()});
      for (int c = 0; c < vocab.base_count(); ++c) row.values()[c] = class_logits.at(q, c);
      const Tensor probs = softmax_plain(row);
      for (std::size_t i = 0; i < things.size(); ++i) {
        const GroundTruthSegment& seg = segments[static_cast<std::size_t>(
            things[i])];
        const double p_class =
            probs.values()[static_cast<std::size_t>(
                vocab.base_pos(seg.class_id))];
        const double dice = dice_similarity(mask_probs, q, seg.mask);
        cost.at(static_cast<int>(i), j) =
            weights.w_alpha * (1.0 - p_class) + weights.w_beta * (1.0 - dice);
      }
    }
    const Assignment assignment = hungarian(cost);
    for (std::size_t i = 0; i < things.size(); ++i) {
      const int j = assignment.row_col[i];
      if (j >= 0) {
        matching.pairs.emplace_back(stuff_query_count + j, things[i]);
      }
    }
  }

  std::sort(matching.pairs.begin(), matching.pairs.end());
  return matching;
}

Var loss_cls(const Var& class_probs, const Matching& matching,
             const std::vector<GroundTruthSegment>& segments,
             const Vocabulary& vocab, const FocalParams& focal) {
  const int q_count = class_probs.value().rows();
  if (q_count != matching.query_count) {
    throw ContractError("loss_cls: matching built for a different query set");
  }
  Var acc = zero_scalar();
  for (int q = 0; q < q_count; ++q) {
    const int seg = matching.segment_for(q);
    std::optional<int> target;
    if (seg >= 0) {
      target = vocab.base_pos(segments[static_cast<std::size_t>(seg)].class_id);
    }
    acc = add(acc, focal_loss(gather_row(class_probs, q), target, focal.gamma,
                              focal.alpha));
  }
  return scale(acc, 1.0 / static_cast<double>(q_count));
}

Var loss_mask(const Var& mask_logits, const Matching& matching,
              const std::vector<GroundTruthSegment>& segments) {
  if (matching.pairs.empty()) return zero_scalar();
  Var acc = zero_scalar();
  for (const auto& [q, s] : matching.pairs) {
    const Tensor target = mask_to_tensor(segments[static_cast<std::size_t>(s)].mask);
    const Var row = clip(gather_row(mask_logits, q), -20.0, 20.0);
    acc = add(acc, add(bce_logits_mean(row, target),
                       dice_loss(sigmoid(row), target)));
  }
  return scale(acc, 1.0 / static_cast<double>(matching.pairs.size()));
}

std::optional<Tensor> mask_pool(const Tensor& probs, const Tensor& f_vclip,
                                const std::vector<std::uint8_t>& validity) {
  const int v_count = static_cast<int>(probs.size());
  if (f_vclip.rows() != v_count ||
      static_cast<int>(validity.size()) != v_count) {
    throw DimensionError("mask_pool: voxel axes disagree");
  }
  for (const double p : probs.values()) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ContractError("mask_pool: probabilities must lie in [0, 1]");
    }
  }
  const int d = f_vclip.cols();

  const auto average = [&](const auto& weight_of) -> std::optional<Tensor> {
    double total = 0.0;
    Tensor out = Tensor::zeros({d});
    for (int v = 0; v < v_count; ++v) {
      const double w = weight_of(v);
      if (w == 0.0) continue;
      total += w;
      for (int k = 0; k < d; ++k) out.values()[static_cast<std::size_t>(k)] += w * f_vclip.at(v, k);
    }
    if (total == 0.0) return std::nullopt;
    for (double& x : out.values()) x /= total;
    return out;
  };

  // Hard mask first: indicator average over confident, covered voxels.
  auto hard = average([&](int v) {
    return (probs[static_cast<std::size_t>(v)] > 0.5 &&
            validity[static_cast<std::size_t>(v)])
               ? 1.0
               : 0.0;
  });
  if (hard) return hard;
  // Soft fallback: probability-weighted average over covered voxels.
  return average([&](int v) {
    return validity[static_cast<std::size_t>(v)]
               ? probs[static_cast<std::size_t>(v)]
               : 0.0;
  });
}

Var loss_object_distill(const Var& v_q, const Matching& matching,
                        const Tensor& mask_probs, const Tensor& f_vclip,
                        const std::vector<std::uint8_t>& validity) {
  if (v_q.value().rows() != matching.query_count ||
      mask_probs.rows() != matching.query_count) {
    throw ContractError(
        "loss_object_distill: matching built for a different query set");
  }
  const int v_count = mask_probs.cols();
  Var acc = zero_scalar();
  int counted = 0;
  for (const auto& [q, s] : matching.pairs) {
    (void)s;
    Tensor row = Tensor::zeros({v_count});
    for (int v = 0; v < v_count; ++v) row.values()[static_cast<std::size_t>(v)] = mask_probs.at(q, v);
    const std::optional<Tensor> pooled = mask_pool(row, f_vclip, validity);
    if (!pooled) continue;
    double norm = 0.0;
    for (const double x : pooled->values()) norm += x * x;
    if (norm == 0.0) continue;  // degenerate target: skip, count reduced
    acc = add(acc, sub(Var::constant(Tensor::scalar(1.0)),
                       cosine(gather_row(v_q, q), Var::constant(*pooled))));
    ++counted;
  }
  if (counted == 0) return zero_scalar();
  return scale(acc, 1.0 / static_cast<double>(counted));
}

Var reconstruct_voxel_features(const Var& mask_logits, const Var& f_qemb) {
  if (mask_logits.value().rows() != f_qemb.value().rows()) {
    throw DimensionError(
        "reconstruct_voxel_features: query axes disagree");
  }
  return matmul(transpose(softmax_cols(mask_logits)), f_qemb);
}

Var loss_voxel_distill(const Var& f_rec, const Tensor& f_vclip,
                       const std::vector<std::uint8_t>& validity) {
  const int v_count = f_rec.value().rows();
  const int d = f_rec.value().cols();
  if (f_vclip.rows() != v_count || f_vclip.cols() != d ||
      static_cast<int>(validity.size()) != v_count) {
    throw DimensionError("loss_voxel_distill: shapes disagree");
  }
  int valid = 0;
  Tensor row_mask = Tensor::zeros({v_count, d});
  for (int v = 0; v < v_count; ++v) {
    if (!validity[static_cast<std::size_t>(v)]) continue;
    ++valid;
    for (int k = 0; k < d; ++k) row_mask.at(v, k) = 1.0;
  }
  if (valid == 0) return zero_scalar();
  const Var diff = mul(sub(f_rec, Var::constant(f_vclip)),
                       Var::constant(row_mask));
  return scale(sum(abs(diff)), 1.0 / (static_cast<double>(valid) * d));
}

Var total_loss(const Var& l_cls, const Var& l_mask, const Var& l_object,
               const Var& l_voxel, const LossWeights& weights) {
  validate_loss_weights(weights);
  return add(add(scale(l_cls, weights.w_alpha), scale(l_mask, weights.w_beta)),
             add(scale(l_object, weights.w_lambda),
                 scale(l_voxel, weights.w_gamma)));
}

}  // namespace ovpseg
