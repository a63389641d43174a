#pragma once

// Panoptic quality and semantic IoU over per-point labelings. Reports carry
// raw counts so multi-scene evaluation can sum them before the final
// divisions.

#include <cstdint>
#include <vector>

#include "ovpseg/inference.hpp"
#include "ovpseg/vocab.hpp"

namespace ovpseg {

// Matching counts and IoU mass for one class.
struct ClassPQ {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  double iou_sum = 0.0;  // over matched pairs

  bool present() const { return tp + fp + fn > 0; }
  double sq() const {
    return tp > 0 ? iou_sum / static_cast<double>(tp) : 0.0;
  }
  double rq() const {
    const double denom = static_cast<double>(tp) + 0.5 * static_cast<double>(fp) +
                         0.5 * static_cast<double>(fn);
    return denom > 0.0 ? static_cast<double>(tp) / denom : 0.0;
  }
  double pq() const { return sq() * rq(); }
};

struct PQReport {
  std::vector<ClassPQ> per_class;  // indexed by class id

  // Element-wise sum of counts and IoU mass. Throws DimensionError when the
  // class counts disagree.
  void merge(const PQReport& other);
};

// Which classes an aggregate covers.
enum class ClassSubset { kAll, kBase, kNovel, kNovelThings, kNovelStuff };

struct PQSummary {
  double pq = 0.0;
  double sq = 0.0;
  double rq = 0.0;
  int class_count = 0;  // present classes inside the subset
};

// Mean of the per-class metrics over the subset's present classes; all zeros
// (class_count 0) when no class in the subset is present.
PQSummary summarize_pq(const PQReport& report, const Vocabulary& vocab,
                       ClassSubset subset);

// Match predicted and ground-truth segments of the same class whose IoU lies
// strictly above 1/2 (which makes every match unique); per class, SQ is the
// mean matched IoU, RQ = TP / (TP + FP/2 + FN/2), and PQ = SQ * RQ. Void
// points belong to no segment: a point predicted void still counts against
// its ground-truth segment's union, so missed regions surface as FN, never
// FP. Matched IoUs are summed in ascending value order, making the report
// independent of instance relabeling. Throws ContractError when the two
// sides disagree on point count.
PQReport compute_pq(const PanopticPrediction& pred,
                    const PanopticPrediction& gt, const Vocabulary& vocab);

// Point-level intersection and union mass for one class.
struct ClassIoU {
  std::int64_t intersection = 0;
  std::int64_t pred_count = 0;
  std::int64_t gt_count = 0;

  std::int64_t union_count() const {
    return pred_count + gt_count - intersection;
  }
  bool present() const { return gt_count > 0; }
  double iou() const {
    return union_count() > 0
               ? static_cast<double>(intersection) /
                     static_cast<double>(union_count())
               : 0.0;
  }
};

struct MiouReport {
  std::vector<ClassIoU> per_class;  // indexed by class id

  void merge(const MiouReport& other);
  // Mean IoU over classes present in ground truth; 0 when none are.
  double mean() const;
};

// Standard per-class semantic IoU over points. Void labels (on either side)
// belong to no class. Throws ContractError on point-count mismatch.
MiouReport compute_miou(const std::vector<int>& pred_semantic,
                        const std::vector<int>& gt_semantic,
                        const Vocabulary& vocab);

}  // namespace ovpseg
