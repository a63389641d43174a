#include "ovpseg/metrics.hpp"

#include <algorithm>
#include <map>
#include <string>
#include <utility>

#include "ovpseg/errors.hpp"

namespace ovpseg {

namespace {

struct SegmentCounts {
  std::int64_t size = 0;
  bool matched = false;
};

// (class, instance) -> running size; std::map keeps enumeration in
// (class, instance) order, so everything downstream is deterministic.
using SegmentMap = std::map<std::pair<int, int>, SegmentCounts>;

SegmentMap collect_segments(const PanopticPrediction& labeling) {
  SegmentMap segments;
  for (std::size_t p = 0; p < labeling.semantic.size(); ++p) {
    const int c = labeling.semantic[p];
    if (c == kVoidClass) continue;
    segments[{c, labeling.instance[p]}].size += 1;
  }
  return segments;
}

}  // namespace

void PQReport::merge(const PQReport& other) {
  if (per_class.size() != other.per_class.size()) {
    throw DimensionError("PQReport::merge: class counts disagree");
  }
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    per_class[c].tp += other.per_class[c].tp;
    per_class[c].fp += other.per_class[c].fp;
    per_class[c].fn += other.per_class[c].fn;
    per_class[c].iou_sum += other.per_class[c].iou_sum;
  }
}

PQSummary summarize_pq(const PQReport& report, const Vocabulary& vocab,
                       ClassSubset subset) {
  if (static_cast<int>(report.per_class.size()) != vocab.size()) {
    throw DimensionError("summarize_pq: report covers " +
                         std::to_string(report.per_class.size()) +
                         " classes, vocabulary has " +
                         std::to_string(vocab.size()));
  }
  const auto selected = [&](int c) {
    const ClassInfo& info = vocab.at(c);
    switch (subset) {
      case ClassSubset::kAll:
        return true;
      case ClassSubset::kBase:
        return info.is_base;
      case ClassSubset::kNovel:
        return !info.is_base;
      case ClassSubset::kNovelThings:
        return !info.is_base && info.is_thing;
      case ClassSubset::kNovelStuff:
        return !info.is_base && !info.is_thing;
    }
    return false;
  };

  PQSummary summary;
  for (int c = 0; c < vocab.size(); ++c) {
    const ClassPQ& entry = report.per_class[std::size_t(c)];
    if (!selected(c) || !entry.present()) continue;
    summary.pq += entry.pq();
    summary.sq += entry.sq();
    summary.rq += entry.rq();
    summary.class_count += 1;
  }
  if (summary.class_count > 0) {
    summary.pq /= summary.class_count;
    summary.sq /= summary.class_count;
    summary.rq /= summary.class_count;
  }
  return summary;
}

PQReport compute_pq(const PanopticPrediction& pred,
                    const PanopticPrediction& gt, const Vocabulary& vocab) {
  if (pred.semantic.size() != gt.semantic.size() ||
      pred.instance.size() != pred.semantic.size() ||
      gt.instance.size() != gt.semantic.size()) {
    throw ContractError(
        "compute_pq: prediction and ground truth must label the same points");
  }

  SegmentMap pred_segments = collect_segments(pred);
  SegmentMap gt_segments = collect_segments(gt);

  // Co-occurrence counts between overlapping segment pairs.
  std::map<std::pair<std::pair<int, int>, std::pair<int, int>>, std::int64_t>
      overlap;
  for (std::size_t p = 0; p < pred.semantic.size(); ++p) {
    const int pc = pred.semantic[p];
    const int gc = gt.semantic[p];
    if (pc == kVoidClass || gc == kVoidClass) continue;
    overlap[{{pc, pred.instance[p]}, {gc, gt.instance[p]}}] += 1;
  }

  PQReport report;
  report.per_class.assign(static_cast<std::size_t>(vocab.size()), ClassPQ{});
  std::vector<std::vector<double>> matched_ious(
      static_cast<std::size_t>(vocab.size()));

  for (const auto& [pair, inter] : overlap) {
    const auto& [pred_key, gt_key] = pair;
    if (pred_key.first != gt_key.first) continue;  // class mismatch
    const int c = pred_key.first;
    if (c < 0 || c >= vocab.size()) {
      throw ContractError("compute_pq: class id " + std::to_string(c) +
                          " outside the vocabulary");
    }
    SegmentCounts& ps = pred_segments.at(pred_key);
    SegmentCounts& gs = gt_segments.at(gt_key);
    const double iou = static_cast<double>(inter) /
                       static_cast<double>(ps.size + gs.size - inter);
    if (iou > 0.5) {
      // IoU above 1/2 makes a second match for either side impossible; a
      // violation here means the labeling structures are corrupt.
      if (ps.matched || gs.matched) {
        throw ContractError("compute_pq: segment matched twice");
      }
      ps.matched = true;
      gs.matched = true;
      matched_ious[std::size_t(c)].push_back(iou);
    }
  }

  for (int c = 0; c < vocab.size(); ++c) {
    auto& ious = matched_ious[std::size_t(c)];
    // Ascending-value summation: a canonical order, so reports do not
    // depend on how instance ids happen to be numbered.
    std::sort(ious.begin(), ious.end());
    ClassPQ& entry = report.per_class[std::size_t(c)];
    entry.tp = static_cast<std::int64_t>(ious.size());
    for (const double iou : ious) entry.iou_sum += iou;
  }
  for (const auto& [key, counts] : pred_segments) {
    if (!counts.matched) report.per_class[std::size_t(key.first)].fp += 1;
  }
  for (const auto& [key, counts] : gt_segments) {
    if (!counts.matched) report.per_class[std::size_t(key.first)].fn += 1;
  }
  return report;
}

void MiouReport::merge(const MiouReport& other) {
  if (per_class.size() != other.per_class.size()) {
    throw DimensionError("MiouReport::merge: class counts disagree");
  }
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    per_class[c].intersection += other.per_class[c].intersection;
    per_class[c].pred_count += other.per_class[c].pred_count;
    per_class[c].gt_count += other.per_class[c].gt_count;
  }
}

double MiouReport::mean() const {
  double total = 0.0;
  int present = 0;
  for (const ClassIoU& entry : per_class) {
    if (!entry.present()) continue;
    total += entry.iou();
    present += 1;
  }
  return present > 0 ? total / present : 0.0;
}

MiouReport compute_miou(const std::vector<int>& pred_semantic,
                        const std::vector<int>& gt_semantic,
                        const Vocabulary& vocab) {
  if (pred_semantic.size() != gt_semantic.size()) {
    throw ContractError(
        "compute_miou: prediction and ground truth must label the same "
        "points");
  }
  MiouReport report;
  report.per_class.assign(static_cast<std::size_t>(vocab.size()), ClassIoU{});
  const auto check = [&](int c) {
    if (c != kVoidClass && (c < 0 || c >= vocab.size())) {
      throw ContractError("compute_miou: class id " + std::to_string(c) +
                          " outside the vocabulary");
    }
  };
  for (std::size_t p = 0; p < pred_semantic.size(); ++p) {
    const int pc = pred_semantic[p];
    const int gc = gt_semantic[p];
    check(pc);
    check(gc);
    if (pc != kVoidClass) report.per_class[std::size_t(pc)].pred_count += 1;
    if (gc != kVoidClass) report.per_class[std::size_t(gc)].gt_count += 1;
    if (pc != kVoidClass && pc == gc) {
      report.per_class[std::size_t(pc)].intersection += 1;
    }
  }
  return report;
}

}  // namespace ovpseg
