#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ovpseg/tensor.hpp"

namespace ovpseg {

struct ClassInfo {
  std::string name;
  bool is_thing = false;
  bool is_base = true;
  std::vector<std::string> labels;  // alias strings, at least one
};

/// Ordered class list with base/novel and thing/stuff flags. Class indices
/// are positions in this list and are used everywhere downstream.
class Vocabulary {
 public:
  explicit Vocabulary(std::vector<ClassInfo> classes);

  int size() const { return static_cast<int>(classes_.size()); }
  int base_count() const { return base_count_; }
  int novel_count() const { return size() - base_count_; }
  const ClassInfo& at(int i) const { return classes_[std::size_t(i)]; }
  const std::vector<ClassInfo>& classes() const { return classes_; }

  // Position of a class among base classes (0..C_B-1), or -1 for novel.
  int base_pos(int class_id) const { return base_pos_[std::size_t(class_id)]; }
  // Class id at a given base position.
  int base_class_id(int pos) const { return base_ids_[std::size_t(pos)]; }
  const std::vector<int>& base_class_ids() const { return base_ids_; }

  // Base stuff classes in class-id order; fixed query k serves entry k.
  const std::vector<int>& base_stuff_ids() const { return base_stuff_ids_; }

  int find(const std::string& name) const;  // -1 when absent

 private:
  std::vector<ClassInfo> classes_;
  std::vector<int> base_pos_;
  std::vector<int> base_ids_;
  std::vector<int> base_stuff_ids_;
  int base_count_ = 0;
};

/// Unit-norm per-label embeddings plus the label-to-class map. The class
/// axis is either base positions (training) or global class ids (inference),
/// chosen at construction.
struct TextEmbeddings {
  Tensor rows;                   // L x D_emb, unit rows
  std::vector<int> label_class;  // L entries into [0, n_classes)
  int n_classes = 0;

  int label_count() const { return rows.rows(); }
};

/// Synthetic stand-in for a frozen text/vision encoder: one unit prototype
/// per class, pairwise cosine kept under a separation bound.
class PrototypeProvider {
 public:
  PrototypeProvider(std::uint64_t seed, Tensor prototypes, double label_noise);

  std::uint64_t seed() const { return seed_; }
  int class_count() const { return prototypes_.rows(); }
  int d_emb() const { return prototypes_.cols(); }
  double label_noise() const { return label_noise_; }
  const Tensor& prototypes() const { return prototypes_; }
  Tensor prototype(int class_id) const;  // 1-D copy of one row

 private:
  std::uint64_t seed_;
  Tensor prototypes_;  // C x D_emb
  double label_noise_;
};

// Deterministic per seed; resamples each vector until its cosine to all
// earlier prototypes is <= max_cosine (default 0.7).
PrototypeProvider gen_prototypes(std::uint64_t seed, int class_count,
                                 int d_emb, double label_noise = 0.0,
                                 double max_cosine = 0.7);

// Each label row = normalize(class prototype + noise * gaussian), noise
// stream keyed by (provider seed, label string). include_novel selects
// whether the class axis is base positions or global ids.
TextEmbeddings build_text_embeddings(const Vocabulary& vocab,
                                     const PrototypeProvider& provider,
                                     bool include_novel);

// score(c) = max over labels of class c. Plain-tensor path used at
// inference; the training graph uses the autodiff class_max op with the
// same label_class map.
Tensor class_scores_multilabel(const Tensor& per_label_scores,
                               const TextEmbeddings& embeds);

}  // namespace ovpseg
