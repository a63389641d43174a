#include "ovpseg/vocab.hpp"

#include <cmath>
#include <set>
#include <utility>

#include "ovpseg/errors.hpp"
#include "ovpseg/rng.hpp"

namespace ovpseg {

Vocabulary::Vocabulary(std::vector<ClassInfo> classes)
    : classes_(std::move(classes)) {
  std::set<std::string> names;
  base_pos_.assign(classes_.size(), -1);
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    const ClassInfo& c = classes_[i];
    if (c.name.empty()) throw ConfigError("class with empty name");
    if (!names.insert(c.name).second) {
      throw ConfigError("duplicate class name '" + c.name + "'");
    }
    if (c.labels.empty()) {
      throw ConfigError("class '" + c.name + "' has no labels");
    }
    if (c.is_base) {
      base_pos_[i] = base_count_++;
      base_ids_.push_back(static_cast<int>(i));
      if (!c.is_thing) base_stuff_ids_.push_back(static_cast<int>(i));
    }
  }
  if (base_count_ < 1) throw ConfigError("vocabulary needs at least one base class");
}

int Vocabulary::find(const std::string& name) const {
  for (int i = 0; i < size(); ++i) {
    if (classes_[std::size_t(i)].name == name) return i;
  }
  return -1;
}

PrototypeProvider::PrototypeProvider(std::uint64_t seed, Tensor prototypes,
                                     double label_noise)
    : seed_(seed), prototypes_(std::move(prototypes)), label_noise_(label_noise) {
  if (prototypes_.ndim() != 2) throw DimensionError("prototypes must be C x D");
  if (label_noise_ < 0.0) throw ConfigError("label noise must be nonnegative");
  for (int c = 0; c < prototypes_.rows(); ++c) {
    double n2 = 0.0;
    for (int k = 0; k < prototypes_.cols(); ++k) {
      n2 += prototypes_.at(c, k) * prototypes_.at(c, k);
    }
    if (std::fabs(std::sqrt(n2) - 1.0) > 1e-9) {
      throw ConfigError("prototype row " + std::to_string(c) + " is not unit-norm");
    }
  }
}

Tensor PrototypeProvider::prototype(int class_id) const {
  if (class_id < 0 || class_id >= class_count()) {
    throw LookupError("prototype index " + std::to_string(class_id) +
                      " out of range for " + std::to_string(class_count()) +
                      " classes");
  }
  Tensor row = Tensor::zeros({d_emb()});
  for (int k = 0; k < d_emb(); ++k) row[std::size_t(k)] = prototypes_.at(class_id, k);
  return row;
}

namespace {

void normalize_row(double* row, int d) {
  double n2 = 0.0;
  for (int k = 0; k < d; ++k) n2 += row[k] * row[k];
  const double n = std::sqrt(n2);
  if (n == 0.0) throw DegenerateVectorError("cannot normalize a zero vector");
  for (int k = 0; k < d; ++k) row[k] /= n;
}

}  // namespace

PrototypeProvider gen_prototypes(std::uint64_t seed, int class_count,
                                 int d_emb, double label_noise,
                                 double max_cosine) {
  if (class_count < 2) throw ConfigError("need at least 2 classes for prototypes");
  if (d_emb < 4) throw ConfigError("prototype width must be at least 4");

  Rng rng(Rng::mix(seed, Rng::hash_string("prototypes")));
  Tensor protos = Tensor::zeros({class_count, d_emb});
  constexpr int kMaxTries = 10000;
  for (int c = 0; c < class_count; ++c) {
    double* row = protos.data() + std::size_t(c) * d_emb;
    int tries = 0;
    for (;;) {
      if (++tries > kMaxTries) {
        throw CapacityError("could not separate " + std::to_string(class_count) +
                            " prototypes in " + std::to_string(d_emb) +
                            " dimensions below cosine " + std::to_string(max_cosine));
      }
      for (int k = 0; k < d_emb; ++k) row[k] = rng.gaussian();
      normalize_row(row, d_emb);
      bool ok = true;
      for (int prev = 0; prev < c && ok; ++prev) {
        double cosv = 0.0;
        for (int k = 0; k < d_emb; ++k) {
          cosv += row[k] * protos.at(prev, k);
        }
        ok = cosv <= max_cosine;
      }
      if (ok) break;
    }
  }
  return PrototypeProvider(seed, std::move(protos), label_noise);
}

TextEmbeddings build_text_embeddings(const Vocabulary& vocab,
                                     const PrototypeProvider& provider,
                                     bool include_novel) {
  if (vocab.size() > provider.class_count()) {
    throw LookupError("provider covers " + std::to_string(provider.class_count()) +
                      " classes but vocabulary has " + std::to_string(vocab.size()));
  }
  const int d = provider.d_emb();

  std::vector<double> data;
  std::vector<int> label_class;
  for (int c = 0; c < vocab.size(); ++c) {
    const ClassInfo& info = vocab.at(c);
    if (!include_novel && !info.is_base) continue;
    const int score_index = include_novel ? c : vocab.base_pos(c);
    for (const std::string& label : info.labels) {
      // Label noise stream keyed by the label text, so embeddings do not
      // depend on vocabulary ordering.
      Rng rng(Rng::mix(provider.seed(), Rng::hash_string(label)));
      std::vector<double> row(static_cast<std::size_t>(d), 0.0);
      for (int k = 0; k < d; ++k) {
        row[std::size_t(k)] = provider.prototypes().at(c, k) +
                              provider.label_noise() * rng.gaussian();
      }
      normalize_row(row.data(), d);
      data.insert(data.end(), row.begin(), row.end());
      label_class.push_back(score_index);
    }
  }

  TextEmbeddings out;
  out.rows = Tensor::from({static_cast<int>(label_class.size()), d}, std::move(data));
  out.label_class = std::move(label_class);
  out.n_classes = include_novel ? vocab.size() : vocab.base_count();
  return out;
}

Tensor class_scores_multilabel(const Tensor& per_label_scores,
                               const TextEmbeddings& embeds) {
  if (per_label_scores.ndim() != 1 ||
      per_label_scores.size() != embeds.label_class.size()) {
    throw DimensionError("per-label score count does not match label count");
  }
  Tensor out = Tensor::zeros({embeds.n_classes});
  std::vector<bool> seen(std::size_t(embeds.n_classes), false);
  for (std::size_t l = 0; l < embeds.label_class.size(); ++l) {
    const int c = embeds.label_class[l];
    if (!seen[std::size_t(c)] || per_label_scores[l] > out[std::size_t(c)]) {
      out[std::size_t(c)] = per_label_scores[l];
      seen[std::size_t(c)] = true;
    }
  }
  for (int c = 0; c < embeds.n_classes; ++c) {
    if (!seen[std::size_t(c)]) {
      throw DimensionError("class " + std::to_string(c) + " has no labels");
    }
  }
  return out;
}

}  // namespace ovpseg
