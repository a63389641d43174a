#pragma once

// Frozen-feature classification and the geometric blend used by the
// baseline configuration: pooled voxel features score classes through the
// text embeddings, and those scores are combined with the trained head's
// probabilities with separate exponents for base and novel classes.

#include <cstdint>
#include <vector>

#include "ovpseg/tensor.hpp"
#include "ovpseg/vocab.hpp"

namespace ovpseg {

// Blend exponents. alpha steers base classes toward the pooled-feature
// classifier, beta does the same for novel classes; 0 keeps the trained
// head's probability, 1 replaces it with the pooled classifier's.
struct EnsembleParams {
  double alpha = 0.0;
  double beta = 1.0;
};

// Throws ConfigError unless both exponents lie in [0, 1].
void validate_ensemble_params(const EnsembleParams& params);

// Class logits for a pooled feature vector: cosine similarity against every
// label embedding, divided by the (shared) temperature, reduced per class by
// taking the maximum over that class's labels.
//
// `w_q` is 1-D with the embedding width. Throws DegenerateVectorError when
// `w_q` (or a label row) has zero norm, DimensionError on width mismatch or
// a class with no labels.
Tensor out_of_vocab_logits(const Tensor& w_q, const TextEmbeddings& embeds,
                           double temperature);

// Per-class geometric blend of two probability vectors:
//   blended[i] = p_v[i]^(1-alpha) * p_w[i]^alpha   where base_mask[i] != 0
//   blended[i] = p_v[i]^(1-beta)  * p_w[i]^beta    otherwise
// Exponents of exactly 0 and 1 short-circuit to the untouched input entry,
// so alpha=0 / beta=1 reproduces p_v on base classes and p_w on novel ones
// bit for bit. Inputs must be 1-D of equal length, matching base_mask.
Tensor geometric_ensemble(const Tensor& p_v, const Tensor& p_w,
                          const EnsembleParams& params,
                          const std::vector<std::uint8_t>& base_mask);

}  // namespace ovpseg
