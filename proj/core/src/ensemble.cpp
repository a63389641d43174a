#include "ovpseg/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ovpseg/errors.hpp"

namespace ovpseg {

void validate_ensemble_params(const EnsembleParams& params) {
  const auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!in_unit(params.alpha) || !in_unit(params.beta)) {
    throw ConfigError("ensemble exponents must lie in [0, 1], got alpha=" +
                      std::to_string(params.alpha) +
                      " beta=" + std::to_string(params.beta));
  }
}

Tensor out_of_vocab_logits(const Tensor& w_q, const TextEmbeddings& embeds,
                           double temperature) {
  if (w_q.ndim() != 1) {
    throw DimensionError("out_of_vocab_logits: pooled feature must be 1-D");
  }
  const int d = w_q.dim(0);
  if (embeds.rows.cols() != d) {
    throw DimensionError(
        "out_of_vocab_logits: feature width " + std::to_string(d) +
        " does not match embedding width " +
        std::to_string(embeds.rows.cols()));
  }
  if (temperature <= 0.0) {
    throw ConfigError("out_of_vocab_logits: temperature must be positive");
  }

  double w_norm = 0.0;
  for (int k = 0; k < d; ++k) w_norm += w_q[std::size_t(k)] * w_q[std::size_t(k)];
  w_norm = std::sqrt(w_norm);
  if (w_norm == 0.0) {
    throw DegenerateVectorError(
        "out_of_vocab_logits: pooled feature has zero norm");
  }

  Tensor logits = Tensor::zeros({embeds.n_classes});
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(embeds.n_classes), 0);
  for (int l = 0; l < embeds.label_count(); ++l) {
    double dot = 0.0, t_norm = 0.0;
    for (int k = 0; k < d; ++k) {
      const double t = embeds.rows.at(l, k);
      dot += w_q[std::size_t(k)] * t;
      t_norm += t * t;
    }
    t_norm = std::sqrt(t_norm);
    if (t_norm == 0.0) {
      throw DegenerateVectorError("out_of_vocab_logits: label row " +
                                  std::to_string(l) + " has zero norm");
    }
    const double score = dot / (w_norm * t_norm) / temperature;
    const int c = embeds.label_class[std::size_t(l)];
    double& slot = logits.values()[std::size_t(c)];
    slot = seen[std::size_t(c)] ? std::max(slot, score) : score;
    seen[std::size_t(c)] = 1;
  }
  for (int c = 0; c < embeds.n_classes; ++c) {
    if (!seen[std::size_t(c)]) {
      throw DimensionError("out_of_vocab_logits: class " + std::to_string(c) +
                           " has no labels");
    }
  }
  return logits;
}

Tensor geometric_ensemble(const Tensor& p_v, const Tensor& p_w,
                          const EnsembleParams& params,
                          const std::vector<std::uint8_t>& base_mask) {
  validate_ensemble_params(params);
  if (p_v.ndim() != 1 || p_w.ndim() != 1) {
    throw DimensionError("geometric_ensemble: inputs must be 1-D");
  }
  const int n = p_v.dim(0);
  if (p_w.dim(0) != n || static_cast<int>(base_mask.size()) != n) {
    throw DimensionError(
        "geometric_ensemble: probability vectors and base mask disagree on "
        "class count");
  }
  Tensor blended = Tensor::zeros({n});
  for (int i = 0; i < n; ++i) {
    const double e = base_mask[std::size_t(i)] ? params.alpha : params.beta;
    const double v = p_v[std::size_t(i)];
    const double w = p_w[std::size_t(i)];
    // Exact passthrough at the endpoints keeps the alpha=0/beta=1 setting
    // bitwise faithful to its inputs.
    if (e == 0.0) {
      blended.values()[std::size_t(i)] = v;
    } else if (e == 1.0) {
      blended.values()[std::size_t(i)] = w;
    } else {
      blended.values()[std::size_t(i)] = std::pow(v, 1.0 - e) * std::pow(w, e);
    }
  }
  return blended;
}

}  // namespace ovpseg
