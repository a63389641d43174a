#include "ovpseg/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ovpseg/errors.hpp"
#include "ovpseg/rng.hpp"

namespace ovpseg {

// ---------------------------------------------------------------------------
// ParamStore

Var ParamStore::add(const std::string& name, Tensor init) {
  if (index_.count(name) != 0) {
    throw LookupError("parameter '" + name + "' registered twice");
  }
  index_[name] = vars_.size();
  names_.push_back(name);
  vars_.push_back(Var::leaf(std::move(init)));
  return vars_.back();
}

const Var& ParamStore::at(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) {
    throw LookupError("no parameter named '" + name + "'");
  }
  return vars_[it->second];
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const Var& v : vars_) n += v.value().values().size();
  return n;
}

// ---------------------------------------------------------------------------
// Config

void validate_model_config(const ModelConfig& config) {
  if (config.d_emb < 1) throw ConfigError("d_emb must be positive");
  if (config.d_lidar < 4) throw ConfigError("d_lidar must be at least 4");
  if (config.enc_hidden < 1) throw ConfigError("enc_hidden must be positive");
  if (config.d_q < 1) throw ConfigError("d_q must be positive");
  if (config.q_learn < 1) throw ConfigError("q_learn must be positive");
  if (config.layers < 0) throw ConfigError("layers must be non-negative");
  if (!(config.t_init > 0.0)) throw ConfigError("t_init must be positive");
}

// ---------------------------------------------------------------------------
// Initialization

namespace {

// Uniform Xavier/Glorot fan-balanced init.
Tensor xavier(Rng& rng, int fan_in, int fan_out) {
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t = Tensor::zeros({fan_in, fan_out});
  for (double& v : t.values()) v = rng.uniform(-s, s);
  return t;
}

Tensor small_gaussian(Rng& rng, int rows, int cols, double scale) {
  Tensor t = Tensor::zeros({rows, cols});
  for (double& v : t.values()) v = scale * rng.gaussian();
  return t;
}

// Every tensor draws from its own stream keyed by name, so adding or
// reordering parameters never silently reshuffles the others' init.
Rng stream(std::uint64_t seed, const std::string& name) {
  return Rng(Rng::mix(seed, Rng::hash_string(name)));
}

std::string shape_of(const Tensor& t) {
  std::string s;
  for (int i = 0; i < t.ndim(); ++i) {
    if (i) s += " x ";
    s += std::to_string(t.dim(i));
  }
  return s.empty() ? "scalar" : s;
}

void expect_matrix(const Tensor& t, int rows, int cols, const char* what) {
  if (t.ndim() != 2 || t.rows() != rows || t.cols() != cols) {
    throw DimensionError(std::string(what) + ": expected " +
                         std::to_string(rows) + " x " + std::to_string(cols) +
                         ", got " + shape_of(t));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Model

Model::Model(const ModelConfig& config, int stuff_query_count,
             std::uint64_t seed)
    : config_(config), stuff_queries_(stuff_query_count) {
  validate_model_config(config);
  if (stuff_query_count < 0) {
    throw ConfigError("stuff_query_count must be non-negative");
  }

  const int d_fused =
      config_.fuse_lidar ? config_.d_lidar + config_.d_emb : config_.d_emb;
  const auto reg = [&](const std::string& name, Tensor t) {
    params_.add(name, std::move(t));
  };
  const auto xav = [&](const std::string& name, int fan_in, int fan_out) {
    Rng rng = stream(seed, name);
    reg(name, xavier(rng, fan_in, fan_out));
  };

  if (config_.fuse_lidar) {
    xav("lidar.w1", kVoxelStatWidth, config_.enc_hidden);
    reg("lidar.b1", Tensor::zeros({config_.enc_hidden}));
    xav("lidar.w2", config_.enc_hidden, config_.d_lidar);
    reg("lidar.b2", Tensor::zeros({config_.d_lidar}));
  }

  {
    Rng rng = stream(seed, "queries.stuff");
    reg("queries.stuff",
        small_gaussian(rng, std::max(stuff_queries_, 0), config_.d_q, 0.1));
  }
  {
    Rng rng = stream(seed, "queries.learn");
    reg("queries.learn", small_gaussian(rng, config_.q_learn, config_.d_q, 0.1));
  }

  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "dec" + std::to_string(l);
    xav(p + ".wq", config_.d_q, config_.d_q);
    xav(p + ".wk", d_fused + 3, config_.d_q);
    xav(p + ".wv", d_fused + 3, config_.d_q);
    xav(p + ".ff1", config_.d_q, 2 * config_.d_q);
    reg(p + ".fb1", Tensor::zeros({2 * config_.d_q}));
    xav(p + ".ff2", 2 * config_.d_q, config_.d_q);
    reg(p + ".fb2", Tensor::zeros({config_.d_q}));
  }

  xav("mask.wq", config_.d_q, config_.d_q);
  xav("mask.wv", d_fused, config_.d_q);
  xav("cls.w", config_.d_q, config_.d_emb);
  reg("cls.b", Tensor::zeros({config_.d_emb}));
  reg("head.logt", Tensor::full({1}, std::log(config_.t_init)));
}

Var Model::temperature() const { return exp_elem(params_.at("head.logt")); }

ModelForward Model::forward(const Tensor& stats, const Var& f_vclip_in,
                            const Tensor& positions) const {
  const int v_count = stats.ndim() == 2 ? stats.rows() : -1;
  if (v_count < 0 || stats.cols() != kVoxelStatWidth) {
    throw DimensionError("voxel stats must be V x " +
                         std::to_string(kVoxelStatWidth) + ", got " +
                         shape_of(stats));
  }
  expect_matrix(f_vclip_in.value(), v_count, config_.d_emb, "f_vclip");
  expect_matrix(positions, v_count, 3, "voxel positions");

  // The lifted image embeddings are a frozen input: detach here so no
  // gradient can reach whatever graph the caller handed in.
  const Var f_vclip = f_vclip_in.detach();

  ModelForward out;

  if (config_.fuse_lidar) {
    // Two-layer per-voxel perceptron over the statistics.
    const Var h = tanh_act(add_rowvec(matmul(Var::constant(stats),
                                             params_.at("lidar.w1")),
                                      params_.at("lidar.b1")));
    out.f_lidar = add_rowvec(matmul(h, params_.at("lidar.w2")),
                             params_.at("lidar.b2"));
    out.fused = concat_cols(out.f_lidar, f_vclip);
  } else {
    out.fused = f_vclip;  // baseline: image embeddings only
  }

  // Keys/values see the fused features plus the normalized voxel centers.
  const Var kv_in = concat_cols(out.fused, Var::constant(positions));

  Var q = stuff_queries_ > 0
              ? concat_rows(params_.at("queries.stuff"),
                            params_.at("queries.learn"))
              : params_.at("queries.learn");
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(config_.d_q));
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "dec" + std::to_string(l);
    const Var q_proj = matmul(q, params_.at(p + ".wq"));
    const Var keys = matmul(kv_in, params_.at(p + ".wk"));
    const Var vals = matmul(kv_in, params_.at(p + ".wv"));
    const Var attn =
        softmax_rows(scale(matmul(q_proj, transpose(keys)), attn_scale));
    out.attention.push_back(attn);
    q = add(q, matmul(attn, vals));  // residual cross-attention

    const Var hidden = tanh_act(add_rowvec(matmul(q, params_.at(p + ".ff1")),
                                           params_.at(p + ".fb1")));
    const Var ffn = add_rowvec(matmul(hidden, params_.at(p + ".ff2")),
                               params_.at(p + ".fb2"));
    q = add(q, ffn);  // residual feed-forward
  }
  out.queries = q;

  out.mask_logits = matmul(matmul(q, params_.at("mask.wq")),
                           transpose(matmul(out.fused, params_.at("mask.wv"))));
  out.v_q = add_rowvec(matmul(q, params_.at("cls.w")), params_.at("cls.b"));
  return out;
}

ModelForward Model::forward(const Tensor& stats, const Tensor& f_vclip,
                            const Tensor& positions) const {
  return forward(stats, Var::constant(f_vclip), positions);
}

Var Model::class_logits(const Var& v_q, const Var& label_rows,
                        const std::vector<int>& label_class,
                        int n_classes) const {
  if (label_rows.value().ndim() != 2 ||
      label_rows.value().cols() != config_.d_emb) {
    throw DimensionError("label rows must be L x " +
                         std::to_string(config_.d_emb) + ", got " +
                         shape_of(label_rows.value()));
  }
  // Text embeddings are frozen: cut them out of the caller's graph.
  const Var per_label =
      mul_scalar_var(cosine_rows(v_q, label_rows.detach()),
                     exp_elem(scale(params_.at("head.logt"), -1.0)));
  return class_max(per_label, label_class, n_classes);
}

Var Model::class_logits(const Var& v_q, const TextEmbeddings& embeds) const {
  return class_logits(v_q, Var::constant(embeds.rows), embeds.label_class,
                      embeds.n_classes);
}

// ---------------------------------------------------------------------------
// Voxel features

Tensor voxel_stats(const PointCloud& cloud, const VoxelAssignment& assign,
                   const VoxelGrid& grid) {
  validate_grid(grid);
  const int v_count = assign.voxel_count();
  const bool has_intensity = !cloud.intensity.empty();
  Tensor stats = Tensor::zeros({v_count, kVoxelStatWidth});

  std::vector<int> members;
  for (int v = 0; v < v_count; ++v) {
    const OccupiedVoxel& vox = assign.voxels[v];
    if (vox.members.empty()) {
      throw ContractError("occupied voxel " + std::to_string(v) +
                          " has no member points");
    }
    // Canonical order (coordinates, then intensity) makes the floating-point
    // accumulation independent of the order the points arrived in, even when
    // the whole cloud was re-indexed.
    members.assign(vox.members.begin(), vox.members.end());
    std::sort(members.begin(), members.end(), [&](int a, int b) {
      const auto pa = cloud.point(a);
      const auto pb = cloud.point(b);
      if (pa != pb) return pa < pb;
      const double ia = has_intensity ? cloud.intensity[std::size_t(a)] : 0.0;
      const double ib = has_intensity ? cloud.intensity[std::size_t(b)] : 0.0;
      return ia < ib;
    });

    const double n = static_cast<double>(members.size());
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    double intensity_sum = 0.0;
    for (const int idx : members) {
      const auto p = cloud.point(idx);
      for (int k = 0; k < 3; ++k) mean[k] += p[k];
      if (has_intensity) intensity_sum += cloud.intensity[idx];
    }
    for (int k = 0; k < 3; ++k) mean[k] /= n;

    std::array<double, 3> var{0.0, 0.0, 0.0};
    for (const int idx : members) {
      const auto p = cloud.point(idx);
      for (int k = 0; k < 3; ++k) {
        const double d = p[k] - mean[k];
        var[k] += d * d;
      }
    }

    const auto center = grid.center(vox.index);
    const double s2 = grid.size * grid.size;
    stats.at(v, 0) = std::log1p(n);
    for (int k = 0; k < 3; ++k) {
      stats.at(v, 1 + k) = (mean[k] - center[k]) / grid.size;
      stats.at(v, 4 + k) = var[k] / (n * s2);
    }
    stats.at(v, 7) = has_intensity ? intensity_sum / n : 0.0;
  }
  return stats;
}

Tensor voxel_positions(const VoxelAssignment& assign, const VoxelGrid& grid) {
  validate_grid(grid);
  const int v_count = assign.voxel_count();
  Tensor pos = Tensor::zeros({v_count, 3});
  for (int v = 0; v < v_count; ++v) {
    const auto center = grid.center(assign.voxels[v].index);
    for (int k = 0; k < 3; ++k) {
      pos.at(v, k) = (center[k] - grid.origin[k]) /
                     (grid.extents[k] * grid.size);
    }
  }
  return pos;
}

}  // namespace ovpseg
