#include "ovpseg/checkpoint.hpp"

#include <string>
#include <utility>
#include <vector>

#include "detail/byteio.hpp"
#include "ovpseg/errors.hpp"

namespace ovpseg {
namespace {

constexpr char kMagic[] = "OVCK";
// Generous sanity caps: a corrupt header should fail parsing, not try to
// allocate terabytes.
constexpr std::uint64_t kMaxStringLen = 1u << 20;
constexpr std::uint64_t kMaxDims = 8;

}  // namespace

void save_checkpoint(const Model& model, const std::string& dataset_signature,
                     const std::string& path) {
  using namespace detail;
  std::string out;
  out += kMagic;
  append_u32(out, kCheckpointVersion);

  const ModelConfig& c = model.config();
  append_u32(out, static_cast<std::uint32_t>(c.d_emb));
  append_u32(out, static_cast<std::uint32_t>(c.d_lidar));
  append_u32(out, static_cast<std::uint32_t>(c.enc_hidden));
  append_u32(out, static_cast<std::uint32_t>(c.d_q));
  append_u32(out, static_cast<std::uint32_t>(c.q_learn));
  append_u32(out, static_cast<std::uint32_t>(c.layers));
  append_u32(out, c.fuse_lidar ? 1 : 0);
  append_f64(out, c.t_init);
  append_u32(out, static_cast<std::uint32_t>(model.stuff_query_count()));

  append_u64(out, dataset_signature.size());
  out += dataset_signature;

  const ParamStore& params = model.params();
  append_u64(out, static_cast<std::uint64_t>(params.count()));
  for (int i = 0; i < params.count(); ++i) {
    const std::string& name = params.names()[i];
    const Tensor& t = params.vars()[i].value();
    append_u64(out, name.size());
    out += name;
    append_u32(out, static_cast<std::uint32_t>(t.ndim()));
    for (int d = 0; d < t.ndim(); ++d)
      append_u64(out, static_cast<std::uint64_t>(t.dim(d)));
    for (const double v : t.values()) append_f64(out, v);
  }

  write_file(path, out);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  using detail::ByteReader;
  ByteReader r(detail::read_file(path));

  if (r.tag4("magic") != kMagic) {
    throw ParseError("not a checkpoint file (bad magic)", 0);
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw VersionError("unsupported checkpoint version " +
                       std::to_string(version) + " (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }

  ModelConfig config;
  config.d_emb = static_cast<int>(r.u32("d_emb"));
  config.d_lidar = static_cast<int>(r.u32("d_lidar"));
  config.enc_hidden = static_cast<int>(r.u32("enc_hidden"));
  config.d_q = static_cast<int>(r.u32("d_q"));
  config.q_learn = static_cast<int>(r.u32("q_learn"));
  config.layers = static_cast<int>(r.u32("layers"));
  config.fuse_lidar = r.u32("fuse_lidar") != 0;
  config.t_init = r.f64("t_init");
  const int stuff_queries = static_cast<int>(r.u32("stuff_query_count"));

  const std::uint64_t sig_len = r.u64("signature length");
  if (sig_len > kMaxStringLen)
    throw ParseError("implausible signature length", r.pos());
  std::string signature = r.bytes(sig_len, "dataset signature");

  // Architecture validation happens in the constructor; surface it as a
  // parse failure because the file, not the caller, supplied the numbers.
  LoadedCheckpoint loaded{[&] {
                            try {
                              return Model(config, stuff_queries, 0);
                            } catch (const ConfigError& e) {
                              throw ParseError(
                                  std::string("invalid architecture in "
                                              "checkpoint: ") +
                                      e.what(),
                                  r.pos());
                            }
                          }(),
                          std::move(signature)};

  const ParamStore& params = loaded.model.params();
  const std::uint64_t stored = r.u64("parameter count");
  if (stored != static_cast<std::uint64_t>(params.count())) {
    throw ContractError("checkpoint holds " + std::to_string(stored) +
                        " parameter tensors, model expects " +
                        std::to_string(params.count()));
  }

  for (int i = 0; i < params.count(); ++i) {
    const std::uint64_t name_len = r.u64("parameter name length");
    if (name_len > kMaxStringLen)
      throw ParseError("implausible parameter name length", r.pos());
    const std::string name = r.bytes(name_len, "parameter name");
    if (name != params.names()[i]) {
      throw ContractError("checkpoint parameter '" + name +
                          "' does not match model parameter '" +
                          params.names()[i] + "' at slot " + std::to_string(i));
    }

    const std::uint32_t ndim = r.u32("tensor rank");
    if (ndim > kMaxDims) throw ParseError("implausible tensor rank", r.pos());
    std::vector<int> shape(ndim);
    std::uint64_t total = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const std::uint64_t dim = r.u64("tensor dimension");
      shape[d] = static_cast<int>(dim);
      total *= dim;
    }
    const Tensor& expect = params.vars()[i].value();
    if (shape != expect.shape()) {
      throw ContractError("checkpoint parameter '" + name +
                          "' has a different shape than the model");
    }
    r.need_counted(total, 8, "parameter values");
    Tensor values = Tensor::zeros(shape);
    for (std::size_t k = 0; k < values.values().size(); ++k)
      values.values()[k] = r.f64("parameter value");

    Var var = params.vars()[i];  // shares the node; overwrite in place
    var.mutable_value() = std::move(values);
  }

  if (!r.done()) {
    throw ParseError("trailing bytes after checkpoint payload", r.pos());
  }
  return loaded;
}

void require_signature_match(const std::string& checkpoint_signature,
                             const DatasetManifest& manifest) {
  const std::string expected = dataset_signature(manifest);
  if (checkpoint_signature != expected) {
    throw ContractError(
        "checkpoint was trained against a different vocabulary: checkpoint "
        "signature '" +
        checkpoint_signature + "', dataset signature '" + expected + "'");
  }
}

}  // namespace ovpseg
