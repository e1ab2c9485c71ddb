#include <algorithm>

#include "bytes.hpp"
#include "rcmact/error.hpp"
#include "rcmact/policy.hpp"
#include "rcmact/text_format.hpp"

namespace rcmact {
namespace {

constexpr char kMagic[4] = {'A', 'R', 'N', 'M'};

template <typename Vec>
std::string reals(const Vec& v) {
  return format_reals(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

template <typename Vec>
void load_reals(const KeyValues& kv, const std::string& key, Vec& v) {
  const auto values = parse_reals(require_key(kv, key));
  if (static_cast<Eigen::Index>(values.size()) != v.size()) {
    throw Error(ErrorCode::CorruptHeader, "wrong number of values for " + key);
  }
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = values[static_cast<std::size_t>(i)];
}

std::string model_metadata(const PolicyParameters& p) {
  const PolicyConfig& c = p.config;
  KeyValues kv;
  kv["chunk_size"] = std::to_string(c.chunk_size);
  kv["latent_dim"] = std::to_string(c.latent_dim);
  std::string hidden;
  for (std::size_t i = 0; i < c.hidden_dims.size(); ++i) hidden += (i ? "," : "") + std::to_string(c.hidden_dims[i]);
  kv["hidden_dims"] = hidden;
  kv["beta"] = format_real(c.beta);
  kv["dropout"] = format_real(c.dropout);
  kv["lr"] = format_real(c.lr);
  kv["adam_beta1"] = format_real(c.adam_beta1);
  kv["adam_beta2"] = format_real(c.adam_beta2);
  kv["adam_eps"] = format_real(c.adam_eps);
  kv["weight_decay"] = format_real(c.weight_decay);
  kv["epochs"] = std::to_string(c.epochs);
  kv["batch_size"] = std::to_string(c.batch_size);
  kv["steps_per_epoch"] = std::to_string(c.steps_per_epoch);
  kv["lr_schedule"] = std::string(to_string(c.lr_schedule));
  kv["activation"] = std::string(to_string(c.activation));
  kv["seed"] = std::to_string(c.seed);
  kv["stats.obs_mean"] = reals(p.stats.obs_mean);
  kv["stats.obs_std"] = reals(p.stats.obs_std);
  kv["stats.act_mean"] = reals(p.stats.act_mean);
  kv["stats.act_std"] = reals(p.stats.act_std);
  return format_key_values(kv);
}

PolicyParameters parse_metadata(const KeyValues& kv) {
  PolicyParameters p;
  PolicyConfig& c = p.config;
  c.chunk_size = static_cast<int>(parse_int(require_key(kv, "chunk_size")));
  c.latent_dim = static_cast<int>(parse_int(require_key(kv, "latent_dim")));
  c.hidden_dims.clear();
  std::string_view hidden = require_key(kv, "hidden_dims");
  while (!hidden.empty()) {
    const auto comma = hidden.find(',');
    c.hidden_dims.push_back(static_cast<int>(parse_int(hidden.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    hidden.remove_prefix(comma + 1);
  }
  c.beta = parse_real(require_key(kv, "beta"));
  c.dropout = parse_real(require_key(kv, "dropout"));
  c.lr = parse_real(require_key(kv, "lr"));
  c.adam_beta1 = parse_real(require_key(kv, "adam_beta1"));
  c.adam_beta2 = parse_real(require_key(kv, "adam_beta2"));
  c.adam_eps = parse_real(require_key(kv, "adam_eps"));
  c.weight_decay = parse_real(require_key(kv, "weight_decay"));
  c.epochs = static_cast<int>(parse_int(require_key(kv, "epochs")));
  c.batch_size = static_cast<int>(parse_int(require_key(kv, "batch_size")));
  c.steps_per_epoch = static_cast<int>(parse_int(require_key(kv, "steps_per_epoch")));
  c.lr_schedule = parse_lr_schedule(require_key(kv, "lr_schedule"));
  c.activation = parse_activation(require_key(kv, "activation"));
  c.seed = static_cast<std::uint64_t>(std::stoull(require_key(kv, "seed")));
  load_reals(kv, "stats.obs_mean", p.stats.obs_mean);
  load_reals(kv, "stats.obs_std", p.stats.obs_std);
  load_reals(kv, "stats.act_mean", p.stats.act_mean);
  load_reals(kv, "stats.act_std", p.stats.act_std);
  c.validate();
  return p;
}

}  // namespace

std::string serialize_model(const PolicyParameters& params) {
  const NetworkLayout layout = params.layout();
  if (params.weights.size() != layout.total) throw Error(ErrorCode::ShapeMismatch, "weight count does not match config");
  const std::string meta = model_metadata(params);
  ByteWriter w;
  w.raw(std::string_view(kMagic, 4));
  w.u32(kModelFormatVersion);
  w.u32(static_cast<std::uint32_t>(meta.size()));
  w.raw(meta);
  w.u32(static_cast<std::uint32_t>(layout.encoder.size() + layout.decoder.size()));
  for (const auto* layers : {&layout.encoder, &layout.decoder}) {
    for (const auto& l : *layers) {
      w.u32(static_cast<std::uint32_t>(l.out));
      w.u32(static_cast<std::uint32_t>(l.in));
    }
  }
  w.u64(params.weights.size());
  for (double x : params.weights) w.f64(x);
  return w.take();
}

PolicyParameters parse_model(std::string_view bytes) {
  if (bytes.size() < 4) throw Error(ErrorCode::TruncatedPayload, "file shorter than the magic");
  ByteReader r(bytes);
  if (r.raw(4) != std::string_view(kMagic, 4)) throw Error(ErrorCode::CorruptHeader, "bad magic, not an ARNM file");
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion) {
    throw Error(ErrorCode::FormatVersionMismatch, "unsupported ARNM version " + std::to_string(version));
  }
  const std::uint32_t meta_len = r.u32();
  const std::string_view meta = r.raw(meta_len);
  PolicyParameters p;
  try {
    p = parse_metadata(parse_key_values(meta, ErrorCode::CorruptHeader));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CorruptHeader) throw;
    throw Error(ErrorCode::CorruptHeader, e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::CorruptHeader, e.what());
  }

  const NetworkLayout layout = p.layout();
  const std::uint32_t count = r.u32();
  if (count != layout.encoder.size() + layout.decoder.size()) {
    throw Error(ErrorCode::ShapeMismatch, "layer count does not match the stored config");
  }
  for (const auto* layers : {&layout.encoder, &layout.decoder}) {
    for (const auto& l : *layers) {
      const std::uint32_t out = r.u32();
      const std::uint32_t in = r.u32();
      if (out != static_cast<std::uint32_t>(l.out) || in != static_cast<std::uint32_t>(l.in)) {
        throw Error(ErrorCode::ShapeMismatch, "layer shape does not match the stored config");
      }
    }
  }
  const std::uint64_t n = r.u64();
  if (n != layout.total) throw Error(ErrorCode::ShapeMismatch, "weight count does not match the shape table");
  if (r.remaining() < 8 * n) throw Error(ErrorCode::TruncatedPayload, "weight payload is truncated");
  if (r.remaining() > 8 * n) throw Error(ErrorCode::CorruptHeader, "trailing bytes after weight payload");
  p.weights.resize(static_cast<std::size_t>(n));
  for (auto& x : p.weights) x = r.f64();
  return p;
}

void save_model(const PolicyParameters& params, const std::filesystem::path& path) {
  write_file(path, serialize_model(params));
}

PolicyParameters load_model(const std::filesystem::path& path) { return parse_model(read_file(path)); }

}  // namespace rcmact
