#include "rcmact/policy.hpp"

#include <algorithm>
#include <cmath>

#include "rcmact/error.hpp"

namespace rcmact {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMat>;
using Weights = Eigen::Map<RowMat>;
using ConstBias = Eigen::Map<const Eigen::VectorXd>;
using Bias = Eigen::Map<Eigen::VectorXd>;

constexpr int kShardRows = 8;

ConstWeights weights_of(const std::vector<double>& w, const LayerShape& l) {
  return ConstWeights(w.data() + l.offset, l.out, l.in);
}
ConstBias bias_of(const std::vector<double>& w, const LayerShape& l) {
  return ConstBias(w.data() + l.bias_offset(), l.out);
}

void activate(Eigen::MatrixXd& a, Activation act) {
  if (act == Activation::Relu) {
    a = a.cwiseMax(0.0);
  } else {
    a = a.array().tanh().matrix();
  }
}

// d act / d preactivation, given the preactivation and the activation output.
Eigen::MatrixXd activation_slope(const Eigen::MatrixXd& pre, const Eigen::MatrixXd& post, Activation act) {
  if (act == Activation::Relu) return (pre.array() > 0.0).cast<double>().matrix();
  return (1.0 - post.array().square()).matrix();
}

struct MlpTrace {
  std::vector<Eigen::MatrixXd> inputs;    // per layer, n x in
  std::vector<Eigen::MatrixXd> pre;       // per hidden layer
  std::vector<Eigen::MatrixXd> post;      // per hidden layer, before dropout
};

// Batched forward; `masks` (optional) holds one dropout mask per hidden layer.
Eigen::MatrixXd mlp_forward(const std::vector<double>& w, const std::vector<LayerShape>& layers,
                            Eigen::MatrixXd x, Activation act, const std::vector<Eigen::MatrixXd>* masks,
                            MlpTrace* trace) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd a = x * weights_of(w, layers[l]).transpose();
    a.rowwise() += bias_of(w, layers[l]).transpose();
    if (trace) trace->inputs.push_back(std::move(x));
    if (l + 1 == layers.size()) return a;
    if (trace) trace->pre.push_back(a);
    activate(a, act);
    if (trace) trace->post.push_back(a);
    if (masks) a.array() *= (*masks)[l].array();
    x = std::move(a);
  }
  return x;
}

// Accumulates parameter gradients into `grads`; returns d loss / d input.
Eigen::MatrixXd mlp_backward(const std::vector<double>& w, const std::vector<LayerShape>& layers,
                             const MlpTrace& trace, Eigen::MatrixXd g, Activation act,
                             const std::vector<Eigen::MatrixXd>* masks, std::vector<double>& grads,
                             bool need_input_grad) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    const LayerShape& shape = layers[l];
    Weights(grads.data() + shape.offset, shape.out, shape.in).noalias() += g.transpose() * trace.inputs[l];
    Bias(grads.data() + shape.bias_offset(), shape.out) += g.colwise().sum().transpose();
    if (l == 0 && !need_input_grad) return {};
    Eigen::MatrixXd d_in = g * weights_of(w, shape);
    if (l == 0) return d_in;
    if (masks) d_in.array() *= (*masks)[l - 1].array();
    d_in.array() *= activation_slope(trace.pre[l - 1], trace.post[l - 1], act).array();
    g = std::move(d_in);
  }
  return {};
}

std::vector<Eigen::MatrixXd> mask_rows(const std::vector<Eigen::MatrixXd>& masks, int r0, int n) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(masks.size());
  for (const auto& m : masks) out.push_back(m.middleRows(r0, n));
  return out;
}

struct ShardResult {
  double squared_error = 0.0;
  double kl = 0.0;
  std::vector<double> grads;
};

void shard_kernel(const PolicyParameters& params, const NetworkLayout& layout, const TrainingBatch& batch,
                  const TrainingNoise& noise, int r0, int n, double valid_count, ShardResult& out) {
  const PolicyConfig& cfg = params.config;
  const int k = cfg.chunk_size;
  const int latent = cfg.latent_dim;
  const int batch_size = batch.size();
  const auto& w = params.weights;
  out.grads.assign(layout.total, 0.0);

  const auto enc_masks = mask_rows(noise.encoder_masks, r0, n);
  const auto dec_masks = mask_rows(noise.decoder_masks, r0, n);

  Eigen::MatrixXd enc_in(n, k * kActionDim + kProprioDim);
  enc_in << batch.action_chunks.middleRows(r0, n), batch.observations.middleRows(r0, n).middleCols(kProprioOffset, kProprioDim);
  // The encoder only sees real actions; padded targets stay out of the loss.
  for (int j = 0; j < k; ++j) {
    enc_in.middleCols(j * kActionDim, kActionDim).array().colwise() *= batch.chunk_mask.col(j).segment(r0, n).array();
  }
  MlpTrace enc_trace;
  const Eigen::MatrixXd enc_out = mlp_forward(w, layout.encoder, std::move(enc_in), cfg.activation, &enc_masks, &enc_trace);
  const Eigen::MatrixXd mu = enc_out.leftCols(latent);
  const Eigen::MatrixXd log_var = enc_out.rightCols(latent);
  const Eigen::MatrixXd sd = (0.5 * log_var.array()).exp().matrix();
  const Eigen::MatrixXd eps = noise.eps.middleRows(r0, n);
  const Eigen::MatrixXd z = mu + (sd.array() * eps.array()).matrix();

  Eigen::MatrixXd dec_in(n, kObsDim + latent);
  dec_in << batch.observations.middleRows(r0, n), z;
  MlpTrace dec_trace;
  const Eigen::MatrixXd pred = mlp_forward(w, layout.decoder, std::move(dec_in), cfg.activation, &dec_masks, &dec_trace);

  Eigen::MatrixXd diff = pred - batch.action_chunks.middleRows(r0, n);
  for (int j = 0; j < k; ++j) {
    diff.middleCols(j * kActionDim, kActionDim).array().colwise() *= batch.chunk_mask.col(j).segment(r0, n).array();
  }
  out.squared_error = diff.squaredNorm();
  out.kl = 0.5 * (mu.array().square() + log_var.array().exp() - 1.0 - log_var.array()).sum();

  const Eigen::MatrixXd d_pred = (2.0 / valid_count) * diff;
  const Eigen::MatrixXd d_dec_in = mlp_backward(w, layout.decoder, dec_trace, d_pred, cfg.activation, &dec_masks, out.grads, true);
  const Eigen::MatrixXd dz = d_dec_in.rightCols(latent);

  const double kl_scale = cfg.beta / (static_cast<double>(batch_size) * latent);
  Eigen::MatrixXd d_enc_out(n, 2 * latent);
  d_enc_out.leftCols(latent) = dz + kl_scale * mu;
  d_enc_out.rightCols(latent) = (dz.array() * eps.array() * 0.5 * sd.array() +
                                 kl_scale * 0.5 * (log_var.array().exp() - 1.0)).matrix();
  mlp_backward(w, layout.encoder, enc_trace, std::move(d_enc_out), cfg.activation, &enc_masks, out.grads, false);
}

void check_batch(const PolicyParameters& params, const TrainingBatch& batch, const TrainingNoise& noise) {
  const auto& cfg = params.config;
  const int b = batch.size();
  const bool ok = batch.chunk_size() == cfg.chunk_size && batch.observations.cols() == kObsDim &&
                  batch.action_chunks.rows() == b && batch.action_chunks.cols() == cfg.chunk_size * kActionDim &&
                  batch.chunk_mask.rows() == b && noise.eps.rows() == b && noise.eps.cols() == cfg.latent_dim &&
                  noise.encoder_masks.size() == cfg.hidden_dims.size() &&
                  noise.decoder_masks.size() == cfg.hidden_dims.size() && params.weights.size() == params.layout().total;
  if (!ok || b < 1) throw Error(ErrorCode::ShapeMismatch, "batch, noise and parameters disagree");
}

Eigen::MatrixXd chunk_matrix(const Eigen::RowVectorXd& flat, int k) {
  Eigen::MatrixXd out(k, kActionDim);
  for (int j = 0; j < k; ++j) out.row(j) = flat.segment(j * kActionDim, kActionDim);
  return out;
}

}  // namespace

std::string_view to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }
std::string_view to_string(LrSchedule s) { return s == LrSchedule::Cosine ? "cosine" : "constant"; }

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  throw Error(ErrorCode::TypeError, "activation must be relu or tanh, got '" + std::string(s) + "'");
}

LrSchedule parse_lr_schedule(std::string_view s) {
  if (s == "cosine") return LrSchedule::Cosine;
  if (s == "constant") return LrSchedule::Constant;
  throw Error(ErrorCode::TypeError, "lr_schedule must be cosine or constant, got '" + std::string(s) + "'");
}

void PolicyConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::InvalidConfig, what);
  };
  require(chunk_size >= 1, "chunk_size must be >= 1");
  require(latent_dim >= 1, "latent_dim must be >= 1");
  require(!hidden_dims.empty(), "hidden_dims must not be empty");
  for (int h : hidden_dims) require(h >= 1, "hidden sizes must be >= 1");
  require(beta >= 0.0, "beta must be >= 0");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  require(lr >= 0.0 && weight_decay >= 0.0, "lr and weight_decay must be >= 0");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam betas must be in [0, 1)");
  require(epochs >= 0 && batch_size >= 1 && steps_per_epoch >= 0, "epochs, batch_size, steps_per_epoch out of range");
}

NetworkLayout make_layout(const PolicyConfig& config) {
  NetworkLayout layout;
  std::size_t offset = 0;
  auto stack = [&](std::vector<LayerShape>& layers, int in, int out) {
    for (int h : config.hidden_dims) {
      layers.push_back({h, in, offset});
      offset = layers.back().end();
      in = h;
    }
    layers.push_back({out, in, offset});
    offset = layers.back().end();
  };
  stack(layout.encoder, config.chunk_size * kActionDim + kProprioDim, 2 * config.latent_dim);
  stack(layout.decoder, kObsDim + config.latent_dim, config.chunk_size * kActionDim);
  layout.total = offset;
  return layout;
}

PolicyParameters init_parameters(const PolicyConfig& config, const NormStats& stats) {
  config.validate();
  PolicyParameters p;
  p.config = config;
  p.stats = stats;
  const NetworkLayout layout = make_layout(config);
  p.weights.assign(layout.total, 0.0);
  std::mt19937_64 rng(config.seed);
  auto fill = [&](const std::vector<LayerShape>& layers) {
    for (const auto& l : layers) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (std::size_t i = l.offset; i < l.end(); ++i) p.weights[i] = u(rng);
    }
  };
  fill(layout.encoder);
  fill(layout.decoder);
  return p;
}

LatentSample encode(const PolicyParameters& params, const Eigen::MatrixXd& chunk, const Eigen::VectorXd& proprio,
                    std::mt19937_64& rng) {
  const auto& cfg = params.config;
  if (chunk.rows() != cfg.chunk_size || chunk.cols() != kActionDim || proprio.size() != kProprioDim ||
      params.weights.size() != params.layout().total) {
    throw Error(ErrorCode::ShapeMismatch, "encode input shapes do not match the policy config");
  }
  Eigen::MatrixXd x(1, cfg.chunk_size * kActionDim + kProprioDim);
  for (int j = 0; j < cfg.chunk_size; ++j) x.block(0, j * kActionDim, 1, kActionDim) = chunk.row(j);
  x.rightCols(kProprioDim) = proprio.transpose();
  const Eigen::MatrixXd out = mlp_forward(params.weights, params.layout().encoder, std::move(x), cfg.activation, nullptr, nullptr);
  LatentSample s;
  s.mu = out.leftCols(cfg.latent_dim).transpose();
  s.log_var = out.rightCols(cfg.latent_dim).transpose();
  std::normal_distribution<double> normal(0.0, 1.0);
  s.z.resize(cfg.latent_dim);
  for (int j = 0; j < cfg.latent_dim; ++j) s.z(j) = s.mu(j) + std::exp(0.5 * s.log_var(j)) * normal(rng);
  return s;
}

Eigen::MatrixXd decode(const PolicyParameters& params, const Eigen::VectorXd& observation, const Eigen::VectorXd& z) {
  const auto& cfg = params.config;
  if (observation.size() != kObsDim || z.size() != cfg.latent_dim || params.weights.size() != params.layout().total) {
    throw Error(ErrorCode::ShapeMismatch, "decode input shapes do not match the policy config");
  }
  Eigen::MatrixXd x(1, kObsDim + cfg.latent_dim);
  x << observation.transpose(), z.transpose();
  const Eigen::MatrixXd out = mlp_forward(params.weights, params.layout().decoder, std::move(x), cfg.activation, nullptr, nullptr);
  return chunk_matrix(out.row(0), cfg.chunk_size);
}

TrainingNoise draw_noise(const PolicyConfig& config, int batch_size, std::mt19937_64& rng) {
  TrainingNoise noise;
  std::normal_distribution<double> normal(0.0, 1.0);
  noise.eps.resize(batch_size, config.latent_dim);
  for (int b = 0; b < batch_size; ++b)
    for (int j = 0; j < config.latent_dim; ++j) noise.eps(b, j) = normal(rng);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - config.dropout);
  auto masks = [&](std::vector<Eigen::MatrixXd>& out) {
    for (int h : config.hidden_dims) {
      Eigen::MatrixXd m(batch_size, h);
      if (config.dropout > 0.0) {
        for (int b = 0; b < batch_size; ++b)
          for (int j = 0; j < h; ++j) m(b, j) = unit(rng) < config.dropout ? 0.0 : keep_scale;
      } else {
        m.setOnes();
      }
      out.push_back(std::move(m));
    }
  };
  masks(noise.encoder_masks);
  masks(noise.decoder_masks);
  return noise;
}

LossAndGrads loss_and_grads(const PolicyParameters& params, const TrainingBatch& batch, const TrainingNoise& noise) {
  check_batch(params, batch, noise);
  const NetworkLayout layout = params.layout();
  const int b = batch.size();
  const double valid_count = kActionDim * batch.chunk_mask.sum();
  if (!(valid_count > 0.0)) throw Error(ErrorCode::ShapeMismatch, "batch has no unmasked actions");

  const int shards = (b + kShardRows - 1) / kShardRows;
  std::vector<ShardResult> partial(static_cast<std::size_t>(shards));
#pragma omp parallel for schedule(static)
  for (int s = 0; s < shards; ++s) {
    const int r0 = s * kShardRows;
    shard_kernel(params, layout, batch, noise, r0, std::min(kShardRows, b - r0), valid_count, partial[s]);
  }

  LossAndGrads out;
  out.grads.assign(layout.total, 0.0);
  double squared_error = 0.0;
  double kl = 0.0;
  for (const auto& p : partial) {
    squared_error += p.squared_error;
    kl += p.kl;
    Eigen::Map<Eigen::VectorXd>(out.grads.data(), static_cast<Eigen::Index>(out.grads.size())) +=
        Eigen::Map<const Eigen::VectorXd>(p.grads.data(), static_cast<Eigen::Index>(p.grads.size()));
  }
  out.reconst = squared_error / valid_count;
  out.reg = kl / (static_cast<double>(b) * params.config.latent_dim);
  out.total = out.reconst + params.config.beta * out.reg;
  if (!std::isfinite(out.total)) throw Error(ErrorCode::NonFiniteLoss, "loss is not finite");
  return out;
}

LossAndGrads loss_and_grads(const PolicyParameters& params, const TrainingBatch& batch, std::mt19937_64& rng) {
  return loss_and_grads(params, batch, draw_noise(params.config, batch.size(), rng));
}

double scheduled_lr(const PolicyConfig& config, long step, long total_steps) {
  if (config.lr_schedule == LrSchedule::Constant || total_steps <= 0) return config.lr;
  constexpr double kPi = 3.14159265358979323846;
  return config.lr * 0.5 * (1.0 + std::cos(kPi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

PolicyParameters train(std::span<const EpisodeRecord> episodes, const NormStats& stats, const PolicyConfig& config,
                       std::vector<TrainLogEntry>* log, const TrainProgress& progress) {
  PolicyParameters params = init_parameters(config, stats);
  if (episodes.empty()) throw Error(ErrorCode::EmptyDataset, "no training episodes");
  long timesteps = 0;
  for (const auto& ep : episodes) timesteps += ep.length();
  const long steps_per_epoch = config.steps_per_epoch > 0
                                   ? config.steps_per_epoch
                                   : std::max(1L, (timesteps + config.batch_size - 1) / config.batch_size);
  const long total_steps = steps_per_epoch * config.epochs;

  // Weight decay applies to weight matrices, not biases.
  const NetworkLayout layout = params.layout();
  std::vector<char> decays(layout.total, 0);
  for (const auto* layers : {&layout.encoder, &layout.decoder}) {
    for (const auto& l : *layers) std::fill(decays.begin() + l.offset, decays.begin() + l.bias_offset(), 1);
  }

  std::vector<double> m(layout.total, 0.0);
  std::vector<double> v(layout.total, 0.0);
  std::mt19937_64 rng(config.seed ^ 0x5deece66dULL);
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    TrainLogEntry entry;
    entry.epoch = epoch;
    for (long s = 0; s < steps_per_epoch; ++s, ++step) {
      const TrainingBatch batch = sample_batch(episodes, stats, config.chunk_size, config.batch_size, rng);
      const TrainingNoise noise = draw_noise(config, config.batch_size, rng);
      LossAndGrads lg;
      try {
        lg = loss_and_grads(params, batch, noise);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFiniteLoss) throw;
        throw Error(ErrorCode::NonFiniteLoss, "training diverged at step " + std::to_string(step));
      }
      const double lr = scheduled_lr(config, step, total_steps);
      const double t = static_cast<double>(step + 1);
      const double c1 = 1.0 - std::pow(config.adam_beta1, t);
      const double c2 = 1.0 - std::pow(config.adam_beta2, t);
      for (std::size_t i = 0; i < layout.total; ++i) {
        const double g = lg.grads[i];
        m[i] = config.adam_beta1 * m[i] + (1.0 - config.adam_beta1) * g;
        v[i] = config.adam_beta2 * v[i] + (1.0 - config.adam_beta2) * g * g;
        double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + config.adam_eps);
        if (decays[i]) update += config.weight_decay * params.weights[i];
        params.weights[i] -= lr * update;
      }
      entry.loss += lg.total;
      entry.reconst += lg.reconst;
      entry.reg += lg.reg;
      entry.lr = lr;
    }
    const double n = static_cast<double>(steps_per_epoch);
    entry.loss /= n;
    entry.reconst /= n;
    entry.reg /= n;
    if (log) log->push_back(entry);
    if (progress) progress(entry);
  }
  return params;
}

Eigen::MatrixXd decode_batch(const PolicyParameters& params, const Eigen::MatrixXd& observations, const Eigen::MatrixXd& z) {
  Eigen::MatrixXd x(observations.rows(), kObsDim + params.config.latent_dim);
  x << observations, z;
  return mlp_forward(params.weights, params.layout().decoder, std::move(x), params.config.activation, nullptr, nullptr);
}

double open_loop_reconstruction(const PolicyParameters& params, const EpisodeRecord& ep, LatentSource source) {
  const TrainingBatch batch = full_batch(ep, params.stats, params.config.chunk_size);
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(batch.size(), params.config.latent_dim);
  if (source == LatentSource::PosteriorMean) {
    Eigen::MatrixXd x(batch.size(), batch.action_chunks.cols() + kProprioDim);
    x << batch.action_chunks, batch.observations.rightCols(kProprioDim);
    z = mlp_forward(params.weights, params.layout().encoder, std::move(x), params.config.activation, nullptr, nullptr)
            .leftCols(params.config.latent_dim);
  }
  const Eigen::MatrixXd pred = decode_batch(params, batch.observations, z);
  Eigen::MatrixXd diff = pred - batch.action_chunks;
  for (int j = 0; j < batch.chunk_size(); ++j) {
    diff.middleCols(j * kActionDim, kActionDim).array().colwise() *= batch.chunk_mask.col(j).array();
  }
  return diff.squaredNorm() / (kActionDim * batch.chunk_mask.sum());
}

}  // namespace rcmact
