// Serial scalar implementation of the CVAE loss and its gradient. It shares
// nothing with the batched kernel beyond the parameter layout, so the two can
// be checked against each other.

#include <cmath>

#include "rcmact/error.hpp"
#include "rcmact/policy.hpp"

namespace rcmact {
namespace {

struct LayerCache {
  std::vector<double> input;
  std::vector<double> pre;   // hidden layers only
  std::vector<double> post;  // after activation, before dropout
};

double act_fn(double x, Activation a) { return a == Activation::Relu ? (x > 0.0 ? x : 0.0) : std::tanh(x); }

double act_slope(double pre, double post, Activation a) {
  if (a == Activation::Relu) return pre > 0.0 ? 1.0 : 0.0;
  return 1.0 - post * post;
}

std::vector<double> forward(const std::vector<double>& w, const std::vector<LayerShape>& layers,
                            std::vector<double> x, Activation act, const std::vector<Eigen::MatrixXd>& masks,
                            int row, std::vector<LayerCache>& caches) {
  caches.assign(layers.size(), {});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerShape& s = layers[l];
    std::vector<double> y(static_cast<std::size_t>(s.out));
    for (int o = 0; o < s.out; ++o) {
      double acc = w[s.bias_offset() + o];
      for (int i = 0; i < s.in; ++i) acc += w[s.offset + static_cast<std::size_t>(o) * s.in + i] * x[i];
      y[o] = acc;
    }
    caches[l].input = std::move(x);
    if (l + 1 == layers.size()) return y;
    caches[l].pre = y;
    for (int o = 0; o < s.out; ++o) y[o] = act_fn(y[o], act);
    caches[l].post = y;
    for (int o = 0; o < s.out; ++o) y[o] *= masks[l](row, o);
    x = std::move(y);
  }
  return x;
}

std::vector<double> backward(const std::vector<double>& w, const std::vector<LayerShape>& layers,
                             const std::vector<LayerCache>& caches, std::vector<double> g, Activation act,
                             const std::vector<Eigen::MatrixXd>& masks, int row, std::vector<double>& grads) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    const LayerShape& s = layers[l];
    const auto& in = caches[l].input;
    std::vector<double> d_in(static_cast<std::size_t>(s.in), 0.0);
    for (int o = 0; o < s.out; ++o) {
      grads[s.bias_offset() + o] += g[o];
      for (int i = 0; i < s.in; ++i) {
        const std::size_t idx = s.offset + static_cast<std::size_t>(o) * s.in + i;
        grads[idx] += g[o] * in[i];
        d_in[i] += g[o] * w[idx];
      }
    }
    if (l > 0) {
      const auto& prev = caches[l - 1];
      for (int i = 0; i < s.in; ++i) d_in[i] *= masks[l - 1](row, i) * act_slope(prev.pre[i], prev.post[i], act);
    }
    g = std::move(d_in);
  }
  return g;
}

}  // namespace

LossAndGrads loss_and_grads_reference(const PolicyParameters& params, const TrainingBatch& batch,
                                      const TrainingNoise& noise) {
  const PolicyConfig& cfg = params.config;
  const NetworkLayout layout = params.layout();
  const int b_count = batch.size();
  const int k = cfg.chunk_size;
  const int latent = cfg.latent_dim;
  if (batch.chunk_size() != k || params.weights.size() != layout.total || noise.eps.rows() != b_count ||
      noise.eps.cols() != latent) {
    throw Error(ErrorCode::ShapeMismatch, "batch, noise and parameters disagree");
  }

  double valid = 0.0;
  for (int b = 0; b < b_count; ++b)
    for (int j = 0; j < k; ++j) valid += kActionDim * batch.chunk_mask(b, j);

  LossAndGrads out;
  out.grads.assign(layout.total, 0.0);
  double sq = 0.0;
  double kl = 0.0;
  const double kl_scale = cfg.beta / (static_cast<double>(b_count) * latent);
  std::vector<LayerCache> enc_cache, dec_cache;

  for (int b = 0; b < b_count; ++b) {
    std::vector<double> enc_in;
    for (int j = 0; j < k * kActionDim; ++j) enc_in.push_back(batch.chunk_mask(b, j / kActionDim) * batch.action_chunks(b, j));
    for (int j = 0; j < kProprioDim; ++j) enc_in.push_back(batch.observations(b, kProprioOffset + j));
    const auto enc_out = forward(params.weights, layout.encoder, enc_in, cfg.activation, noise.encoder_masks, b, enc_cache);

    std::vector<double> z(latent), sd(latent);
    for (int j = 0; j < latent; ++j) {
      sd[j] = std::exp(0.5 * enc_out[latent + j]);
      z[j] = enc_out[j] + sd[j] * noise.eps(b, j);
      kl += 0.5 * (enc_out[j] * enc_out[j] + std::exp(enc_out[latent + j]) - 1.0 - enc_out[latent + j]);
    }

    std::vector<double> dec_in;
    for (int j = 0; j < kObsDim; ++j) dec_in.push_back(batch.observations(b, j));
    for (int j = 0; j < latent; ++j) dec_in.push_back(z[j]);
    const auto pred = forward(params.weights, layout.decoder, dec_in, cfg.activation, noise.decoder_masks, b, dec_cache);

    std::vector<double> d_pred(pred.size(), 0.0);
    for (int j = 0; j < k; ++j) {
      if (batch.chunk_mask(b, j) == 0.0) continue;
      for (int d = 0; d < kActionDim; ++d) {
        const int c = j * kActionDim + d;
        const double e = pred[c] - batch.action_chunks(b, c);
        sq += e * e;
        d_pred[c] = 2.0 * e / valid;
      }
    }
    const auto d_dec_in = backward(params.weights, layout.decoder, dec_cache, d_pred, cfg.activation, noise.decoder_masks, b, out.grads);

    std::vector<double> d_enc_out(2 * latent);
    for (int j = 0; j < latent; ++j) {
      const double dz = d_dec_in[kObsDim + j];
      const double lv = enc_out[latent + j];
      d_enc_out[j] = dz + kl_scale * enc_out[j];
      d_enc_out[latent + j] = dz * noise.eps(b, j) * 0.5 * sd[j] + kl_scale * 0.5 * (std::exp(lv) - 1.0);
    }
    backward(params.weights, layout.encoder, enc_cache, d_enc_out, cfg.activation, noise.encoder_masks, b, out.grads);
  }

  out.reconst = sq / valid;
  out.reg = kl / (static_cast<double>(b_count) * latent);
  out.total = out.reconst + cfg.beta * out.reg;
  if (!std::isfinite(out.total)) throw Error(ErrorCode::NonFiniteLoss, "loss is not finite");
  return out;
}

}  // namespace rcmact
