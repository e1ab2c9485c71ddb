#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "rcmact/dataset.hpp"
#include "rcmact/types.hpp"

namespace rcmact {

enum class Activation { Relu, Tanh };
enum class LrSchedule { Cosine, Constant };

std::string_view to_string(Activation a);
std::string_view to_string(LrSchedule s);
Activation parse_activation(std::string_view s);
LrSchedule parse_lr_schedule(std::string_view s);

struct PolicyConfig {
  int chunk_size = 90;
  int latent_dim = 8;
  std::vector<int> hidden_dims{256, 256};
  double beta = 0.5;
  double dropout = 0.1;
  double lr = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.95;
  double adam_eps = 1e-8;
  double weight_decay = 1e-4;
  int epochs = 2000;
  int batch_size = 32;
  int steps_per_epoch = 0;  // 0: ceil(total timesteps / batch_size)
  LrSchedule lr_schedule = LrSchedule::Cosine;
  Activation activation = Activation::Relu;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig.
  void validate() const;
};

// Dense layer `out x in`, weights row-major followed by the bias, inside the
// flat parameter vector.
struct LayerShape {
  int out = 0;
  int in = 0;
  std::size_t offset = 0;

  std::size_t weight_count() const { return static_cast<std::size_t>(out) * static_cast<std::size_t>(in); }
  std::size_t bias_offset() const { return offset + weight_count(); }
  std::size_t end() const { return bias_offset() + static_cast<std::size_t>(out); }
};

// Encoder: [flattened chunk (k*5) | normalized proprio (5)] -> hidden... ->
// [mu | log_var]. Decoder: [normalized observation (17) | z] -> hidden... ->
// chunk (k*5). Encoder layers come first in the flat vector.
struct NetworkLayout {
  std::vector<LayerShape> encoder;
  std::vector<LayerShape> decoder;
  std::size_t total = 0;
};

NetworkLayout make_layout(const PolicyConfig& config);

struct PolicyParameters {
  PolicyConfig config;
  NormStats stats;
  std::vector<double> weights;

  NetworkLayout layout() const { return make_layout(config); }
};

/// Uniform(-1/sqrt(in), 1/sqrt(in)) for weights and biases.
PolicyParameters init_parameters(const PolicyConfig& config, const NormStats& stats);

struct LatentSample {
  Eigen::VectorXd mu;
  Eigen::VectorXd log_var;
  Eigen::VectorXd z;
};

/// Posterior sample for one normalized chunk (k x 5) and normalized proprio.
/// Inference mode: no dropout. Throws ShapeMismatch.
LatentSample encode(const PolicyParameters& params, const Eigen::MatrixXd& chunk,
                    const Eigen::VectorXd& proprio, std::mt19937_64& rng);

/// Normalized chunk (k x 5) for a normalized observation and latent z.
Eigen::MatrixXd decode(const PolicyParameters& params, const Eigen::VectorXd& observation,
                       const Eigen::VectorXd& z);

/// Row-wise decode: n x 17 observations and n x latent_dim latents to
/// n x (k*5) flattened chunks.
Eigen::MatrixXd decode_batch(const PolicyParameters& params, const Eigen::MatrixXd& observations,
                             const Eigen::MatrixXd& z);

// Randomness consumed by one training step. Masks hold 0 or 1/(1-p).
struct TrainingNoise {
  Eigen::MatrixXd eps;  // B x latent_dim
  std::vector<Eigen::MatrixXd> encoder_masks;
  std::vector<Eigen::MatrixXd> decoder_masks;
};

TrainingNoise draw_noise(const PolicyConfig& config, int batch_size, std::mt19937_64& rng);

struct LossAndGrads {
  double total = 0.0;
  double reconst = 0.0;
  double reg = 0.0;
  std::vector<double> grads;
};

// L_reconst: mean squared error over unmasked (sample, step, dim) entries.
// L_reg: KL(q || N(0, I)) summed over latent dims, divided by latent_dim and
// averaged over the batch. Total: L_reconst + beta * L_reg.

/// Sharded OpenMP kernel. Shards have a fixed size and are reduced in order,
/// so the result does not depend on the thread count.
LossAndGrads loss_and_grads(const PolicyParameters& params, const TrainingBatch& batch,
                            const TrainingNoise& noise);
LossAndGrads loss_and_grads(const PolicyParameters& params, const TrainingBatch& batch, std::mt19937_64& rng);

/// Scalar per-sample loops, kept as the reference for the sharded kernel.
LossAndGrads loss_and_grads_reference(const PolicyParameters& params, const TrainingBatch& batch,
                                      const TrainingNoise& noise);

struct TrainLogEntry {
  int epoch = 0;
  double loss = 0.0;
  double reconst = 0.0;
  double reg = 0.0;
  double lr = 0.0;
};

using TrainProgress = std::function<void(const TrainLogEntry&)>;

/// AdamW with decoupled weight decay on weight matrices, cosine or constant
/// learning rate. Deterministic for a given dataset and config. Throws
/// NonFiniteLoss naming the step.
PolicyParameters train(std::span<const EpisodeRecord> episodes, const NormStats& stats,
                       const PolicyConfig& config, std::vector<TrainLogEntry>* log = nullptr,
                       const TrainProgress& progress = {});

/// Learning rate at `step` of `total_steps`.
double scheduled_lr(const PolicyConfig& config, long step, long total_steps);

enum class LatentSource { Prior, PosteriorMean };

/// Mean squared normalized error of the decoded chunk against the recorded
/// chunk, over unmasked entries of every timestep of `ep`. Prior decodes with
/// z = 0 as inference does; PosteriorMean uses the encoder's mu for the
/// recorded chunk, as the training loss does without sampling noise.
double open_loop_reconstruction(const PolicyParameters& params, const EpisodeRecord& ep,
                                LatentSource source = LatentSource::Prior);

// ARNM model file, little-endian:
//   "ARNM" | u32 version (1) | u32 metadata length | metadata (key=value
//   lines: config and norm stats) | u32 layer count | per layer u32 out,
//   u32 in | u64 weight count | f64 weights
inline constexpr std::uint32_t kModelFormatVersion = 1;

std::string serialize_model(const PolicyParameters& params);
/// Throws CorruptHeader, FormatVersionMismatch, TruncatedPayload, ShapeMismatch.
PolicyParameters parse_model(std::string_view bytes);
void save_model(const PolicyParameters& params, const std::filesystem::path& path);
PolicyParameters load_model(const std::filesystem::path& path);

}  // namespace rcmact
