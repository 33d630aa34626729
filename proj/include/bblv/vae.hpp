#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bblv/rng.hpp"
#include "bblv/tape.hpp"
#include "bblv/tensor.hpp"

namespace bblv {

enum class ObsModel : std::uint32_t { kBernoulli = 0, kDiscretizedLogistic = 1 };

// Posterior log-std is clamped to this range everywhere it is produced.
inline constexpr float kLogStdMin = -7.0f;
inline constexpr float kLogStdMax = 2.0f;
// Logistic observation log-scale clamp (raw 0..255 pixel units).
inline constexpr float kLogScaleMin = -7.0f;
inline constexpr float kLogScaleMax = 7.0f;
// Bernoulli probabilities are kept inside [2^-16, 1-2^-16] for coding.
inline constexpr double kBernoulliFloor = 1.0 / 65536.0;

struct Mlp {
  Tensor w1, b1, w2, b2, w3, b3;
};

// Two-hidden-layer tanh MLP encoder/decoder pair with a standard normal
// prior. Encoder head emits [mean, log_std] (width 2L); decoder head emits
// Bernoulli logits (width D) or logistic mean/log-scale pairs (width 2D).
struct VaeModel {
  int data_dim = 0;
  int hidden_dim = 0;
  int latent_dim = 0;
  ObsModel obs = ObsModel::kBernoulli;
  Mlp enc, dec;

  static VaeModel init(int data_dim, int hidden_dim, int latent_dim, ObsModel obs, Rng& rng);

  int dec_out_dim() const { return obs == ObsModel::kBernoulli ? data_dim : 2 * data_dim; }

  std::vector<Tensor*> params();
  std::vector<Tensor*> encoder_params();
  std::vector<Tensor*> decoder_params();
  std::vector<const Tensor*> params() const;
  std::vector<std::string> param_names() const;
  std::vector<std::string> encoder_param_names() const;
};

// Per-datum (or batched, [BxL]) Gaussian posterior parameters.
struct Posterior {
  Tensor mean;
  Tensor log_std;
};

// ---- checkpoints --------------------------------------------------------

void save_checkpoint(const VaeModel& model, const std::string& path);
VaeModel load_checkpoint(const std::string& path);
// FNV-1a over all parameter payload bytes in serialization order.
std::uint64_t model_checksum(const VaeModel& model);
std::uint64_t decoder_checksum(const VaeModel& model);

// ---- plain (tape-free) evaluation ---------------------------------------

// Raw pixel batch -> network input ([0,1] scaling for grey data).
Tensor to_net_input(const VaeModel& model, const Tensor& x_raw);

Posterior encode_eval(const VaeModel& model, const Tensor& x_raw);
// Decoder head outputs (logits, or interleaved-by-half mean/log-scale), [B x dec_out_dim].
Tensor decode_eval(const VaeModel& model, const Tensor& z);

double log_obs(const VaeModel& model, std::span<const float> x_raw, std::span<const float> z);
double log_obs_from_head(const VaeModel& model, std::span<const float> x_raw, std::span<const float> head);
double log_prior(std::span<const float> z);
double log_q(std::span<const float> mean, std::span<const float> log_std, std::span<const float> z);

// Per-datum single-sample ELBO in nats; eps is [BxL] reparameterization noise.
std::vector<double> elbo_eval(const VaeModel& model, const Tensor& x_raw, const Tensor& eps);

double bpd(double neg_elbo_nats, int data_dim);

// Bernoulli success probability for one pixel, clamped for coding.
double bernoulli_prob(float logit);
// Decoder-head logistic mean/scale for one pixel -> mass per level 0..255.
std::vector<double> logistic_level_masses(double mean, double log_scale);
// Mean (raw units) and clamped log-scale for pixel `d` of a logistic head row.
void logistic_params(const VaeModel& model, std::span<const float> head, int d, double* mean, double* log_scale);

enum class LatentSource { kPrior, kAggregatePosterior };

// One discrete sample x' from the model; raw pixel values. The aggregate
// source draws x from `dataset_raw` (rows of raw pixels) and z ~ q(z|x).
std::vector<std::uint8_t> sample_model(const VaeModel& model, Rng& rng, LatentSource source,
                                       const Tensor* dataset_raw = nullptr);

// ---- brute-force marginal oracle (tiny models only) ----------------------

struct BruteMarginal {
  double log_px = 0.0;
  int grid_per_dim = 0;
  double z_lo = 0.0, z_hi = 0.0;
  std::vector<double> log_joint;   // log p(x|z) + log p(z), row-major over the grid
  std::vector<double> posterior;   // normalized posterior mass per grid cell
  double cell_volume = 0.0;
  double grid_z(int i) const;      // center of grid cell i along one dim
};

// Midpoint-rule quadrature over [-8,8]^L. Refuses L > 2, D > 8, or non-binary
// observation models.
BruteMarginal brute_marginal(const VaeModel& model, std::span<const float> x_raw, int grid_per_dim = 10000);

// ---- tape builders (training path) ---------------------------------------

struct VaeVars {
  Var ew1, eb1, ew2, eb2, ew3, eb3;
  Var dw1, db1, dw2, db2, dw3, db3;
};

VaeVars register_vae(Tape& tape, VaeModel& model, bool train_encoder, bool train_decoder);

struct PostVars {
  Var mean, log_std;
};

PostVars encode_on_tape(Tape& tape, const VaeModel& model, const VaeVars& vars, Var net_input);
Var reparam_on_tape(Tape& tape, PostVars post, Var eps);
Var decode_head_on_tape(Tape& tape, const VaeModel& model, const VaeVars& vars, Var z);
// Elementwise log-likelihood contributions ([BxD]); x_raw is constant data.
Var log_obs_elem_on_tape(Tape& tape, const VaeModel& model, const VaeVars& vars, const Tensor& x_raw, Var z);
Var log_prior_elem_on_tape(Tape& tape, Var z);
Var log_q_elem_on_tape(Tape& tape, PostVars post, Var z);

struct ElboParts {
  Var mean_elbo;                 // scalar, mean over the batch
  Var ll_elem, lp_elem, lq_elem; // pre-reduction contributions
  PostVars post;
  Var z;
  int batch = 0;
};

// Single-sample batched ELBO. `enc_input_override`, when given, replaces the
// encoder input (denoising); the likelihood always sees the clean x_raw.
ElboParts elbo_on_tape(Tape& tape, const VaeModel& model, const VaeVars& vars, const Tensor& x_raw,
                       const Tensor& eps, const Tensor* enc_input_override = nullptr);

// ELBO with caller-supplied posterior leaves (per-datum optimal inference).
ElboParts elbo_with_posterior_on_tape(Tape& tape, const VaeModel& model, const VaeVars& vars,
                                      const Tensor& x_raw, PostVars post, const Tensor& eps);

}  // namespace bblv
