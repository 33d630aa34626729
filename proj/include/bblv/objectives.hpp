#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bblv/data.hpp"
#include "bblv/vae.hpp"

namespace bblv {

enum class Objective { kWake, kSleep, kReverseSleep, kHalfAsleep, kDenoising };

Objective objective_from_string(const std::string& s);
std::string objective_to_string(Objective o);

// One line of a metrics CSV: epoch, split, objective, seed, bpd.
struct MetricRow {
  int epoch = 0;
  std::string split;
  std::string objective;
  std::uint64_t seed = 0;
  double bpd = 0.0;
};

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::string& path);

// Mean test BPD from single-sample negative ELBOs with noise fixed by `seed`.
double dataset_bpd(const VaeModel& model, const Dataset& ds, std::uint64_t seed, int batch = 256);

void reinit_encoder(VaeModel& model, Rng& rng);

struct JointTrainConfig {
  int epochs = 100;
  float lr = 3e-4f;
  int batch = 100;
  int eval_every = 1;        // BPD trace cadence; <=0 disables
  std::uint64_t seed = 0;
  // Called after every epoch (1-based); used for checkpoint series.
  std::function<void(int, const VaeModel&)> on_epoch;
};

// Maximizes the mean single-sample ELBO over encoder and decoder jointly.
std::vector<MetricRow> train_vae_joint(VaeModel& model, const Dataset& train, const Dataset* test,
                                       const JointTrainConfig& cfg);

struct EncoderTrainConfig {
  Objective objective = Objective::kWake;
  float alpha = 0.5f;        // model-sample fraction for half-asleep
  float sigma = 0.0f;        // denoising noise std (network-input scale)
  float alpha_mix = 0.5f;    // denoising combination weight
  LatentSource latent_source = LatentSource::kPrior;
  int epochs = 100;
  float lr = 3e-4f;
  int batch = 100;
  int eval_every = 1;
  std::uint64_t seed = 0;
};

// Updates encoder parameters only; the decoder is registered as constant and
// is bitwise untouched. Wake/reverse-sleep are half-asleep with alpha 0/1.
std::vector<MetricRow> train_encoder(VaeModel& model, const Dataset& data, const Dataset* test,
                                     const EncoderTrainConfig& cfg);

// Wake objective run on the evaluation split itself (optimal inference).
std::vector<MetricRow> optimal_inference_dataset(VaeModel& model, const Dataset& eval_set, int epochs,
                                                 float lr, int batch, std::uint64_t seed);

struct GapReport {
  std::vector<double> amortized_neg_elbo;  // nats, per datum, mean over noise
  std::vector<double> optimized_neg_elbo;
  std::vector<double> gap;                 // amortized - optimized (>= 0 at the argmax)
  std::vector<double> gap_stderr;          // Monte-Carlo standard error of the difference
  double amortized_bpd = 0.0;
  double optimized_bpd = 0.0;
  double gap_bpd = 0.0;
};

// Both models must share decoder parameters bit-identically.
GapReport measure_gap(const VaeModel& amortized, const VaeModel& optimized, const Dataset& eval_set,
                      int n_noise, std::uint64_t seed);

struct ConsistencyConfig {
  int n_train = 10000;
  int n_test = 1000;
  std::vector<Objective> objectives = {Objective::kWake, Objective::kSleep, Objective::kReverseSleep};
  int epochs = 100;
  float lr = 1e-3f;
  int batch = 100;
  int eval_every = 1;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
};

// Treats `pretrained` as the true data distribution: samples train/test sets
// from it, then trains fresh encoders against its frozen decoder.
std::vector<MetricRow> consistency_experiment(const VaeModel& pretrained, const ConsistencyConfig& cfg);

}  // namespace bblv
