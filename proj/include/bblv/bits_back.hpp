#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bblv/ans.hpp"
#include "bblv/data.hpp"
#include "bblv/vae.hpp"

namespace bblv {

// Prior-quantile latent grid: 2^bin_bits bins of equal prior mass per
// dimension, so encoding a bin under the prior costs exactly bin_bits.
// Posterior tables over the bins are quantized at freq_bits (> bin_bits, so
// a narrow posterior can actually concentrate past the frequency floor).
struct LatentDiscretization {
  int bin_bits = 14;
  int freq_bits = 28;

  int n_bins() const { return 1 << bin_bits; }
  // Lower edge of bin i in z-space (bin 0 starts at -inf).
  double edge(std::uint32_t i) const;
  // Prior-quantile midpoint representative of bin i.
  double bin_center(std::uint32_t i) const;
  QuantizedPmf prior_pmf() const;
  // Gaussian CDF differences at the bin edges, quantized at freq_bits.
  QuantizedPmf posterior_pmf(double mean, double stddev) const;
};

double normal_cdf(double x);
double normal_quantile(double p);  // Acklam's rational approximation + one Newton step

// Hash over a fixed set of transcendental evaluations; streams record it so
// decoding on different arithmetic is refused instead of corrupting output.
std::uint64_t arithmetic_fingerprint();

struct OptimalInferenceConfig {
  int k = 0;
  float lr = 5e-3f;
  std::uint64_t seed_rule = 0x626f6f74ull;  // base for per-datum noise streams
};

struct CompressedStream {
  static constexpr std::uint32_t kModeAmortized = 0;
  static constexpr std::uint32_t kModeOptimal = 1;

  std::uint32_t mode = kModeAmortized;
  std::uint64_t model_checksum = 0;
  OptimalInferenceConfig opt;  // meaningful when mode == kModeOptimal
  std::uint32_t count = 0;
  std::uint32_t data_dim = 0;
  std::uint32_t obs_tag = 0;
  LatentDiscretization disc;
  int obs_precision = 16;
  int seed_words = 0;
  std::uint64_t seed = 0;
  std::uint64_t fingerprint = 0;
  AnsState state;

  std::vector<std::uint8_t> serialize() const;
  static CompressedStream deserialize(const std::vector<std::uint8_t>& bytes);
  void save(const std::string& path) const;
  static CompressedStream load(const std::string& path);
};

struct RateStats {
  std::uint64_t initial_bits = 0;
  std::uint64_t final_bits = 0;
  double net_bpd = 0.0;
  // Negative ELBO of the coded bins/levels under the quantized tables, BPD.
  double quantized_neg_elbo_bpd = 0.0;
  double compress_seconds_per_datum = 0.0;
  double decompress_seconds_per_datum = 0.0;
};

struct BitsBackConfig {
  LatentDiscretization disc;
  int obs_precision = 16;
  std::uint64_t stream_seed = 0x42425354ull;
};

// Per-dimension posterior tables for one datum.
std::vector<QuantizedPmf> discretized_q(const Posterior& post, const LatentDiscretization& disc);

// K Adam steps on (mean, log_std) maximizing the single-sample ELBO of x_raw,
// with reparameterization noise seeded from (seed_rule, bytes of x_raw, step).
Posterior optimal_posterior_k(const VaeModel& model, std::span<const std::uint8_t> x_raw,
                              const OptimalInferenceConfig& cfg);

// Algorithm: pop z ~ q off the stack, push x | z, push z under the prior.
// `opt == nullptr` (or opt->k == 0) is the amortized mode.
CompressedStream compress(const VaeModel& model, const Dataset& data, const OptimalInferenceConfig* opt,
                          const BitsBackConfig& cfg = {}, RateStats* stats = nullptr);
Dataset decompress(const VaeModel& model, const CompressedStream& stream, RateStats* stats = nullptr);

}  // namespace bblv
