#include "bblv/bits_back.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include "bblv/adam.hpp"
#include "bblv/errors.hpp"
#include "bblv/tape.hpp"

namespace bblv {

double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }

static double normal_pdf(double x) { return std::exp(-0.5 * x * x) * 0.39894228040143267794; }

double normal_quantile(double p) {
  if (!(p > 0.0) || !(p < 1.0)) throw std::invalid_argument("quantile argument must lie in (0,1)");
  static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,  -2.759285104469687e+02,
                                  1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                  6.680131188771972e+01, -1.328068155288572e+01};
  static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                  -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                  3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Newton refinement against the exact CDF.
  x -= (normal_cdf(x) - p) / normal_pdf(x);
  return x;
}

std::uint64_t arithmetic_fingerprint() {
  double probes[8] = {normal_cdf(0.6173),         normal_cdf(-2.25),      normal_quantile(0.0001),
                      normal_quantile(0.77734375), std::exp(1.1875),      std::log(3.0625),
                      std::tanh(0.84375),          static_cast<double>(std::tanh(0.84375f))};
  return fnv1a64(probes, sizeof(probes));
}

// ---- latent discretization ------------------------------------------------

// Interior bin edges in z-space, computed once per grid size.
static const std::vector<double>& edge_table(int bin_bits) {
  static std::map<int, std::vector<double>> cache;
  auto it = cache.find(bin_bits);
  if (it == cache.end()) {
    const int n = 1 << bin_bits;
    std::vector<double> edges(static_cast<std::size_t>(n) + 1);
    edges[0] = -std::numeric_limits<double>::infinity();
    edges[n] = std::numeric_limits<double>::infinity();
    for (int i = 1; i < n; ++i) edges[i] = normal_quantile(static_cast<double>(i) / n);
    it = cache.emplace(bin_bits, std::move(edges)).first;
  }
  return it->second;
}

double LatentDiscretization::edge(std::uint32_t i) const { return edge_table(bin_bits)[i]; }

double LatentDiscretization::bin_center(std::uint32_t i) const {
  return normal_quantile((i + 0.5) / n_bins());
}

QuantizedPmf LatentDiscretization::prior_pmf() const { return QuantizedPmf::uniform(n_bins(), freq_bits); }

QuantizedPmf LatentDiscretization::posterior_pmf(double mean, double stddev) const {
  if (!std::isfinite(mean) || !(stddev > 0.0) || !std::isfinite(stddev))
    throw std::invalid_argument("posterior parameters must be finite with positive scale");
  const int n = n_bins();
  const auto& edges = edge_table(bin_bits);
  // Bins outside mean +- 12 sigma carry < 1e-32 mass; fold the tails into the
  // outermost active bins instead of evaluating the whole grid.
  auto bin_of = [&](double v) {
    double u = normal_cdf(v) * n;
    return std::clamp(static_cast<int>(std::floor(u)), 0, n - 1);
  };
  const int ilo = bin_of(mean - 12.0 * stddev);
  const int ihi = bin_of(mean + 12.0 * stddev);
  std::vector<double> probs(n, 0.0);
  double prev = (ilo == 0) ? 0.0 : normal_cdf((edges[ilo] - mean) / stddev);
  probs[ilo] += prev;  // left tail
  for (int i = ilo; i <= ihi; ++i) {
    double next = (i + 1 == n) ? 1.0 : normal_cdf((edges[i + 1] - mean) / stddev);
    probs[i] += next - prev;
    prev = next;
  }
  probs[ihi] += 1.0 - prev;  // right tail
  return QuantizedPmf::quantize(probs, freq_bits);
}

std::vector<QuantizedPmf> discretized_q(const Posterior& post, const LatentDiscretization& disc) {
  const std::size_t L = post.mean.data.size();
  if (post.log_std.data.size() != L) throw std::invalid_argument("posterior mean/log_std size mismatch");
  std::vector<QuantizedPmf> qs;
  qs.reserve(L);
  for (std::size_t d = 0; d < L; ++d)
    qs.push_back(disc.posterior_pmf(post.mean.data[d], std::exp(static_cast<double>(post.log_std.data[d]))));
  return qs;
}

// ---- per-datum optimal inference ------------------------------------------

Posterior optimal_posterior_k(const VaeModel& model, std::span<const std::uint8_t> x_raw,
                              const OptimalInferenceConfig& cfg) {
  if (static_cast<int>(x_raw.size()) != model.data_dim)
    throw std::invalid_argument("datum size does not match the model");
  const int L = model.latent_dim;
  Tensor x = Tensor::zeros({1, model.data_dim});
  for (int d = 0; d < model.data_dim; ++d) x.data[d] = static_cast<float>(x_raw[d]);

  Posterior post = encode_eval(model, x);
  if (cfg.k <= 0) return post;

  Tensor mean = post.mean;
  Tensor log_std = post.log_std;
  AdamConfig ac;
  ac.lr = cfg.lr;
  std::vector<Tensor*> params = {&mean, &log_std};
  AdamState st = AdamState::init(params, ac);
  const std::uint64_t x_hash = fnv1a64(x_raw.data(), x_raw.size());

  for (int step = 0; step < cfg.k; ++step) {
    Rng rng(mix64(mix64(cfg.seed_rule, x_hash), static_cast<std::uint64_t>(step)));
    Tensor eps = Tensor::zeros({1, L});
    for (auto& e : eps.data) e = static_cast<float>(rng.normal());

    Tape tape;
    VaeVars vars = register_vae(tape, const_cast<VaeModel&>(model), false, false);
    Var v_mean = tape.leaf(mean);
    Var v_log_std = tape.leaf(log_std);
    PostVars pv{v_mean, tape.clamp(v_log_std, kLogStdMin, kLogStdMax)};
    ElboParts parts = elbo_with_posterior_on_tape(tape, model, vars, x, pv, eps);
    tape.backward(parts.mean_elbo);

    Tensor g_mean = tape.grad(v_mean);
    Tensor g_log_std = tape.grad(v_log_std);
    for (auto& g : g_mean.data) g = -g;  // ascent on the ELBO
    for (auto& g : g_log_std.data) g = -g;
    adam_step(params, {&g_mean, &g_log_std}, st, {"opt.mean", "opt.log_std"});
  }

  for (auto& v : log_std.data) v = std::clamp(v, kLogStdMin, kLogStdMax);
  if (!mean.all_finite() || !log_std.all_finite())
    throw std::runtime_error("optimal inference diverged to a non-finite posterior");
  return Posterior{std::move(mean), std::move(log_std)};
}

// ---- coding ----------------------------------------------------------------

static QuantizedPmf obs_pmf(const VaeModel& model, std::span<const float> head, int d, int precision) {
  if (model.obs == ObsModel::kBernoulli) {
    double p = bernoulli_prob(head[d]);
    return QuantizedPmf::quantize({1.0 - p, p}, precision);
  }
  double mean = 0.0, log_scale = 0.0;
  logistic_params(model, head, d, &mean, &log_scale);
  return QuantizedPmf::quantize(logistic_level_masses(mean, log_scale), precision);
}

static double pmf_bits(const QuantizedPmf& pmf, std::uint32_t symbol) {
  return std::log2(static_cast<double>(pmf.total()) / pmf.freqs[symbol]);
}

CompressedStream compress(const VaeModel& model, const Dataset& data, const OptimalInferenceConfig* opt,
                          const BitsBackConfig& cfg, RateStats* stats) {
  if (data.dim != model.data_dim) throw std::invalid_argument("dataset dimension does not match the model");
  const bool binary_model = model.obs == ObsModel::kBernoulli;
  if (binary_model != (data.domain == Domain::kBinary))
    throw std::invalid_argument("observation model does not match the data domain");
  data.check_domain();

  const int D = model.data_dim;
  const int L = model.latent_dim;
  const bool optimal = opt != nullptr && opt->k > 0;

  CompressedStream s;
  s.mode = optimal ? CompressedStream::kModeOptimal : CompressedStream::kModeAmortized;
  if (optimal) s.opt = *opt;
  else s.opt = OptimalInferenceConfig{0, 0.0f, 0};
  s.model_checksum = model_checksum(model);
  s.count = static_cast<std::uint32_t>(data.count());
  s.data_dim = static_cast<std::uint32_t>(D);
  s.obs_tag = static_cast<std::uint32_t>(model.obs);
  s.disc = cfg.disc;
  s.obs_precision = cfg.obs_precision;
  s.seed = cfg.stream_seed;
  const int seed_bits = std::max(64, 2 * L * cfg.disc.bin_bits);
  s.seed_words = (seed_bits + 31) / 32;
  s.fingerprint = arithmetic_fingerprint();

  AnsState state = AnsState::seeded(s.seed_words, s.seed);
  const std::uint64_t initial_bits = state.bit_length();
  const QuantizedPmf prior = cfg.disc.prior_pmf();
  double table_bits = 0.0;  // coded cost under the quantized tables, minus the bits-back credit

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::uint32_t> bins(L);
  for (int i = 0; i < data.count(); ++i) {
    const auto row = data.row(i);
    Posterior post = optimal ? optimal_posterior_k(model, row, *opt)
                             : encode_eval(model, data.batch_range(i, 1));
    const auto qs = discretized_q(post, cfg.disc);

    Tensor z = Tensor::zeros({1, L});
    for (int d = 0; d < L; ++d) {
      bins[d] = state.pop(qs[d]);
      z.data[d] = static_cast<float>(cfg.disc.bin_center(bins[d]));
      table_bits -= pmf_bits(qs[d], bins[d]);
    }
    const Tensor head = decode_eval(model, z);
    const std::span<const float> head_row(head.data.data(), head.data.size());
    for (int d = D - 1; d >= 0; --d) {
      const QuantizedPmf pm = obs_pmf(model, head_row, d, cfg.obs_precision);
      state.push(row[d], pm);
      table_bits += pmf_bits(pm, row[d]);
    }
    for (int d = L - 1; d >= 0; --d) {
      state.push(bins[d], prior);
      table_bits += cfg.disc.bin_bits;
    }
  }
  const auto t1 = std::chrono::steady_clock::now();

  s.state = std::move(state);
  if (stats) {
    stats->initial_bits = initial_bits;
    stats->final_bits = s.state.bit_length();
    const double pixels = static_cast<double>(data.count()) * D;
    stats->net_bpd = (static_cast<double>(stats->final_bits) - static_cast<double>(initial_bits)) / pixels;
    stats->quantized_neg_elbo_bpd = table_bits / pixels;
    stats->compress_seconds_per_datum =
        data.count() == 0 ? 0.0 : std::chrono::duration<double>(t1 - t0).count() / data.count();
  }
  return s;
}

Dataset decompress(const VaeModel& model, const CompressedStream& stream, RateStats* stats) {
  if (stream.fingerprint != arithmetic_fingerprint())
    throw StreamError("stream was written under different arithmetic; refusing to decode");
  if (stream.model_checksum != model_checksum(model))
    throw StreamError("model checksum does not match the stream");
  if (stream.data_dim != static_cast<std::uint32_t>(model.data_dim) ||
      stream.obs_tag != static_cast<std::uint32_t>(model.obs))
    throw StreamError("stream geometry does not match the model");
  if (stream.mode != CompressedStream::kModeAmortized && stream.mode != CompressedStream::kModeOptimal)
    throw StreamError("unknown stream mode " + std::to_string(stream.mode));

  const int D = model.data_dim;
  const int L = model.latent_dim;
  const bool optimal = stream.mode == CompressedStream::kModeOptimal;
  const QuantizedPmf prior = stream.disc.prior_pmf();

  Dataset ds;
  ds.domain = model.obs == ObsModel::kBernoulli ? Domain::kBinary : Domain::kGrey256;
  ds.dim = D;
  ds.items.resize(static_cast<std::size_t>(stream.count) * D);

  AnsState state = stream.state;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::uint32_t> bins(L);
  for (int i = static_cast<int>(stream.count) - 1; i >= 0; --i) {
    Tensor z = Tensor::zeros({1, L});
    for (int d = 0; d < L; ++d) {
      bins[d] = state.pop(prior);
      z.data[d] = static_cast<float>(stream.disc.bin_center(bins[d]));
    }
    const Tensor head = decode_eval(model, z);
    const std::span<const float> head_row(head.data.data(), head.data.size());
    std::uint8_t* out = ds.items.data() + static_cast<std::size_t>(i) * D;
    for (int d = 0; d < D; ++d) {
      const QuantizedPmf pm = obs_pmf(model, head_row, d, stream.obs_precision);
      out[d] = static_cast<std::uint8_t>(state.pop(pm));
    }

    // Re-derive the identical posterior used on the encode side and return
    // its bits to the stack.
    const std::span<const std::uint8_t> row(out, static_cast<std::size_t>(D));
    Posterior post;
    if (optimal) {
      post = optimal_posterior_k(model, row, stream.opt);
    } else {
      Tensor x = Tensor::zeros({1, D});
      for (int d = 0; d < D; ++d) x.data[d] = static_cast<float>(out[d]);
      post = encode_eval(model, x);
    }
    const auto qs = discretized_q(post, stream.disc);
    for (int d = L - 1; d >= 0; --d) state.push(bins[d], qs[d]);
  }
  const auto t1 = std::chrono::steady_clock::now();

  if (!(state == AnsState::seeded(stream.seed_words, stream.seed)))
    throw StreamError("coder state after decoding does not match the seeded initial state");
  if (stats) {
    stats->decompress_seconds_per_datum =
        stream.count == 0 ? 0.0 : std::chrono::duration<double>(t1 - t0).count() / stream.count;
  }
  return ds;
}

// ---- stream serialization ---------------------------------------------------

static void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
static void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
static std::uint32_t get_u32(const std::vector<std::uint8_t>& b, std::size_t& at) {
  if (at + 4 > b.size()) throw StreamError("truncated stream header");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  at += 4;
  return v;
}
static std::uint64_t get_u64(const std::vector<std::uint8_t>& b, std::size_t& at) {
  if (at + 8 > b.size()) throw StreamError("truncated stream header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
  at += 8;
  return v;
}

static constexpr std::uint32_t kStreamMagic = 0x54534242u;  // "BBST"
static constexpr std::uint32_t kStreamVersion = 1;

std::vector<std::uint8_t> CompressedStream::serialize() const {
  std::vector<std::uint8_t> out;
  put_u32(out, kStreamMagic);
  put_u32(out, kStreamVersion);
  put_u32(out, mode);
  put_u64(out, model_checksum);
  put_u32(out, count);
  put_u32(out, data_dim);
  put_u32(out, obs_tag);
  put_u32(out, static_cast<std::uint32_t>(disc.bin_bits));
  put_u32(out, static_cast<std::uint32_t>(disc.freq_bits));
  put_u32(out, static_cast<std::uint32_t>(obs_precision));
  put_u32(out, static_cast<std::uint32_t>(seed_words));
  put_u64(out, seed);
  put_u64(out, fingerprint);
  put_u32(out, static_cast<std::uint32_t>(opt.k));
  std::uint32_t lr_bits;
  std::memcpy(&lr_bits, &opt.lr, 4);
  put_u32(out, lr_bits);
  put_u64(out, opt.seed_rule);
  put_u64(out, fnv1a64(out.data(), out.size()));
  const auto body = state.serialize();
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

CompressedStream CompressedStream::deserialize(const std::vector<std::uint8_t>& bytes) {
  std::size_t at = 0;
  if (get_u32(bytes, at) != kStreamMagic) throw StreamError("bad stream magic");
  if (get_u32(bytes, at) != kStreamVersion) throw StreamError("unsupported stream version");
  CompressedStream s;
  s.mode = get_u32(bytes, at);
  s.model_checksum = get_u64(bytes, at);
  s.count = get_u32(bytes, at);
  s.data_dim = get_u32(bytes, at);
  s.obs_tag = get_u32(bytes, at);
  s.disc.bin_bits = static_cast<int>(get_u32(bytes, at));
  s.disc.freq_bits = static_cast<int>(get_u32(bytes, at));
  s.obs_precision = static_cast<int>(get_u32(bytes, at));
  s.seed_words = static_cast<int>(get_u32(bytes, at));
  s.seed = get_u64(bytes, at);
  s.fingerprint = get_u64(bytes, at);
  s.opt.k = static_cast<int>(get_u32(bytes, at));
  std::uint32_t lr_bits = get_u32(bytes, at);
  std::memcpy(&s.opt.lr, &lr_bits, 4);
  s.opt.seed_rule = get_u64(bytes, at);
  const std::size_t header_end = at;
  const std::uint64_t recorded = get_u64(bytes, at);
  if (recorded != fnv1a64(bytes.data(), header_end)) throw StreamError("stream header checksum mismatch");
  std::size_t consumed = 0;
  s.state = AnsState::deserialize(bytes.data() + at, bytes.size() - at, &consumed);
  if (at + consumed != bytes.size()) throw StreamError("trailing bytes after the coder state");
  return s;
}

void CompressedStream::save(const std::string& path) const {
  const auto bytes = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("short write to " + path);
}

CompressedStream CompressedStream::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace bblv
