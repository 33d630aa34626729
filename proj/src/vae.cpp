#include "bblv/vae.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace bblv {

namespace {

constexpr double kLn2Pi = 1.8378770664093453;
constexpr std::uint32_t kCheckpointVersion = 1;
const char kCheckpointMagic[4] = {'B', 'B', 'L', 'V'};

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

double sigmoid_d(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor init_weight(int in, int out, Rng& rng, float scale) {
  Tensor w = Tensor::zeros({in, out});
  float s = scale / std::sqrt(static_cast<float>(in));
  for (auto& v : w.data) v = s * static_cast<float>(rng.normal());
  return w;
}

// y = tanh(tanh(x·w1+b1)·w2+b2)·w3+b3, head linear
Tensor mlp_forward(const Mlp& m, const Tensor& x) {
  int B = x.rows();
  CMapM xm(x.data.data(), B, x.cols());
  Tensor h1 = Tensor::zeros({B, m.w1.cols()});
  MapM h1m(h1.data.data(), B, m.w1.cols());
  h1m.noalias() = xm * CMapM(m.w1.data.data(), m.w1.rows(), m.w1.cols());
  h1m.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(m.b1.data.data(), m.b1.shape[0]);
  h1m = h1m.array().tanh();
  Tensor h2 = Tensor::zeros({B, m.w2.cols()});
  MapM h2m(h2.data.data(), B, m.w2.cols());
  h2m.noalias() = h1m * CMapM(m.w2.data.data(), m.w2.rows(), m.w2.cols());
  h2m.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(m.b2.data.data(), m.b2.shape[0]);
  h2m = h2m.array().tanh();
  Tensor y = Tensor::zeros({B, m.w3.cols()});
  MapM ym(y.data.data(), B, m.w3.cols());
  ym.noalias() = h2m * CMapM(m.w3.data.data(), m.w3.rows(), m.w3.cols());
  ym.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(m.b3.data.data(), m.b3.shape[0]);
  return y;
}

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void append_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t& off) {
  if (off + 4 > b.size()) throw std::runtime_error("checkpoint truncated at byte " + std::to_string(off));
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  off += 4;
  return v;
}

std::uint64_t read_u64(const std::vector<std::uint8_t>& b, std::size_t& off) {
  if (off + 8 > b.size()) throw std::runtime_error("checkpoint truncated at byte " + std::to_string(off));
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[off + i]) << (8 * i);
  off += 8;
  return v;
}

std::uint64_t payload_checksum(const std::vector<const Tensor*>& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const Tensor* t : params) h = fnv1a64(t->data.data(), t->data.size() * sizeof(float), h);
  return h;
}

}  // namespace

VaeModel VaeModel::init(int data_dim, int hidden_dim, int latent_dim, ObsModel obs, Rng& rng) {
  if (data_dim <= 0 || hidden_dim <= 0 || latent_dim <= 0)
    throw std::invalid_argument("VaeModel::init: dimensions must be positive");
  VaeModel m;
  m.data_dim = data_dim;
  m.hidden_dim = hidden_dim;
  m.latent_dim = latent_dim;
  m.obs = obs;
  m.enc.w1 = init_weight(data_dim, hidden_dim, rng, 1.0f);
  m.enc.b1 = Tensor::zeros({hidden_dim});
  m.enc.w2 = init_weight(hidden_dim, hidden_dim, rng, 1.0f);
  m.enc.b2 = Tensor::zeros({hidden_dim});
  m.enc.w3 = init_weight(hidden_dim, 2 * latent_dim, rng, 0.1f);
  m.enc.b3 = Tensor::zeros({2 * latent_dim});
  m.dec.w1 = init_weight(latent_dim, hidden_dim, rng, 1.0f);
  m.dec.b1 = Tensor::zeros({hidden_dim});
  m.dec.w2 = init_weight(hidden_dim, hidden_dim, rng, 1.0f);
  m.dec.b2 = Tensor::zeros({hidden_dim});
  m.dec.w3 = init_weight(hidden_dim, m.dec_out_dim(), rng, 0.1f);
  m.dec.b3 = Tensor::zeros({m.dec_out_dim()});
  return m;
}

std::vector<Tensor*> VaeModel::encoder_params() {
  return {&enc.w1, &enc.b1, &enc.w2, &enc.b2, &enc.w3, &enc.b3};
}

std::vector<Tensor*> VaeModel::decoder_params() {
  return {&dec.w1, &dec.b1, &dec.w2, &dec.b2, &dec.w3, &dec.b3};
}

std::vector<Tensor*> VaeModel::params() {
  auto p = encoder_params();
  auto d = decoder_params();
  p.insert(p.end(), d.begin(), d.end());
  return p;
}

std::vector<const Tensor*> VaeModel::params() const {
  auto& self = const_cast<VaeModel&>(*this);
  std::vector<const Tensor*> out;
  for (Tensor* t : self.params()) out.push_back(t);
  return out;
}

std::vector<std::string> VaeModel::encoder_param_names() const {
  return {"enc.w1", "enc.b1", "enc.w2", "enc.b2", "enc.w3", "enc.b3"};
}

std::vector<std::string> VaeModel::param_names() const {
  auto n = encoder_param_names();
  for (const char* s : {"dec.w1", "dec.b1", "dec.w2", "dec.b2", "dec.w3", "dec.b3"}) n.emplace_back(s);
  return n;
}

// ---- checkpoints ----------------------------------------------------------

std::uint64_t model_checksum(const VaeModel& model) { return payload_checksum(model.params()); }

std::uint64_t decoder_checksum(const VaeModel& model) {
  auto& m = const_cast<VaeModel&>(model);
  std::vector<const Tensor*> dec;
  for (Tensor* t : m.decoder_params()) dec.push_back(t);
  return payload_checksum(dec);
}

void save_checkpoint(const VaeModel& model, const std::string& path) {
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), kCheckpointMagic, kCheckpointMagic + 4);
  append_u32(buf, kCheckpointVersion);
  append_u32(buf, static_cast<std::uint32_t>(model.data_dim));
  append_u32(buf, static_cast<std::uint32_t>(model.hidden_dim));
  append_u32(buf, static_cast<std::uint32_t>(model.latent_dim));
  append_u32(buf, static_cast<std::uint32_t>(model.obs));
  for (const Tensor* t : model.params()) {
    append_u32(buf, static_cast<std::uint32_t>(t->rank()));
    for (int d : t->shape) append_u32(buf, static_cast<std::uint32_t>(d));
    for (float v : t->data) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      append_u32(buf, bits);
    }
  }
  append_u64(buf, model_checksum(model));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("short write on checkpoint: " + path);
}

VaeModel load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::size_t off = 0;
  if (buf.size() < 4 || std::memcmp(buf.data(), kCheckpointMagic, 4) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path);
  off = 4;
  std::uint32_t version = read_u32(buf, off);
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  int D = static_cast<int>(read_u32(buf, off));
  int H = static_cast<int>(read_u32(buf, off));
  int L = static_cast<int>(read_u32(buf, off));
  std::uint32_t obs = read_u32(buf, off);
  if (obs > 1) throw std::runtime_error("unknown observation model tag " + std::to_string(obs));
  Rng dummy(0);
  VaeModel model = VaeModel::init(D, H, L, static_cast<ObsModel>(obs), dummy);
  for (Tensor* t : model.params()) {
    std::uint32_t rank = read_u32(buf, off);
    if (rank != static_cast<std::uint32_t>(t->rank()))
      throw std::runtime_error("checkpoint tensor rank mismatch at byte " + std::to_string(off));
    std::vector<int> dims(rank);
    for (auto& d : dims) d = static_cast<int>(read_u32(buf, off));
    if (dims != t->shape)
      throw std::runtime_error("checkpoint tensor shape mismatch at byte " + std::to_string(off));
    for (float& v : t->data) {
      std::uint32_t bits = read_u32(buf, off);
      std::memcpy(&v, &bits, 4);
    }
  }
  std::uint64_t stored = read_u64(buf, off);
  if (stored != model_checksum(model)) throw std::runtime_error("checkpoint checksum mismatch in " + path);
  return model;
}

// ---- plain evaluation ------------------------------------------------------

Tensor to_net_input(const VaeModel& model, const Tensor& x_raw) {
  Tensor in = x_raw;
  if (model.obs == ObsModel::kDiscretizedLogistic)
    for (auto& v : in.data) v *= 1.0f / 255.0f;
  return in;
}

Posterior encode_eval(const VaeModel& model, const Tensor& x_raw) {
  if (x_raw.rank() != 2 || x_raw.cols() != model.data_dim)
    throw std::invalid_argument("encode: expected [Bx" + std::to_string(model.data_dim) + "], got " +
                                shape_str(x_raw.shape));
  Tensor head = mlp_forward(model.enc, to_net_input(model, x_raw));
  int B = head.rows(), L = model.latent_dim;
  Posterior p{Tensor::zeros({B, L}), Tensor::zeros({B, L})};
  for (int b = 0; b < B; ++b)
    for (int l = 0; l < L; ++l) {
      p.mean.at(b, l) = head.at(b, l);
      float ls = head.at(b, L + l);
      p.log_std.at(b, l) = ls < kLogStdMin ? kLogStdMin : (ls > kLogStdMax ? kLogStdMax : ls);
    }
  return p;
}

Tensor decode_eval(const VaeModel& model, const Tensor& z) {
  if (z.rank() != 2 || z.cols() != model.latent_dim)
    throw std::invalid_argument("decode: expected [Bx" + std::to_string(model.latent_dim) + "], got " +
                                shape_str(z.shape));
  return mlp_forward(model.dec, z);
}

double bernoulli_prob(float logit) {
  double p = sigmoid_d(logit);
  return p < kBernoulliFloor ? kBernoulliFloor : (p > 1.0 - kBernoulliFloor ? 1.0 - kBernoulliFloor : p);
}

void logistic_params(const VaeModel& model, std::span<const float> head, int d, double* mean,
                     double* log_scale) {
  *mean = 127.5 * (std::tanh(static_cast<double>(head[d])) + 1.0);
  double ls = head[model.data_dim + d];
  *log_scale = ls < kLogScaleMin ? kLogScaleMin : (ls > kLogScaleMax ? kLogScaleMax : ls);
}

std::vector<double> logistic_level_masses(double mean, double log_scale) {
  double inv_s = std::exp(-log_scale);
  std::vector<double> masses(256);
  double lo = 0.0;
  for (int k = 0; k < 256; ++k) {
    double hi = k == 255 ? 1.0 : sigmoid_d((static_cast<double>(k) + 0.5 - mean) * inv_s);
    masses[k] = hi - lo;
    lo = hi;
  }
  return masses;
}

double log_obs_from_head(const VaeModel& model, std::span<const float> x_raw, std::span<const float> head) {
  if (static_cast<int>(x_raw.size()) != model.data_dim ||
      static_cast<int>(head.size()) != model.dec_out_dim())
    throw std::invalid_argument("log_obs: dimension mismatch");
  double ll = 0.0;
  if (model.obs == ObsModel::kBernoulli) {
    for (int d = 0; d < model.data_dim; ++d) {
      float x = x_raw[d];
      if (x != 0.0f && x != 1.0f)
        throw std::domain_error("log_obs: binary pixel " + std::to_string(d) + " has value " + std::to_string(x));
      double p = bernoulli_prob(head[d]);
      ll += x == 1.0f ? std::log(p) : std::log1p(-p);
    }
  } else {
    for (int d = 0; d < model.data_dim; ++d) {
      float x = x_raw[d];
      int k = static_cast<int>(x);
      if (x != static_cast<float>(k) || k < 0 || k > 255)
        throw std::domain_error("log_obs: grey pixel " + std::to_string(d) + " has value " + std::to_string(x));
      double mean, log_scale;
      logistic_params(model, head, d, &mean, &log_scale);
      double inv_s = std::exp(-log_scale);
      double hi = k == 255 ? 1.0 : sigmoid_d((k + 0.5 - mean) * inv_s);
      double lo = k == 0 ? 0.0 : sigmoid_d((k - 0.5 - mean) * inv_s);
      double mass = hi - lo;
      ll += std::log(mass > 1e-12 ? mass : 1e-12);
    }
  }
  return ll;
}

double log_obs(const VaeModel& model, std::span<const float> x_raw, std::span<const float> z) {
  Tensor zt = Tensor::matrix(1, model.latent_dim, std::vector<float>(z.begin(), z.end()));
  Tensor head = decode_eval(model, zt);
  return log_obs_from_head(model, x_raw, head.data);
}

double log_prior(std::span<const float> z) {
  double acc = 0.0;
  for (float v : z) acc += static_cast<double>(v) * v;
  return -0.5 * acc - 0.5 * kLn2Pi * static_cast<double>(z.size());
}

double log_q(std::span<const float> mean, std::span<const float> log_std, std::span<const float> z) {
  if (mean.size() != z.size() || log_std.size() != z.size())
    throw std::invalid_argument("log_q: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    double t = (static_cast<double>(z[i]) - mean[i]) * std::exp(-static_cast<double>(log_std[i]));
    acc += -0.5 * t * t - log_std[i] - 0.5 * kLn2Pi;
  }
  return acc;
}

std::vector<double> elbo_eval(const VaeModel& model, const Tensor& x_raw, const Tensor& eps) {
  int B = x_raw.rows(), L = model.latent_dim;
  if (eps.rank() != 2 || eps.rows() != B || eps.cols() != L)
    throw std::invalid_argument("elbo_eval: eps shape " + shape_str(eps.shape));
  Posterior post = encode_eval(model, x_raw);
  Tensor z = Tensor::zeros({B, L});
  for (std::size_t i = 0; i < z.data.size(); ++i)
    z.data[i] = post.mean.data[i] + std::exp(post.log_std.data[i]) * eps.data[i];
  Tensor head = decode_eval(model, z);
  std::vector<double> out(B);
  int HD = model.dec_out_dim();
  for (int b = 0; b < B; ++b) {
    std::span<const float> xr(x_raw.data.data() + static_cast<std::size_t>(b) * model.data_dim, model.data_dim);
    std::span<const float> hr(head.data.data() + static_cast<std::size_t>(b) * HD, HD);
    std::span<const float> zr(z.data.data() + static_cast<std::size_t>(b) * L, L);
    std::span<const float> mr(post.mean.data.data() + static_cast<std::size_t>(b) * L, L);
    std::span<const float> sr(post.log_std.data.data() + static_cast<std::size_t>(b) * L, L);
    out[b] = log_obs_from_head(model, xr, hr) + log_prior(zr) - log_q(mr, sr, zr);
  }
  return out;
}

double bpd(double neg_elbo_nats, int data_dim) {
  if (data_dim <= 0) throw std::invalid_argument("bpd: data_dim must be positive");
  return neg_elbo_nats / (static_cast<double>(data_dim) * std::log(2.0));
}

std::vector<std::uint8_t> sample_model(const VaeModel& model, Rng& rng, LatentSource source,
                                       const Tensor* dataset_raw) {
  int L = model.latent_dim;
  Tensor z = Tensor::zeros({1, L});
  if (source == LatentSource::kPrior) {
    for (auto& v : z.data) v = static_cast<float>(rng.normal());
  } else {
    if (!dataset_raw || dataset_raw->rank() != 2 || dataset_raw->rows() < 1)
      throw std::invalid_argument("sample_model: aggregate posterior needs a dataset");
    int idx = static_cast<int>(rng.below(dataset_raw->rows()));
    Tensor x = Tensor::matrix(1, dataset_raw->cols(),
                              std::vector<float>(dataset_raw->data.begin() + static_cast<std::size_t>(idx) * dataset_raw->cols(),
                                                 dataset_raw->data.begin() + static_cast<std::size_t>(idx + 1) * dataset_raw->cols()));
    Posterior p = encode_eval(model, x);
    for (int l = 0; l < L; ++l)
      z.data[l] = p.mean.data[l] + std::exp(p.log_std.data[l]) * static_cast<float>(rng.normal());
  }
  Tensor head = decode_eval(model, z);
  std::vector<std::uint8_t> x(model.data_dim);
  if (model.obs == ObsModel::kBernoulli) {
    for (int d = 0; d < model.data_dim; ++d) x[d] = rng.uniform() < bernoulli_prob(head.data[d]) ? 1 : 0;
  } else {
    for (int d = 0; d < model.data_dim; ++d) {
      double mean, log_scale;
      logistic_params(model, head.data, d, &mean, &log_scale);
      double u = (static_cast<double>(rng.next_u64() >> 11) + 0.5) * 0x1.0p-53;
      double v = mean + std::exp(log_scale) * std::log(u / (1.0 - u));
      long k = std::lround(v);
      x[d] = static_cast<std::uint8_t>(k < 0 ? 0 : (k > 255 ? 255 : k));
    }
  }
  return x;
}

// ---- brute-force marginal --------------------------------------------------

double BruteMarginal::grid_z(int i) const {
  double step = (z_hi - z_lo) / grid_per_dim;
  return z_lo + (static_cast<double>(i) + 0.5) * step;
}

BruteMarginal brute_marginal(const VaeModel& model, std::span<const float> x_raw, int grid_per_dim) {
  if (model.latent_dim > 2 || model.data_dim > 8 || model.obs != ObsModel::kBernoulli)
    throw std::invalid_argument("brute_marginal: only binary models with L<=2, D<=8 are enumerable");
  if (static_cast<int>(x_raw.size()) != model.data_dim)
    throw std::invalid_argument("brute_marginal: dimension mismatch");
  BruteMarginal bm;
  bm.grid_per_dim = grid_per_dim;
  bm.z_lo = -8.0;
  bm.z_hi = 8.0;
  const int L = model.latent_dim;
  const double step = (bm.z_hi - bm.z_lo) / grid_per_dim;
  bm.cell_volume = std::pow(step, L);
  const std::size_t n_cells = L == 1 ? grid_per_dim : static_cast<std::size_t>(grid_per_dim) * grid_per_dim;
  bm.log_joint.resize(n_cells);

  const std::size_t chunk = 4096;
  for (std::size_t base = 0; base < n_cells; base += chunk) {
    std::size_t count = std::min(chunk, n_cells - base);
    Tensor z = Tensor::zeros({static_cast<int>(count), L});
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t cell = base + i;
      if (L == 1) {
        z.data[i] = static_cast<float>(bm.grid_z(static_cast<int>(cell)));
      } else {
        z.data[2 * i] = static_cast<float>(bm.grid_z(static_cast<int>(cell / grid_per_dim)));
        z.data[2 * i + 1] = static_cast<float>(bm.grid_z(static_cast<int>(cell % grid_per_dim)));
      }
    }
    Tensor head = decode_eval(model, z);
    for (std::size_t i = 0; i < count; ++i) {
      std::span<const float> hr(head.data.data() + i * model.data_dim, model.data_dim);
      std::span<const float> zr(z.data.data() + i * L, L);
      bm.log_joint[base + i] = log_obs_from_head(model, x_raw, hr) + log_prior(zr);
    }
  }

  double mx = bm.log_joint[0];
  for (double v : bm.log_joint) mx = std::max(mx, v);
  double se = 0.0;
  for (double v : bm.log_joint) se += std::exp(v - mx);
  double lse = mx + std::log(se);
  bm.log_px = lse + std::log(bm.cell_volume);
  bm.posterior.resize(n_cells);
  for (std::size_t i = 0; i < n_cells; ++i) bm.posterior[i] = std::exp(bm.log_joint[i] - lse);
  return bm;
}

// ---- tape builders ----------------------------------------------------------

VaeVars register_vae(Tape& tape, VaeModel& model, bool train_encoder, bool train_decoder) {
  auto reg = [&](Tensor& t, bool train) { return train ? tape.leaf(t) : tape.constant(t); };
  VaeVars v;
  v.ew1 = reg(model.enc.w1, train_encoder);
  v.eb1 = reg(model.enc.b1, train_encoder);
  v.ew2 = reg(model.enc.w2, train_encoder);
  v.eb2 = reg(model.enc.b2, train_encoder);
  v.ew3 = reg(model.enc.w3, train_encoder);
  v.eb3 = reg(model.enc.b3, train_encoder);
  v.dw1 = reg(model.dec.w1, train_decoder);
  v.db1 = reg(model.dec.b1, train_decoder);
  v.dw2 = reg(model.dec.w2, train_decoder);
  v.db2 = reg(model.dec.b2, train_decoder);
  v.dw3 = reg(model.dec.w3, train_decoder);
  v.db3 = reg(model.dec.b3, train_decoder);
  return v;
}

PostVars encode_on_tape(Tape& tape, const VaeModel& model, const VaeVars& vars, Var net_input) {
  Var h1 = tape.tanh_(tape.affine(net_input, vars.ew1, vars.eb1));
  Var h2 = tape.tanh_(tape.affine(h1, vars.ew2, vars.eb2));
  Var head = tape.affine(h2, vars.ew3, vars.eb3);
  PostVars p;
  p.mean = tape.slice_cols(head, 0, model.latent_dim);
  p.log_std = tape.clamp(tape.slice_cols(head, model.latent_dim, model.latent_dim), kLogStdMin, kLogStdMax);
  return p;
}

Var reparam_on_tape(Tape& tape, PostVars post, Var eps) {
  return tape.add(post.mean, tape.mul(tape.exp_(post.log_std), eps));
}

Var decode_head_on_tape(Tape& tape, const VaeModel& model, const VaeVars& vars, Var z) {
  (void)model;
  Var h1 = tape.tanh_(tape.affine(z, vars.dw1, vars.db1));
  Var h2 = tape.tanh_(tape.affine(h1, vars.dw2, vars.db2));
  return tape.affine(h2, vars.dw3, vars.db3);
}

Var log_obs_elem_on_tape(Tape& tape, const VaeModel& model, const VaeVars& vars, const Tensor& x_raw, Var z) {
  Var head = decode_head_on_tape(tape, model, vars, z);
  int B = x_raw.rows(), D = model.data_dim;
  if (model.obs == ObsModel::kBernoulli) {
    Tensor x1m = x_raw;
    for (auto& v : x1m.data) v = 1.0f - v;
    Var cx = tape.constant(x_raw);
    Var c1mx = tape.constant(std::move(x1m));
    Var sp_n = tape.softplus(tape.axpb(head, -1.0f, 0.0f));
    Var sp_p = tape.softplus(head);
    return tape.axpb(tape.add(tape.mul(cx, sp_n), tape.mul(c1mx, sp_p)), -1.0f, 0.0f);
  }
  // Discretized logistic: CDF differences at half-integer edges, edge bins
  // extended to +-infinity (realized with far-out finite edges).
  Tensor e_lo = Tensor::zeros({B, D}), e_hi = Tensor::zeros({B, D});
  for (int b = 0; b < B; ++b)
    for (int d = 0; d < D; ++d) {
      float x = x_raw.at(b, d);
      e_lo.at(b, d) = x <= 0.0f ? -1e4f : x - 0.5f;
      e_hi.at(b, d) = x >= 255.0f ? 1e4f : x + 0.5f;
    }
  Var mu = tape.axpb(tape.tanh_(tape.slice_cols(head, 0, D)), 127.5f, 127.5f);
  Var log_s = tape.clamp(tape.slice_cols(head, D, D), kLogScaleMin, kLogScaleMax);
  Var inv_s = tape.exp_(tape.axpb(log_s, -1.0f, 0.0f));
  Var u_hi = tape.mul(tape.sub(tape.constant(std::move(e_hi)), mu), inv_s);
  Var u_lo = tape.mul(tape.sub(tape.constant(std::move(e_lo)), mu), inv_s);
  Var mass = tape.sub(tape.sigmoid(u_hi), tape.sigmoid(u_lo));
  return tape.log_(tape.clamp(mass, 1e-12f, 2.0f));
}

Var log_prior_elem_on_tape(Tape& tape, Var z) {
  return tape.axpb(tape.mul(z, z), -0.5f, static_cast<float>(-0.5 * kLn2Pi));
}

Var log_q_elem_on_tape(Tape& tape, PostVars post, Var z) {
  Var inv_std = tape.exp_(tape.axpb(post.log_std, -1.0f, 0.0f));
  Var t = tape.mul(tape.sub(z, post.mean), inv_std);
  return tape.sub(tape.axpb(tape.mul(t, t), -0.5f, static_cast<float>(-0.5 * kLn2Pi)), post.log_std);
}

namespace {

ElboParts finish_elbo(Tape& tape, const VaeModel& model, const VaeVars& vars, const Tensor& x_raw,
                      PostVars post, Var z) {
  ElboParts parts;
  parts.batch = x_raw.rows();
  parts.post = post;
  parts.z = z;
  parts.ll_elem = log_obs_elem_on_tape(tape, model, vars, x_raw, z);
  parts.lp_elem = log_prior_elem_on_tape(tape, z);
  parts.lq_elem = log_q_elem_on_tape(tape, post, z);
  Var total = tape.add(tape.sum(parts.ll_elem), tape.sub(tape.sum(parts.lp_elem), tape.sum(parts.lq_elem)));
  parts.mean_elbo = tape.axpb(total, 1.0f / static_cast<float>(parts.batch), 0.0f);
  return parts;
}

}  // namespace

ElboParts elbo_on_tape(Tape& tape, const VaeModel& model, const VaeVars& vars, const Tensor& x_raw,
                       const Tensor& eps, const Tensor* enc_input_override) {
  if (x_raw.rank() != 2 || x_raw.cols() != model.data_dim)
    throw std::invalid_argument("elbo: data shape " + shape_str(x_raw.shape));
  if (eps.rank() != 2 || eps.rows() != x_raw.rows() || eps.cols() != model.latent_dim)
    throw std::invalid_argument("elbo: eps shape " + shape_str(eps.shape));
  Tensor net_in = enc_input_override ? *enc_input_override : to_net_input(model, x_raw);
  PostVars post = encode_on_tape(tape, model, vars, tape.constant(std::move(net_in)));
  Var z = reparam_on_tape(tape, post, tape.constant(eps));
  return finish_elbo(tape, model, vars, x_raw, post, z);
}

ElboParts elbo_with_posterior_on_tape(Tape& tape, const VaeModel& model, const VaeVars& vars,
                                      const Tensor& x_raw, PostVars post, const Tensor& eps) {
  Var z = reparam_on_tape(tape, post, tape.constant(eps));
  return finish_elbo(tape, model, vars, x_raw, post, z);
}

}  // namespace bblv
