#include "bblv/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "bblv/adam.hpp"
#include "bblv/tape.hpp"

namespace bblv {

namespace {

Tensor draw_eps(Rng& rng, int rows, int cols) {
  Tensor t = Tensor::zeros({rows, cols});
  for (auto& v : t.data) v = static_cast<float>(rng.normal());
  return t;
}

std::vector<int> shuffled_indices(int n, Rng& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(idx[i], idx[static_cast<int>(rng.below(i + 1))]);
  return idx;
}

// Batched model sampling: z first (row-major), then pixel draws row-major.
Tensor sample_model_batch(const VaeModel& model, Rng& rng, int n, LatentSource source,
                          const Tensor* dataset_raw) {
  int L = model.latent_dim, D = model.data_dim;
  Tensor z = Tensor::zeros({n, L});
  if (source == LatentSource::kPrior) {
    for (auto& v : z.data) v = static_cast<float>(rng.normal());
  } else {
    if (!dataset_raw) throw std::invalid_argument("aggregate posterior sampling needs a dataset");
    Tensor x = Tensor::zeros({n, dataset_raw->cols()});
    for (int i = 0; i < n; ++i) {
      int idx = static_cast<int>(rng.below(dataset_raw->rows()));
      for (int d = 0; d < dataset_raw->cols(); ++d) x.at(i, d) = dataset_raw->at(idx, d);
    }
    Posterior p = encode_eval(model, x);
    for (std::size_t i = 0; i < z.data.size(); ++i)
      z.data[i] = p.mean.data[i] + std::exp(p.log_std.data[i]) * static_cast<float>(rng.normal());
  }
  Tensor head = decode_eval(model, z);
  Tensor x = Tensor::zeros({n, D});
  if (model.obs == ObsModel::kBernoulli) {
    for (int i = 0; i < n; ++i)
      for (int d = 0; d < D; ++d) x.at(i, d) = rng.uniform() < bernoulli_prob(head.at(i, d)) ? 1.0f : 0.0f;
  } else {
    for (int i = 0; i < n; ++i)
      for (int d = 0; d < D; ++d) {
        double mean, log_scale;
        std::span<const float> hr(head.data.data() + static_cast<std::size_t>(i) * model.dec_out_dim(),
                                  model.dec_out_dim());
        logistic_params(model, hr, d, &mean, &log_scale);
        double u = (static_cast<double>(rng.next_u64() >> 11) + 0.5) * 0x1.0p-53;
        double v = mean + std::exp(log_scale) * std::log(u / (1.0 - u));
        long k = std::lround(v);
        x.at(i, d) = static_cast<float>(k < 0 ? 0 : (k > 255 ? 255 : k));
      }
  }
  return x;
}

struct SleepBatch {
  Tensor x;  // raw
  Tensor z;
};

SleepBatch sample_joint_batch(const VaeModel& model, Rng& rng, int n) {
  SleepBatch b;
  b.z = draw_eps(rng, n, model.latent_dim);  // prior draw
  Tensor head = decode_eval(model, b.z);
  b.x = Tensor::zeros({n, model.data_dim});
  if (model.obs == ObsModel::kBernoulli) {
    for (std::size_t i = 0; i < b.x.data.size(); ++i)
      b.x.data[i] = rng.uniform() < bernoulli_prob(head.data[i]) ? 1.0f : 0.0f;
  } else {
    for (int i = 0; i < n; ++i)
      for (int d = 0; d < model.data_dim; ++d) {
        double mean, log_scale;
        std::span<const float> hr(head.data.data() + static_cast<std::size_t>(i) * model.dec_out_dim(),
                                  model.dec_out_dim());
        logistic_params(model, hr, d, &mean, &log_scale);
        double u = (static_cast<double>(rng.next_u64() >> 11) + 0.5) * 0x1.0p-53;
        double v = mean + std::exp(log_scale) * std::log(u / (1.0 - u));
        long k = std::lround(v);
        b.x.at(i, d) = static_cast<float>(k < 0 ? 0 : (k > 255 ? 255 : k));
      }
  }
  return b;
}

}  // namespace

Objective objective_from_string(const std::string& s) {
  if (s == "wake") return Objective::kWake;
  if (s == "sleep") return Objective::kSleep;
  if (s == "reverse-sleep") return Objective::kReverseSleep;
  if (s == "half-asleep") return Objective::kHalfAsleep;
  if (s == "denoising") return Objective::kDenoising;
  throw std::invalid_argument("unknown objective: " + s);
}

std::string objective_to_string(Objective o) {
  switch (o) {
    case Objective::kWake: return "wake";
    case Objective::kSleep: return "sleep";
    case Objective::kReverseSleep: return "reverse-sleep";
    case Objective::kHalfAsleep: return "half-asleep";
    case Objective::kDenoising: return "denoising";
  }
  return "?";
}

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open metrics file: " + path);
  f << "epoch,split,objective,seed,bpd\n";
  for (const auto& r : rows)
    f << r.epoch << "," << r.split << "," << r.objective << "," << r.seed << "," << r.bpd << "\n";
}

double dataset_bpd(const VaeModel& model, const Dataset& ds, std::uint64_t seed, int batch) {
  Rng rng = Rng(seed).fork(0xe7a1);
  int n = ds.count();
  Tensor eps_all = draw_eps(rng, n, model.latent_dim);
  double total = 0.0;
  for (int first = 0; first < n; first += batch) {
    int count = std::min(batch, n - first);
    Tensor xb = ds.batch_range(first, count);
    Tensor eps = Tensor::zeros({count, model.latent_dim});
    std::copy(eps_all.data.begin() + static_cast<std::size_t>(first) * model.latent_dim,
              eps_all.data.begin() + static_cast<std::size_t>(first + count) * model.latent_dim,
              eps.data.begin());
    for (double e : elbo_eval(model, xb, eps)) total -= e;
  }
  return bpd(total / n, model.data_dim);
}

void reinit_encoder(VaeModel& model, Rng& rng) {
  Rng local = rng.fork(0x656e63);
  VaeModel fresh = VaeModel::init(model.data_dim, model.hidden_dim, model.latent_dim, model.obs, local);
  model.enc = fresh.enc;
}

std::vector<MetricRow> train_vae_joint(VaeModel& model, const Dataset& train, const Dataset* test,
                                       const JointTrainConfig& cfg) {
  if (train.count() == 0) throw std::invalid_argument("train_vae_joint: empty dataset");
  std::vector<MetricRow> rows;
  Rng rng(cfg.seed);
  AdamState adam = AdamState::init(model.params(), AdamConfig{.lr = cfg.lr});
  std::uint64_t eval_seed = mix64(cfg.seed, 0xe7a1);
  int batch = std::min(cfg.batch, train.count());
  int n_batches = std::max(1, train.count() / batch);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto order = shuffled_indices(train.count(), rng);
    for (int bi = 0; bi < n_batches; ++bi) {
      std::span<const int> idx(order.data() + static_cast<std::size_t>(bi) * batch,
                               static_cast<std::size_t>(std::min(batch, train.count() - bi * batch)));
      Tensor xb = train.batch(idx);
      Tensor eps = draw_eps(rng, static_cast<int>(idx.size()), model.latent_dim);
      Tape tape;
      VaeVars vars = register_vae(tape, model, true, true);
      ElboParts parts = elbo_on_tape(tape, model, vars, xb, eps);
      Var loss = tape.axpb(parts.mean_elbo, -1.0f, 0.0f);
      float loss_v = tape.value(loss).item();
      if (!std::isfinite(loss_v))
        throw std::runtime_error("train_vae_joint: non-finite loss at epoch " + std::to_string(epoch) +
                                 " batch " + std::to_string(bi));
      tape.backward(loss);
      std::vector<const Tensor*> grads = {
          &tape.grad(vars.ew1), &tape.grad(vars.eb1), &tape.grad(vars.ew2), &tape.grad(vars.eb2),
          &tape.grad(vars.ew3), &tape.grad(vars.eb3), &tape.grad(vars.dw1), &tape.grad(vars.db1),
          &tape.grad(vars.dw2), &tape.grad(vars.db2), &tape.grad(vars.dw3), &tape.grad(vars.db3)};
      adam_step(model.params(), grads, adam, model.param_names());
    }
    if (cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)) {
      rows.push_back({epoch, "train", "joint", cfg.seed, dataset_bpd(model, train, eval_seed)});
      if (test) rows.push_back({epoch, "test", "joint", cfg.seed, dataset_bpd(model, *test, eval_seed)});
    }
    if (cfg.on_epoch) cfg.on_epoch(epoch, model);
  }
  return rows;
}

std::vector<MetricRow> train_encoder(VaeModel& model, const Dataset& data, const Dataset* test,
                                     const EncoderTrainConfig& cfg) {
  if (data.count() == 0) throw std::invalid_argument("train_encoder: empty dataset");
  float alpha = cfg.objective == Objective::kWake         ? 0.0f
                : cfg.objective == Objective::kReverseSleep ? 1.0f
                : cfg.objective == Objective::kHalfAsleep   ? cfg.alpha
                                                            : 0.0f;
  if (alpha < 0.0f || alpha > 1.0f) throw std::invalid_argument("train_encoder: alpha outside [0,1]");
  if (cfg.sigma < 0.0f) throw std::invalid_argument("train_encoder: sigma must be >= 0");

  std::vector<MetricRow> rows;
  const std::string obj_name = objective_to_string(cfg.objective);
  Rng rng(cfg.seed);
  AdamState adam = AdamState::init(model.encoder_params(), AdamConfig{.lr = cfg.lr});
  std::uint64_t eval_seed = mix64(cfg.seed, 0xe7a1);
  int batch = std::min(cfg.batch, data.count());
  int n_batches = std::max(1, data.count() / batch);
  int n_model = static_cast<int>(std::lround(static_cast<double>(alpha) * batch));

  Tensor aggregate_pool;
  const Tensor* pool = nullptr;
  if (cfg.latent_source == LatentSource::kAggregatePosterior) {
    aggregate_pool = data.batch_range(0, data.count());
    pool = &aggregate_pool;
  }

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto order = shuffled_indices(data.count(), rng);
    std::size_t cursor = 0;
    double epoch_loss = 0.0;
    for (int bi = 0; bi < n_batches; ++bi) {
      Tape tape;
      VaeVars vars = register_vae(tape, model, true, false);
      Var loss;
      if (cfg.objective == Objective::kSleep) {
        SleepBatch sb = sample_joint_batch(model, rng, batch);
        Tensor net_in = to_net_input(model, sb.x);
        PostVars post = encode_on_tape(tape, model, vars, tape.constant(std::move(net_in)));
        Var lq = log_q_elem_on_tape(tape, post, tape.constant(sb.z));
        loss = tape.axpb(tape.sum(lq), -1.0f / static_cast<float>(batch), 0.0f);
      } else if (cfg.objective == Objective::kDenoising) {
        Tensor xb = Tensor::zeros({batch, data.dim});
        for (int i = 0; i < batch; ++i) {
          auto r = data.row(order[cursor++ % order.size()]);
          for (int d = 0; d < data.dim; ++d) xb.at(i, d) = static_cast<float>(r[d]);
        }
        Tensor noisy_in = to_net_input(model, xb);
        for (auto& v : noisy_in.data) v += cfg.sigma * static_cast<float>(rng.normal());
        Tensor eps_noisy = draw_eps(rng, batch, model.latent_dim);
        Tensor eps_clean = draw_eps(rng, batch, model.latent_dim);
        ElboParts noisy = elbo_on_tape(tape, model, vars, xb, eps_noisy, &noisy_in);
        ElboParts clean = elbo_on_tape(tape, model, vars, xb, eps_clean);
        Var mix = tape.add(tape.axpb(noisy.mean_elbo, cfg.alpha_mix, 0.0f),
                           tape.axpb(clean.mean_elbo, 1.0f - cfg.alpha_mix, 0.0f));
        loss = tape.axpb(mix, -1.0f, 0.0f);
      } else {
        // alpha-mixture of fresh model samples and real data (wake at 0,
        // reverse sleep at 1).
        Tensor xb = Tensor::zeros({batch, data.dim});
        if (n_model > 0) {
          Tensor xm = sample_model_batch(model, rng, n_model, cfg.latent_source, pool);
          std::copy(xm.data.begin(), xm.data.end(), xb.data.begin());
        }
        for (int i = n_model; i < batch; ++i) {
          auto r = data.row(order[cursor++ % order.size()]);
          for (int d = 0; d < data.dim; ++d) xb.at(i, d) = static_cast<float>(r[d]);
        }
        Tensor eps = draw_eps(rng, batch, model.latent_dim);
        ElboParts parts = elbo_on_tape(tape, model, vars, xb, eps);
        loss = tape.axpb(parts.mean_elbo, -1.0f, 0.0f);
      }
      float loss_v = tape.value(loss).item();
      if (!std::isfinite(loss_v))
        throw std::runtime_error("train_encoder(" + obj_name + "): non-finite loss at epoch " +
                                 std::to_string(epoch) + " batch " + std::to_string(bi));
      epoch_loss += loss_v;
      tape.backward(loss);
      std::vector<const Tensor*> grads = {&tape.grad(vars.ew1), &tape.grad(vars.eb1),
                                          &tape.grad(vars.ew2), &tape.grad(vars.eb2),
                                          &tape.grad(vars.ew3), &tape.grad(vars.eb3)};
      adam_step(model.encoder_params(), grads, adam, model.encoder_param_names());
    }
    rows.push_back({epoch, "loss", obj_name, cfg.seed, epoch_loss / n_batches});
    if (cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)) {
      if (test) rows.push_back({epoch, "test", obj_name, cfg.seed, dataset_bpd(model, *test, eval_seed)});
    }
  }
  return rows;
}

std::vector<MetricRow> optimal_inference_dataset(VaeModel& model, const Dataset& eval_set, int epochs,
                                                 float lr, int batch, std::uint64_t seed) {
  EncoderTrainConfig cfg;
  cfg.objective = Objective::kWake;
  cfg.epochs = epochs;
  cfg.lr = lr;
  cfg.batch = batch;
  cfg.seed = seed;
  cfg.eval_every = 0;
  return train_encoder(model, eval_set, &eval_set, cfg);
}

GapReport measure_gap(const VaeModel& amortized, const VaeModel& optimized, const Dataset& eval_set,
                      int n_noise, std::uint64_t seed) {
  if (decoder_checksum(amortized) != decoder_checksum(optimized))
    throw std::runtime_error("measure_gap: decoder checksum mismatch between models");
  int n = eval_set.count(), L = amortized.latent_dim, D = amortized.data_dim;
  GapReport rep;
  rep.amortized_neg_elbo.assign(n, 0.0);
  rep.optimized_neg_elbo.assign(n, 0.0);
  rep.gap.assign(n, 0.0);
  rep.gap_stderr.assign(n, 0.0);
  std::vector<double> diff_sq(n, 0.0);
  Rng rng = Rng(seed).fork(0x6761);

  const int chunk = 256;
  for (int first = 0; first < n; first += chunk) {
    int count = std::min(chunk, n - first);
    Tensor xb = eval_set.batch_range(first, count);
    Posterior pa = encode_eval(amortized, xb);
    Posterior po = encode_eval(optimized, xb);
    for (int j = 0; j < n_noise; ++j) {
      Tensor eps = draw_eps(rng, count, L);
      auto eval_with = [&](const VaeModel& m, const Posterior& p) {
        Tensor z = Tensor::zeros({count, L});
        for (std::size_t i = 0; i < z.data.size(); ++i)
          z.data[i] = p.mean.data[i] + std::exp(p.log_std.data[i]) * eps.data[i];
        Tensor head = decode_eval(m, z);
        std::vector<double> e(count);
        for (int b = 0; b < count; ++b) {
          std::span<const float> xr(xb.data.data() + static_cast<std::size_t>(b) * D, D);
          std::span<const float> hr(head.data.data() + static_cast<std::size_t>(b) * m.dec_out_dim(),
                                    m.dec_out_dim());
          std::span<const float> zr(z.data.data() + static_cast<std::size_t>(b) * L, L);
          std::span<const float> mr(p.mean.data.data() + static_cast<std::size_t>(b) * L, L);
          std::span<const float> sr(p.log_std.data.data() + static_cast<std::size_t>(b) * L, L);
          e[b] = log_obs_from_head(m, xr, hr) + log_prior(zr) - log_q(mr, sr, zr);
        }
        return e;
      };
      auto ea = eval_with(amortized, pa);
      auto eo = eval_with(optimized, po);
      for (int b = 0; b < count; ++b) {
        rep.amortized_neg_elbo[first + b] -= ea[b];
        rep.optimized_neg_elbo[first + b] -= eo[b];
        double d = eo[b] - ea[b];  // optimized ELBO - amortized ELBO
        rep.gap[first + b] += d;
        diff_sq[first + b] += d * d;
      }
    }
  }
  double sum_a = 0.0, sum_o = 0.0;
  for (int i = 0; i < n; ++i) {
    rep.amortized_neg_elbo[i] /= n_noise;
    rep.optimized_neg_elbo[i] /= n_noise;
    rep.gap[i] /= n_noise;
    double var = diff_sq[i] / n_noise - rep.gap[i] * rep.gap[i];
    rep.gap_stderr[i] = std::sqrt(std::max(0.0, var) / n_noise);
    sum_a += rep.amortized_neg_elbo[i];
    sum_o += rep.optimized_neg_elbo[i];
  }
  rep.amortized_bpd = bpd(sum_a / n, amortized.data_dim);
  rep.optimized_bpd = bpd(sum_o / n, amortized.data_dim);
  rep.gap_bpd = rep.amortized_bpd - rep.optimized_bpd;
  return rep;
}

std::vector<MetricRow> consistency_experiment(const VaeModel& pretrained, const ConsistencyConfig& cfg) {
  auto [train, test] = synth_from_model(pretrained, cfg.n_train, cfg.n_test, 0x636f6e73ull);
  std::vector<MetricRow> rows;
  for (std::uint64_t seed : cfg.seeds) {
    for (Objective obj : cfg.objectives) {
      VaeModel student = pretrained;
      Rng r(mix64(seed, 0x7374756441ull));
      reinit_encoder(student, r);
      EncoderTrainConfig ec;
      ec.objective = obj;
      ec.epochs = cfg.epochs;
      ec.lr = cfg.lr;
      ec.batch = cfg.batch;
      ec.eval_every = cfg.eval_every;
      ec.seed = mix64(seed, static_cast<std::uint64_t>(obj));
      auto r2 = train_encoder(student, train, &test, ec);
      for (auto& row : r2) row.seed = seed;
      rows.insert(rows.end(), r2.begin(), r2.end());
    }
  }
  return rows;
}

}  // namespace bblv
