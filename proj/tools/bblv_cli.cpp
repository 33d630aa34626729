#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bblv/bits_back.hpp"
#include "bblv/data.hpp"
#include "bblv/errors.hpp"
#include "bblv/objectives.hpp"
#include "bblv/rng.hpp"
#include "bblv/vae.hpp"

namespace fs = std::filesystem;
using namespace bblv;

namespace {

// Relative dataset paths may live under a shared data root.
std::string resolve_data_path(const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute() || fs::exists(path)) return path;
  const char* root = std::getenv("BBLV_DATA_ROOT");
  if (root == nullptr) return path;
  return (fs::path(root) / path).string();
}

Dataset load_input(const std::string& path, bool binarize_flag) {
  Dataset ds = load_dataset(resolve_data_path(path));
  if (binarize_flag) ds = binarize(ds);
  ds.check_domain();
  return ds;
}

struct Manifest {
  std::vector<std::pair<std::string, std::string>> kv;

  void put(const std::string& k, const std::string& v) { kv.emplace_back(k, v); }
  void put(const std::string& k, double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    kv.emplace_back(k, os.str());
  }
  void put(const std::string& k, std::uint64_t v) { kv.emplace_back(k, std::to_string(v)); }
  void put(const std::string& k, int v) { kv.emplace_back(k, std::to_string(v)); }

  void write(const fs::path& dir) const {
    std::ofstream f(dir / "manifest.txt", std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write manifest in " + dir.string());
    f << "rng=" << Rng::kName << "\n";
    for (const auto& [k, v] : kv) f << k << "=" << v << "\n";
  }
};

fs::path prepare_outdir(const std::string& out) {
  if (out.empty()) throw std::invalid_argument("--out is required");
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

std::uint64_t dataset_checksum(const Dataset& ds) {
  return fnv1a64(ds.items.data(), ds.items.size(), mix64(static_cast<std::uint64_t>(ds.domain), ds.dim));
}

// ---- subcommand payloads ----------------------------------------------------

struct CommonOpts {
  std::string dataset, test_dataset, checkpoint, out;
  bool binarize_flag = false;
  std::uint64_t seed = 0;
  int epochs = 100;
  float lr = 3e-4f;
  int batch = 100;
};

int cmd_make_strokes(int n, std::uint64_t seed, bool bin, const std::string& out) {
  fs::path dir = prepare_outdir(out);
  Dataset ds = synth_strokes(n, seed);
  if (bin) ds = binarize(ds);
  fs::path file = dir / (bin ? "strokes.bbds" : "strokes.idx");
  if (bin) save_bbds(ds, file.string());
  else save_idx(ds, file.string());
  Manifest m;
  m.put("subcommand", std::string("make-strokes"));
  m.put("n", n);
  m.put("seed", seed);
  m.put("binarize", std::string(bin ? "1" : "0"));
  m.put("dataset_checksum", dataset_checksum(ds));
  m.write(dir);
  std::cout << "wrote " << file.string() << " (" << ds.count() << " items)\n";
  return 0;
}

int cmd_synth(const CommonOpts& o, int n_train, int n_test) {
  fs::path dir = prepare_outdir(o.out);
  VaeModel model = load_checkpoint(resolve_data_path(o.checkpoint));
  auto [train, test] = synth_from_model(model, n_train, n_test, o.seed);
  save_bbds(train, (dir / "train.bbds").string());
  save_bbds(test, (dir / "test.bbds").string());
  Manifest m;
  m.put("subcommand", std::string("synth"));
  m.put("checkpoint", o.checkpoint);
  m.put("model_checksum", model_checksum(model));
  m.put("seed", o.seed);
  m.put("n_train", n_train);
  m.put("n_test", n_test);
  m.put("train_checksum", dataset_checksum(train));
  m.put("test_checksum", dataset_checksum(test));
  m.write(dir);
  std::cout << "wrote " << (dir / "train.bbds").string() << " and test.bbds\n";
  return 0;
}

int cmd_train(const CommonOpts& o, int hidden, int latent, int checkpoint_every) {
  fs::path dir = prepare_outdir(o.out);
  Dataset train = load_input(o.dataset, o.binarize_flag);
  Dataset test;
  if (!o.test_dataset.empty()) test = load_input(o.test_dataset, o.binarize_flag);

  Rng rng(o.seed);
  ObsModel obs = train.domain == Domain::kBinary ? ObsModel::kBernoulli : ObsModel::kDiscretizedLogistic;
  VaeModel model = VaeModel::init(train.dim, hidden, latent, obs, rng);

  JointTrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.lr = o.lr;
  cfg.batch = o.batch;
  cfg.seed = o.seed;
  if (checkpoint_every > 0) {
    cfg.on_epoch = [&](int epoch, const VaeModel& mm) {
      if (epoch % checkpoint_every == 0)
        save_checkpoint(mm, (dir / ("checkpoint_" + std::to_string(epoch) + ".bin")).string());
    };
  }
  auto rows = train_vae_joint(model, train, test.count() > 0 ? &test : nullptr, cfg);
  save_checkpoint(model, (dir / "model.bin").string());
  write_metrics_csv(rows, (dir / "metrics.csv").string());

  Manifest m;
  m.put("subcommand", std::string("train"));
  m.put("dataset", o.dataset);
  m.put("dataset_checksum", dataset_checksum(train));
  m.put("hidden", hidden);
  m.put("latent", latent);
  m.put("epochs", o.epochs);
  m.put("lr", static_cast<double>(o.lr));
  m.put("batch", o.batch);
  m.put("seed", o.seed);
  m.put("model_checksum", model_checksum(model));
  m.write(dir);
  std::cout << "final train bpd " << dataset_bpd(model, train, o.seed) << "\n";
  return 0;
}

int cmd_finetune(const CommonOpts& o, const std::string& objective, float alpha, float sigma,
                 float alpha_mix, const std::string& latent_source) {
  fs::path dir = prepare_outdir(o.out);
  Dataset train = load_input(o.dataset, o.binarize_flag);
  Dataset test;
  if (!o.test_dataset.empty()) test = load_input(o.test_dataset, o.binarize_flag);
  VaeModel model = load_checkpoint(resolve_data_path(o.checkpoint));

  EncoderTrainConfig cfg;
  cfg.objective = objective_from_string(objective);
  cfg.alpha = alpha;
  cfg.sigma = sigma;
  cfg.alpha_mix = alpha_mix;
  cfg.epochs = o.epochs;
  cfg.lr = o.lr;
  cfg.batch = o.batch;
  cfg.seed = o.seed;
  if (latent_source == "prior") cfg.latent_source = LatentSource::kPrior;
  else if (latent_source == "aggregate") cfg.latent_source = LatentSource::kAggregatePosterior;
  else throw std::invalid_argument("unknown latent source '" + latent_source + "'");

  auto rows = train_encoder(model, train, test.count() > 0 ? &test : nullptr, cfg);
  save_checkpoint(model, (dir / "model.bin").string());
  write_metrics_csv(rows, (dir / "metrics.csv").string());

  Manifest m;
  m.put("subcommand", std::string("finetune-encoder"));
  m.put("dataset", o.dataset);
  m.put("checkpoint", o.checkpoint);
  m.put("objective", objective);
  m.put("alpha", static_cast<double>(alpha));
  m.put("sigma", static_cast<double>(sigma));
  m.put("alpha_mix", static_cast<double>(alpha_mix));
  m.put("latent_source", latent_source);
  m.put("epochs", o.epochs);
  m.put("lr", static_cast<double>(o.lr));
  m.put("seed", o.seed);
  m.put("model_checksum", model_checksum(model));
  m.write(dir);
  std::cout << "final test bpd "
            << dataset_bpd(model, test.count() > 0 ? test : train, o.seed) << "\n";
  return 0;
}

int cmd_gap(const CommonOpts& o, int n_noise) {
  fs::path dir = prepare_outdir(o.out);
  Dataset eval_set = load_input(o.dataset, o.binarize_flag);
  VaeModel amortized = load_checkpoint(resolve_data_path(o.checkpoint));
  VaeModel tuned = amortized;
  optimal_inference_dataset(tuned, eval_set, o.epochs, o.lr, o.batch, o.seed);
  GapReport rep = measure_gap(amortized, tuned, eval_set, n_noise, o.seed);

  std::ofstream f(dir / "gap.csv", std::ios::trunc);
  f << "index,amortized_neg_elbo,optimized_neg_elbo,gap,gap_stderr\n";
  f.precision(10);
  for (std::size_t i = 0; i < rep.gap.size(); ++i)
    f << i << "," << rep.amortized_neg_elbo[i] << "," << rep.optimized_neg_elbo[i] << "," << rep.gap[i]
      << "," << rep.gap_stderr[i] << "\n";

  Manifest m;
  m.put("subcommand", std::string("gap"));
  m.put("dataset", o.dataset);
  m.put("checkpoint", o.checkpoint);
  m.put("epochs", o.epochs);
  m.put("lr", static_cast<double>(o.lr));
  m.put("n_noise", n_noise);
  m.put("seed", o.seed);
  m.put("amortized_bpd", rep.amortized_bpd);
  m.put("optimized_bpd", rep.optimized_bpd);
  m.put("gap_bpd", rep.gap_bpd);
  m.write(dir);
  std::cout << "amortized bpd " << rep.amortized_bpd << " optimized bpd " << rep.optimized_bpd
            << " gap " << rep.gap_bpd << "\n";
  return 0;
}

int cmd_consistency(const CommonOpts& o, int n_train, int n_test, const std::vector<std::uint64_t>& seeds) {
  fs::path dir = prepare_outdir(o.out);
  VaeModel pretrained = load_checkpoint(resolve_data_path(o.checkpoint));
  ConsistencyConfig cfg;
  cfg.n_train = n_train;
  cfg.n_test = n_test;
  cfg.epochs = o.epochs;
  cfg.lr = o.lr;
  cfg.batch = o.batch;
  if (!seeds.empty()) cfg.seeds = seeds;
  auto rows = consistency_experiment(pretrained, cfg);
  write_metrics_csv(rows, (dir / "consistency.csv").string());

  Manifest m;
  m.put("subcommand", std::string("consistency"));
  m.put("checkpoint", o.checkpoint);
  m.put("model_checksum", model_checksum(pretrained));
  m.put("n_train", n_train);
  m.put("n_test", n_test);
  m.put("epochs", o.epochs);
  m.put("lr", static_cast<double>(o.lr));
  std::string ss;
  for (auto s : cfg.seeds) ss += (ss.empty() ? "" : ",") + std::to_string(s);
  m.put("seeds", ss);
  m.write(dir);
  std::cout << "wrote " << (dir / "consistency.csv").string() << "\n";
  return 0;
}

int cmd_compress(const CommonOpts& o, int k, float opt_lr) {
  fs::path dir = prepare_outdir(o.out);
  Dataset ds = load_input(o.dataset, o.binarize_flag);
  VaeModel model = load_checkpoint(resolve_data_path(o.checkpoint));

  OptimalInferenceConfig opt;
  opt.k = k;
  opt.lr = opt_lr;
  BitsBackConfig cfg;
  cfg.stream_seed = o.seed == 0 ? cfg.stream_seed : o.seed;
  RateStats stats;
  CompressedStream stream = compress(model, ds, k > 0 ? &opt : nullptr, cfg, &stats);
  stream.save((dir / "stream.bbst").string());

  Manifest m;
  m.put("subcommand", std::string("compress"));
  m.put("dataset", o.dataset);
  m.put("dataset_checksum", dataset_checksum(ds));
  m.put("checkpoint", o.checkpoint);
  m.put("model_checksum", model_checksum(model));
  m.put("k", k);
  m.put("opt_lr", static_cast<double>(opt_lr));
  m.put("stream_seed", cfg.stream_seed);
  m.put("count", static_cast<int>(stream.count));
  m.put("initial_bits", stats.initial_bits);
  m.put("final_bits", stats.final_bits);
  m.put("net_bpd", stats.net_bpd);
  m.put("quantized_neg_elbo_bpd", stats.quantized_neg_elbo_bpd);
  m.put("seconds_per_datum", stats.compress_seconds_per_datum);
  m.write(dir);
  std::cout << "net bpd " << stats.net_bpd << " (" << stats.compress_seconds_per_datum << " s/item)\n";
  return 0;
}

int cmd_decompress(const CommonOpts& o, const std::string& stream_path) {
  fs::path dir = prepare_outdir(o.out);
  VaeModel model = load_checkpoint(resolve_data_path(o.checkpoint));
  CompressedStream stream = CompressedStream::load(resolve_data_path(stream_path));
  RateStats stats;
  Dataset ds = decompress(model, stream, &stats);
  save_bbds(ds, (dir / "decoded.bbds").string());

  Manifest m;
  m.put("subcommand", std::string("decompress"));
  m.put("stream", stream_path);
  m.put("checkpoint", o.checkpoint);
  m.put("model_checksum", model_checksum(model));
  m.put("count", static_cast<int>(stream.count));
  m.put("dataset_checksum", dataset_checksum(ds));
  m.put("seconds_per_datum", stats.decompress_seconds_per_datum);
  m.write(dir);
  std::cout << "decoded " << ds.count() << " items to " << (dir / "decoded.bbds").string() << "\n";
  return 0;
}

int cmd_tradeoff(const CommonOpts& o, std::vector<int> ks, float opt_lr) {
  fs::path dir = prepare_outdir(o.out);
  Dataset ds = load_input(o.dataset, o.binarize_flag);
  VaeModel model = load_checkpoint(resolve_data_path(o.checkpoint));

  std::ofstream f(dir / "tradeoff.csv", std::ios::trunc);
  f << "k,net_bpd,quantized_neg_elbo_bpd,compress_s_per_item,decompress_s_per_item\n";
  f.precision(10);
  for (int k : ks) {
    OptimalInferenceConfig opt;
    opt.k = k;
    opt.lr = opt_lr;
    BitsBackConfig cfg;
    cfg.stream_seed = o.seed == 0 ? cfg.stream_seed : o.seed;
    RateStats cs, dstat;
    CompressedStream stream = compress(model, ds, k > 0 ? &opt : nullptr, cfg, &cs);
    Dataset back = decompress(model, stream, &dstat);
    if (back.items != ds.items) throw StreamError("round trip mismatch at k=" + std::to_string(k));
    f << k << "," << cs.net_bpd << "," << cs.quantized_neg_elbo_bpd << ","
      << cs.compress_seconds_per_datum << "," << dstat.decompress_seconds_per_datum << "\n";
    std::cout << "k=" << k << " net bpd " << cs.net_bpd << "\n";
  }

  Manifest m;
  m.put("subcommand", std::string("tradeoff"));
  m.put("dataset", o.dataset);
  m.put("checkpoint", o.checkpoint);
  m.put("model_checksum", model_checksum(model));
  std::string kss;
  for (int k : ks) kss += (kss.empty() ? "" : ",") + std::to_string(k);
  m.put("k_list", kss);
  m.put("opt_lr", static_cast<double>(opt_lr));
  m.write(dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VAE training, amortization-gap experiments, and bits-back compression"};
  app.require_subcommand(1);

  CommonOpts o;
  int hidden = 200, latent = 16, checkpoint_every = 0;
  int n = 10000, n_train = 10000, n_test = 1000, n_noise = 8, k = 0;
  float alpha = 0.5f, sigma = 0.1f, alpha_mix = 0.5f, opt_lr = 5e-3f;
  std::string objective = "wake", latent_source = "prior", stream_path;
  std::vector<std::uint64_t> seeds;
  std::vector<int> ks = {0, 1, 2, 5, 10};

  auto add_common = [&](CLI::App* c, bool needs_data, bool needs_ckpt) {
    if (needs_data) c->add_option("--dataset", o.dataset)->required();
    if (needs_ckpt) c->add_option("--checkpoint", o.checkpoint)->required();
    c->add_option("--out", o.out)->required();
    c->add_option("--seed", o.seed);
    c->add_flag("--binarize", o.binarize_flag);
  };
  auto add_training = [&](CLI::App* c) {
    c->add_option("--epochs", o.epochs);
    c->add_option("--lr", o.lr);
    c->add_option("--batch", o.batch);
    c->add_option("--test-dataset", o.test_dataset);
  };

  auto* strokes = app.add_subcommand("make-strokes", "generate the procedural stroke corpus");
  strokes->add_option("--n", n);
  add_common(strokes, false, false);

  auto* synth = app.add_subcommand("synth", "sample train/test sets from a checkpoint");
  synth->add_option("--n-train", n_train);
  synth->add_option("--n-test", n_test);
  add_common(synth, false, true);

  auto* train = app.add_subcommand("train", "train a VAE jointly");
  train->add_option("--hidden", hidden);
  train->add_option("--latent", latent);
  train->add_option("--checkpoint-every", checkpoint_every);
  add_common(train, true, false);
  add_training(train);

  auto* ft = app.add_subcommand("finetune-encoder", "train the encoder under a chosen objective");
  ft->add_option("--objective", objective)->check(CLI::IsMember({"wake", "sleep", "reverse-sleep",
                                                                 "half-asleep", "denoising"}));
  ft->add_option("--alpha", alpha);
  ft->add_option("--sigma", sigma);
  ft->add_option("--alpha-mix", alpha_mix);
  ft->add_option("--latent-source", latent_source)->check(CLI::IsMember({"prior", "aggregate"}));
  add_common(ft, true, true);
  add_training(ft);

  auto* gap = app.add_subcommand("gap", "measure the amortization gap on an evaluation set");
  gap->add_option("--n-noise", n_noise);
  add_common(gap, true, true);
  add_training(gap);

  auto* cons = app.add_subcommand("consistency", "objective comparison on model-synthesized data");
  cons->add_option("--n-train", n_train);
  cons->add_option("--n-test", n_test);
  cons->add_option("--seeds", seeds)->delimiter(',');
  add_common(cons, false, true);
  add_training(cons);

  auto* comp = app.add_subcommand("compress", "bits-back compress a dataset");
  comp->add_option("--k", k);
  comp->add_option("--opt-lr", opt_lr);
  add_common(comp, true, true);

  auto* decomp = app.add_subcommand("decompress", "decode a compressed stream");
  decomp->add_option("--stream", stream_path)->required();
  add_common(decomp, false, true);

  auto* trade = app.add_subcommand("tradeoff", "net BPD and time per item across K");
  trade->add_option("--k-list", ks)->delimiter(',');
  trade->add_option("--opt-lr", opt_lr);
  add_common(trade, true, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // help/version exit 0; any parse failure is a config error
  }

  try {
    if (strokes->parsed()) return cmd_make_strokes(n, o.seed, o.binarize_flag, o.out);
    if (synth->parsed()) return cmd_synth(o, n_train, n_test);
    if (train->parsed()) return cmd_train(o, hidden, latent, checkpoint_every);
    if (ft->parsed()) return cmd_finetune(o, objective, alpha, sigma, alpha_mix, latent_source);
    if (gap->parsed()) return cmd_gap(o, n_noise);
    if (cons->parsed()) return cmd_consistency(o, n_train, n_test, seeds);
    if (comp->parsed()) return cmd_compress(o, k, opt_lr);
    if (decomp->parsed()) return cmd_decompress(o, stream_path);
    if (trade->parsed()) return cmd_tradeoff(o, ks, opt_lr);
  } catch (const StreamError& e) {
    std::cerr << "stream error: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
