#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bblv/rng.hpp"
#include "bblv/tensor.hpp"
#include "bblv/vae.hpp"

namespace bblv {

enum class Domain : std::uint32_t { kBinary = 0, kGrey256 = 1 };

// Immutable-after-load collection of D-dim integer vectors.
struct Dataset {
  Domain domain = Domain::kGrey256;
  int dim = 0;
  std::vector<std::uint8_t> items;  // count * dim, row-major

  int count() const { return dim == 0 ? 0 : static_cast<int>(items.size() / dim); }
  std::span<const std::uint8_t> row(int i) const {
    return {items.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
  }
  // Raw-valued float batch for the rows in `indices`.
  Tensor batch(std::span<const int> indices) const;
  Tensor batch_range(int first, int count) const;
  void check_domain() const;
};

// IDX image file (big-endian dims, unsigned bytes, magic 0x00000803).
Dataset load_idx(const std::string& images_path);
void save_idx(const Dataset& ds, const std::string& path, int rows = 28, int cols = 28);

// Static threshold at raw value 127.5; idempotent on binary data.
Dataset binarize(const Dataset& ds);

// Model-generated train/test pair with disjoint rng streams per split.
std::pair<Dataset, Dataset> synth_from_model(const VaeModel& model, int n_train, int n_test,
                                             std::uint64_t seed);

// Procedural 28x28 grey stroke images: a stand-in corpus with MNIST-like
// statistics (digit-class templates plus per-sample jitter).
Dataset synth_strokes(int n, std::uint64_t seed);

// Flat binary cache: magic "BBDS", domain tag, count, dim, raw bytes.
void save_bbds(const Dataset& ds, const std::string& path);
Dataset load_bbds(const std::string& path);

// Auto-detects BBDS vs IDX by magic.
Dataset load_dataset(const std::string& path);

}  // namespace bblv
