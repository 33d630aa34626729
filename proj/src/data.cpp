#include "bblv/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace bblv {

namespace {

const char kBbdsMagic[4] = {'B', 'B', 'D', 'S'};

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open file: " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& buf) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open file for writing: " + path);
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("short write: " + path);
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  if (off + 4 > b.size())
    throw std::runtime_error("IDX file truncated at byte " + std::to_string(off));
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

void append_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t read_le32(const std::vector<std::uint8_t>& b, std::size_t off) {
  if (off + 4 > b.size()) throw std::runtime_error("BBDS file truncated at byte " + std::to_string(off));
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[off + i]) << (8 * i);
  return v;
}

}  // namespace

Tensor Dataset::batch(std::span<const int> indices) const {
  Tensor t = Tensor::zeros({static_cast<int>(indices.size()), dim});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    auto r = row(indices[b]);
    for (int d = 0; d < dim; ++d) t.data[b * dim + d] = static_cast<float>(r[d]);
  }
  return t;
}

Tensor Dataset::batch_range(int first, int n) const {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = first + i;
  return batch(idx);
}

void Dataset::check_domain() const {
  if (domain == Domain::kBinary)
    for (std::uint8_t v : items)
      if (v > 1) throw std::runtime_error("binary dataset contains value " + std::to_string(int(v)));
}

Dataset load_idx(const std::string& images_path) {
  auto buf = read_file(images_path);
  std::uint32_t magic = read_be32(buf, 0);
  if (magic != 0x00000803u)
    throw std::runtime_error("bad IDX magic 0x" + std::to_string(magic) + " at byte 0 in " + images_path);
  std::uint32_t count = read_be32(buf, 4);
  std::uint32_t rows = read_be32(buf, 8);
  std::uint32_t cols = read_be32(buf, 12);
  std::size_t expected = 16 + static_cast<std::size_t>(count) * rows * cols;
  if (buf.size() < expected)
    throw std::runtime_error("IDX file truncated: expected " + std::to_string(expected) + " bytes, have " +
                             std::to_string(buf.size()) + " (" + images_path + ")");
  Dataset ds;
  ds.domain = Domain::kGrey256;
  ds.dim = static_cast<int>(rows * cols);
  ds.items.assign(buf.begin() + 16, buf.begin() + static_cast<std::ptrdiff_t>(expected));
  return ds;
}

void save_idx(const Dataset& ds, const std::string& path, int rows, int cols) {
  if (rows * cols != ds.dim) throw std::invalid_argument("save_idx: rows*cols != dim");
  std::vector<std::uint8_t> buf;
  auto be = [&](std::uint32_t v) {
    for (int i = 3; i >= 0; --i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  be(0x00000803u);
  be(static_cast<std::uint32_t>(ds.count()));
  be(static_cast<std::uint32_t>(rows));
  be(static_cast<std::uint32_t>(cols));
  buf.insert(buf.end(), ds.items.begin(), ds.items.end());
  write_file(path, buf);
}

Dataset binarize(const Dataset& ds) {
  Dataset out;
  out.domain = Domain::kBinary;
  out.dim = ds.dim;
  out.items.resize(ds.items.size());
  if (ds.domain == Domain::kBinary) {
    out.items = ds.items;
  } else {
    for (std::size_t i = 0; i < ds.items.size(); ++i) out.items[i] = ds.items[i] > 127 ? 1 : 0;
  }
  return out;
}

std::pair<Dataset, Dataset> synth_from_model(const VaeModel& model, int n_train, int n_test,
                                             std::uint64_t seed) {
  auto make = [&](int n, std::uint64_t stream) {
    Rng rng = Rng(seed).fork(stream);
    Dataset ds;
    ds.domain = model.obs == ObsModel::kBernoulli ? Domain::kBinary : Domain::kGrey256;
    ds.dim = model.data_dim;
    ds.items.reserve(static_cast<std::size_t>(n) * model.data_dim);
    for (int i = 0; i < n; ++i) {
      auto x = sample_model(model, rng, LatentSource::kPrior);
      ds.items.insert(ds.items.end(), x.begin(), x.end());
    }
    return ds;
  };
  return {make(n_train, 0x7261696eull), make(n_test, 0x74657374ull)};
}

Dataset synth_strokes(int n, std::uint64_t seed) {
  constexpr int W = 28;
  constexpr int kClasses = 10;
  // Fixed per-class stroke skeletons: 2-3 quadratic curves per class.
  struct Curve {
    double x0, y0, x1, y1, x2, y2;
  };
  std::vector<std::vector<Curve>> classes(kClasses);
  Rng proto(0x5354524bull);  // template geometry is independent of `seed`
  for (int c = 0; c < kClasses; ++c) {
    int n_curves = 2 + static_cast<int>(proto.below(2));
    for (int k = 0; k < n_curves; ++k) {
      Curve cv;
      cv.x0 = 5.0 + 18.0 * proto.uniform();
      cv.y0 = 5.0 + 18.0 * proto.uniform();
      cv.x1 = 5.0 + 18.0 * proto.uniform();
      cv.y1 = 5.0 + 18.0 * proto.uniform();
      cv.x2 = 5.0 + 18.0 * proto.uniform();
      cv.y2 = 5.0 + 18.0 * proto.uniform();
      classes[c].push_back(cv);
    }
  }

  Rng rng(seed);
  Dataset ds;
  ds.domain = Domain::kGrey256;
  ds.dim = W * W;
  ds.items.resize(static_cast<std::size_t>(n) * W * W);
  std::vector<double> img(W * W);
  for (int i = 0; i < n; ++i) {
    int c = static_cast<int>(rng.below(kClasses));
    double dx = 1.5 * rng.normal(), dy = 1.5 * rng.normal();
    double pen = 1.1 + 0.4 * rng.uniform();
    std::fill(img.begin(), img.end(), 0.0);
    for (const Curve& base : classes[c]) {
      Curve cv = base;
      // per-sample jitter of the control points
      cv.x0 += dx + 1.0 * rng.normal();
      cv.y0 += dy + 1.0 * rng.normal();
      cv.x1 += dx + 1.2 * rng.normal();
      cv.y1 += dy + 1.2 * rng.normal();
      cv.x2 += dx + 1.0 * rng.normal();
      cv.y2 += dy + 1.0 * rng.normal();
      const int steps = 64;
      for (int s = 0; s <= steps; ++s) {
        double t = static_cast<double>(s) / steps;
        double u = 1.0 - t;
        double px = u * u * cv.x0 + 2 * u * t * cv.x1 + t * t * cv.x2;
        double py = u * u * cv.y0 + 2 * u * t * cv.y1 + t * t * cv.y2;
        int xlo = std::max(0, static_cast<int>(px - 3)), xhi = std::min(W - 1, static_cast<int>(px + 3));
        int ylo = std::max(0, static_cast<int>(py - 3)), yhi = std::min(W - 1, static_cast<int>(py + 3));
        for (int y = ylo; y <= yhi; ++y)
          for (int x = xlo; x <= xhi; ++x) {
            double d2 = (x - px) * (x - px) + (y - py) * (y - py);
            img[y * W + x] = std::max(img[y * W + x], std::exp(-d2 / (2.0 * pen * pen)));
          }
      }
    }
    for (int p = 0; p < W * W; ++p) {
      double v = 255.0 * img[p];
      ds.items[static_cast<std::size_t>(i) * W * W + p] =
          static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : std::lround(v)));
    }
  }
  return ds;
}

void save_bbds(const Dataset& ds, const std::string& path) {
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), kBbdsMagic, kBbdsMagic + 4);
  append_le32(buf, static_cast<std::uint32_t>(ds.domain));
  append_le32(buf, static_cast<std::uint32_t>(ds.count()));
  append_le32(buf, static_cast<std::uint32_t>(ds.dim));
  buf.insert(buf.end(), ds.items.begin(), ds.items.end());
  write_file(path, buf);
}

Dataset load_bbds(const std::string& path) {
  auto buf = read_file(path);
  if (buf.size() < 16 || std::memcmp(buf.data(), kBbdsMagic, 4) != 0)
    throw std::runtime_error("bad BBDS magic in " + path);
  Dataset ds;
  std::uint32_t domain = read_le32(buf, 4);
  if (domain > 1) throw std::runtime_error("unknown BBDS domain tag in " + path);
  ds.domain = static_cast<Domain>(domain);
  std::uint32_t count = read_le32(buf, 8);
  ds.dim = static_cast<int>(read_le32(buf, 12));
  std::size_t expected = 16 + static_cast<std::size_t>(count) * ds.dim;
  if (buf.size() < expected) throw std::runtime_error("BBDS file truncated: " + path);
  ds.items.assign(buf.begin() + 16, buf.begin() + static_cast<std::ptrdiff_t>(expected));
  ds.check_domain();
  return ds;
}

Dataset load_dataset(const std::string& path) {
  auto buf = read_file(path);
  if (buf.size() >= 4 && std::memcmp(buf.data(), kBbdsMagic, 4) == 0) return load_bbds(path);
  return load_idx(path);
}

}  // namespace bblv
