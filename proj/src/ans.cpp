#include "bblv/ans.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <queue>
#include <stdexcept>

#include "bblv/rng.hpp"

namespace bblv {

QuantizedPmf QuantizedPmf::from_freqs(std::vector<std::uint32_t> freqs, int precision) {
  if (precision < 1 || precision > 30) throw std::invalid_argument("pmf precision out of range");
  QuantizedPmf p;
  p.precision = precision;
  p.freqs = std::move(freqs);
  p.cum.resize(p.freqs.size());
  std::uint64_t acc = 0;
  for (std::size_t i = 0; i < p.freqs.size(); ++i) {
    if (p.freqs[i] == 0) throw std::invalid_argument("pmf frequency 0 at symbol " + std::to_string(i));
    p.cum[i] = static_cast<std::uint32_t>(acc);
    acc += p.freqs[i];
  }
  if (acc != p.total())
    throw std::invalid_argument("pmf frequencies sum to " + std::to_string(acc) + ", expected 2^" +
                                std::to_string(precision));
  return p;
}

QuantizedPmf QuantizedPmf::quantize(const std::vector<double>& probs, int precision) {
  if (precision < 1 || precision > 30) throw std::invalid_argument("pmf precision out of range");
  const std::uint64_t total = 1ull << precision;
  const std::size_t n = probs.size();
  if (n == 0 || n > total)
    throw std::invalid_argument("alphabet size " + std::to_string(n) + " exceeds 2^" + std::to_string(precision));
  double sum = 0.0;
  for (double p : probs) {
    if (p < 0.0 || !std::isfinite(p)) throw std::invalid_argument("negative or non-finite probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-4) throw std::invalid_argument("probabilities sum to " + std::to_string(sum));

  std::vector<std::uint32_t> freqs(n);
  std::vector<double> rem(n);
  std::uint64_t base_sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double ideal = probs[i] / sum * static_cast<double>(total);
    double fl = std::floor(ideal);
    freqs[i] = static_cast<std::uint32_t>(fl);
    rem[i] = ideal - fl;
    base_sum += freqs[i];
  }

  // Largest remainders get the leftover units; ties break to the lowest index.
  std::uint64_t leftover = total - base_sum;
  if (leftover > 0) {
    std::vector<double> sorted(rem);
    std::nth_element(sorted.begin(), sorted.begin() + (leftover - 1), sorted.end(), std::greater<double>());
    double thresh = sorted[leftover - 1];
    std::uint64_t given = 0;
    for (std::size_t i = 0; i < n && given < leftover; ++i)
      if (rem[i] > thresh) {
        ++freqs[i];
        ++given;
      }
    for (std::size_t i = 0; i < n && given < leftover; ++i)
      if (rem[i] == thresh) {
        ++freqs[i];
        ++given;
      }
  }

  // Floor of 1 per symbol, each raised unit taken from the currently largest
  // frequency (lowest index on ties).
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (freqs[i] == 0) {
      freqs[i] = 1;
      ++zeros;
    }
  if (zeros > 0) {
    std::priority_queue<std::pair<std::uint32_t, std::int64_t>> donors;
    for (std::size_t i = 0; i < n; ++i)
      if (freqs[i] > 1) donors.emplace(freqs[i], -static_cast<std::int64_t>(i));
    while (zeros > 0) {
      if (donors.empty()) throw std::invalid_argument("pmf cannot satisfy the frequency floor");
      auto [f, negi] = donors.top();
      donors.pop();
      std::size_t i = static_cast<std::size_t>(-negi);
      --freqs[i];
      --zeros;
      if (freqs[i] > 1) donors.emplace(freqs[i], negi);
    }
  }

  return from_freqs(std::move(freqs), precision);
}

QuantizedPmf QuantizedPmf::uniform(int n_symbols, int precision) {
  const std::uint64_t total = 1ull << precision;
  if (n_symbols <= 0 || (n_symbols & (n_symbols - 1)) != 0 || static_cast<std::uint64_t>(n_symbols) > total)
    throw std::invalid_argument("uniform pmf needs a power-of-two alphabet within 2^precision");
  return from_freqs(std::vector<std::uint32_t>(n_symbols, static_cast<std::uint32_t>(total / n_symbols)),
                    precision);
}

std::uint32_t QuantizedPmf::find(std::uint32_t value) const {
  auto it = std::upper_bound(cum.begin(), cum.end(), value);
  return static_cast<std::uint32_t>((it - cum.begin()) - 1);
}

AnsState AnsState::seeded(int n_words, std::uint64_t prng_seed) {
  Rng rng(prng_seed);
  AnsState st;
  st.head_ = kHeadMin | rng.next_u32();
  st.words_.resize(n_words);
  for (auto& w : st.words_) w = rng.next_u32();
  return st;
}

void AnsState::push(std::uint32_t symbol, const QuantizedPmf& pmf) {
  if (symbol >= pmf.alphabet()) throw std::invalid_argument("push: symbol out of alphabet");
  const std::uint64_t freq = pmf.freqs[symbol];
  const std::uint64_t x_max = freq << (64 - pmf.precision);
  while (head_ >= x_max) {
    words_.push_back(static_cast<std::uint32_t>(head_));
    head_ >>= 32;
  }
  head_ = ((head_ / freq) << pmf.precision) + (head_ % freq) + pmf.cum[symbol];
}

std::uint32_t AnsState::pop(const QuantizedPmf& pmf) {
  const std::uint32_t mask = pmf.total() - 1;
  const std::uint32_t slot = static_cast<std::uint32_t>(head_) & mask;
  const std::uint32_t symbol = pmf.find(slot);
  head_ = pmf.freqs[symbol] * (head_ >> pmf.precision) + slot - pmf.cum[symbol];
  while (head_ < kHeadMin) {
    if (words_.empty()) throw std::runtime_error("pop: coder state underflow (message exhausted)");
    head_ = (head_ << 32) | words_.back();
    words_.pop_back();
  }
  return symbol;
}

std::uint64_t AnsState::bit_length() const {
  return static_cast<std::uint64_t>(64 - std::countl_zero(head_)) + 32ull * words_.size();
}

std::vector<std::uint8_t> AnsState::serialize() const {
  std::vector<std::uint8_t> out;
  out.reserve(12 + 4 * words_.size());
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(head_ >> (8 * i)));
  std::uint32_t n = static_cast<std::uint32_t>(words_.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
  for (std::uint32_t w : words_)
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(w >> (8 * i)));
  return out;
}

AnsState AnsState::deserialize(const std::uint8_t* bytes, std::size_t n, std::size_t* consumed) {
  if (n < 12) throw std::runtime_error("truncated ANS state");
  AnsState st;
  st.head_ = 0;
  for (int i = 0; i < 8; ++i) st.head_ |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  std::uint32_t count = 0;
  for (int i = 0; i < 4; ++i) count |= static_cast<std::uint32_t>(bytes[8 + i]) << (8 * i);
  if (n < 12 + 4ull * count) throw std::runtime_error("truncated ANS word stack");
  st.words_.resize(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    std::uint32_t w = 0;
    for (int i = 0; i < 4; ++i) w |= static_cast<std::uint32_t>(bytes[12 + 4 * k + i]) << (8 * i);
    st.words_[k] = w;
  }
  if (st.head_ < kHeadMin) throw std::runtime_error("invalid ANS head");
  if (consumed) *consumed = 12 + 4ull * count;
  return st;
}

}  // namespace bblv
