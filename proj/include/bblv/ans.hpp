#pragma once

#include <cstdint>
#include <vector>

namespace bblv {

// Integer probability table at fixed precision: sum(freqs) == 2^precision and
// every frequency is at least 1, so every symbol stays decodable.
struct QuantizedPmf {
  int precision = 0;
  std::vector<std::uint32_t> freqs;
  std::vector<std::uint32_t> cum;  // exclusive prefix sums, size() == freqs.size()

  std::uint32_t total() const { return 1u << precision; }
  std::size_t alphabet() const { return freqs.size(); }

  // Largest-remainder apportionment with a floor of 1 per symbol; ties break
  // toward the lowest symbol index.
  static QuantizedPmf quantize(const std::vector<double>& probs, int precision);
  // Validates the invariants and builds the prefix sums.
  static QuantizedPmf from_freqs(std::vector<std::uint32_t> freqs, int precision);
  // 2^precision symbols of frequency 1 scaled up to `precision_total` bits.
  static QuantizedPmf uniform(int n_symbols, int precision);

  // Index of the symbol whose [cum, cum+freq) slot contains `value`.
  std::uint32_t find(std::uint32_t value) const;
};

// rANS coder state: 64-bit head kept in [2^32, 2^64), renormalized by 32-bit
// words pushed to / popped from a LIFO word stack.
class AnsState {
 public:
  static constexpr std::uint64_t kHeadMin = 1ull << 32;

  AnsState() : head_(kHeadMin) {}
  static AnsState seeded(int n_words, std::uint64_t prng_seed);

  void push(std::uint32_t symbol, const QuantizedPmf& pmf);
  std::uint32_t pop(const QuantizedPmf& pmf);

  std::uint64_t bit_length() const;

  std::uint64_t head() const { return head_; }
  const std::vector<std::uint32_t>& words() const { return words_; }

  std::vector<std::uint8_t> serialize() const;
  static AnsState deserialize(const std::uint8_t* bytes, std::size_t n, std::size_t* consumed = nullptr);

  bool operator==(const AnsState& o) const { return head_ == o.head_ && words_ == o.words_; }

 private:
  std::uint64_t head_;
  std::vector<std::uint32_t> words_;
};

}  // namespace bblv
