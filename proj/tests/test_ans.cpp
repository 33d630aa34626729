#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "bblv/ans.hpp"
#include "bblv/rng.hpp"

using namespace bblv;

namespace {

std::vector<double> random_pmf(std::size_t n, Rng& rng) {
  std::vector<double> p(n);
  double sum = 0.0;
  for (auto& v : p) {
    v = -std::log(1.0 - rng.uniform());
    sum += v;
  }
  for (auto& v : p) v /= sum;
  return p;
}

// Brute-force largest-remainder apportionment with a floor of 1, feasible for
// tiny alphabets: enumerate unit-by-unit greedy choices.
std::vector<std::uint32_t> reference_quantize(const std::vector<double>& probs, int precision) {
  const std::uint64_t total = 1ull << precision;
  const std::size_t n = probs.size();
  std::vector<std::uint32_t> f(n);
  std::vector<double> rem(n);
  std::uint64_t used = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double ideal = probs[i] * static_cast<double>(total);
    f[i] = static_cast<std::uint32_t>(std::floor(ideal));
    rem[i] = ideal - std::floor(ideal);
    used += f[i];
  }
  for (std::uint64_t k = used; k < total; ++k) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (rem[i] > rem[best]) best = i;
    ++f[best];
    rem[best] = -1.0;
  }
  // Floor of 1, stolen one unit at a time from the current maximum.
  for (std::size_t i = 0; i < n; ++i)
    if (f[i] == 0) {
      f[i] = 1;
      std::size_t donor = 0;
      for (std::size_t j = 1; j < n; ++j)
        if (f[j] > f[donor]) donor = j;
      --f[donor];
    }
  return f;
}

}  // namespace

TEST_CASE("point mass on a three-symbol alphabet at 8 bits") {
  QuantizedPmf p = QuantizedPmf::quantize({1.0, 0.0, 0.0}, 8);
  CHECK(p.freqs == std::vector<std::uint32_t>{254, 1, 1});
  CHECK(p.cum == std::vector<std::uint32_t>{0, 254, 255});
}

TEST_CASE("quantize matches a brute-force apportionment on small alphabets") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 2 + rng.below(14);
    int precision = 6 + static_cast<int>(rng.below(8));
    if ((1u << precision) < n) precision = 6;
    auto probs = random_pmf(n, rng);
    if (trial % 3 == 0) probs[rng.below(n)] = 0.0;  // exercise the floor path
    double s = std::accumulate(probs.begin(), probs.end(), 0.0);
    for (auto& v : probs) v /= s;
    QuantizedPmf got = QuantizedPmf::quantize(probs, precision);
    auto want = reference_quantize(probs, precision);
    CHECK(got.freqs == want);
    CHECK(std::accumulate(got.freqs.begin(), got.freqs.end(), 0ull) == (1ull << precision));
  }
}

TEST_CASE("quantize rejects bad inputs") {
  CHECK_THROWS(QuantizedPmf::quantize({0.5, 0.4}, 8));       // does not sum to 1
  CHECK_THROWS(QuantizedPmf::quantize({1.5, -0.5}, 8));      // negative mass
  CHECK_THROWS(QuantizedPmf::quantize(std::vector<double>(10, 0.1), 3));  // alphabet > 2^precision
}

TEST_CASE("uniform pmf splits the budget exactly") {
  QuantizedPmf p = QuantizedPmf::uniform(1 << 14, 28);
  CHECK(p.alphabet() == (1u << 14));
  for (auto f : p.freqs) CHECK(f == (1u << 14));
  CHECK(p.find(0) == 0);
  CHECK(p.find((1u << 14) + 5) == 1);
}

TEST_CASE("push then pop returns symbols in reverse order") {
  Rng rng(99);
  QuantizedPmf p = QuantizedPmf::quantize(random_pmf(17, rng), 12);
  AnsState st = AnsState::seeded(4, 1234);
  std::vector<std::uint32_t> syms(500);
  for (auto& s : syms) s = static_cast<std::uint32_t>(rng.below(17));
  for (auto s : syms) st.push(s, p);
  for (int i = static_cast<int>(syms.size()) - 1; i >= 0; --i) CHECK(st.pop(p) == syms[i]);
  CHECK(st == AnsState::seeded(4, 1234));
}

TEST_CASE("fuzzed interleaving of pushes and pops is lossless") {
  Rng rng(123);
  std::vector<QuantizedPmf> pmfs;
  for (int i = 0; i < 8; ++i) pmfs.push_back(QuantizedPmf::quantize(random_pmf(3 + rng.below(30), rng), 10 + i));
  AnsState st = AnsState::seeded(2, 555);
  std::vector<std::pair<std::uint32_t, int>> shadow;  // (symbol, pmf index)
  for (int op = 0; op < 20000; ++op) {
    if (shadow.empty() || rng.uniform() < 0.55) {
      int pi = static_cast<int>(rng.below(pmfs.size()));
      std::uint32_t s = static_cast<std::uint32_t>(rng.below(pmfs[pi].alphabet()));
      st.push(s, pmfs[pi]);
      shadow.emplace_back(s, pi);
    } else {
      auto [s, pi] = shadow.back();
      shadow.pop_back();
      CHECK(st.pop(pmfs[pi]) == s);
    }
  }
  while (!shadow.empty()) {
    auto [s, pi] = shadow.back();
    shadow.pop_back();
    REQUIRE(st.pop(pmfs[pi]) == s);
  }
  CHECK(st == AnsState::seeded(2, 555));
}

TEST_CASE("coded length stays within 0.1 percent of the entropy") {
  Rng rng(2024);
  for (int pmf_trial = 0; pmf_trial < 20; ++pmf_trial) {
    std::size_t n = 2 + rng.below(200);
    QuantizedPmf p = QuantizedPmf::quantize(random_pmf(n, rng), 14);

    const double total = p.total();
    const int n_syms = 100000;
    AnsState st = AnsState::seeded(2, 777);
    const std::uint64_t bits0 = st.bit_length();
    double info = 0.0;  // Shannon content of the sequence under the table
    for (int i = 0; i < n_syms; ++i) {
      std::uint32_t draw = static_cast<std::uint32_t>(rng.below(p.total()));
      std::uint32_t sym = p.find(draw);  // exact sample from the quantized table
      info += std::log2(total / p.freqs[sym]);
      st.push(sym, p);
    }
    double coded = static_cast<double>(st.bit_length() - bits0);
    CHECK(coded <= info * 1.001 + 64.0);
  }
}

TEST_CASE("seeded state has the advertised size and is reproducible") {
  AnsState a = AnsState::seeded(7, 42);
  AnsState b = AnsState::seeded(7, 42);
  CHECK(a == b);
  CHECK(a.words().size() == 7);
  CHECK(a.bit_length() >= 7 * 32 + 33);
  CHECK(a.bit_length() <= 7 * 32 + 64);
  CHECK(!(a == AnsState::seeded(7, 43)));
}

TEST_CASE("popping past the stack bottom is an error") {
  QuantizedPmf p = QuantizedPmf::uniform(256, 16);
  AnsState st = AnsState::seeded(1, 9);
  CHECK_THROWS([&] {
    for (int i = 0; i < 100; ++i) st.pop(p);
  }());
}

TEST_CASE("serialization round-trips bit-exactly") {
  Rng rng(5);
  QuantizedPmf p = QuantizedPmf::quantize(random_pmf(64, rng), 12);
  AnsState st = AnsState::seeded(3, 31337);
  for (int i = 0; i < 100; ++i) st.push(static_cast<std::uint32_t>(rng.below(64)), p);
  auto bytes = st.serialize();
  AnsState back = AnsState::deserialize(bytes.data(), bytes.size());
  CHECK(back == st);
}
