#include "basinlab/rng.hpp"

#include <vector>

namespace basinlab {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void push64(std::vector<std::uint32_t>& v, std::uint64_t x) {
  v.push_back(static_cast<std::uint32_t>(x));
  v.push_back(static_cast<std::uint32_t>(x >> 32));
}

}  // namespace

Stream::Stream(std::uint64_t master_seed, std::string_view purpose,
               std::initializer_list<std::uint64_t> indices) {
  std::vector<std::uint32_t> material;
  push64(material, master_seed);
  push64(material, fnv1a(purpose));
  for (auto idx : indices) push64(material, idx);
  std::seed_seq seq(material.begin(), material.end());
  engine_.seed(seq);
}

double Stream::uniform() {
  // 53 random bits mapped onto [0, 1).
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Stream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Stream::normal() {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(engine_);
}

int Stream::categorical(std::span<const double> probs) {
  const double u = uniform();
  double acc = 0.0;
  for (std::size_t a = 0; a + 1 < probs.size(); ++a) {
    acc += probs[a];
    if (u < acc) return static_cast<int>(a);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace basinlab
