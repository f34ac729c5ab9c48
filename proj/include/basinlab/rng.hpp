#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>

namespace basinlab {

// A seeded random stream whose identity is (master seed, purpose tag,
// indices). Two streams with the same identity produce identical draws, so
// results do not depend on which worker runs which job.
class Stream {
 public:
  Stream(std::uint64_t master_seed, std::string_view purpose,
         std::initializer_list<std::uint64_t> indices = {});

  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  double normal();
  int categorical(std::span<const double> probs);
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace basinlab
