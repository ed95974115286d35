#pragma once

#include <cstdint>
#include <random>

#include "normal.hpp"

namespace icnlm {

//! Seeded random source producing identical streams on every platform.
//! Uniforms take the top 53 bits of mt19937_64 output; normals go through
//! the inverse CDF so no distribution-object implementation details leak in.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  //! Uniform draw strictly inside (0, 1).
  double uniform() { return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53; }

  //! Standard normal draw.
  double gaussian() { return norm_quantile(uniform()); }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace icnlm
