#pragma once

#include <cstdint>
#include <limits>
#include <random>

#include <Eigen/Core>

namespace follmer {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based bit generator: output k is mix64(key + k * golden).
/// Satisfies UniformRandomBitGenerator, so it plugs into <random> distributions.
class CounterEngine {
 public:
  using result_type = std::uint64_t;

  explicit CounterEngine(std::uint64_t key) noexcept : state_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

 private:
  std::uint64_t state_;
};

/// A seeded family of independent substreams.
///
/// Every random draw in the library is addressed by (stream, path, step):
/// `engine(path, step)` always yields the same bits, regardless of the order
/// in which paths are processed or how many worker threads are used.
/// `fork(tag)` derives a domain-separated child stream, so unrelated
/// consumers sharing one seed never reuse bits.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed = 0) noexcept
      : key_(mix64(seed ^ 0x6a09e667f3bcc909ULL)) {}

  [[nodiscard]] RandomStream fork(std::uint64_t tag) const noexcept {
    RandomStream child;
    child.key_ = mix64(key_ ^ mix64(tag + 0x3c6ef372fe94f82bULL));
    return child;
  }

  [[nodiscard]] CounterEngine engine(std::uint64_t path, std::uint64_t step = 0) const noexcept {
    return CounterEngine(mix64(mix64(key_ ^ mix64(path)) + step));
  }

  [[nodiscard]] std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
};

/// Fills `out` with i.i.d. N(0,1) draws from `engine`.
template <typename Derived>
void fill_standard_normal(CounterEngine& engine, Eigen::MatrixBase<Derived>& out) {
  using Scalar = typename Derived::Scalar;
  std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));
  for (Eigen::Index i = 0; i < out.size(); ++i) out.derived().coeffRef(i) = normal(engine);
}

/// d i.i.d. N(0,1) draws addressed by (path, step).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> standard_normal(const RandomStream& stream,
                                                         std::uint64_t path, std::uint64_t step,
                                                         Eigen::Index d) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> z(d);
  CounterEngine engine = stream.engine(path, step);
  fill_standard_normal(engine, z);
  return z;
}

template <typename Scalar>
Scalar uniform01(CounterEngine& engine) {
  return std::generate_canonical<Scalar, std::numeric_limits<Scalar>::digits>(engine);
}

}  // namespace follmer
