#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace oko {

using Vec = std::vector<double>;

// Stable probability primitives. All inputs must be finite; non-finite
// logits raise InvalidArgument.

Vec softmax(std::span<const double> z);
Vec log_softmax(std::span<const double> z);
double log_sum_exp(std::span<const double> z);

// Shannon entropy in nats with 0 log 0 := 0.
double entropy(std::span<const double> p);

// H(p, q). Returns +infinity when some p_i > 0 meets q_i == 0.
double cross_entropy(std::span<const double> p, std::span<const double> q);

double brier_score(int y, std::span<const double> q);

// Index of the largest entry; ties resolve to the lowest index.
int argmax(std::span<const double> v);

bool all_finite(std::span<const double> v);

// Seeded random stream. The engine is std::mt19937_64 (period 2^19937 - 1)
// seeded through std::seed_seq from (seed, stream id); both are fully
// specified by the standard, so draws are identical on every platform.
// Integer and normal variates are derived here rather than through the
// implementation-defined std:: distributions for the same reason.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 bits of precision.
  double uniform01();
  // Uniform integer on [0, n); unbiased (Lemire's multiply-shift with rejection).
  std::size_t uniform_index(std::size_t n);
  double normal();

  // Deterministic child stream, independent of draws already consumed.
  RngStream derive(std::uint64_t child_id) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// 64-bit FNV-1a over bytes; used for stable config hashes and stream ids.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes);
std::uint64_t fnv1a64(const std::string& s);

}  // namespace oko
