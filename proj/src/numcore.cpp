#include "oko/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "oko/errors.hpp"

namespace oko {

namespace {

void require_finite(std::span<const double> z, const char* what) {
  if (z.empty()) throw InvalidArgument(std::string(what) + ": empty vector");
  if (!all_finite(z)) throw InvalidArgument(std::string(what) + ": non-finite entry");
}

}  // namespace

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double log_sum_exp(std::span<const double> z) {
  require_finite(z, "log_sum_exp");
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

Vec softmax(std::span<const double> z) {
  require_finite(z, "softmax");
  const double m = *std::max_element(z.begin(), z.end());
  Vec out(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - m);
    s += out[i];
  }
  for (double& v : out) v /= s;
  return out;
}

Vec log_softmax(std::span<const double> z) {
  require_finite(z, "log_softmax");
  const auto top = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
  const double m = z[top];
  // Sum everything except the max term so log1p keeps -log(1 + tiny) != 0.
  double rest = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (i != top) rest += std::exp(z[i] - m);
  }
  const double log_s = std::log1p(rest);
  Vec out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = (z[i] - m) - log_s;
  return out;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return std::max(h, 0.0);
}

double cross_entropy(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw InvalidArgument("cross_entropy: length mismatch");
  double h = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    h -= p[i] * std::log(q[i]);
  }
  return h;
}

double brier_score(int y, std::span<const double> q) {
  if (y < 0 || static_cast<std::size_t>(y) >= q.size())
    throw InvalidArgument("brier_score: label out of range");
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double d = q[i] - (static_cast<int>(i) == y ? 1.0 : 0.0);
    s += d * d;
  }
  return s;
}

int argmax(std::span<const double> v) {
  if (v.empty()) throw InvalidArgument("argmax: empty vector");
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_(stream_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream_id),
                    static_cast<std::uint32_t>(stream_id >> 32), 0x6f6b6fu};
  engine_.seed(seq);
}

double RngStream::uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::size_t RngStream::uniform_index(std::size_t n) {
  if (n == 0) throw InvalidArgument("uniform_index: empty range");
  const auto range = static_cast<std::uint64_t>(n);
  unsigned __int128 m = static_cast<unsigned __int128>(engine_()) * range;
  auto low = static_cast<std::uint64_t>(m);
  if (low < range) {
    const std::uint64_t threshold = (0 - range) % range;
    while (low < threshold) {
      m = static_cast<unsigned __int128>(engine_()) * range;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::size_t>(m >> 64);
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  while (u1 <= 0.0) u1 = uniform01();
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(t);
  has_spare_ = true;
  return r * std::cos(t);
}

RngStream RngStream::derive(std::uint64_t child_id) const {
  // splitmix64 finalizer mixes the parent stream id with the child id.
  std::uint64_t z = stream_ + 0x9e3779b97f4a7c15ULL * (child_id + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return RngStream(seed_, z);
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(s.data()),
                                                s.size()));
}

}  // namespace oko
