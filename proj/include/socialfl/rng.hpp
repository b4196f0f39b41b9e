#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

#include "socialfl/codec.hpp"
#include "socialfl/hash.hpp"

namespace socialfl {

// Every random draw in the simulator comes from a stream derived from the
// master seed plus a module tag, an entity id, and a round index.  Streams
// are therefore independent of iteration order and stable across runs.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t entity = 0,
                                 std::uint64_t round = 0) {
  ByteWriter w;
  w.put_u64(master);
  w.put_string(tag);
  w.put_u64(entity);
  w.put_u64(round);
  Digest d = sha256(w.bytes());
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(d.bytes[i]) << (8 * i);
  return v;
}

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    // Rejection sampling removes modulo bias; n is tiny relative to 2^64 so
    // the loop almost never iterates.
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                          std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  // Standard normal via Box-Muller; one spare value cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double gaussian(double mean, double stddev) {
    return mean + stddev * gaussian();
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline RngStream derive_stream(std::uint64_t master, std::string_view tag,
                               std::uint64_t entity = 0,
                               std::uint64_t round = 0) {
  return RngStream(derive_seed(master, tag, entity, round));
}

}  // namespace socialfl
