#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace holoprop {

// Counter-based random streams: every draw is a pure function of the seed and
// a handful of stream coordinates (sample, phase, step, layer, unit). Settles
// running in parallel therefore see identical noise for any worker count.
namespace rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t id : ids) h = splitmix64(h ^ (id + 0x9e3779b97f4a7c15ULL + (h << 6)));
  return h;
}

inline double to_unit(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;  // [0, 1)
}

inline double uniform(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
  return to_unit(mix(seed, ids));
}

inline double gaussian(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
  std::uint64_t h = mix(seed, ids);
  double u1 = to_unit(h);
  double u2 = to_unit(splitmix64(h ^ 0xd1b54a32d192ed03ULL));
  return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace rng
}  // namespace holoprop
