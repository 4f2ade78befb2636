#include "raat/common.hpp"

#include <cstring>

namespace raat {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const unsigned char* data, std::size_t size,
                    std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= data[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace

Rng substream(std::uint64_t seed, std::string_view tag, std::uint64_t a,
              std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ fnv1a(reinterpret_cast<const unsigned char*>(tag.data()), tag.size()));
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b + 0x632be59bd9b4e019ULL));
  h = splitmix64(h ^ (c + 0x8cb92ba72f3d8dd7ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return Rng(seq);
}

std::uint64_t checksum(const Vector& values) {
  return fnv1a(reinterpret_cast<const unsigned char*>(values.data()),
               static_cast<std::size_t>(values.size()) * sizeof(double));
}

}  // namespace raat
