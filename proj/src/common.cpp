#include "riskcast/common.hpp"

#include <cstdio>
#include <vector>

namespace riskcast {

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw InputError("cannot open file for checksum: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::vector<unsigned char> buf(1 << 16);
  std::size_t got;
  while ((got = std::fread(buf.data(), 1, buf.size(), f)) > 0) {
    for (std::size_t i = 0; i < got; ++i) {
      h ^= buf[i];
      h *= 0x100000001b3ULL;
    }
  }
  std::fclose(f);
  return h;
}

}  // namespace riskcast
