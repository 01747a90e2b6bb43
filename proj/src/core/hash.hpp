#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace sdm {

// 64-bit FNV-1a. Used for config fingerprints and checkpoint identities.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string fnv_hex(std::string_view s) {
  Fnv1a h;
  h.update(s);
  return hex64(h.digest());
}

}  // namespace sdm
