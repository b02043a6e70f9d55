// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace hierpath {

/// 64-bit FNV-1a content digest used for vocabularies, splits and checkpoints.
class Fnv1a {
 public:
  void update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      hash_ ^= c;
      hash_ *= 0x100000001B3ULL;
    }
  }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xCBF29CE484222325ULL;
};

inline std::uint64_t fnv1a(std::string_view bytes) {
  Fnv1a h;
  h.update(bytes);
  return h.value();
}

std::string digest_hex(std::uint64_t digest);
std::uint64_t parse_digest_hex(std::string_view hex);

}  // namespace hierpath
