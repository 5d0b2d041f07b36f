#ifndef BQO_HASHING_HPP
#define BQO_HASHING_HPP

#include <cstdint>
#include <string>
#include <string_view>

namespace bqo {

inline constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;
inline constexpr char kKeySeparator = '\x1f';

inline constexpr int kMinHashBits = 1;
inline constexpr int kMaxHashBits = 30;

/// FNV-1a 64-bit over raw bytes.
constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t state = kFnvOffsetBasis) {
  for (char c : bytes) {
    state ^= static_cast<std::uint8_t>(c);
    state *= kFnvPrime;
  }
  return state;
}

/// Identity of one feature. Encoded as `ns 0x1F payload` before hashing.
struct FeatureKey {
  std::string ns;
  std::string payload;

  std::string encode() const;
};

/// Low `bits` bits of FNV-1a 64 of the encoded key.
std::uint32_t hash_feature(const FeatureKey& key, int bits);
std::uint32_t hash_bytes(std::string_view encoded, int bits);

/// Payload for a label-conjoined feature: `label 0x1F feature`.
std::string conjoin(std::string_view label, std::string_view feature);

}  // namespace bqo

#endif  // BQO_HASHING_HPP
