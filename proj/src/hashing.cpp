#include "bqo/hashing.hpp"

#include <stdexcept>

namespace bqo {

std::string FeatureKey::encode() const {
  std::string out;
  out.reserve(ns.size() + 1 + payload.size());
  out.append(ns);
  out.push_back(kKeySeparator);
  out.append(payload);
  return out;
}

std::uint32_t hash_bytes(std::string_view encoded, int bits) {
  if (bits < kMinHashBits || bits > kMaxHashBits) {
    throw std::out_of_range("hash bits must lie in [1, 30]");
  }
  const std::uint64_t mask = (std::uint64_t{1} << bits) - 1;
  return static_cast<std::uint32_t>(fnv1a64(encoded) & mask);
}

std::uint32_t hash_feature(const FeatureKey& key, int bits) {
  return hash_bytes(key.encode(), bits);
}

std::string conjoin(std::string_view label, std::string_view feature) {
  std::string out;
  out.reserve(label.size() + 1 + feature.size());
  out.append(label);
  out.push_back(kKeySeparator);
  out.append(feature);
  return out;
}

}  // namespace bqo
