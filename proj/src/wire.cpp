#include "bqo/wire.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace bqo::wire {
namespace {

void put_le(std::vector<std::uint8_t>& out, std::uint64_t value, int bytes) {
  for (int k = 0; k < bytes; ++k) out.push_back(static_cast<std::uint8_t>(value >> (8 * k)));
}

std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t offset, int bytes) {
  std::uint64_t value = 0;
  for (int k = 0; k < bytes; ++k) {
    value |= static_cast<std::uint64_t>(in[offset + static_cast<std::size_t>(k)]) << (8 * k);
  }
  return value;
}

bool known_type(std::uint8_t t) { return t >= 1 && t <= 8; }

}  // namespace

Frame make_frame(MessageType type, std::uint32_t rank, std::vector<double> payload) {
  Frame f;
  f.type = type;
  f.rank = rank;
  f.count = payload.size();
  f.payload = std::move(payload);
  return f;
}

Frame make_join(std::uint32_t rank, std::uint32_t cluster_size) {
  Frame f;
  f.type = MessageType::join;
  f.rank = rank;
  f.count = cluster_size;
  return f;
}

std::vector<std::uint8_t> encode(const Frame& frame) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + frame.payload.size() * 8);
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  out.push_back(static_cast<std::uint8_t>(frame.type));
  put_le(out, frame.rank, 4);
  put_le(out, frame.count, 8);
  for (double v : frame.payload) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
  return out;
}

FrameHeader decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) throw std::runtime_error("frame: truncated header");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw std::runtime_error("frame: bad magic");
  }
  if (!known_type(bytes[4])) throw std::runtime_error("frame: unknown message type");
  FrameHeader h;
  h.type = static_cast<MessageType>(bytes[4]);
  h.rank = static_cast<std::uint32_t>(get_le(bytes, 5, 4));
  h.count = get_le(bytes, 9, 8);
  return h;
}

Frame decode(std::span<const std::uint8_t> bytes) {
  const FrameHeader h = decode_header(bytes);
  if (bytes.size() != kHeaderSize + h.payload_bytes()) {
    throw std::runtime_error("frame: payload length does not match count");
  }
  Frame f;
  f.type = h.type;
  f.rank = h.rank;
  f.count = h.count;
  if (h.type != MessageType::join) {
    f.payload.resize(h.count);
    for (std::uint64_t k = 0; k < h.count; ++k) {
      f.payload[k] = std::bit_cast<double>(get_le(bytes, kHeaderSize + 8 * k, 8));
    }
  }
  return f;
}

bool prefer_sparse(std::span<const double> dense) {
  const auto nonzeros =
      static_cast<std::size_t>(std::count_if(dense.begin(), dense.end(), [](double v) { return v != 0.0; }));
  return 4 * nonzeros < dense.size();
}

std::vector<double> encode_sparse(std::span<const double> dense) {
  std::vector<double> out{static_cast<double>(dense.size())};
  for (std::size_t k = 0; k < dense.size(); ++k) {
    if (dense[k] != 0.0) {
      out.push_back(static_cast<double>(k));
      out.push_back(dense[k]);
    }
  }
  return out;
}

SparseView decode_sparse(std::span<const double> payload) {
  if (payload.empty() || payload.size() % 2 != 1) {
    throw std::runtime_error("frame: malformed sparse payload");
  }
  SparseView view;
  view.dimension = static_cast<std::uint64_t>(payload[0]);
  const std::size_t n = (payload.size() - 1) / 2;
  view.indices.reserve(n);
  view.values.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double index = payload[1 + 2 * k];
    if (!(index >= 0.0) || index >= static_cast<double>(view.dimension) || index != std::floor(index)) {
      throw std::runtime_error("frame: invalid sparse index");
    }
    view.indices.push_back(static_cast<std::uint32_t>(index));
    view.values.push_back(payload[2 + 2 * k]);
  }
  return view;
}

}  // namespace bqo::wire
