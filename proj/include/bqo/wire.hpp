#ifndef BQO_WIRE_HPP
#define BQO_WIRE_HPP

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bqo::wire {

// Frame layout (little-endian):
//   magic "BQSV" | type u8 | rank u32 | count u64 | count × binary64
// Join frames carry the cluster size in `count` and no payload.
enum class MessageType : std::uint8_t {
  vector_contribution = 1,
  reduced_vector = 2,
  scalar_contribution = 3,
  reduced_scalars = 4,
  barrier = 5,
  error = 6,
  join = 7,
  sparse_vector_contribution = 8,
};

inline constexpr std::array<std::uint8_t, 4> kMagic{'B', 'Q', 'S', 'V'};
inline constexpr std::size_t kHeaderSize = 17;

struct FrameHeader {
  MessageType type{};
  std::uint32_t rank = 0;
  std::uint64_t count = 0;

  /// Bytes of payload that follow the header.
  std::uint64_t payload_bytes() const { return type == MessageType::join ? 0 : count * 8; }
};

struct Frame {
  MessageType type{};
  std::uint32_t rank = 0;
  std::uint64_t count = 0;
  std::vector<double> payload;
};

Frame make_frame(MessageType type, std::uint32_t rank, std::vector<double> payload);
Frame make_join(std::uint32_t rank, std::uint32_t cluster_size);

std::vector<std::uint8_t> encode(const Frame& frame);

/// Throws std::runtime_error on bad magic or unknown type.
FrameHeader decode_header(std::span<const std::uint8_t> bytes);
Frame decode(std::span<const std::uint8_t> bytes);

/// Sparse contribution payload: [dimension, index0, value0, index1, value1, ...].
std::vector<double> encode_sparse(std::span<const double> dense);
struct SparseView {
  std::uint64_t dimension = 0;
  std::vector<std::uint32_t> indices;
  std::vector<double> values;
};
SparseView decode_sparse(std::span<const double> payload);

/// Sparse encoding is used when nonzeros are fewer than a quarter of the length.
bool prefer_sparse(std::span<const double> dense);

}  // namespace bqo::wire

#endif  // BQO_WIRE_HPP
