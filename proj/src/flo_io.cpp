#include "flowforge/flo_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace flowforge {

namespace detail {

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFFu));
}

void put_f32(Bytes& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  return v;
}

float get_f32(std::span<const std::uint8_t> in, std::size_t offset) {
  return std::bit_cast<float>(get_u32(in, offset));
}

}  // namespace detail

FlowFieldf read_flo(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw Error(ErrorCode::Truncated, ".flo header shorter than 12 bytes");
  if (detail::get_f32(bytes, 0) != kFloMagic) throw Error(ErrorCode::BadMagic, ".flo magic tag mismatch");
  const auto width = static_cast<std::int32_t>(detail::get_u32(bytes, 4));
  const auto height = static_cast<std::int32_t>(detail::get_u32(bytes, 8));
  if (width <= 0 || height <= 0) throw Error(ErrorCode::BadDims, ".flo dimensions must be positive");
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 2;
  if (bytes.size() != 12 + 4 * count) {
    throw Error(ErrorCode::Truncated, ".flo payload length does not match its header");
  }
  FlowFieldf flow(height, width);
  auto& data = flow.grid().data();
  for (std::size_t i = 0; i < count; ++i) data[static_cast<Eigen::Index>(i)] = detail::get_f32(bytes, 12 + 4 * i);
  return flow;
}

Bytes write_flo(const FlowFieldf& flow) {
  Bytes out;
  const auto& data = flow.grid().data();
  out.reserve(12 + 4 * static_cast<std::size_t>(data.size()));
  detail::put_f32(out, kFloMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(flow.width()));
  detail::put_u32(out, static_cast<std::uint32_t>(flow.height()));
  for (Eigen::Index i = 0; i < data.size(); ++i) detail::put_f32(out, data[i]);
  return out;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

FlowFieldf load_flo(const std::filesystem::path& path) { return read_flo(read_file(path)); }

void save_flo(const std::filesystem::path& path, const FlowFieldf& flow) { write_file(path, write_flo(flow)); }

}  // namespace flowforge
