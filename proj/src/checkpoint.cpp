#include "flowforge/checkpoint.hpp"

#include <cstring>

#include "flowforge/error.hpp"

namespace flowforge {

Bytes encode_checkpoint(const ParameterSet<float>& params) {
  Bytes out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    detail::put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    detail::put_u32(out, static_cast<std::uint32_t>(p.dims.size()));
    for (int d : p.dims) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) detail::put_f32(out, p.value.data()[i]);
  }
  return out;
}

ParameterSet<float> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  std::size_t at = 0;
  auto need = [&](std::size_t n) {
    if (bytes.size() - at < n) throw Error(ErrorCode::Truncated, "checkpoint ends early");
  };
  auto u32 = [&] {
    need(4);
    const auto v = detail::get_u32(bytes, at);
    at += 4;
    return v;
  };
  need(4);
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw Error(ErrorCode::BadMagic, "not a checkpoint");
  at = 4;
  if (u32() != kCheckpointVersion) throw Error(ErrorCode::BadMagic, "unsupported checkpoint version");
  const std::uint32_t count = u32();
  ParameterSet<float> params;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t len = u32();
    need(len);
    std::string name(reinterpret_cast<const char*>(bytes.data() + at), len);
    at += len;
    const std::uint32_t rank = u32();
    if (rank < 1 || rank > 4) throw Error(ErrorCode::BadDims, "checkpoint rank out of range for " + name);
    std::vector<int> dims;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto d = static_cast<std::int32_t>(u32());
      if (d < 1) throw Error(ErrorCode::BadDims, "non-positive dimension in " + name);
      dims.push_back(d);
    }
    const auto i = params.add(name, dims);
    auto& data = params[i].value.data();
    need(static_cast<std::size_t>(data.size()) * 4);
    for (Eigen::Index j = 0; j < data.size(); ++j) {
      data[j] = detail::get_f32(bytes, at);
      at += 4;
    }
  }
  if (at != bytes.size()) throw Error(ErrorCode::Truncated, "trailing bytes after checkpoint");
  return params;
}

void assign_parameters(ParameterSet<float>& target, const ParameterSet<float>& loaded) {
  for (auto& p : target) {
    const auto i = loaded.find(p.name);
    if (!i) throw Error(ErrorCode::DimMismatch, "checkpoint lacks parameter " + p.name);
    if (loaded[*i].dims != p.dims) throw Error(ErrorCode::DimMismatch, "checkpoint dims differ for " + p.name);
    p.value = loaded[*i].value;
  }
  if (loaded.size() != target.size()) throw Error(ErrorCode::DimMismatch, "checkpoint parameter count differs");
}

}  // namespace flowforge
