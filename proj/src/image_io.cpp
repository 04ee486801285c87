#include "flowforge/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

namespace flowforge {

namespace {

std::uint8_t quantize(float v) {
  const float clamped = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string token;
  while (pos < bytes.size() && !std::isspace(bytes[pos])) token.push_back(static_cast<char>(bytes[pos++]));
  if (token.empty()) throw Error(ErrorCode::Truncated, "PNM header ended early");
  return token;
}

int parse_positive(const std::string& s) {
  try {
    const int v = std::stoi(s);
    if (v <= 0) throw Error(ErrorCode::BadDims, "PNM dimensions must be positive");
    return v;
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::BadDims, "malformed PNM header field '" + s + "'");
  }
}

}  // namespace

Bytes encode_pnm(const Gridf& image) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw Error(ErrorCode::BadDims, "PNM export supports 1 or 3 channels");
  }
  const std::string header = std::string(image.channels() == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
  Bytes out(header.begin(), header.end());
  out.reserve(header.size() + static_cast<std::size_t>(image.size()));
  for (Eigen::Index i = 0; i < image.size(); ++i) out.push_back(quantize(image.data()[i]));
  return out;
}

Gridf decode_pnm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  const std::string magic = next_token(bytes, pos);
  int channels = 0;
  if (magic == "P6") {
    channels = 3;
  } else if (magic == "P5") {
    channels = 1;
  } else {
    throw Error(ErrorCode::BadMagic, "expected a binary PPM (P6) or PGM (P5)");
  }
  const int width = parse_positive(next_token(bytes, pos));
  const int height = parse_positive(next_token(bytes, pos));
  if (next_token(bytes, pos) != "255") throw Error(ErrorCode::BadDims, "only 8-bit PNM is supported");
  ++pos;  // single whitespace byte before the raster
  const std::size_t count = static_cast<std::size_t>(width) * height * channels;
  if (bytes.size() < pos || bytes.size() - pos != count) throw Error(ErrorCode::Truncated, "PNM raster length mismatch");
  Gridf image(height, width, channels);
  for (std::size_t i = 0; i < count; ++i) {
    image.data()[static_cast<Eigen::Index>(i)] = static_cast<float>(bytes[pos + i]) / 255.0f;
  }
  return image;
}

void save_pnm(const std::filesystem::path& path, const Gridf& image) { write_file(path, encode_pnm(image)); }

Gridf load_pnm(const std::filesystem::path& path) { return decode_pnm(read_file(path)); }

}  // namespace flowforge
