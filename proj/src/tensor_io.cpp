#include "gkcmn/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace gkcmn {

namespace {

constexpr char kMagic[4] = {'G', 'K', 'T', 'N'};

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

template <typename U>
U get_le(std::span<const char> bytes, std::size_t pos) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  }
  return value;
}

}  // namespace

std::string encode_gktn(const Tensor& tensor) {
  if (tensor.empty()) throw ShapeError("cannot serialize an empty tensor");
  if (tensor.rank() > 255) throw ShapeError("GKTN supports at most 255 axes");
  std::string out(kMagic, sizeof(kMagic));
  out.push_back(static_cast<char>(kGktnVersion));
  out.push_back(static_cast<char>(tensor.rank()));
  for (auto e : tensor.shape()) put_le<std::uint64_t>(out, e);
  out.reserve(out.size() + 4 * tensor.size());
  for (float v : tensor.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_gktn(std::span<const char> bytes) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a GKTN stream (bad magic)");
  }
  if (static_cast<std::uint8_t>(bytes[4]) != kGktnVersion) {
    throw FormatError("unsupported GKTN version " + std::to_string(static_cast<unsigned char>(bytes[4])));
  }
  const std::size_t ndim = static_cast<unsigned char>(bytes[5]);
  if (ndim == 0) throw FormatError("GKTN stream declares zero axes");
  std::size_t pos = 6;
  if (bytes.size() < pos + 8 * ndim) throw FormatError("GKTN header truncated");
  Shape shape(ndim);
  for (auto& e : shape) {
    const auto extent = get_le<std::uint64_t>(bytes, pos);
    if (extent == 0) throw FormatError("GKTN extent of zero");
    e = static_cast<std::size_t>(extent);
    pos += 8;
  }
  const std::size_t count = shape_volume(shape);
  if (bytes.size() != pos + 4 * count) {
    throw FormatError("GKTN payload holds " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                      std::to_string(4 * count));
  }
  std::vector<float> data(count);
  for (auto& v : data) {
    v = std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos));
    pos += 4;
  }
  return Tensor(std::move(shape), std::move(data));
}

void write_gktn(const std::filesystem::path& path, const Tensor& tensor) {
  const std::string bytes = encode_gktn(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Tensor read_gktn(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_gktn(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace gkcmn
