#include "fastprio/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fastprio/errors.hpp"

namespace fastprio {
namespace {

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

template <typename U>
U get_le(std::string_view bytes, std::size_t& pos, const std::string& origin) {
  if (pos + sizeof(U) > bytes.size()) throw FormatError(origin + ": truncated tensor file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  }
  pos += sizeof(U);
  return v;
}

}  // namespace

std::string encode_tensor(const Tensor& t) {
  if (t.empty()) throw EmptyInputError("cannot serialize an empty tensor");
  std::string out;
  out.reserve(kTensorMagic.size() + 4 + 8 * t.rank() + 4 * t.size());
  out.append(kTensorMagic);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
  for (float v : t.values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_tensor(std::string_view bytes, const std::string& origin) {
  if (bytes.size() < kTensorMagic.size() || bytes.substr(0, kTensorMagic.size()) != kTensorMagic) {
    throw FormatError(origin + ": bad tensor magic (expected FPTENSR1)");
  }
  std::size_t pos = kTensorMagic.size();
  const auto rank = get_le<std::uint32_t>(bytes, pos, origin);
  if (rank == 0 || rank > 16) throw FormatError(origin + ": implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  std::size_t count = 1;
  for (auto& d : shape) {
    d = get_le<std::uint64_t>(bytes, pos, origin);
    if (d == 0) throw FormatError(origin + ": zero-sized tensor dimension");
    count *= d;
  }
  if (bytes.size() - pos != 4 * count) {
    throw FormatError(origin + ": payload holds " + std::to_string(bytes.size() - pos) +
                      " bytes, shape " + shape_to_string(shape) + " needs " +
                      std::to_string(4 * count));
  }
  std::vector<float> data(count);
  for (auto& v : data) v = std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos, origin));
  return Tensor(std::move(shape), std::move(data));
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  write_file_bytes(path, encode_tensor(t));
}

Tensor read_tensor(const std::filesystem::path& path) {
  return decode_tensor(read_file_bytes(path), path.string());
}

}  // namespace fastprio
