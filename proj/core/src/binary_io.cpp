#include "sail/binary_io.hpp"

#include <bit>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "sail/errors.hpp"

namespace sail {
namespace {

template <typename U>
void write_le(std::ostream& out, U v) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(U));
}

template <typename U>
U read_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(U));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(U))) throw CorruptFileError("unexpected end of file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { write_le(out, v); }
void write_f32(std::ostream& out, float v) { write_le(out, std::bit_cast<std::uint32_t>(v)); }
void write_f64(std::ostream& out, double v) { write_le(out, std::bit_cast<std::uint64_t>(v)); }
void write_magic(std::ostream& out, std::string_view magic) { out.write(magic.data(), static_cast<std::streamsize>(magic.size())); }

std::uint32_t read_u32(std::istream& in) { return read_le<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return read_le<std::uint64_t>(in); }
float read_f32(std::istream& in) { return std::bit_cast<float>(read_le<std::uint32_t>(in)); }
double read_f64(std::istream& in) { return std::bit_cast<double>(read_le<std::uint64_t>(in)); }

void expect_magic(std::istream& in, std::string_view magic, std::string_view what) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (in.gcount() != static_cast<std::streamsize>(got.size()))
    throw CorruptFileError(std::string(what) + ": file too short for header");
  if (got != magic) throw DataError(std::string(what) + ": bad magic bytes (expected \"" + std::string(magic) + "\")");
}

std::vector<char> read_bytes(std::istream& in, std::size_t count) {
  std::vector<char> buf(count);
  in.read(buf.data(), static_cast<std::streamsize>(count));
  if (in.gcount() != static_cast<std::streamsize>(count)) throw CorruptFileError("unexpected end of file");
  return buf;
}

void write_emb_block(std::ostream& out, std::uint32_t d, std::uint64_t n, std::span<const float> values) {
  if (values.size() != static_cast<std::size_t>(d) * n) throw DataError("SAIL-EMB: value count does not match n*d");
  write_magic(out, kEmbMagic);
  write_u32(out, kEmbVersion);
  write_u32(out, d);
  write_u64(out, n);
  for (float v : values) write_f32(out, v);
}

EmbBlock read_emb_block(std::istream& in) {
  expect_magic(in, kEmbMagic, "SAIL-EMB");
  const auto version = read_u32(in);
  if (version != kEmbVersion)
    throw VersionError("SAIL-EMB: unsupported format version " + std::to_string(version));
  EmbBlock block;
  block.d = read_u32(in);
  block.n = read_u64(in);
  if (block.d == 0) throw DataError("SAIL-EMB: d must be >= 1");
  const std::uint64_t count = block.n * block.d;
  block.values.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    try {
      block.values[i] = read_f32(in);
    } catch (const CorruptFileError&) {
      throw CorruptFileError("SAIL-EMB: truncated payload (expected " + std::to_string(block.n) + " rows of d=" +
                             std::to_string(block.d) + ")");
    }
  }
  return block;
}

void write_tensor_block(std::ostream& out, std::uint64_t rows, std::uint64_t cols, std::span<const double> values) {
  if (values.size() != rows * cols) throw DataError("tensor block: value count does not match shape");
  write_magic(out, kTensorMagic);
  write_u64(out, rows);
  write_u64(out, cols);
  for (double v : values) write_f64(out, v);
}

TensorBlock read_tensor_block(std::istream& in) {
  expect_magic(in, kTensorMagic, "tensor block");
  TensorBlock block;
  block.rows = read_u64(in);
  block.cols = read_u64(in);
  const std::uint64_t count = block.rows * block.cols;
  if (block.cols != 0 && count / block.cols != block.rows) throw CorruptFileError("tensor block: shape overflow");
  block.values.resize(count);
  for (auto& v : block.values) v = read_f64(in);
  return block;
}

}  // namespace sail
