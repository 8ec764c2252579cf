#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

namespace sail {

// Little-endian primitives used by every on-disk format in the toolkit.
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, float v);
void write_f64(std::ostream& out, double v);
void write_magic(std::ostream& out, std::string_view magic);

std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
float read_f32(std::istream& in);
double read_f64(std::istream& in);
/// Throws CorruptFileError if fewer than `magic.size()` bytes remain and
/// DataError if the bytes differ.
void expect_magic(std::istream& in, std::string_view magic, std::string_view what);
std::vector<char> read_bytes(std::istream& in, std::size_t count);

// SAIL-EMB: "SAEB", u32 version (1), u32 d, u64 n, then n*d float32 row-major.
inline constexpr std::string_view kEmbMagic = "SAEB";
inline constexpr std::uint32_t kEmbVersion = 1;

struct EmbBlock {
  std::uint32_t d = 0;
  std::uint64_t n = 0;
  std::vector<float> values;  // n * d, row-major
};

void write_emb_block(std::ostream& out, std::uint32_t d, std::uint64_t n, std::span<const float> values);
EmbBlock read_emb_block(std::istream& in);

// Float64 tensor block used inside checkpoints:
// "SAET", u64 rows, u64 cols, then rows*cols float64 row-major.
inline constexpr std::string_view kTensorMagic = "SAET";

struct TensorBlock {
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::vector<double> values;
};

void write_tensor_block(std::ostream& out, std::uint64_t rows, std::uint64_t cols, std::span<const double> values);
TensorBlock read_tensor_block(std::istream& in);

}  // namespace sail
