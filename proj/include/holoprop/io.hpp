#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "holoprop/tensor.hpp"

namespace holoprop {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// CSV with a header row; every cell already formatted.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// 8-bit binary PGM (P5).
void write_pgm(const std::string& path, const std::vector<std::uint8_t>& pixels,
               std::size_t width, std::size_t height);

std::string format_double(double v);

// IDX (big-endian magic, dimension header, unsigned byte payload).
// Parse errors name the byte offset of the problem.
struct IdxData {
  std::vector<std::size_t> dims;
  std::vector<std::uint8_t> payload;
};
IdxData read_idx(const std::string& path, std::uint32_t expected_magic);
void write_idx(const std::string& path, std::uint32_t magic,
               const std::vector<std::size_t>& dims, const std::vector<std::uint8_t>& payload);

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

}  // namespace holoprop
