#include "holoprop/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace holoprop {

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  for (std::size_t i = 0; i < header.size(); ++i) f << (i ? "," : "") << header[i];
  f << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << row[i];
    f << "\n";
  }
  if (!f) throw IoError("write failed: " + path);
}

void write_pgm(const std::string& path, const std::vector<std::uint8_t>& pixels,
               std::size_t width, std::size_t height) {
  if (pixels.size() != width * height) throw IoError("pgm: pixel count does not match extents");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "P5\n" << width << " " << height << "\n255\n";
  f.write(reinterpret_cast<const char*>(pixels.data()),
          static_cast<std::streamsize>(pixels.size()));
  if (!f) throw IoError("write failed: " + path);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::uint32_t read_be32(std::istream& f, const std::string& path, std::size_t offset) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (!f)
    throw IoError(path + ": truncated at offset " + std::to_string(offset) +
                  " (expected 4 more bytes)");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

void write_be32(std::ostream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

IdxData read_idx(const std::string& path, std::uint32_t expected_magic) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  const std::uint32_t magic = read_be32(f, path, 0);
  if (magic != expected_magic) {
    std::ostringstream os;
    os << path << ": bad magic number 0x" << std::hex << magic << " at offset 0, expected 0x"
       << expected_magic;
    throw IoError(os.str());
  }
  const std::size_t ndim = magic & 0xFF;
  IdxData out;
  std::size_t total = 1;
  for (std::size_t d = 0; d < ndim; ++d) {
    const std::uint32_t e = read_be32(f, path, 4 + 4 * d);
    out.dims.push_back(e);
    total *= e;
  }
  out.payload.resize(total);
  f.read(reinterpret_cast<char*>(out.payload.data()), static_cast<std::streamsize>(total));
  if (static_cast<std::size_t>(f.gcount()) != total)
    throw IoError(path + ": truncated payload at offset " +
                  std::to_string(4 + 4 * ndim + static_cast<std::size_t>(f.gcount())) +
                  ", expected " + std::to_string(total) + " bytes");
  return out;
}

void write_idx(const std::string& path, std::uint32_t magic,
               const std::vector<std::size_t>& dims, const std::vector<std::uint8_t>& payload) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  write_be32(f, magic);
  for (std::size_t d : dims) write_be32(f, static_cast<std::uint32_t>(d));
  f.write(reinterpret_cast<const char*>(payload.data()),
          static_cast<std::streamsize>(payload.size()));
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace holoprop
