#include "reslm/common.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace reslm {

std::string to_hex(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

void BinaryWriter::write_bytes(const void* data, size_t len) {
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
  if (!out_) throw IoError("binary write failed");
}

void BinaryWriter::write_u32(uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(b, 4);
}

void BinaryWriter::write_u64(uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(b, 8);
}

void BinaryWriter::write_f64(double v) {
  static_assert(sizeof(double) == 8);
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(bits);
}

void BinaryWriter::write_string(const std::string& s) {
  write_u64(s.size());
  write_bytes(s.data(), s.size());
}

void BinaryReader::read_bytes(void* data, size_t len) {
  in_.read(static_cast<char*>(data), static_cast<std::streamsize>(len));
  if (static_cast<size_t>(in_.gcount()) != len)
    throw IoError("binary read failed: unexpected end of file");
}

uint32_t BinaryReader::read_u32() {
  unsigned char b[4];
  read_bytes(b, 4);
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

uint64_t BinaryReader::read_u64() {
  unsigned char b[8];
  read_bytes(b, 8);
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double BinaryReader::read_f64() {
  uint64_t bits = read_u64();
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string BinaryReader::read_string() {
  uint64_t len = read_u64();
  std::string s(len, '\0');
  if (len > 0) read_bytes(s.data(), len);
  return s;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace reslm
