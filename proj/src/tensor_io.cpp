#include "rbtk/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace rbtk::io {

static_assert(std::endian::native == std::endian::little,
              "RBTK serialization assumes a little-endian host");

namespace {
constexpr char kMagic[4] = {'R', 'B', 'T', 'K'};

template <typename T>
void write_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_raw(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return is.gcount() == sizeof(T);
}
}  // namespace

size_t record_byte_size(const std::array<uint32_t, 3>& dims) {
  const size_t n = size_t(dims[0]) * dims[1] * dims[2];
  return 4 + 2 + 3 * 4 + n * 2 * sizeof(float);
}

void write_record(std::ostream& os, const TensorRecord& rec) {
  if (rec.values.size() != rec.size())
    throw IoError("tensor record dims do not match payload size");
  os.write(kMagic, 4);
  write_raw(os, kFormatVersion);
  for (uint32_t d : rec.dims) write_raw(os, d);
  os.write(reinterpret_cast<const char*>(rec.values.data()),
           static_cast<std::streamsize>(rec.values.size() * sizeof(std::complex<float>)));
  if (!os) throw IoError("tensor record write failed");
}

void write_record(std::ostream& os, const std::array<uint32_t, 3>& dims,
                  std::span<const cplx> values) {
  TensorRecord rec;
  rec.dims = dims;
  rec.values.resize(values.size());
  for (size_t i = 0; i < values.size(); ++i)
    rec.values[i] = {static_cast<float>(values[i].real()),
                     static_cast<float>(values[i].imag())};
  write_record(os, rec);
}

void write_record_real(std::ostream& os, const std::array<uint32_t, 3>& dims,
                       std::span<const double> values) {
  TensorRecord rec;
  rec.dims = dims;
  rec.values.resize(values.size());
  for (size_t i = 0; i < values.size(); ++i)
    rec.values[i] = {static_cast<float>(values[i]), 0.0f};
  write_record(os, rec);
}

bool try_read_record(std::istream& is, TensorRecord& out) {
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() == 0 && is.eof()) return false;
  if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("bad RBTK record magic");
  uint16_t version = 0;
  if (!read_raw(is, version)) throw IoError("truncated RBTK header");
  if (version != kFormatVersion)
    throw IoError("unsupported RBTK format version " + std::to_string(version));
  for (uint32_t& d : out.dims)
    if (!read_raw(is, d)) throw IoError("truncated RBTK dims");
  const size_t n = out.size();
  out.values.resize(n);
  is.read(reinterpret_cast<char*>(out.values.data()),
          static_cast<std::streamsize>(n * sizeof(std::complex<float>)));
  if (is.gcount() != static_cast<std::streamsize>(n * sizeof(std::complex<float>)))
    throw IoError("truncated RBTK payload");
  return true;
}

TensorRecord read_record(std::istream& is) {
  TensorRecord rec;
  if (!try_read_record(is, rec)) throw IoError("unexpected EOF reading RBTK record");
  return rec;
}

std::string to_hex(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

uint64_t hash_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for hashing: " + path);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (f) {
    f.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace rbtk::io
