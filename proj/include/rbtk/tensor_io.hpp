#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rbtk/common.hpp"

namespace rbtk::io {

// Project binary tensor format, one record per tensor:
//   magic "RBTK", version u16, dims u32 x 3, then dims-product entries as
//   little-endian interleaved real/imag 32-bit floats. Rank-3 data is stored
//   row-major in dim order (so radar frames are antenna-major, sample-next,
//   chirp-minor). Lower-rank tensors pad leading dims with 1.
inline constexpr uint16_t kFormatVersion = 1;

struct TensorRecord {
  std::array<uint32_t, 3> dims{1, 1, 1};
  std::vector<std::complex<float>> values;

  size_t size() const {
    return size_t(dims[0]) * size_t(dims[1]) * size_t(dims[2]);
  }
};

/// Byte size of one record with the given dims (header + payload).
size_t record_byte_size(const std::array<uint32_t, 3>& dims);

void write_record(std::ostream& os, const TensorRecord& rec);
void write_record(std::ostream& os, const std::array<uint32_t, 3>& dims,
                  std::span<const cplx> values);
/// Real-valued payload convenience (imag written as 0).
void write_record_real(std::ostream& os, const std::array<uint32_t, 3>& dims,
                       std::span<const double> values);

/// Throws IoError on malformed input or EOF mid-record.
TensorRecord read_record(std::istream& is);
/// Returns false on clean EOF at a record boundary.
bool try_read_record(std::istream& is, TensorRecord& out);

std::string to_hex(uint64_t v);

/// FNV-1a over a whole file, for manifest content hashes.
uint64_t hash_file(const std::string& path);

}  // namespace rbtk::io
