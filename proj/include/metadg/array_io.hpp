#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace metadg {

/// Row-major array of any rank read from or written to disk.
struct DenseArray {
  std::vector<std::int64_t> shape;
  std::vector<double> values;
};

/// NumPy .npy (v1-v3 header; dtypes <f4 <f8 <i2 <i4 <i8 |u1, C order).
DenseArray parse_npy(std::span<const unsigned char> bytes);
DenseArray read_npy(const std::filesystem::path& path);
/// Writes little-endian float64 .npy.
void write_npy(const std::filesystem::path& path, const DenseArray& array);

/// NumPy .npz (stored or deflated members). Picks `key` when given, else the
/// member named "data", else the first member.
DenseArray read_npz(const std::filesystem::path& path, const std::string& key = "");

/// Headerless CSV of numbers; empty cells and "nan" read as NaN.
DenseArray read_csv_matrix(const std::filesystem::path& path);

/// Dispatches on extension: .npy, .npz, .csv/.txt.
DenseArray read_dense_array(const std::filesystem::path& path);

}  // namespace metadg
