#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "clickseg/geometry.hpp"

namespace clickseg {

/// Malformed input. line() is 1-based, or 0 when the problem is not tied to a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// File-system failure; the message carries the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// "x y z nx ny nz" per line. Blank lines and lines starting with '#' are skipped.
/// Normals are rescaled to unit length.
PointCloud parse_xyzn(std::string_view text);
std::string format_xyzn(const PointCloud& cloud);

/// ASCII PLY with a vertex element carrying x, y, z, nx, ny, nz (any order,
/// extra properties ignored, trailing elements ignored).
PointCloud parse_ply(std::string_view text);
std::string format_ply(const PointCloud& cloud);

/// Picks PLY when the text starts with "ply", otherwise .xyzn.
PointCloud parse_cloud(std::string_view text);

std::vector<int> parse_labels(std::string_view text);
std::string format_labels(const std::vector<int>& labels);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

PointCloud load_cloud(const std::filesystem::path& path);
void save_cloud(const std::filesystem::path& path, const PointCloud& cloud);
std::vector<int> load_labels(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, const std::vector<int>& labels);

/// 64-bit FNV-1a, used for content addressing and manifest hashes.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

}  // namespace clickseg
