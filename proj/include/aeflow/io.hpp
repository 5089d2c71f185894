#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace aeflow {

/// Shortest round-trip decimal representation (std::to_chars); "nan", "inf", "-inf"
/// for non-finite values. Byte-stable across runs.
std::string format_double(double v);

/// Minimal CSV table with a fixed header; cells are formatted on insertion.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  CsvTable& row() {
    rows_.emplace_back();
    return *this;
  }
  CsvTable& add(double v);
  CsvTable& add(long long v);
  CsvTable& add(const std::string& v);
  CsvTable& add(int v) { return add(static_cast<long long>(v)); }
  CsvTable& add(std::size_t v) { return add(static_cast<long long>(v)); }

  std::size_t size() const { return rows_.size(); }
  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// 64-bit FNV-1a, used for config hashes in manifests.
std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

}  // namespace aeflow
