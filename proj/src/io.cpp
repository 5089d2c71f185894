#include "aeflow/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <system_error>

#include "aeflow/common.hpp"

namespace aeflow {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

CsvTable& CsvTable::add(double v) {
  rows_.back().push_back(format_double(v));
  return *this;
}

CsvTable& CsvTable::add(long long v) {
  rows_.back().push_back(std::to_string(v));
  return *this;
}

CsvTable& CsvTable::add(const std::string& v) {
  rows_.back().push_back(v);
  return *this;
}

std::string CsvTable::str() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < header_.size(); ++i) out << (i ? "," : "") << header_[i];
  out << '\n';
  for (const auto& r : rows_) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
    out << '\n';
  }
  return out.str();
}

void CsvTable::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << str();
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace aeflow
