#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace hfshield {

std::uint64_t fnv1a64(const void* data, std::size_t n);
std::string hash_hex(std::uint64_t h);
std::string hash_file(const std::filesystem::path& path);  // throws if unreadable

// write-temp-then-rename so readers never observe a partial file
void atomic_write(const std::filesystem::path& path, const std::string& bytes);

// Stage ledger: artifact path (relative to the run dir) -> content hash.
// Stages append their outputs and verify their inputs against it.
class Manifest {
 public:
  void put(const std::string& name, const std::string& hash) { entries_[name] = hash; }
  bool has(const std::string& name) const { return entries_.count(name) != 0; }
  const std::string& hash(const std::string& name) const;  // throws on missing

  // true when the entry exists and the file's current content matches it
  bool matches(const std::filesystem::path& root, const std::string& name) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

  void save(const std::filesystem::path& path) const;  // atomic, sorted keys
  static Manifest load(const std::filesystem::path& path);
  static Manifest load_or_empty(const std::filesystem::path& path);

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace hfshield
