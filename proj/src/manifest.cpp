#include "hfshield/manifest.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace hfshield {

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("hash_file: cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string bytes = ss.str();
  return hash_hex(fnv1a64(bytes.data(), bytes.size()));
}

void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("atomic_write: cannot open " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("atomic_write: short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

const std::string& Manifest::hash(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("manifest: no entry " + name);
  return it->second;
}

bool Manifest::matches(const std::filesystem::path& root, const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) return false;
  std::filesystem::path p = root / name;
  std::error_code ec;
  if (!std::filesystem::is_regular_file(p, ec)) return false;
  try {
    return hash_file(p) == it->second;
  } catch (const std::exception&) {
    return false;
  }
}

void Manifest::save(const std::filesystem::path& path) const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, h] : entries_) j[name] = h;
  atomic_write(path, j.dump(2) + "\n");
}

Manifest Manifest::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("manifest: cannot read " + path.string());
  nlohmann::json j;
  in >> j;
  Manifest m;
  for (auto it = j.begin(); it != j.end(); ++it) {
    m.put(it.key(), it.value().get<std::string>());
  }
  return m;
}

Manifest Manifest::load_or_empty(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) return Manifest{};
  return load(path);
}

}  // namespace hfshield
