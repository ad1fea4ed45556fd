#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace teach {

using Digest = std::array<unsigned char, 32>;

/// Incremental SHA-256.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::string_view bytes);
  Sha256& update(const void* data, std::size_t size);
  Sha256& update(const Digest& digest);
  template <typename T>
  Sha256& update_pod(const T& value) {
    return update(&value, sizeof(T));
  }
  Digest finish();

 private:
  void* ctx_;
};

Digest sha256(std::string_view bytes);
std::string to_hex(const Digest& digest);

enum class CacheStatus { Disabled, Hit, Miss, Corrupt };
std::string_view cache_status_name(CacheStatus status);

struct CacheLookup {
  CacheStatus status = CacheStatus::Disabled;
  std::optional<std::string> payload;
};

/// Content-addressed blobs on disk. Each entry is `<dir>/<name>.bin` holding
/// a magic, the key the payload was computed for, a SHA-256 of the payload
/// and the payload itself. A key mismatch is a miss; a damaged file is
/// reported as Corrupt. Either way the caller recomputes and stores again.
class ArtifactCache {
 public:
  explicit ArtifactCache(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  CacheLookup load(std::string_view name, const Digest& key) const;
  void store(std::string_view name, const Digest& key, std::string_view payload) const;
  std::filesystem::path entry_path(std::string_view name) const;

 private:
  std::filesystem::path dir_;
};

// Little-endian matrix blobs used by cache payloads.
void append_matrix(std::string& out, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(std::string_view& in);

}  // namespace teach
