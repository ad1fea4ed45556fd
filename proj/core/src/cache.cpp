#include "teach/cache.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include <openssl/evp.h>

#include "teach/error.hpp"

namespace teach {

namespace {

constexpr char kMagic[8] = {'T', 'E', 'A', 'C', 'H', 'C', '0', '1'};

}  // namespace

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
  if (!ctx_ || EVP_DigestInit_ex(static_cast<EVP_MD_CTX*>(ctx_), EVP_sha256(), nullptr) != 1) {
    throw TeachError(ErrorKind::Io, "sha256: OpenSSL digest init failed");
  }
}

Sha256::~Sha256() { EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_)); }

Sha256& Sha256::update(const void* data, std::size_t size) {
  EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data, size);
  return *this;
}

Sha256& Sha256::update(std::string_view bytes) { return update(bytes.data(), bytes.size()); }

Sha256& Sha256::update(const Digest& digest) { return update(digest.data(), digest.size()); }

Digest Sha256::finish() {
  Digest out{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), out.data(), &len);
  return out;
}

Digest sha256(std::string_view bytes) { return Sha256().update(bytes).finish(); }

std::string to_hex(const Digest& digest) {
  static const char* hex = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (unsigned char b : digest) {
    s.push_back(hex[b >> 4]);
    s.push_back(hex[b & 15]);
  }
  return s;
}

std::string_view cache_status_name(CacheStatus status) {
  switch (status) {
    case CacheStatus::Disabled: return "disabled";
    case CacheStatus::Hit: return "hit";
    case CacheStatus::Miss: return "miss";
    case CacheStatus::Corrupt: return "corrupt";
  }
  return "?";
}

ArtifactCache::ArtifactCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path ArtifactCache::entry_path(std::string_view name) const {
  return dir_ / (std::string(name) + ".bin");
}

CacheLookup ArtifactCache::load(std::string_view name, const Digest& key) const {
  std::ifstream in(entry_path(name), std::ios::binary);
  if (!in) return {CacheStatus::Miss, std::nullopt};
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  constexpr std::size_t header = sizeof(kMagic) + 32 + 32 + sizeof(std::uint64_t);
  if (blob.size() < header || std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0) {
    return {CacheStatus::Corrupt, std::nullopt};
  }
  const char* p = blob.data() + sizeof(kMagic);
  if (std::memcmp(p, key.data(), 32) != 0) return {CacheStatus::Miss, std::nullopt};
  Digest stored{};
  std::memcpy(stored.data(), p + 32, 32);
  std::uint64_t size = 0;
  std::memcpy(&size, p + 64, sizeof(size));
  if (blob.size() != header + size) return {CacheStatus::Corrupt, std::nullopt};
  std::string payload = blob.substr(header);
  if (sha256(payload) != stored) return {CacheStatus::Corrupt, std::nullopt};
  return {CacheStatus::Hit, std::move(payload)};
}

void ArtifactCache::store(std::string_view name, const Digest& key,
                          std::string_view payload) const {
  const auto path = entry_path(name);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw TeachError(ErrorKind::Io, "cannot write cache entry " + tmp);
    const Digest check = sha256(payload);
    const std::uint64_t size = payload.size();
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(key.data()), 32);
    out.write(reinterpret_cast<const char*>(check.data()), 32);
    out.write(reinterpret_cast<const char*>(&size), sizeof(size));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw TeachError(ErrorKind::Io, "short write to cache entry " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void append_matrix(std::string& out, const Eigen::MatrixXd& m) {
  const std::uint64_t dims[2] = {static_cast<std::uint64_t>(m.rows()),
                                 static_cast<std::uint64_t>(m.cols())};
  out.append(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.append(reinterpret_cast<const char*>(m.data()),
             static_cast<std::size_t>(m.size()) * sizeof(double));
}

Eigen::MatrixXd read_matrix(std::string_view& in) {
  std::uint64_t dims[2];
  if (in.size() < sizeof(dims)) throw TeachError(ErrorKind::Io, "truncated matrix blob");
  std::memcpy(dims, in.data(), sizeof(dims));
  in.remove_prefix(sizeof(dims));
  const std::size_t bytes = dims[0] * dims[1] * sizeof(double);
  if (in.size() < bytes) throw TeachError(ErrorKind::Io, "truncated matrix blob");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
  std::memcpy(m.data(), in.data(), bytes);
  in.remove_prefix(bytes);
  return m;
}

}  // namespace teach
