#include "teach/event_log.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>

#include "teach/error.hpp"

namespace teach {

JsonlFileSink::JsonlFileSink(const std::filesystem::path& path) : path_(path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) {
    throw TeachError(ErrorKind::Io,
                     "cannot open event log " + path.string() + ": " + std::strerror(errno));
  }
}

JsonlFileSink::~JsonlFileSink() {
  if (fd_ >= 0) ::close(fd_);
}

void JsonlFileSink::append(const nlohmann::json& record) {
  const std::string line = record.dump() + '\n';
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(fd_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TeachError(ErrorKind::Io, "event log write failed: " + std::string(std::strerror(errno)));
    }
    written += static_cast<std::size_t>(n);
  }
}

void JsonlFileSink::sync() {
  if (::fsync(fd_) != 0) {
    throw TeachError(ErrorKind::Io, "event log fsync failed: " + std::string(std::strerror(errno)));
  }
}

void MemoryEventSink::append(const nlohmann::json& record) {
  std::lock_guard lock(mutex_);
  records_.push_back(record);
}

std::vector<nlohmann::json> MemoryEventSink::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::vector<nlohmann::json> read_event_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TeachError(ErrorKind::Io, "cannot open event log " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw TeachError(ErrorKind::InvalidInput, path.string() + ":" + std::to_string(line_no) +
                                                    ": bad event record: " + e.what());
    }
  }
  return out;
}

}  // namespace teach
