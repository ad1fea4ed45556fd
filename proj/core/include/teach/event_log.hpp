#pragma once

#include <filesystem>
#include <mutex>
#include <vector>

#include <nlohmann/json.hpp>

namespace teach {

/// Append-only destination for session events, one JSON object per record.
class EventSink {
 public:
  virtual ~EventSink() = default;
  virtual void append(const nlohmann::json& record) = 0;
  /// Called at the end of every round; durable sinks flush to disk here.
  virtual void sync() {}
};

/// `<path>` as JSON lines, fsync'd on every sync().
class JsonlFileSink final : public EventSink {
 public:
  explicit JsonlFileSink(const std::filesystem::path& path);
  ~JsonlFileSink() override;
  JsonlFileSink(const JsonlFileSink&) = delete;
  JsonlFileSink& operator=(const JsonlFileSink&) = delete;

  void append(const nlohmann::json& record) override;
  void sync() override;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

class MemoryEventSink final : public EventSink {
 public:
  void append(const nlohmann::json& record) override;
  std::vector<nlohmann::json> records() const;

 private:
  mutable std::mutex mutex_;
  std::vector<nlohmann::json> records_;
};

std::vector<nlohmann::json> read_event_log(const std::filesystem::path& path);

}  // namespace teach
