#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "teach/pipeline.hpp"
#include "teach/session.hpp"

namespace teach {

enum class ApiErrorCode { BadRequest, NotFound, WrongPhase, Conflict, Internal };
std::string_view api_error_name(ApiErrorCode code);
int http_status(ApiErrorCode code);
ApiErrorCode api_error_for(ErrorKind kind);

struct ServiceOptions {
  /// Event logs go to `<sessions_dir>/<id>.jsonl`; empty keeps no logs.
  std::filesystem::path sessions_dir;
  const ArtifactCache* cache = nullptr;
  std::function<std::int64_t()> clock;
  /// Added to every artifact the service emits (summary endpoints).
  std::string version;
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::map<std::string, std::string> headers;

  nlohmann::json json() const { return nlohmann::json::parse(body); }
};

/// Transport-independent request handling for the teaching API. Sessions
/// are single-writer: each one has its own mutex, distinct sessions run in
/// parallel.
///
///   POST /api/sessions                 create; 201
///   GET  /api/sessions                 list (dashboard)
///   GET  /api/sessions/{id}/next       pending item, issued if needed
///   POST /api/sessions/{id}/answer     teaching: {true_class}; testing: {}
///   GET  /api/sessions/{id}/result     only when done
///   GET  /api/datasets
///   GET  /images/{dataset}/{item_id}
class TeachingService {
 public:
  TeachingService(std::shared_ptr<DatasetRegistry> datasets, ServiceOptions options = {});

  HttpResponse handle(std::string_view method, std::string_view path, std::string_view body);

  /// Rebuilds every session found in sessions_dir from its event log.
  /// Returns the number restored; logs that fail to replay are skipped and
  /// reported through `on_error`.
  int restore_sessions(const std::function<void(const std::string&)>& on_error = {});

  const DatasetRegistry& datasets() const { return *datasets_; }
  std::size_t session_count() const;

 private:
  struct Entry {
    std::mutex mutex;
    std::unique_ptr<Session> session;
  };

  HttpResponse create(const nlohmann::json& body);
  HttpResponse list_sessions() const;
  HttpResponse next(const std::string& id);
  HttpResponse answer(const std::string& id, const nlohmann::json& body);
  HttpResponse result(const std::string& id);
  HttpResponse list_datasets() const;
  HttpResponse image(const std::string& dataset, const std::string& item_id) const;

  std::shared_ptr<Entry> find(const std::string& id) const;
  nlohmann::json shown_json(const Session& session, const ShownItem& shown) const;

  std::shared_ptr<DatasetRegistry> datasets_;
  ServiceOptions options_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

HttpResponse error_response(ApiErrorCode code, const std::string& message);

/// SVG glyph of an item's feature vector, for datasets without images.
std::string render_feature_glyph(const PreparedDataset& dataset, ItemIndex item);

/// Content type from a file extension; application/octet-stream otherwise.
std::string content_type_for(const std::filesystem::path& path);

/// Blocking HTTP server around a TeachingService.
class HttpServer {
 public:
  explicit HttpServer(TeachingService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Serves files under `dir` at "/" (the web client build).
  void mount_static(const std::filesystem::path& dir);
  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Runs until stop().
  void run();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// "host:port" from TEACH_LISTEN, falling back to `fallback`.
std::pair<std::string, int> listen_address(const std::string& fallback = "127.0.0.1:8080");
std::pair<std::string, int> parse_listen_address(const std::string& text);

}  // namespace teach
