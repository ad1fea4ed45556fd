#include "teach/service.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include <httplib.h>

namespace teach {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= path.size()) {
    const std::size_t end = path.find('/', start);
    const std::string_view piece =
        path.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    if (!piece.empty()) parts.emplace_back(piece);
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return parts;
}

std::string url_encode(const std::string& s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char ch : s) {
    if (std::isalnum(ch) || ch == '-' || ch == '_' || ch == '.' || ch == '~') {
      out.push_back(static_cast<char>(ch));
    } else {
      out.push_back('%');
      out.push_back(hex[ch >> 4]);
      out.push_back(hex[ch & 15]);
    }
  }
  return out;
}

HttpResponse json_response(int status, const json& body) {
  HttpResponse r;
  r.status = status;
  r.body = body.dump();
  return r;
}

std::uint64_t random_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

template <typename T>
T field(const json& body, const char* name) {
  if (!body.contains(name)) {
    throw TeachError(ErrorKind::InvalidInput, std::string("missing field '") + name + "'");
  }
  try {
    return body.at(name).get<T>();
  } catch (const json::exception&) {
    throw TeachError(ErrorKind::InvalidInput, std::string("field '") + name + "' has the wrong type");
  }
}

}  // namespace

std::string_view api_error_name(ApiErrorCode code) {
  switch (code) {
    case ApiErrorCode::BadRequest: return "bad_request";
    case ApiErrorCode::NotFound: return "not_found";
    case ApiErrorCode::WrongPhase: return "wrong_phase";
    case ApiErrorCode::Conflict: return "conflict";
    case ApiErrorCode::Internal: return "internal";
  }
  return "internal";
}

int http_status(ApiErrorCode code) {
  switch (code) {
    case ApiErrorCode::BadRequest: return 400;
    case ApiErrorCode::NotFound: return 404;
    case ApiErrorCode::WrongPhase: return 409;
    case ApiErrorCode::Conflict: return 409;
    case ApiErrorCode::Internal: return 500;
  }
  return 500;
}

ApiErrorCode api_error_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return ApiErrorCode::BadRequest;
    case ErrorKind::NotFound: return ApiErrorCode::NotFound;
    case ErrorKind::WrongPhase: return ApiErrorCode::WrongPhase;
    case ErrorKind::Conflict: return ApiErrorCode::Conflict;
    case ErrorKind::Numerical:
    case ErrorKind::Io: return ApiErrorCode::Internal;
  }
  return ApiErrorCode::Internal;
}

HttpResponse error_response(ApiErrorCode code, const std::string& message) {
  return json_response(http_status(code),
                       {{"error", {{"code", api_error_name(code)}, {"message", message}}}});
}

std::string content_type_for(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  if (ext == ".bmp") return "image/bmp";
  if (ext == ".svg") return "image/svg+xml";
  return "application/octet-stream";
}

std::string render_feature_glyph(const PreparedDataset& dataset, ItemIndex item) {
  const FeatureMatrix& x = dataset.dataset.features;
  const int cols = static_cast<int>(std::min<Eigen::Index>(x.cols(), 16));
  const Eigen::RowVectorXd lo = x.leftCols(cols).colwise().minCoeff();
  const Eigen::RowVectorXd hi = x.leftCols(cols).colwise().maxCoeff();
  const double bar = 240.0 / std::max(cols, 1);
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"256\" height=\"256\" "
         "viewBox=\"0 0 256 256\"><rect width=\"256\" height=\"256\" fill=\"#f4f4f4\"/>";
  for (int d = 0; d < cols; ++d) {
    const double range = hi(d) - lo(d);
    const double v = range > 0.0 ? (x(item, d) - lo(d)) / range : 0.5;
    const double h = 8.0 + 232.0 * v;
    svg << "<rect x=\"" << 8.0 + d * bar << "\" y=\"" << 248.0 - h << "\" width=\""
        << bar * 0.8 << "\" height=\"" << h << "\" fill=\"hsl(" << (d * 360) / std::max(cols, 1)
        << ",55%,50%)\"/>";
  }
  svg << "</svg>";
  return svg.str();
}

// ---------------------------------------------------------------------------

TeachingService::TeachingService(std::shared_ptr<DatasetRegistry> datasets, ServiceOptions options)
    : datasets_(std::move(datasets)), options_(std::move(options)) {
  if (!datasets_) throw TeachError(ErrorKind::InvalidInput, "service: null dataset registry");
}

std::size_t TeachingService::session_count() const {
  std::shared_lock lock(sessions_mutex_);
  return sessions_.size();
}

HttpResponse TeachingService::handle(std::string_view method, std::string_view path,
                                     std::string_view body) {
  try {
    const auto parts = split_path(path);
    auto parse_body = [&]() -> json {
      if (body.empty()) return json::object();
      json doc = json::parse(body, nullptr, false);
      if (doc.is_discarded() || !doc.is_object()) {
        throw TeachError(ErrorKind::InvalidInput, "request body must be a JSON object");
      }
      return doc;
    };
    const bool get = method == "GET";
    const bool post = method == "POST";

    if (parts.size() >= 2 && parts[0] == "api" && parts[1] == "sessions") {
      if (parts.size() == 2 && post) return create(parse_body());
      if (parts.size() == 2 && get) return list_sessions();
      if (parts.size() == 4 && parts[3] == "next" && get) return next(parts[2]);
      if (parts.size() == 4 && parts[3] == "answer" && post) return answer(parts[2], parse_body());
      if (parts.size() == 4 && parts[3] == "result" && get) return result(parts[2]);
    }
    if (parts.size() == 2 && parts[0] == "api" && parts[1] == "datasets" && get) {
      return list_datasets();
    }
    if (parts.size() == 3 && parts[0] == "images" && get) return image(parts[1], parts[2]);
    return error_response(ApiErrorCode::NotFound,
                          "no route for " + std::string(method) + " " + std::string(path));
  } catch (const TeachError& e) {
    return error_response(api_error_for(e.kind()), e.what());
  } catch (const std::exception& e) {
    return error_response(ApiErrorCode::Internal, e.what());
  }
}

std::shared_ptr<TeachingService::Entry> TeachingService::find(const std::string& id) const {
  std::shared_lock lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw TeachError(ErrorKind::NotFound, "unknown session '" + id + "'");
  return it->second;
}

HttpResponse TeachingService::create(const json& body) {
  json doc = body;
  if (!doc.contains("seed")) doc["seed"] = random_seed();
  SessionConfig config = config_from_json(doc);
  const auto dataset = datasets_->find(config.dataset);
  config = resolve_config(config, *dataset);

  SessionOptions session_options;
  session_options.cache = options_.cache;
  session_options.clock = options_.clock;
  std::string id = make_session_id();
  fs::path log_path;
  if (!options_.sessions_dir.empty()) {
    fs::create_directories(options_.sessions_dir);
    log_path = options_.sessions_dir / (id + ".jsonl");
    session_options.events = std::make_shared<JsonlFileSink>(log_path);
  }

  auto entry = std::make_shared<Entry>();
  try {
    entry->session = std::make_unique<Session>(
        Session::create(id, config, dataset, std::move(session_options)));
  } catch (...) {
    if (!log_path.empty()) fs::remove(log_path);
    throw;
  }
  {
    std::unique_lock lock(sessions_mutex_);
    sessions_.emplace(id, entry);
  }
  const auto& s = *entry->session;
  return json_response(201, {{"session_id", id},
                             {"C", dataset->num_classes()},
                             {"class_names", dataset->dataset.manifest.classes},
                             {"teach_rounds", s.config().teach_rounds},
                             {"test_rounds", s.config().test_rounds}});
}

HttpResponse TeachingService::list_sessions() const {
  std::vector<std::pair<std::string, std::shared_ptr<Entry>>> entries;
  {
    std::shared_lock lock(sessions_mutex_);
    entries.assign(sessions_.begin(), sessions_.end());
  }
  json out = json::array();
  for (const auto& [id, entry] : entries) {
    std::lock_guard lock(entry->mutex);
    const Session& s = *entry->session;
    json row = {{"session_id", id},
                {"dataset", s.config().dataset},
                {"strategy", strategy_name(s.config().strategy)},
                {"phase", phase_name(s.phase())},
                {"teaching_round", s.teaching_round()},
                {"test_round", s.test_round()},
                {"teach_rounds", s.config().teach_rounds},
                {"test_rounds", s.config().test_rounds},
                {"score", nullptr},
                {"rejected", nullptr}};
    // Scores only once testing is over; a running score would leak
    // correctness of the last test answer.
    if (s.phase() == Phase::Done) {
      int correct = 0;
      double total_ms = 0.0;
      for (const auto& r : s.test_history()) {
        correct += r.correct() ? 1 : 0;
        total_ms += r.response_ms;
      }
      const double mean_ms = total_ms / s.config().test_rounds;
      row["score"] = static_cast<double>(correct) / s.config().test_rounds;
      row["mean_test_response_ms"] = mean_ms;
      row["rejected"] = s.config().prior_knowledge || mean_ms < s.config().min_response_ms;
    }
    out.push_back(std::move(row));
  }
  return json_response(200, {{"sessions", out}, {"version", options_.version}});
}

json TeachingService::shown_json(const Session& s, const ShownItem& shown) const {
  const bool teaching = shown.phase == Phase::Teaching;
  return {{"phase", phase_name(shown.phase)},
          {"round", teaching ? shown.round : shown.round - s.config().teach_rounds},
          {"total", teaching ? s.config().teach_rounds : s.config().test_rounds},
          {"item_id", shown.item_id},
          {"image_url", "/images/" + url_encode(s.config().dataset) + "/" + url_encode(shown.item_id)}};
}

HttpResponse TeachingService::next(const std::string& id) {
  const auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  Session& s = *entry->session;
  if (s.pending()) return json_response(200, shown_json(s, *s.pending()));
  switch (s.phase()) {
    case Phase::Teaching: return json_response(200, shown_json(s, s.next_teaching_item()));
    case Phase::Testing: return json_response(200, shown_json(s, s.next_test_item()));
    case Phase::Done: break;
  }
  throw TeachError(ErrorKind::WrongPhase, "session is done; fetch the result");
}

HttpResponse TeachingService::answer(const std::string& id, const json& body) {
  const auto item_id = field<std::string>(body, "item_id");
  const auto class_index = field<int>(body, "class_index");
  const auto response_ms = field<int>(body, "response_ms");
  const auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  Session& s = *entry->session;
  switch (s.phase()) {
    case Phase::Teaching: {
      const ClassIndex truth = s.submit_teaching_answer(item_id, class_index, response_ms);
      return json_response(200, {{"true_class", truth},
                                 {"true_class_name", s.dataset().dataset.manifest.classes[truth]}});
    }
    case Phase::Testing:
      s.submit_test_answer(item_id, class_index, response_ms);
      return json_response(200, json::object());
    case Phase::Done: break;
  }
  throw TeachError(ErrorKind::WrongPhase, "session is done");
}

HttpResponse TeachingService::result(const std::string& id) {
  const auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  Session& s = *entry->session;
  if (s.phase() != Phase::Done) {
    throw TeachError(ErrorKind::WrongPhase,
                     "result available once the session is done (phase " +
                         std::string(phase_name(s.phase())) + ")");
  }
  json out = result_to_json(s.finalize());
  out["session_id"] = id;
  out["config"] = config_to_json(s.config());
  return json_response(200, out);
}

HttpResponse TeachingService::list_datasets() const {
  json out = json::array();
  for (const auto& name : datasets_->names()) {
    const auto ds = datasets_->find(name);
    out.push_back({{"name", name},
                   {"classes", ds->dataset.manifest.classes},
                   {"size", ds->size()},
                   {"gamma", ds->options.gamma},
                   {"pca_dim", ds->features.cols()}});
  }
  return json_response(200, {{"datasets", out}});
}

HttpResponse TeachingService::image(const std::string& dataset, const std::string& item_id) const {
  const auto ds = datasets_->find(dataset);
  const auto& items = ds->dataset.manifest.items;
  const auto it = std::find_if(items.begin(), items.end(),
                               [&](const ManifestItem& m) { return m.id == item_id; });
  if (it == items.end()) {
    throw TeachError(ErrorKind::NotFound, "unknown item '" + item_id + "' in " + dataset);
  }
  const std::string& uri = it->image_uri;
  HttpResponse r;
  if (uri.rfind("synthetic:", 0) == 0) {
    r.content_type = "image/svg+xml";
    r.body = render_feature_glyph(*ds, static_cast<ItemIndex>(it - items.begin()));
    return r;
  }
  if (uri.rfind("http://", 0) == 0 || uri.rfind("https://", 0) == 0) {
    r.status = 302;
    r.content_type = "text/plain";
    r.headers["Location"] = uri;
    return r;
  }
  const fs::path path = ds->dataset.manifest.resolve(uri);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TeachError(ErrorKind::NotFound, "image file missing for '" + item_id + "'");
  std::ostringstream bytes;
  bytes << in.rdbuf();
  r.content_type = content_type_for(path);
  r.body = bytes.str();
  return r;
}

int TeachingService::restore_sessions(const std::function<void(const std::string&)>& on_error) {
  if (options_.sessions_dir.empty() || !fs::exists(options_.sessions_dir)) return 0;
  std::vector<fs::path> logs;
  for (const auto& e : fs::directory_iterator(options_.sessions_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".jsonl") logs.push_back(e.path());
  }
  std::sort(logs.begin(), logs.end());
  int restored = 0;
  for (const auto& path : logs) {
    try {
      const auto records = read_event_log(path);
      SessionOptions session_options;
      session_options.cache = options_.cache;
      session_options.clock = options_.clock;
      auto entry = std::make_shared<Entry>();
      entry->session = std::make_unique<Session>(
          replay_session(records, *datasets_, std::move(session_options)));
      entry->session->attach_events(std::make_shared<JsonlFileSink>(path));
      std::unique_lock lock(sessions_mutex_);
      sessions_[entry->session->id()] = entry;
      ++restored;
    } catch (const std::exception& e) {
      if (on_error) on_error(path.string() + ": " + e.what());
    }
  }
  return restored;
}

// ---------------------------------------------------------------------------

struct HttpServer::Impl {
  TeachingService& service;
  httplib::Server server;
  explicit Impl(TeachingService& s) : service(s) {}
};

HttpServer::HttpServer(TeachingService& service) : impl_(std::make_unique<Impl>(service)) {
  auto forward = [this](const httplib::Request& req, httplib::Response& res) {
    const HttpResponse r = impl_->service.handle(req.method, req.path, req.body);
    res.status = r.status;
    for (const auto& [k, v] : r.headers) res.set_header(k, v);
    res.set_content(r.body, r.content_type);
  };
  impl_->server.Get(".*", forward);
  impl_->server.Post(".*", forward);
  impl_->server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });
  impl_->server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                     {"Access-Control-Allow-Headers", "Content-Type"},
                                     {"Cache-Control", "no-store"}});
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::mount_static(const fs::path& dir) {
  if (!impl_->server.set_mount_point("/", dir.string())) {
    throw TeachError(ErrorKind::Io, "static directory not found: " + dir.string());
  }
}

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw TeachError(ErrorKind::Io, "cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw TeachError(ErrorKind::Io, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

bool HttpServer::running() const { return impl_->server.is_running(); }

std::pair<std::string, int> parse_listen_address(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) {
    throw TeachError(ErrorKind::InvalidInput, "listen address must be host:port, got '" + text + "'");
  }
  const std::string host = text.substr(0, colon);
  int port = 0;
  try {
    std::size_t used = 0;
    port = std::stoi(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw TeachError(ErrorKind::InvalidInput, "bad port in listen address '" + text + "'");
  }
  if (host.empty() || port < 0 || port > 65535) {
    throw TeachError(ErrorKind::InvalidInput, "bad listen address '" + text + "'");
  }
  return {host, port};
}

std::pair<std::string, int> listen_address(const std::string& fallback) {
  const char* env = std::getenv("TEACH_LISTEN");
  return parse_listen_address(env && *env ? env : fallback);
}

}  // namespace teach
