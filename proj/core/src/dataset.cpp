#include "teach/dataset.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

namespace teach {

static_assert(std::endian::native == std::endian::little,
              "feature files are little-endian; big-endian hosts need byte swapping");

namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const std::string& message) {
  throw TeachError(ErrorKind::InvalidInput, message);
}

bool is_csv(const fs::path& path) {
  auto ext = path.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return ext == ".csv";
}

std::vector<double> parse_csv_row(const std::string& line, const fs::path& path,
                                  std::size_t line_no) {
  std::vector<double> row;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    while (end && *end && std::isspace(static_cast<unsigned char>(*end))) ++end;
    if (cell.empty() || end == cell.c_str() || (end && *end != '\0')) {
      fail(path.string() + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
    }
    row.push_back(v);
  }
  return row;
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

fs::path DatasetManifest::feature_path() const { return resolve(feature_file); }

fs::path DatasetManifest::resolve(const std::string& relative) const {
  fs::path p(relative);
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

bool DatasetManifest::same_content(const DatasetManifest& other) const {
  return name == other.name && classes == other.classes && items == other.items &&
         feature_file == other.feature_file && feature_dim == other.feature_dim;
}

void validate_manifest(const DatasetManifest& m) {
  if (m.name.empty()) fail("name: must be a non-empty string");
  if (m.classes.size() < 2) {
    fail("classes: need at least 2 classes, got " + std::to_string(m.classes.size()));
  }
  if (m.feature_dim <= 0) fail("feature_dim: must be positive");
  if (m.feature_file.empty()) fail("feature_file: must be a non-empty path");

  const int C = m.num_classes();
  std::vector<int> per_class(C, 0);
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < m.items.size(); ++i) {
    const auto& item = m.items[i];
    const std::string where = "items[" + std::to_string(i) + "]";
    if (item.id.empty()) fail(where + ".id: empty id");
    if (item.class_index < 0 || item.class_index >= C) {
      fail(where + ".class_index: class index out of range (" +
           std::to_string(item.class_index) + " not in [0," + std::to_string(C) + "))");
    }
    if (!seen.insert(item.id).second) fail(where + ".id: duplicate id \"" + item.id + "\"");
    ++per_class[item.class_index];
  }
  for (int c = 0; c < C; ++c) {
    if (per_class[c] == 0) {
      fail("classes[" + std::to_string(c) + "]: empty class \"" + m.classes[c] + "\"");
    }
  }
}

DatasetManifest manifest_from_json(const nlohmann::json& doc, const fs::path& base_dir) {
  static const std::set<std::string> kTopKeys = {"name", "classes", "items", "feature_file",
                                                 "feature_dim"};
  static const std::set<std::string> kItemKeys = {"id", "class_index", "image_uri"};
  if (!doc.is_object()) fail("manifest parse error: top level must be an object");
  for (const auto& key : kTopKeys) {
    if (!doc.contains(key)) fail(key + ": missing key");
  }
  for (const auto& [key, _] : doc.items()) {
    if (!kTopKeys.count(key)) fail(key + ": unknown key");
  }

  DatasetManifest m;
  m.base_dir = base_dir;
  try {
    m.name = doc.at("name").get<std::string>();
    m.classes = doc.at("classes").get<std::vector<std::string>>();
    m.feature_file = doc.at("feature_file").get<std::string>();
    m.feature_dim = doc.at("feature_dim").get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("manifest parse error: ") + e.what());
  }
  const auto& items = doc.at("items");
  if (!items.is_array()) fail("items: must be an array");
  m.items.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    const std::string where = "items[" + std::to_string(i) + "]";
    if (!it.is_object()) fail(where + ": must be an object");
    for (const auto& key : kItemKeys) {
      if (!it.contains(key)) fail(where + "." + key + ": missing key");
    }
    for (const auto& [key, _] : it.items()) {
      if (!kItemKeys.count(key)) fail(where + "." + key + ": unknown key");
    }
    ManifestItem item;
    try {
      item.id = it.at("id").get<std::string>();
      item.class_index = it.at("class_index").get<int>();
      item.image_uri = it.at("image_uri").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      fail(where + ": manifest parse error: " + e.what());
    }
    m.items.push_back(std::move(item));
  }
  validate_manifest(m);
  return m;
}

nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& item : m.items) {
    items.push_back({{"id", item.id}, {"class_index", item.class_index},
                     {"image_uri", item.image_uri}});
  }
  return {{"name", m.name},
          {"classes", m.classes},
          {"items", std::move(items)},
          {"feature_file", m.feature_file},
          {"feature_dim", m.feature_dim}};
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw TeachError(ErrorKind::Io, "cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail("manifest parse error: " + std::string(e.what()));
  }
  DatasetManifest m = manifest_from_json(doc, path.parent_path());

  const FeatureShape shape = peek_feature_shape(m.feature_path());
  if (static_cast<int>(shape.cols) != m.feature_dim) {
    fail("feature_dim: feature_dim mismatch (manifest says " + std::to_string(m.feature_dim) +
         ", feature file has " + std::to_string(shape.cols) + " columns)");
  }
  if (static_cast<int>(shape.rows) != m.size()) {
    fail("feature_file: row count mismatch (" + std::to_string(shape.rows) + " rows for " +
         std::to_string(m.size()) + " items)");
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw TeachError(ErrorKind::Io, "cannot write manifest " + path.string());
  out << manifest_to_json(manifest).dump(2) << '\n';
}

FeatureShape peek_feature_shape(const fs::path& path) {
  if (is_csv(path)) {
    std::ifstream in(path);
    if (!in) throw TeachError(ErrorKind::Io, "feature_file: cannot open " + path.string());
    FeatureShape shape;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (blank(line)) continue;
      if (shape.rows == 0) {
        shape.cols = static_cast<std::uint32_t>(parse_csv_row(line, path, line_no).size());
      }
      ++shape.rows;
    }
    return shape;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TeachError(ErrorKind::Io, "feature_file: cannot open " + path.string());
  std::uint32_t header[2] = {0, 0};
  if (!in.read(reinterpret_cast<char*>(header), sizeof(header))) {
    fail("feature_file: truncated header in " + path.string());
  }
  return {header[0], header[1]};
}

FeatureMatrix read_features(const fs::path& path) {
  if (is_csv(path)) {
    std::ifstream in(path);
    if (!in) throw TeachError(ErrorKind::Io, "feature_file: cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (blank(line)) continue;
      rows.push_back(parse_csv_row(line, path, line_no));
      if (rows.back().size() != rows.front().size()) {
        fail(path.string() + ":" + std::to_string(line_no) + ": ragged row");
      }
    }
    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index m = n ? static_cast<Eigen::Index>(rows.front().size()) : 0;
    FeatureMatrix out(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) out(i, j) = rows[i][j];
    }
    return out;
  }

  std::ifstream in(path, std::ios::binary);
  if (!in) throw TeachError(ErrorKind::Io, "feature_file: cannot open " + path.string());
  std::uint32_t header[2] = {0, 0};
  if (!in.read(reinterpret_cast<char*>(header), sizeof(header))) {
    fail("feature_file: truncated header in " + path.string());
  }
  const std::size_t count = static_cast<std::size_t>(header[0]) * header[1];
  std::vector<float> raw(count);
  if (count && !in.read(reinterpret_cast<char*>(raw.data()),
                        static_cast<std::streamsize>(count * sizeof(float)))) {
    fail("feature_file: truncated payload in " + path.string());
  }
  Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> view(
      raw.data(), header[0], header[1]);
  return view.cast<double>();
}

void write_features(const fs::path& path, const FeatureMatrix& features) {
  if (is_csv(path)) {
    std::ofstream out(path);
    if (!out) throw TeachError(ErrorKind::Io, "cannot write " + path.string());
    out.precision(9);
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
      for (Eigen::Index j = 0; j < features.cols(); ++j) {
        if (j) out << ',';
        out << features(i, j);
      }
      out << '\n';
    }
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TeachError(ErrorKind::Io, "cannot write " + path.string());
  const std::uint32_t header[2] = {static_cast<std::uint32_t>(features.rows()),
                                   static_cast<std::uint32_t>(features.cols())};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rowmajor =
      features.cast<float>();
  out.write(reinterpret_cast<const char*>(rowmajor.data()),
            static_cast<std::streamsize>(rowmajor.size() * sizeof(float)));
}

Dataset load_dataset(const fs::path& manifest_path) {
  Dataset ds;
  ds.manifest = load_manifest(manifest_path);
  ds.features = read_features(ds.manifest.feature_path());
  if (ds.features.rows() != ds.manifest.size() ||
      ds.features.cols() != ds.manifest.feature_dim) {
    fail("feature_file: shape does not match manifest");
  }
  if (!ds.features.allFinite()) fail("feature_file: non-finite feature value");
  ds.labels.reserve(ds.manifest.items.size());
  for (const auto& item : ds.manifest.items) ds.labels.push_back(item.class_index);
  return ds;
}

void save_dataset(const Dataset& dataset, const fs::path& manifest_path) {
  DatasetManifest m = dataset.manifest;
  m.base_dir = manifest_path.parent_path();
  m.feature_dim = static_cast<int>(dataset.features.cols());
  write_features(m.feature_path(), dataset.features);
  save_manifest(m, manifest_path);
}

}  // namespace teach
