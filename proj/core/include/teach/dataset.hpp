#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "teach/error.hpp"

namespace teach {

/// Row i is the feature vector of item i.
using FeatureMatrix = Eigen::MatrixXd;

struct ManifestItem {
  std::string id;
  ClassIndex class_index = 0;
  std::string image_uri;

  bool operator==(const ManifestItem&) const = default;
};

/// Describes a labeled image collection. Paths inside the manifest are
/// resolved relative to `base_dir`, the directory the manifest was read from.
struct DatasetManifest {
  std::string name;
  std::vector<std::string> classes;
  std::vector<ManifestItem> items;
  std::string feature_file;
  int feature_dim = 0;

  std::filesystem::path base_dir;

  int num_classes() const { return static_cast<int>(classes.size()); }
  int size() const { return static_cast<int>(items.size()); }
  std::filesystem::path feature_path() const;
  std::filesystem::path resolve(const std::string& relative) const;

  bool same_content(const DatasetManifest& other) const;
};

struct FeatureShape {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
};

// Manifest I/O. load_manifest() validates every invariant, including that
// feature_dim matches the column count of the referenced feature file.
DatasetManifest load_manifest(const std::filesystem::path& path);
DatasetManifest manifest_from_json(const nlohmann::json& doc,
                                   const std::filesystem::path& base_dir);
nlohmann::json manifest_to_json(const DatasetManifest& manifest);
void save_manifest(const DatasetManifest& manifest,
                   const std::filesystem::path& path);
void validate_manifest(const DatasetManifest& manifest);

// Feature files: a little-endian header of two uint32 (rows, cols) followed
// by rows*cols float32 values in row-major order, or a headerless CSV when
// the extension is ".csv".
FeatureShape peek_feature_shape(const std::filesystem::path& path);
FeatureMatrix read_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path,
                    const FeatureMatrix& features);

struct Dataset {
  DatasetManifest manifest;
  FeatureMatrix features;
  std::vector<ClassIndex> labels;

  int size() const { return static_cast<int>(labels.size()); }
  int num_classes() const { return manifest.num_classes(); }
  const std::string& name() const { return manifest.name; }
};

/// Loads the manifest and its feature file, checking that row count and
/// order agree with the item list and that every value is finite.
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes `dataset.features` next to `manifest_path` under the manifest's
/// feature_file name and the manifest itself.
void save_dataset(const Dataset& dataset,
                  const std::filesystem::path& manifest_path);

}  // namespace teach
