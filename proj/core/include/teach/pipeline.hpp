#pragma once

#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "teach/cache.hpp"
#include "teach/dataset.hpp"
#include "teach/pca.hpp"
#include "teach/propagation.hpp"
#include "teach/strategies.hpp"

namespace teach {

struct PrepareOptions {
  double gamma = 0.025;
  /// Target PCA dimension; no projection when it is 0 or >= the input dim.
  int pca_dim = 50;
  /// Top-k sparsification of the graph; 0 keeps it dense.
  int neighbors = 0;
};

/// A dataset together with everything the teacher derives from it once:
/// the reduced feature space and the similarity graph. Immutable and shared
/// by every session on that dataset.
struct PreparedDataset {
  Dataset dataset;
  PrepareOptions options;
  std::optional<PcaModel> pca;
  FeatureMatrix features;
  std::shared_ptr<const SimilarityGraph> graph;
  Digest graph_key{};

  const std::string& name() const { return dataset.name(); }
  int size() const { return dataset.size(); }
  int num_classes() const { return dataset.num_classes(); }
  std::span<const ClassIndex> labels() const { return dataset.labels; }
};

struct PrepareReport {
  CacheStatus pca = CacheStatus::Disabled;
  CacheStatus graph = CacheStatus::Disabled;
};

/// Fits PCA on all N items, projects, and builds the RBF graph. With a cache
/// the PCA model and the weight matrix are reused when their input hash
/// matches.
std::shared_ptr<const PreparedDataset> prepare_dataset(Dataset dataset,
                                                       const PrepareOptions& options,
                                                       const ArtifactCache* cache = nullptr,
                                                       PrepareReport* report = nullptr);

/// Batch teaching order over `pool`, memoized in `cache` by graph, pool and
/// length.
std::vector<ItemIndex> cached_batch_order(const PreparedDataset& prepared,
                                          std::span<const ItemIndex> pool, int length,
                                          const ArtifactCache* cache,
                                          CacheStatus* status = nullptr);

/// Name -> prepared dataset. Thread-safe.
class DatasetRegistry {
 public:
  void add(std::shared_ptr<const PreparedDataset> dataset);
  /// Throws TeachError(NotFound) for unknown names.
  std::shared_ptr<const PreparedDataset> find(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<const PreparedDataset>> datasets_;
};

}  // namespace teach
