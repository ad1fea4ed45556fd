#include "teach/pipeline.hpp"

#include <cstring>
#include <mutex>

namespace teach {

namespace {

Digest dataset_key(const Dataset& ds) {
  Sha256 h;
  h.update(manifest_to_json(ds.manifest).dump());
  const auto rows = static_cast<std::uint64_t>(ds.features.rows());
  const auto cols = static_cast<std::uint64_t>(ds.features.cols());
  h.update_pod(rows).update_pod(cols);
  h.update(ds.features.data(), static_cast<std::size_t>(ds.features.size()) * sizeof(double));
  return h.finish();
}

std::string encode_pca(const PcaModel& pca) {
  std::string out;
  append_matrix(out, pca.mean);
  append_matrix(out, pca.components);
  append_matrix(out, pca.explained_variance);
  out.append(reinterpret_cast<const char*>(&pca.total_variance), sizeof(double));
  return out;
}

std::optional<PcaModel> decode_pca(std::string_view in) {
  try {
    PcaModel pca;
    pca.mean = read_matrix(in);
    pca.components = read_matrix(in);
    pca.explained_variance = read_matrix(in);
    if (in.size() != sizeof(double)) return std::nullopt;
    std::memcpy(&pca.total_variance, in.data(), sizeof(double));
    return pca;
  } catch (const TeachError&) {
    return std::nullopt;
  }
}

}  // namespace

std::shared_ptr<const PreparedDataset> prepare_dataset(Dataset dataset,
                                                       const PrepareOptions& options,
                                                       const ArtifactCache* cache,
                                                       PrepareReport* report) {
  PrepareReport local;
  auto out = std::make_shared<PreparedDataset>();
  out->options = options;
  out->dataset = std::move(dataset);
  const Dataset& ds = out->dataset;
  const Digest data_key = dataset_key(ds);
  const std::string stem = ds.name();

  const bool project = options.pca_dim > 0 && options.pca_dim < ds.features.cols();
  Digest pca_key = data_key;
  if (project) {
    pca_key = Sha256().update(data_key).update("pca").update_pod(options.pca_dim).finish();
    if (cache) {
      auto hit = cache->load(stem + ".pca", pca_key);
      local.pca = hit.status;
      if (hit.payload) out->pca = decode_pca(*hit.payload);
      if (hit.payload && !out->pca) local.pca = CacheStatus::Corrupt;
    }
    if (!out->pca) {
      out->pca = fit_pca(ds.features, options.pca_dim);
      if (cache) cache->store(stem + ".pca", pca_key, encode_pca(*out->pca));
    }
    out->features = apply_pca(*out->pca, ds.features);
  } else {
    out->features = ds.features;
  }

  out->graph_key = Sha256()
                       .update(pca_key)
                       .update("graph")
                       .update_pod(options.gamma)
                       .update_pod(options.neighbors)
                       .finish();
  if (cache) {
    auto hit = cache->load(stem + ".graph", out->graph_key);
    local.graph = hit.status;
    if (hit.payload) {
      try {
        std::string_view view(*hit.payload);
        Eigen::MatrixXd w = read_matrix(view);
        if (w.rows() == ds.size() && view.empty()) {
          out->graph = std::make_shared<const SimilarityGraph>(
              SimilarityGraph::from_weights(std::move(w), options.gamma));
        }
      } catch (const TeachError&) {
      }
      if (!out->graph) local.graph = CacheStatus::Corrupt;
    }
  }
  if (!out->graph) {
    out->graph = std::make_shared<const SimilarityGraph>(
        SimilarityGraph::build(out->features, options.gamma, options.neighbors));
    if (cache) {
      std::string payload;
      append_matrix(payload, out->graph->weights());
      cache->store(stem + ".graph", out->graph_key, payload);
    }
  }
  if (report) *report = local;
  return out;
}

std::vector<ItemIndex> cached_batch_order(const PreparedDataset& prepared,
                                          std::span<const ItemIndex> pool, int length,
                                          const ArtifactCache* cache, CacheStatus* status) {
  Sha256 h;
  h.update(prepared.graph_key).update("batch").update_pod(length);
  h.update(pool.data(), pool.size_bytes());
  const Digest key = h.finish();
  const std::string name = prepared.name() + ".batch." + to_hex(key).substr(0, 16);

  if (cache) {
    auto hit = cache->load(name, key);
    if (hit.payload && hit.payload->size() == static_cast<std::size_t>(length) * sizeof(ItemIndex)) {
      std::vector<ItemIndex> order(length);
      std::memcpy(order.data(), hit.payload->data(), hit.payload->size());
      if (status) *status = CacheStatus::Hit;
      return order;
    }
    if (status) *status = hit.payload ? CacheStatus::Corrupt : hit.status;
  } else if (status) {
    *status = CacheStatus::Disabled;
  }
  std::vector<ItemIndex> order = compute_batch_order(prepared.graph, prepared.labels(),
                                                     prepared.num_classes(), pool, length);
  if (cache) {
    cache->store(name, key,
                 std::string_view(reinterpret_cast<const char*>(order.data()),
                                  order.size() * sizeof(ItemIndex)));
  }
  return order;
}

void DatasetRegistry::add(std::shared_ptr<const PreparedDataset> dataset) {
  std::unique_lock lock(mutex_);
  datasets_[dataset->name()] = std::move(dataset);
}

std::shared_ptr<const PreparedDataset> DatasetRegistry::find(const std::string& name) const {
  std::shared_lock lock(mutex_);
  auto it = datasets_.find(name);
  if (it == datasets_.end()) throw TeachError(ErrorKind::NotFound, "unknown dataset '" + name + "'");
  return it->second;
}

bool DatasetRegistry::contains(const std::string& name) const {
  std::shared_lock lock(mutex_);
  return datasets_.count(name) > 0;
}

std::vector<std::string> DatasetRegistry::names() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [name, _] : datasets_) out.push_back(name);
  return out;
}

}  // namespace teach
