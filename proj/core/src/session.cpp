#include "teach/session.hpp"

#include <algorithm>
#include <chrono>
#include <random>

namespace teach {

namespace {

[[noreturn]] void wrong_phase(const std::string& message) {
  throw TeachError(ErrorKind::WrongPhase, message);
}

[[noreturn]] void conflict(const std::string& message) {
  throw TeachError(ErrorKind::Conflict, message);
}

[[noreturn]] void invalid(const std::string& message) {
  throw TeachError(ErrorKind::InvalidInput, message);
}

std::int64_t system_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

}  // namespace

std::string make_session_id() {
  std::random_device rd;
  const std::uint64_t v = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  static const char* hex = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 0; i < 16; ++i) s[i] = hex[(v >> (60 - 4 * i)) & 15];
  return s;
}

namespace {

nlohmann::json record_json(const char* kind, const RoundRecord& r) {
  return {{"kind", kind},          {"round", r.round},
          {"item_index", r.item},  {"item_id", r.item_id},
          {"answer", r.answer},    {"true_class", r.true_class},
          {"response_ms", r.response_ms}, {"server_ms", r.server_ms}};
}

}  // namespace

std::string_view phase_name(Phase phase) {
  switch (phase) {
    case Phase::Teaching: return "teaching";
    case Phase::Testing: return "testing";
    case Phase::Done: return "done";
  }
  return "?";
}

std::string_view reject_reason_name(RejectReason reason) {
  switch (reason) {
    case RejectReason::None: return "none";
    case RejectReason::TooFast: return "too_fast";
    case RejectReason::PriorKnowledge: return "prior_knowledge";
  }
  return "?";
}

nlohmann::json config_to_json(const SessionConfig& c) {
  return {{"dataset", c.dataset},
          {"strategy", strategy_name(c.strategy)},
          {"seed", c.seed},
          {"teach_rounds", c.teach_rounds},
          {"test_rounds", c.test_rounds},
          {"min_response_ms", c.min_response_ms},
          {"bonus_threshold", c.bonus_threshold},
          {"prior_knowledge", c.prior_knowledge},
          {"max_candidates", c.max_candidates}};
}

SessionConfig config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) invalid("session config must be a JSON object");
  SessionConfig c;
  try {
    c.dataset = doc.at("dataset").get<std::string>();
    if (doc.contains("strategy")) c.strategy = parse_strategy(doc.at("strategy").get<std::string>());
    c.seed = doc.value("seed", std::uint64_t{0});
    c.teach_rounds = doc.value("teach_rounds", 0);
    c.test_rounds = doc.value("test_rounds", 0);
    c.min_response_ms = doc.value("min_response_ms", 3000);
    c.bonus_threshold = doc.value("bonus_threshold", 0.6);
    c.prior_knowledge = doc.value("prior_knowledge", false);
    c.max_candidates = doc.value("max_candidates", 0);
  } catch (const nlohmann::json::exception& e) {
    invalid(std::string("session config: ") + e.what());
  }
  return c;
}

SessionConfig resolve_config(SessionConfig c, const PreparedDataset& ds) {
  const int num_classes = ds.num_classes();
  if (c.dataset != ds.name()) invalid("config dataset '" + c.dataset + "' does not match '" + ds.name() + "'");
  if (c.teach_rounds == 0) c.teach_rounds = 3 * num_classes;
  if (c.test_rounds == 0) c.test_rounds = 10 * num_classes;
  if (c.teach_rounds < 1) invalid("teach_rounds must be >= 1");
  if (c.test_rounds < 1) invalid("test_rounds must be >= 1");
  if (c.test_rounds % num_classes != 0) {
    invalid("test_rounds (" + std::to_string(c.test_rounds) +
            ") must be a multiple of the number of classes (" + std::to_string(num_classes) + ")");
  }
  if (c.min_response_ms < 0) invalid("min_response_ms must be >= 0");
  if (!(c.bonus_threshold >= 0.0 && c.bonus_threshold <= 1.0)) {
    invalid("bonus_threshold must lie in [0,1]");
  }
  if (c.max_candidates < 0) invalid("max_candidates must be >= 0");

  const int per_class = c.test_rounds / num_classes;
  std::vector<int> sizes(num_classes, 0);
  for (ClassIndex y : ds.labels()) ++sizes[y];
  for (int k = 0; k < num_classes; ++k) {
    if (sizes[k] < per_class + 1) {
      invalid("class too small to supply test items: class '" + ds.dataset.manifest.classes[k] +
              "' has " + std::to_string(sizes[k]) + " items, needs " + std::to_string(per_class) +
              " for testing plus one for teaching");
    }
  }
  if (c.strategy != StrategyKind::Centroids && ds.size() - c.test_rounds < c.teach_rounds) {
    invalid("teaching pool of " + std::to_string(ds.size() - c.test_rounds) +
            " items is smaller than teach_rounds");
  }
  return c;
}

nlohmann::json result_to_json(const SessionResult& r) {
  auto rows = [](const std::vector<RoundRecord>& records) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& rec : records) {
      out.push_back({{"round", rec.round},
                     {"item_id", rec.item_id},
                     {"answer", rec.answer},
                     {"true_class", rec.true_class},
                     {"correct", rec.correct()},
                     {"response_ms", rec.response_ms}});
    }
    return out;
  };
  return {{"score", r.score},
          {"mean_test_response_ms", r.mean_test_response_ms},
          {"rejected", r.rejected},
          {"reject_reason", reject_reason_name(r.reason)},
          {"bonus", r.bonus},
          {"teaching", rows(r.teaching)},
          {"testing", rows(r.testing)}};
}

// ---------------------------------------------------------------------------

Session::Session(std::string id, SessionConfig config,
                 std::shared_ptr<const PreparedDataset> dataset, SessionOptions options)
    : id_(std::move(id)),
      config_(std::move(config)),
      dataset_(std::move(dataset)),
      options_(std::move(options)),
      solver_(dataset_->graph, dataset_->num_classes()),
      strategy_rng_(stream_rng(config_.seed, "strategy")) {}

Session Session::create(std::string id, SessionConfig config,
                        std::shared_ptr<const PreparedDataset> dataset, SessionOptions options) {
  if (!dataset) invalid("create_session: null dataset");
  if (id.empty()) id = make_session_id();
  config = resolve_config(std::move(config), *dataset);
  Session s(std::move(id), std::move(config), std::move(dataset), std::move(options));

  const auto& ds = *s.dataset_;
  const int n = ds.size();
  const int num_classes = ds.num_classes();
  const int per_class = s.config_.test_rounds / num_classes;

  // Equal number of test items per class, then a per-participant order.
  Rng test_rng = stream_rng(s.config_.seed, "test-set");
  std::vector<std::vector<ItemIndex>> by_class(num_classes);
  for (ItemIndex i = 0; i < n; ++i) by_class[ds.labels()[i]].push_back(i);
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), test_rng);
    s.test_set_.insert(s.test_set_.end(), members.begin(), members.begin() + per_class);
  }
  std::sort(s.test_set_.begin(), s.test_set_.end());
  s.test_order_ = s.test_set_;
  Rng order_rng = stream_rng(s.config_.seed, "test-order");
  std::shuffle(s.test_order_.begin(), s.test_order_.end(), order_rng);

  s.in_test_.assign(n, false);
  for (ItemIndex i : s.test_set_) s.in_test_[i] = true;
  for (ItemIndex i = 0; i < n; ++i) {
    if (!s.in_test_[i]) s.pool_.push_back(i);
  }
  s.taught_.assign(n, false);

  if (s.config_.strategy == StrategyKind::Centroids) {
    std::vector<bool> allowed(n);
    for (ItemIndex i = 0; i < n; ++i) allowed[i] = !s.in_test_[i];
    s.centroids_ = compute_class_centroids(ds.features, ds.labels(), num_classes, allowed);
  } else if (s.config_.strategy == StrategyKind::Batch) {
    s.batch_order_ = cached_batch_order(ds, s.pool_, s.config_.teach_rounds, s.options_.cache);
  }

  s.emit({{"kind", "created"},
          {"round", 0},
          {"session_id", s.id_},
          {"config", config_to_json(s.config_)},
          {"test_set", s.test_set_},
          {"test_order", s.test_order_},
          {"centroids", s.centroids_},
          {"batch_order", s.batch_order_}},
         true);
  return s;
}

std::int64_t Session::now() const { return options_.clock ? options_.clock() : system_ms(); }

void Session::emit(nlohmann::json record, bool sync) {
  if (!options_.events) return;
  record["ts_ms"] = now();
  options_.events->append(record);
  if (sync) options_.events->sync();
}

ShownItem Session::next_teaching_item() {
  if (phase_ != Phase::Teaching) wrong_phase("teaching complete");
  if (pending_) conflict("item " + pending_->item_id + " already issued and not yet answered");

  std::vector<ItemIndex> available;
  available.reserve(pool_.size());
  for (ItemIndex i : pool_) {
    if (!taught_[i]) available.push_back(i);
  }
  StrategyContext ctx;
  ctx.pool = available;
  ctx.state = &solver_;
  ctx.truth = dataset_->labels();
  ctx.centroids = centroids_;
  ctx.batch_order = batch_order_;
  ctx.batch_cursor = teaching_.size();
  ctx.rng = &strategy_rng_;
  if (config_.max_candidates > 0) ctx.max_candidates = config_.max_candidates;
  const TeachingPick pick = next_pick(config_.strategy, ctx);

  const ItemIndex item = pick.item_index;
  if (item < 0 || item >= dataset_->size() || in_test_[item] ||
      (taught_[item] && config_.strategy != StrategyKind::Centroids)) {
    throw TeachError(ErrorKind::Numerical,
                     "strategy returned ineligible item " + std::to_string(item));
  }
  const auto& meta = dataset_->dataset.manifest.items[item];
  pending_ = ShownItem{Phase::Teaching, teaching_round(), item, meta.id, meta.image_uri};
  pending_score_ = pick.strategy_score;
  pending_shown_ms_ = now();
  emit({{"kind", "teach_shown"},
        {"round", pending_->round},
        {"item_index", item},
        {"item_id", meta.id},
        {"strategy", strategy_name(config_.strategy)},
        {"strategy_score", pick.strategy_score},
        {"candidates", pick.candidates_evaluated}},
       false);
  return *pending_;
}

RoundRecord Session::take_pending(Phase expected, const std::string& item_id, ClassIndex answer,
                                  int response_ms) {
  if (phase_ != expected) {
    wrong_phase(std::string("session is in phase ") + std::string(phase_name(phase_)));
  }
  if (!pending_) conflict("no item is pending; request the next item first");
  if (pending_->item_id != item_id) {
    conflict("answer for item '" + item_id + "' but item '" + pending_->item_id + "' is pending");
  }
  if (answer < 0 || answer >= dataset_->num_classes()) {
    invalid("answer class out of range (" + std::to_string(answer) + ")");
  }
  if (response_ms < 0) invalid("response_ms must be >= 0");

  RoundRecord rec;
  rec.round = pending_->round;
  rec.item = pending_->item;
  rec.item_id = pending_->item_id;
  rec.answer = answer;
  rec.true_class = dataset_->labels()[rec.item];
  rec.response_ms = response_ms;
  rec.server_ms = now() - pending_shown_ms_;
  rec.strategy_score = pending_score_;
  pending_.reset();
  return rec;
}

ClassIndex Session::submit_teaching_answer(const std::string& item_id, ClassIndex answer,
                                           int response_ms) {
  RoundRecord rec = take_pending(Phase::Teaching, item_id, answer, response_ms);
  // The student's answer, right or wrong, is what enters F_t.
  if (solver_.partition().is_labeled(rec.item)) {
    solver_.overwrite_answer(rec.item, answer);
  } else {
    solver_.refresh_after_answer(rec.item, answer);
  }
  taught_[rec.item] = true;
  teaching_.push_back(rec);
  emit(record_json("teach_answered", rec), true);
  if (teaching_round() == config_.teach_rounds) phase_ = Phase::Testing;
  return rec.true_class;
}

ShownItem Session::next_test_item() {
  if (phase_ == Phase::Teaching) wrong_phase("teaching not complete");
  if (phase_ == Phase::Done) wrong_phase("testing complete");
  if (pending_) conflict("item " + pending_->item_id + " already issued and not yet answered");
  const ItemIndex item = test_order_[test_round()];
  const auto& meta = dataset_->dataset.manifest.items[item];
  pending_ = ShownItem{Phase::Testing, config_.teach_rounds + test_round(), item, meta.id,
                       meta.image_uri};
  pending_score_ = 0.0;
  pending_shown_ms_ = now();
  emit({{"kind", "test_shown"},
        {"round", pending_->round},
        {"item_index", item},
        {"item_id", meta.id}},
       false);
  return *pending_;
}

void Session::submit_test_answer(const std::string& item_id, ClassIndex answer,
                                 int response_ms) {
  RoundRecord rec = take_pending(Phase::Testing, item_id, answer, response_ms);
  testing_.push_back(rec);
  emit(record_json("test_answered", rec), true);
  if (test_round() == config_.test_rounds) phase_ = Phase::Done;
}

SessionResult Session::finalize() {
  if (phase_ != Phase::Done) wrong_phase("session not finished");
  SessionResult r;
  r.teaching = teaching_;
  r.testing = testing_;
  int correct = 0;
  double total_ms = 0.0;
  for (const auto& rec : testing_) {
    correct += rec.correct() ? 1 : 0;
    total_ms += rec.response_ms;
  }
  r.score = static_cast<double>(correct) / config_.test_rounds;
  r.mean_test_response_ms = total_ms / config_.test_rounds;
  if (config_.prior_knowledge) {
    r.reason = RejectReason::PriorKnowledge;
  } else if (r.mean_test_response_ms < config_.min_response_ms) {
    r.reason = RejectReason::TooFast;
  }
  r.rejected = r.reason != RejectReason::None;
  r.bonus = !r.rejected && r.score > config_.bonus_threshold;

  if (!finalized_logged_) {
    finalized_logged_ = true;
    emit({{"kind", "finalized"},
          {"round", config_.teach_rounds + config_.test_rounds},
          {"score", r.score},
          {"mean_test_response_ms", r.mean_test_response_ms},
          {"rejected", r.rejected},
          {"reject_reason", reject_reason_name(r.reason)},
          {"bonus", r.bonus}},
         true);
  }
  return r;
}

Session create_session(const SessionConfig& config, const DatasetRegistry& registry,
                       std::string id, SessionOptions options) {
  return Session::create(std::move(id), config, registry.find(config.dataset),
                         std::move(options));
}

Session replay_session(std::span<const nlohmann::json> records, const DatasetRegistry& registry,
                       SessionOptions options) {
  if (records.empty() || records.front().value("kind", "") != "created") {
    invalid("event log must start with a 'created' record");
  }
  const auto& head = records.front();
  Session s = create_session(config_from_json(head.at("config")), registry,
                             head.at("session_id").get<std::string>(), std::move(options));
  if (head.at("test_set").get<std::vector<ItemIndex>>() != s.test_set() ||
      head.at("test_order").get<std::vector<ItemIndex>>() != s.test_order()) {
    conflict("replay diverged: test set differs from the log");
  }

  for (std::size_t k = 1; k < records.size(); ++k) {
    const auto& rec = records[k];
    const std::string kind = rec.value("kind", "");
    auto expect_item = [&](const ShownItem& shown) {
      if (shown.item != rec.at("item_index").get<ItemIndex>()) {
        conflict("replay diverged at round " + std::to_string(shown.round) + ": picked " +
                 std::to_string(shown.item) + ", log has " + rec.at("item_index").dump());
      }
    };
    if (kind == "teach_shown") {
      expect_item(s.next_teaching_item());
    } else if (kind == "teach_answered") {
      s.submit_teaching_answer(rec.at("item_id").get<std::string>(),
                               rec.at("answer").get<ClassIndex>(),
                               rec.at("response_ms").get<int>());
    } else if (kind == "test_shown") {
      expect_item(s.next_test_item());
    } else if (kind == "test_answered") {
      s.submit_test_answer(rec.at("item_id").get<std::string>(),
                           rec.at("answer").get<ClassIndex>(), rec.at("response_ms").get<int>());
    } else if (kind == "finalized") {
      s.finalize();
    } else {
      invalid("unknown event kind '" + kind + "'");
    }
  }
  return s;
}

}  // namespace teach
