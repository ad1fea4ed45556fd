#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "teach/event_log.hpp"
#include "teach/pipeline.hpp"
#include "teach/strategies.hpp"

namespace teach {

enum class Phase { Teaching, Testing, Done };
std::string_view phase_name(Phase phase);

struct SessionConfig {
  std::string dataset;
  StrategyKind strategy = StrategyKind::Eer;
  std::uint64_t seed = 0;
  int teach_rounds = 0;  ///< 0 means 3 * C
  int test_rounds = 0;   ///< 0 means 10 * C; must be a multiple of C
  int min_response_ms = 3000;
  double bonus_threshold = 0.6;
  /// Set at intake when the participant reports familiarity with a class.
  bool prior_knowledge = false;
  /// Uniform subsample of the wp/eer candidate pool; 0 keeps all of it.
  int max_candidates = 0;
};

nlohmann::json config_to_json(const SessionConfig& config);
SessionConfig config_from_json(const nlohmann::json& doc);

/// Fills the C-dependent defaults and checks the config against the dataset.
SessionConfig resolve_config(SessionConfig config, const PreparedDataset& dataset);

struct RoundRecord {
  int round = 0;
  ItemIndex item = -1;
  std::string item_id;
  ClassIndex answer = -1;
  ClassIndex true_class = -1;
  int response_ms = 0;
  std::int64_t server_ms = 0;
  double strategy_score = 0.0;

  bool correct() const { return answer == true_class; }
};

struct ShownItem {
  Phase phase = Phase::Teaching;
  int round = 0;
  ItemIndex item = -1;
  std::string item_id;
  std::string image_uri;
};

enum class RejectReason { None, TooFast, PriorKnowledge };
std::string_view reject_reason_name(RejectReason reason);

struct SessionResult {
  double score = 0.0;
  double mean_test_response_ms = 0.0;
  bool rejected = false;
  RejectReason reason = RejectReason::None;
  bool bonus = false;
  std::vector<RoundRecord> teaching;
  std::vector<RoundRecord> testing;
};

nlohmann::json result_to_json(const SessionResult& result);

struct SessionOptions {
  std::shared_ptr<EventSink> events;
  /// Batch orders are looked up here before being computed.
  const ArtifactCache* cache = nullptr;
  /// Milliseconds since the epoch; defaults to the system clock.
  std::function<std::int64_t()> clock;
};

/// Teach-then-test protocol for one participant. The session is the only
/// writer of its solver state; callers serialize access to one session.
///
/// Teaching rounds: an item is issued with its label hidden, the answer is
/// folded into the student model, then the true class is returned for the
/// reveal. Testing rounds: answers are recorded and nothing is revealed.
class Session {
 public:
  static Session create(std::string id, SessionConfig config,
                        std::shared_ptr<const PreparedDataset> dataset,
                        SessionOptions options = {});

  ShownItem next_teaching_item();
  /// Returns the true class for the reveal.
  ClassIndex submit_teaching_answer(const std::string& item_id, ClassIndex answer,
                                    int response_ms);
  ShownItem next_test_item();
  void submit_test_answer(const std::string& item_id, ClassIndex answer, int response_ms);
  SessionResult finalize();

  const std::string& id() const { return id_; }
  const SessionConfig& config() const { return config_; }
  const PreparedDataset& dataset() const { return *dataset_; }
  Phase phase() const { return phase_; }
  int teaching_round() const { return static_cast<int>(teaching_.size()); }
  int test_round() const { return static_cast<int>(testing_.size()); }
  const std::optional<ShownItem>& pending() const { return pending_; }

  const std::vector<ItemIndex>& test_set() const { return test_set_; }
  const std::vector<ItemIndex>& test_order() const { return test_order_; }
  const std::vector<ItemIndex>& teaching_pool() const { return pool_; }
  const std::vector<ItemIndex>& centroids() const { return centroids_; }
  const std::vector<ItemIndex>& batch_order() const { return batch_order_; }
  const HarmonicSolverState& solver() const { return solver_; }
  const std::vector<RoundRecord>& teaching_history() const { return teaching_; }
  const std::vector<RoundRecord>& test_history() const { return testing_; }

  /// Records from here on go to `events` (used after a replay).
  void attach_events(std::shared_ptr<EventSink> events) { options_.events = std::move(events); }

 private:
  Session(std::string id, SessionConfig config, std::shared_ptr<const PreparedDataset> dataset,
          SessionOptions options);

  std::int64_t now() const;
  void emit(nlohmann::json record, bool sync);
  RoundRecord take_pending(Phase expected, const std::string& item_id, ClassIndex answer,
                           int response_ms);

  std::string id_;
  SessionConfig config_;
  std::shared_ptr<const PreparedDataset> dataset_;
  SessionOptions options_;

  Phase phase_ = Phase::Teaching;
  std::vector<ItemIndex> test_set_;
  std::vector<ItemIndex> test_order_;
  std::vector<bool> in_test_;
  std::vector<ItemIndex> pool_;
  std::vector<bool> taught_;
  std::vector<ItemIndex> centroids_;
  std::vector<ItemIndex> batch_order_;
  HarmonicSolverState solver_;
  Rng strategy_rng_;

  std::optional<ShownItem> pending_;
  double pending_score_ = 0.0;
  std::int64_t pending_shown_ms_ = 0;
  std::vector<RoundRecord> teaching_;
  std::vector<RoundRecord> testing_;
  bool finalized_logged_ = false;
};

/// 16 random hex digits.
std::string make_session_id();

/// Looks the dataset up in `registry` and creates the session. An empty id
/// gets a random 16-hex-digit id.
Session create_session(const SessionConfig& config, const DatasetRegistry& registry,
                       std::string id = {}, SessionOptions options = {});

/// Rebuilds a session from its event records by re-issuing every pick and
/// re-submitting every recorded answer. Throws TeachError(Conflict) if a
/// re-issued pick differs from the logged one.
Session replay_session(std::span<const nlohmann::json> records, const DatasetRegistry& registry,
                       SessionOptions options = {});

}  // namespace teach
