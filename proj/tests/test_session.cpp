#include <set>

#include <gtest/gtest.h>

#include "support.hpp"
#include "teach/session.hpp"

using namespace teach;
using namespace teach::testing;

namespace {

std::shared_ptr<const PreparedDataset> small_dataset() {
  static const auto ds = prepared_mixture(small_mixture());
  return ds;
}

SessionConfig config_for(StrategyKind strategy, std::uint64_t seed = 1) {
  SessionConfig c;
  c.dataset = "small";
  c.strategy = strategy;
  c.seed = seed;
  return c;
}

SessionOptions fixed_clock(std::shared_ptr<EventSink> events = nullptr) {
  SessionOptions o;
  o.events = std::move(events);
  o.clock = [] { return std::int64_t{1000}; };
  return o;
}

/// Answers every round with `answer_of(item)` and a fixed response time.
SessionResult run_through(Session& s, const std::function<int(ItemIndex)>& answer_of,
                          int response_ms = 4000) {
  while (s.phase() == Phase::Teaching) {
    const ShownItem shown = s.next_teaching_item();
    s.submit_teaching_answer(shown.item_id, answer_of(shown.item), response_ms);
  }
  while (s.phase() == Phase::Testing) {
    const ShownItem shown = s.next_test_item();
    s.submit_test_answer(shown.item_id, answer_of(shown.item), response_ms);
  }
  return s.finalize();
}

std::string error_of(const std::function<void()>& fn, ErrorKind* kind = nullptr) {
  try {
    fn();
  } catch (const TeachError& e) {
    if (kind) *kind = e.kind();
    return e.what();
  }
  return "";
}

}  // namespace

TEST(SessionConfig, DefaultsFollowClassCount) {
  const auto c = resolve_config(config_for(StrategyKind::Eer), *small_dataset());
  EXPECT_EQ(c.teach_rounds, 9);
  EXPECT_EQ(c.test_rounds, 30);
  EXPECT_EQ(c.min_response_ms, 3000);
  EXPECT_DOUBLE_EQ(c.bonus_threshold, 0.6);
}

TEST(SessionConfig, Errors) {
  auto c = config_for(StrategyKind::Eer);
  c.test_rounds = 31;
  EXPECT_NE(error_of([&] { resolve_config(c, *small_dataset()); })
                .find("test_rounds (31) must be a multiple of the number of classes (3)"),
            std::string::npos);
  c.test_rounds = 48;  // 16 per class leaves nothing to teach
  EXPECT_NE(error_of([&] { resolve_config(c, *small_dataset()); })
                .find("class too small to supply test items"),
            std::string::npos);
  c.test_rounds = 0;
  c.teach_rounds = 30;  // pool is 48 - 30 = 18
  EXPECT_NE(error_of([&] { resolve_config(c, *small_dataset()); }).find("teaching pool of 18"),
            std::string::npos);
  c.strategy = StrategyKind::Centroids;  // repeats allowed
  EXPECT_NO_THROW(resolve_config(c, *small_dataset()));
  c = config_for(StrategyKind::Eer);
  c.bonus_threshold = 1.5;
  EXPECT_THROW(resolve_config(c, *small_dataset()), TeachError);
  c = config_for(StrategyKind::Eer);
  c.dataset = "other";
  EXPECT_THROW(resolve_config(c, *small_dataset()), TeachError);
}

TEST(SessionConfig, JsonRoundTrip) {
  auto c = config_for(StrategyKind::WorstPredicted, 99);
  c.teach_rounds = 4;
  c.prior_knowledge = true;
  c.max_candidates = 7;
  const auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_THROW(config_from_json(nlohmann::json{{"strategy", "eer"}}), TeachError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"dataset", "x"}, {"strategy", "nope"}}), TeachError);
}

TEST(Session, FullProtocolWithPerfectAnswers) {
  auto sink = std::make_shared<MemoryEventSink>();
  auto s = Session::create("s1", config_for(StrategyKind::Eer), small_dataset(), fixed_clock(sink));
  const auto labels = small_dataset()->labels();
  std::vector<ClassIndex> reveals;
  while (s.phase() == Phase::Teaching) {
    const ShownItem shown = s.next_teaching_item();
    EXPECT_EQ(shown.phase, Phase::Teaching);
    EXPECT_EQ(shown.round, s.teaching_round());
    reveals.push_back(s.submit_teaching_answer(shown.item_id, labels[shown.item], 4000));
    EXPECT_EQ(reveals.back(), labels[shown.item]);
  }
  EXPECT_EQ(s.teaching_round(), 9);
  EXPECT_EQ(s.solver().partition().labeled().size(), 9u);
  int shown_tests = 0;
  while (s.phase() == Phase::Testing) {
    const ShownItem shown = s.next_test_item();
    EXPECT_EQ(shown.round, 9 + shown_tests);
    EXPECT_EQ(shown.item, s.test_order()[shown_tests]);
    s.submit_test_answer(shown.item_id, labels[shown.item], 4000);
    ++shown_tests;
  }
  EXPECT_EQ(shown_tests, 30);
  const SessionResult r = s.finalize();
  EXPECT_DOUBLE_EQ(r.score, 1.0);
  EXPECT_DOUBLE_EQ(r.mean_test_response_ms, 4000.0);
  EXPECT_FALSE(r.rejected);
  EXPECT_TRUE(r.bonus);

  const auto records = sink->records();
  ASSERT_EQ(records.size(), 1u + 2 * 9 + 2 * 30 + 1);
  EXPECT_EQ(records.front()["kind"], "created");
  EXPECT_EQ(records[1]["kind"], "teach_shown");
  EXPECT_EQ(records[1]["strategy"], "eer");
  EXPECT_EQ(records[2]["kind"], "teach_answered");
  EXPECT_EQ(records[2]["server_ms"], 0);
  EXPECT_EQ(records[2]["ts_ms"], 1000);
  EXPECT_EQ(records.back()["kind"], "finalized");
  EXPECT_EQ(records.back()["bonus"], true);
  // A second finalize does not log again.
  s.finalize();
  EXPECT_EQ(sink->records().size(), records.size());
}

TEST(Session, TestSetIsBalancedSortedAndDisjointFromPool) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto s = Session::create("", config_for(StrategyKind::Random, seed), small_dataset());
    EXPECT_EQ(s.id().size(), 16u);
    const auto labels = small_dataset()->labels();
    std::array<int, 3> per_class{};
    for (ItemIndex i : s.test_set()) ++per_class[labels[i]];
    EXPECT_EQ(per_class, (std::array<int, 3>{10, 10, 10}));
    EXPECT_TRUE(std::is_sorted(s.test_set().begin(), s.test_set().end()));
    std::vector<ItemIndex> order = s.test_order();
    std::sort(order.begin(), order.end());
    EXPECT_EQ(order, s.test_set());
    EXPECT_EQ(s.teaching_pool().size(), 18u);
    for (ItemIndex i : s.teaching_pool()) {
      EXPECT_FALSE(std::binary_search(s.test_set().begin(), s.test_set().end(), i));
    }
  }
  auto a = Session::create("a", config_for(StrategyKind::Random, 5), small_dataset());
  auto b = Session::create("b", config_for(StrategyKind::Random, 6), small_dataset());
  EXPECT_NE(a.test_set(), b.test_set());
}

TEST(Session, StudentAnswerEntersTheModelNotTheTruth) {
  auto s = Session::create("w", config_for(StrategyKind::Random, 3), small_dataset());
  const auto labels = small_dataset()->labels();
  const ShownItem shown = s.next_teaching_item();
  const int wrong = (labels[shown.item] + 1) % 3;
  EXPECT_EQ(s.submit_teaching_answer(shown.item_id, wrong, 3500), labels[shown.item]);
  EXPECT_EQ(s.solver().labeled_answers(), std::vector<int>{wrong});
  EXPECT_EQ(s.solver().belief_row(shown.item)(wrong), 1.0);
  EXPECT_FALSE(s.teaching_history().front().correct());
}

TEST(Session, PhaseAndPendingErrors) {
  auto s = Session::create("e", config_for(StrategyKind::Eer), small_dataset());
  ErrorKind kind{};
  error_of([&] { s.next_test_item(); }, &kind);
  EXPECT_EQ(kind, ErrorKind::WrongPhase);
  error_of([&] { s.submit_teaching_answer("class0-0", 0, 4000); }, &kind);
  EXPECT_EQ(kind, ErrorKind::Conflict);
  error_of([&] { s.finalize(); }, &kind);
  EXPECT_EQ(kind, ErrorKind::WrongPhase);

  const ShownItem shown = s.next_teaching_item();
  error_of([&] { s.next_teaching_item(); }, &kind);
  EXPECT_EQ(kind, ErrorKind::Conflict);
  error_of([&] { s.submit_teaching_answer("not-it", 0, 4000); }, &kind);
  EXPECT_EQ(kind, ErrorKind::Conflict);
  error_of([&] { s.submit_teaching_answer(shown.item_id, 3, 4000); }, &kind);
  EXPECT_EQ(kind, ErrorKind::InvalidInput);
  error_of([&] { s.submit_teaching_answer(shown.item_id, 0, -1); }, &kind);
  EXPECT_EQ(kind, ErrorKind::InvalidInput);
  error_of([&] { s.submit_test_answer(shown.item_id, 0, 4000); }, &kind);
  EXPECT_EQ(kind, ErrorKind::WrongPhase);
  // Still pending after the rejected answers.
  EXPECT_NO_THROW(s.submit_teaching_answer(shown.item_id, 0, 4000));

  const auto labels = small_dataset()->labels();
  run_through(s, [&](ItemIndex i) { return labels[i]; });
  error_of([&] { s.next_test_item(); }, &kind);
  EXPECT_EQ(kind, ErrorKind::WrongPhase);
  error_of([&] { s.next_teaching_item(); }, &kind);
  EXPECT_EQ(kind, ErrorKind::WrongPhase);
}

TEST(Session, RejectionAndBonus) {
  const auto labels = small_dataset()->labels();
  {
    auto s = Session::create("fast", config_for(StrategyKind::Random), small_dataset());
    const auto r = run_through(s, [&](ItemIndex i) { return labels[i]; }, 2999);
    EXPECT_TRUE(r.rejected);
    EXPECT_EQ(r.reason, RejectReason::TooFast);
    EXPECT_FALSE(r.bonus);
  }
  {
    auto c = config_for(StrategyKind::Random);
    c.prior_knowledge = true;
    auto s = Session::create("prior", c, small_dataset());
    const auto r = run_through(s, [&](ItemIndex i) { return labels[i]; });
    EXPECT_EQ(r.reason, RejectReason::PriorKnowledge);
    EXPECT_FALSE(r.bonus);
  }
  {
    // 18 of 30 correct is exactly 0.6, which does not clear the threshold.
    auto s = Session::create("edge", config_for(StrategyKind::Random), small_dataset());
    while (s.phase() == Phase::Teaching) {
      const auto shown = s.next_teaching_item();
      s.submit_teaching_answer(shown.item_id, labels[shown.item], 3000);
    }
    int k = 0;
    while (s.phase() == Phase::Testing) {
      const auto shown = s.next_test_item();
      const int answer = k++ < 18 ? labels[shown.item] : (labels[shown.item] + 1) % 3;
      s.submit_test_answer(shown.item_id, answer, 3000);
    }
    const auto r = s.finalize();
    EXPECT_DOUBLE_EQ(r.score, 0.6);
    EXPECT_FALSE(r.rejected);
    EXPECT_FALSE(r.bonus);
  }
}

TEST(Session, BatchFollowsItsPrecomputedOrder) {
  auto s = Session::create("b", config_for(StrategyKind::Batch, 4), small_dataset());
  ASSERT_EQ(s.batch_order().size(), 9u);
  // Wrong answers do not change a batch sequence.
  for (int r = 0; r < 9; ++r) {
    const auto shown = s.next_teaching_item();
    EXPECT_EQ(shown.item, s.batch_order()[r]);
    s.submit_teaching_answer(shown.item_id, 0, 4000);
  }
}

TEST(Session, CentroidRepeatsOverwriteTheAnswer) {
  auto s = Session::create("cc", config_for(StrategyKind::Centroids, 2), small_dataset());
  ASSERT_EQ(s.centroids().size(), 3u);
  std::map<ItemIndex, int> last_answer;
  int k = 0;
  while (s.phase() == Phase::Teaching) {
    const auto shown = s.next_teaching_item();
    EXPECT_NE(std::find(s.centroids().begin(), s.centroids().end(), shown.item),
              s.centroids().end());
    const int answer = k++ % 3;
    s.submit_teaching_answer(shown.item_id, answer, 4000);
    last_answer[shown.item] = answer;
  }
  EXPECT_LE(s.solver().partition().labeled().size(), 3u);
  EXPECT_EQ(s.solver().partition().labeled().size(), last_answer.size());
  const auto& labeled = s.solver().partition().labeled();
  for (std::size_t r = 0; r < labeled.size(); ++r) {
    EXPECT_EQ(s.solver().labeled_answers()[r], last_answer[labeled[r]]);
  }
}

// Property: every pick comes from the pool, never the test set; non-cc
// strategies never repeat; the labeled set grows by exactly one per round.
TEST(SessionProperty, PicksAreEligibleForManySeeds) {
  const auto ds = small_dataset();
  const auto labels = ds->labels();
  for (StrategyKind strategy : kAllStrategies) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      auto s = Session::create("p", config_for(strategy, seed), ds);
      std::set<ItemIndex> seen;
      std::mt19937_64 answers(seed);
      std::uniform_int_distribution<int> any(0, 2);
      while (s.phase() == Phase::Teaching) {
        const auto shown = s.next_teaching_item();
        ASSERT_FALSE(std::binary_search(s.test_set().begin(), s.test_set().end(), shown.item));
        ASSERT_NE(std::find(s.teaching_pool().begin(), s.teaching_pool().end(), shown.item),
                  s.teaching_pool().end());
        const bool repeat = !seen.insert(shown.item).second;
        if (strategy != StrategyKind::Centroids) {
          ASSERT_FALSE(repeat) << strategy_name(strategy);
        }
        s.submit_teaching_answer(shown.item_id, any(answers) == 0 ? any(answers) : labels[shown.item],
                                 4000);
        ASSERT_EQ(s.solver().partition().labeled().size(), seen.size());
      }
    }
  }
}

TEST(Session, ReplayReproducesTheSession) {
  for (StrategyKind strategy : kAllStrategies) {
    auto sink = std::make_shared<MemoryEventSink>();
    auto s = Session::create("r", config_for(strategy, 12), small_dataset(), fixed_clock(sink));
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> any(0, 2);
    // Stop half way through testing with an item pending.
    for (int r = 0; r < 9; ++r) {
      const auto shown = s.next_teaching_item();
      s.submit_teaching_answer(shown.item_id, any(rng), 4000);
    }
    for (int r = 0; r < 12; ++r) {
      const auto shown = s.next_test_item();
      s.submit_test_answer(shown.item_id, any(rng), 4000);
    }
    s.next_test_item();

    DatasetRegistry registry;
    registry.add(small_dataset());
    const auto records = sink->records();
    auto back = replay_session(records, registry);
    EXPECT_EQ(back.id(), "r");
    EXPECT_EQ(back.phase(), Phase::Testing);
    EXPECT_EQ(back.test_round(), 12);
    ASSERT_TRUE(back.pending().has_value());
    EXPECT_EQ(back.pending()->item, s.pending()->item);
    EXPECT_EQ(back.solver().beliefs(), s.solver().beliefs());
    EXPECT_EQ(back.solver().labeled_answers(), s.solver().labeled_answers());

    // Tampered pick.
    auto tampered = records;
    for (auto& rec : tampered) {
      if (rec["kind"] == "teach_shown" && rec["round"] == 2) {
        rec["item_index"] = rec["item_index"].get<int>() == 0 ? 1 : 0;
      }
    }
    ErrorKind kind{};
    const auto msg = error_of([&] { replay_session(tampered, registry); }, &kind);
    EXPECT_EQ(kind, ErrorKind::Conflict) << msg;
  }
}

TEST(Session, ReplayRejectsMalformedLogs) {
  DatasetRegistry registry;
  registry.add(small_dataset());
  std::vector<nlohmann::json> empty;
  EXPECT_THROW(replay_session(empty, registry), TeachError);
  std::vector<nlohmann::json> bad = {{{"kind", "teach_shown"}}};
  EXPECT_THROW(replay_session(bad, registry), TeachError);
}

TEST(Session, JsonlLogOnDisk) {
  TempDir dir;
  auto sink = std::make_shared<JsonlFileSink>(dir / "s.jsonl");
  auto s = Session::create("disk", config_for(StrategyKind::Eer), small_dataset(), fixed_clock(sink));
  const auto labels = small_dataset()->labels();
  run_through(s, [&](ItemIndex i) { return labels[i]; });
  const auto records = read_event_log(dir / "s.jsonl");
  ASSERT_EQ(records.size(), 1u + 18 + 60 + 1);
  std::set<std::string> kinds;
  for (const auto& r : records) {
    kinds.insert(r["kind"].get<std::string>());
    EXPECT_TRUE(r.contains("round"));
    EXPECT_TRUE(r.contains("ts_ms"));
  }
  EXPECT_EQ(kinds, (std::set<std::string>{"created", "teach_shown", "teach_answered", "test_shown",
                                          "test_answered", "finalized"}));
  EXPECT_EQ(result_to_json(s.finalize())["testing"].size(), 30u);
}
