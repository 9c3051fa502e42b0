#include <gtest/gtest.h>

#include <sstream>

#include "pdda/orchestrator.hpp"

using namespace pdda;

namespace {

// A short, cheap match: small rounds so full-loop tests stay fast.
MatchConfig quick_config(std::int64_t interval, std::int64_t min_obs, int round_frames = 400, int rounds = 2) {
    MatchConfig c;
    c.env.round_frames = round_frames;
    c.rounds = rounds;
    c.schedule.interval = interval;
    c.schedule.min_observations = min_obs;
    c.budget_frames = 1;
    return c;
}

class ScriptedSource final : public PlayerSource {
public:
    explicit ScriptedSource(ActionId a, std::int64_t disconnect_at = -1) : a_(a), disconnect_at_(disconnect_at) {}
    ActionId next_action(const GameState&, std::int64_t frame) override {
        if (frame == disconnect_at_) throw PlayerDisconnected("socket closed");
        return a_;
    }

private:
    ActionId a_;
    std::int64_t disconnect_at_;
};

}  // namespace

TEST(SwapSchedule, Examples) {
    const auto idle = idle_snapshot(0), rl = idle_snapshot(1);
    SwapSchedule s{3, 0};
    EXPECT_EQ(swap_opponent(idle, rl, 5, s).version, 0u);
    EXPECT_EQ(swap_opponent(idle, rl, 6, s).version, 1u);
    s.min_observations = 100;
    EXPECT_EQ(swap_opponent(idle, rl, 6, s).version, 0u);
    EXPECT_EQ(swap_opponent(idle, rl, 102, s).version, 1u);
}

TEST(SwapSchedule, Validation) {
    EXPECT_THROW((SwapSchedule{0, 0}.validate()), ConfigError);
    EXPECT_THROW((SwapSchedule{1, -1}.validate()), ConfigError);
    EXPECT_NO_THROW((SwapSchedule{60, 300}.validate()));
}

TEST(SnapshotSlot, PublishLoadAndGeneration) {
    SnapshotSlot<int> slot;
    EXPECT_EQ(slot.load(), nullptr);
    slot.publish(std::make_shared<const int>(4));
    slot.publish(std::make_shared<const int>(5));
    EXPECT_EQ(*slot.load(), 5);
    EXPECT_EQ(slot.generation(), 2u);
}

TEST(BackgroundTrainer, ZeroBudgetChangesNothing) {
    BackgroundTrainer t(EnvConfig{}, policy::TrainConfig{}, idle_snapshot(), 1);
    const auto before = policy::params_hash(t.params());
    t.tick(0);
    EXPECT_EQ(t.stats().frames, 0);
    EXPECT_EQ(t.stats().updates, 0);
    EXPECT_EQ(policy::params_hash(t.params()), before);
}

TEST(BackgroundTrainer, CountsFramesExactlyAndUpdatesPerRollout) {
    policy::TrainConfig rl;
    rl.n_steps = 5;
    BackgroundTrainer t(EnvConfig{}, rl, idle_snapshot(), 2);
    t.tick(1000);
    EXPECT_EQ(t.stats().frames, 1000);
    // Idle opponent, no terminal within 1000 frames: one update per 5 decisions.
    EXPECT_EQ(t.stats().updates, 200);
    EXPECT_NE(policy::params_hash(t.params()), policy::params_hash(policy::policy_new(rl)));
    EXPECT_EQ(*t.latest_params(), t.params());
}

TEST(BackgroundTrainer, ActionRepeatAndEnvsScaleUpdates) {
    policy::TrainConfig rl;
    rl.n_steps = 5;
    rl.action_repeat = 4;
    rl.n_envs = 2;
    BackgroundTrainer t(EnvConfig{}, rl, idle_snapshot(), 2);
    t.tick(400);
    // 400 frames = 100 decisions = 50 per environment = 10 pooled updates.
    EXPECT_EQ(t.stats().updates, 10);
}

TEST(BackgroundTrainer, DeterministicGivenSeed) {
    auto run = [] {
        policy::TrainConfig rl;
        rl.seed = 9;
        BackgroundTrainer t(EnvConfig::one_hit_ko(), rl, rule_based_snapshot(EnvConfig::one_hit_ko(), Side::P1), 9, 128);
        t.tick(1500);
        return std::make_pair(policy::params_hash(t.params()), t.stats().episodes);
    };
    EXPECT_EQ(run(), run());
}

TEST(BackgroundTrainer, TruncatedEpisodesRespawn) {
    BackgroundTrainer t(EnvConfig{}, policy::TrainConfig{}, idle_snapshot(), 3, 100);
    t.tick(1000);
    EXPECT_EQ(t.stats().episodes, 10);  // every 100 frames, no KO against Idle
    EXPECT_EQ(t.stats().frames, 1000);
}

TEST(BackgroundTrainer, RejectsInvalidSettings) {
    policy::TrainConfig rl;
    rl.n_envs = 0;
    EXPECT_THROW(BackgroundTrainer(EnvConfig{}, rl, idle_snapshot(), 1), ConfigError);
    EXPECT_THROW(BackgroundTrainer(EnvConfig{}, policy::TrainConfig{}, idle_snapshot(), 1, -5), ConfigError);
}

TEST(PddaSession, NoSwapsBeforeMinObservations) {
    MatchConfig c = quick_config(1, 3601, 3600, 1);
    c.budget_frames = 0;
    ScriptedSource idle(ActionId::Idle);
    const auto result = run_match(idle, c, 5);
    EXPECT_TRUE(result.log.select<SwapRecord>().empty());
    for (const auto& f : result.log.select<FrameRecord>()) EXPECT_EQ(f.opponent_version, 0u);
}

TEST(PddaSession, FirstOpponentIsRuleBased) {
    PddaSession s(quick_config(1, 0), 3);
    EXPECT_EQ(s.opponent().kind, AgentKind::RuleBased);
    s.advance(ActionId::Idle);
    const auto frames = s.log().select<FrameRecord>();
    ASSERT_EQ(frames.size(), 1u);
    EXPECT_EQ(frames[0].opponent_version, 0u);
}

TEST(PddaSession, EveryFrameScheduleIncrementsVersion) {
    ScriptedSource player(ActionId::MoveRight);
    const auto result = run_match(player, quick_config(1, 0, 300, 1), 4);
    const auto frames = result.log.select<FrameRecord>();
    ASSERT_GT(frames.size(), 2u);
    for (std::size_t i = 1; i < frames.size(); ++i) ASSERT_EQ(frames[i].opponent_version, frames[i - 1].opponent_version + 1);
}

class SwapAlignment : public ::testing::TestWithParam<std::int64_t> {};

TEST_P(SwapAlignment, SwapsOnlyAtMultiplesOfInterval) {
    const std::int64_t k = GetParam();
    ScriptedSource player(ActionId::MoveRight);
    const auto result = run_match(player, quick_config(k, 100, 700, 2), 6);
    const auto swaps = result.log.select<SwapRecord>();
    ASSERT_FALSE(swaps.empty());
    for (const auto& s : swaps) {
        EXPECT_EQ(s.frame % k, 0);
        EXPECT_GE(s.frame, 100);
        EXPECT_EQ(s.kind, AgentKind::Rl);
    }
    std::uint64_t last = 0;
    std::int64_t expected_frame = 0;
    for (const auto& f : result.log.select<FrameRecord>()) {
        ASSERT_EQ(f.frame, expected_frame++);
        ASSERT_GE(f.opponent_version, last);
        if (f.opponent_version != last) ASSERT_EQ(f.frame % k, 0) << "version changed off schedule";
        last = f.opponent_version;
    }
}

INSTANTIATE_TEST_SUITE_P(Intervals, SwapAlignment, ::testing::Values(1, 60, 600));

TEST(PddaSession, SameSeedSameLog) {
    auto run = [] {
        ScriptedSource player(ActionId::Punch);
        return run_match(player, quick_config(60, 100), 11, "punch").log;
    };
    EXPECT_EQ(run(), run());
}

TEST(PddaSession, ZeroBudgetStillCompletes) {
    MatchConfig c = quick_config(60, 0, 300, 2);
    c.budget_frames = 0;
    ScriptedSource player(ActionId::Kick);
    const auto result = run_match(player, c, 12);
    EXPECT_EQ(result.log.select<RoundEndRecord>().size(), 2u);
    EXPECT_EQ(result.trainer.frames, 0);
}

TEST(PddaSession, DisconnectAbortsTheLog) {
    ScriptedSource player(ActionId::Idle, 50);
    const auto result = run_match(player, quick_config(60, 0), 13);
    EXPECT_TRUE(result.log.aborted);
    EXPECT_EQ(result.log.abort_reason, "socket closed");
    EXPECT_EQ(result.log.select<FrameRecord>().size(), 50u);
}

TEST(PddaSession, AdvanceAfterFinishThrows) {
    PddaSession s(quick_config(1, 0, 5, 1), 1);
    while (!s.finished()) s.advance(ActionId::Idle);
    EXPECT_THROW(s.advance(ActionId::Idle), std::logic_error);
}

TEST(PddaSession, RoundsRestartFromFreshState) {
    ScriptedSource player(ActionId::Guard);
    const auto result = run_match(player, quick_config(60, 0, 200, 3), 14);
    const auto ends = result.log.select<RoundEndRecord>();
    ASSERT_EQ(ends.size(), 3u);
    for (int r = 0; r < 3; ++r) EXPECT_EQ(ends[r].round, r);
    EXPECT_EQ(ends[2].frame, 599);
}

TEST(EpisodeLog, JsonlRoundTrip) {
    ScriptedSource player(ActionId::MoveRight);
    const auto result = run_match(player, quick_config(30, 60, 300, 1), 15, "mover");
    std::stringstream ss;
    write_jsonl(ss, result.log);
    const EpisodeLog back = read_jsonl(ss);
    EXPECT_EQ(back, result.log);
    std::stringstream again;
    write_jsonl(again, back);
    std::stringstream first;
    write_jsonl(first, result.log);
    EXPECT_EQ(again.str(), first.str());
}

TEST(EpisodeLog, ReadRejectsMalformedLines) {
    std::stringstream ss("{\"type\":\"frame\"\n");
    EXPECT_THROW(read_jsonl(ss), std::runtime_error);
}

TEST(MatchConfig, FingerprintReflectsSettings) {
    const MatchConfig a = quick_config(60, 300);
    MatchConfig b = a;
    EXPECT_EQ(config_fingerprint(a), config_fingerprint(b));
    b.rl.action_repeat = 2;
    EXPECT_NE(config_fingerprint(a), config_fingerprint(b));
}
