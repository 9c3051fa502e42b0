#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "pdda/arena.hpp"
#include "pdda/harness.hpp"
#include "pdda/rng.hpp"

using namespace pdda;

namespace {

// Both characters idle at x1 and x2, nothing in progress.
GameState placed(const EnvConfig& cfg, int x1, int x2) {
    GameState s = new_game(cfg, 1);
    s.p1.x = x1;
    s.p2.x = x2;
    return s;
}

// Steps with p1 holding `a1` and p2 holding `a2` until p2 loses HP; returns the
// 0-based frame of the hit or -1.
int first_hit_frame(const EnvConfig& cfg, GameState s, ActionId a1, ActionId a2, StepOutcome* hit = nullptr) {
    for (int f = 0; f < 60; ++f) {
        StepOutcome out = step(cfg, s, a1, a2);
        if (out.next.p2.hp < s.p2.hp) {
            if (hit) *hit = out;
            return f;
        }
        s = out.next;
    }
    return -1;
}

}  // namespace

TEST(NewGame, SpawnsAtQuarterPointsWithFullHp) {
    const EnvConfig cfg;
    const GameState s = new_game(cfg, 42);
    EXPECT_EQ(s.p1.hp, 400);
    EXPECT_EQ(s.p2.hp, 400);
    EXPECT_EQ(s.p1.energy, 0);
    EXPECT_EQ(s.p2.energy, 0);
    EXPECT_EQ(s.p1.x, 960 / 4);
    EXPECT_EQ(s.p2.x, 960 * 3 / 4);
    EXPECT_EQ(s.frame, 0);
    EXPECT_EQ(s.p1.facing, Facing::Right);
    EXPECT_EQ(s.p2.facing, Facing::Left);
}

TEST(NewGame, SameSeedSameState) {
    const EnvConfig cfg;
    EXPECT_EQ(new_game(cfg, 42), new_game(cfg, 42));
    EXPECT_EQ(state_hash(new_game(cfg, 42)), state_hash(new_game(cfg, 42)));
}

TEST(NewGame, RejectsInvalidConfig) {
    EnvConfig cfg;
    cfg.hp_max = 0;
    EXPECT_THROW(new_game(cfg, 1), ConfigError);
    cfg = EnvConfig{};
    cfg.stage_w = 0;
    EXPECT_THROW(new_game(cfg, 1), ConfigError);
    cfg = EnvConfig{};
    cfg.spawn_jitter = 1.5;
    EXPECT_THROW(new_game(cfg, 1), ConfigError);
}

TEST(NewGame, JitterKeepsSidesAndBounds) {
    EnvConfig cfg;
    cfg.spawn_jitter = 1.0;
    std::set<int> gaps;
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
        const GameState s = new_game(cfg, seed);
        const int gap = s.p2.x - s.p1.x;
        EXPECT_GE(gap, cfg.body_w);
        EXPECT_LE(gap, 480);
        EXPECT_GE(s.p1.x, cfg.body_w / 2);
        EXPECT_LE(s.p2.x, cfg.stage_w - cfg.body_w / 2);
        gaps.insert(gap);
    }
    EXPECT_GT(gaps.size(), 100u);
}

TEST(Step, BothIdleNothingHappens) {
    const EnvConfig cfg;
    const GameState s = new_game(cfg, 42);
    const StepOutcome out = step(cfg, s, ActionId::Idle, ActionId::Idle);
    EXPECT_EQ(out.next.p1.hp, 400);
    EXPECT_EQ(out.next.p2.hp, 400);
    EXPECT_EQ(out.reward_p1, 0.0);
    EXPECT_TRUE(out.hit_events.empty());
    EXPECT_EQ(out.next.frame, 1);
    EXPECT_EQ(out.next.timer_frames_left, cfg.round_frames - 1);
}

TEST(Step, PunchLandsAfterStartupForTenDamage) {
    const EnvConfig cfg;
    StepOutcome hit;
    // Hand trace: initiation on frame 0 starts 3 startup frames; the first
    // active frame is frame 3.
    const int f = first_hit_frame(cfg, placed(cfg, 300, 360), ActionId::Punch, ActionId::Idle, &hit);
    EXPECT_EQ(f, cfg.spec(ActionId::Punch).startup_frames);
    EXPECT_EQ(hit.next.p2.hp, 390);
    EXPECT_DOUBLE_EQ(hit.reward_p1, 10.0 / 400.0);
    EXPECT_DOUBLE_EQ(hit.reward_p1, 0.025);
    ASSERT_EQ(hit.hit_events.size(), 1u);
    EXPECT_EQ(hit.hit_events[0].attacker, Side::P1);
    EXPECT_EQ(hit.hit_events[0].damage, 10);
    EXPECT_EQ(hit.next.p1.energy, 10);
}

TEST(Step, PunchHitsOnlyOncePerAttack) {
    const EnvConfig cfg;
    GameState s = placed(cfg, 300, 360);
    const ActionSpec& punch = cfg.spec(ActionId::Punch);
    for (int f = 0; f < punch.total_frames(); ++f) s = step(cfg, s, ActionId::Punch, ActionId::Idle).next;
    EXPECT_EQ(s.p2.hp, 390);
}

TEST(Step, GuardCutsDamageToFloorOfFactor) {
    const EnvConfig cfg;
    StepOutcome hit;
    first_hit_frame(cfg, placed(cfg, 300, 360), ActionId::Punch, ActionId::Guard, &hit);
    EXPECT_EQ(hit.next.p2.hp, 400 - static_cast<int>(std::floor(10 * 0.2)));
}

TEST(Step, OutOfReachPunchWhiffs) {
    const EnvConfig cfg;
    EXPECT_EQ(first_hit_frame(cfg, placed(cfg, 300, 600), ActionId::Punch, ActionId::Idle), -1);
}

TEST(Step, SpecialNeedsEnergy) {
    const EnvConfig cfg;
    GameState s = placed(cfg, 300, 400);
    const StepOutcome dry = step(cfg, s, ActionId::Special, ActionId::Idle);
    EXPECT_NE(dry.next.p1.current_action, ActionId::Special);
    s.p1.energy = 150;
    const StepOutcome charged = step(cfg, s, ActionId::Special, ActionId::Idle);
    EXPECT_EQ(charged.next.p1.current_action, ActionId::Special);
    EXPECT_EQ(charged.next.p1.energy, 50);
}

TEST(Step, MoveAdvancesSixUnits) {
    const EnvConfig cfg;
    const GameState s = placed(cfg, 300, 700);
    const StepOutcome out = step(cfg, s, ActionId::MoveRight, ActionId::MoveLeft);
    EXPECT_EQ(out.next.p1.x, 306);
    EXPECT_EQ(out.next.p2.x, 694);
}

TEST(Step, SteppingFinishedRoundThrows) {
    const EnvConfig cfg;
    GameState s = new_game(cfg, 1);
    s.p2.hp = 0;
    EXPECT_THROW(step(cfg, s, ActionId::Idle, ActionId::Idle), std::logic_error);
}

TEST(Step, TimerExpiryEndsRoundAsDraw) {
    EnvConfig cfg;
    cfg.round_frames = 10;
    GameState s = new_game(cfg, 1);
    StepOutcome out;
    for (int i = 0; i < 10; ++i) {
        out = step(cfg, s, ActionId::Idle, ActionId::Idle);
        s = out.next;
    }
    EXPECT_TRUE(out.round_over);
    EXPECT_EQ(out.winner, Winner::Draw);
}

TEST(ComputeReward, MatchesHpDifferenceOverMax) {
    const EnvConfig cfg;
    const GameState prev = new_game(cfg, 1);
    GameState next = prev;
    EXPECT_EQ(compute_reward(cfg, prev, next, Side::P1), 0.0);
    next.p2.hp -= 10;
    EXPECT_DOUBLE_EQ(compute_reward(cfg, prev, next, Side::P1), 0.025);
    next = prev;
    next.p1.hp -= 20;
    EXPECT_DOUBLE_EQ(compute_reward(cfg, prev, next, Side::P1), -0.05);
}

TEST(EncodeFeatures, RelativePositionExamples) {
    const EnvConfig cfg;
    GameState s = placed(cfg, 100, 580);
    EXPECT_DOUBLE_EQ(encode_features(cfg, s, Side::P1).dx(), (580.0 - 100.0) / 960.0);
    EXPECT_DOUBLE_EQ(encode_features(cfg, s, Side::P1).dx(), 0.5);
    s = placed(cfg, 300, 300);
    const FeatureVector f = encode_features(cfg, s, Side::P1);
    EXPECT_EQ(f.dx(), 0.0);
    EXPECT_EQ(f.dy(), 0.0);
}

TEST(RenderFrame, CornerExamples) {
    const EnvConfig cfg;
    GameState s = new_game(cfg, 1);
    EXPECT_EQ(render_frame(cfg, s).at(0, 0), 255);
    s.p1.hp = 200;
    EXPECT_EQ(render_frame(cfg, s).at(0, 0), 127);
    EXPECT_EQ(render_frame(cfg, s).at(0, 94), 0);
}

TEST(RenderFrame, BodiesAtDownscaledPositions) {
    const EnvConfig cfg;
    const GameState s = placed(cfg, 300, 700);
    const ObservationFrame f = render_frame(cfg, s);
    const int ground_row = ObservationFrame::kHeight - 1;
    EXPECT_EQ(f.at(ground_row, 300 / 10), ObservationFrame::kP1Intensity);
    EXPECT_EQ(f.at(ground_row, 700 / 10), ObservationFrame::kP2Intensity);
    EXPECT_EQ(f.at(ground_row, 500 / 10), 0);
    EXPECT_EQ(f.pixels.size(), 6144u);
}

// Property checks over random action streams.
class ArenaProperty : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(ArenaProperty, ZeroSumBoundedMonotoneAndTerminating) {
    EnvConfig cfg;
    cfg.round_frames = 900;
    Rng rng(GetParam());
    GameState s = new_game(cfg, GetParam());
    int frames = 0;
    while (true) {
        const auto a1 = static_cast<ActionId>(rng.below(kNumActions));
        const auto a2 = static_cast<ActionId>(rng.below(kNumActions));
        const StepOutcome out = step(cfg, s, a1, a2);
        ++frames;
        ASSERT_EQ(out.reward_p1 + out.reward_p2, 0.0);
        for (Side side : {Side::P1, Side::P2}) {
            const CharacterState& c = out.next.ch(side);
            ASSERT_LE(c.hp, s.ch(side).hp);
            ASSERT_GE(c.hp, 0);
            ASSERT_LE(c.energy, cfg.energy_max);
            ASSERT_GE(c.energy, 0);
            ASSERT_GE(c.x, cfg.body_w / 2);
            ASSERT_LE(c.x, cfg.stage_w - cfg.body_w / 2);
        }
        ASSERT_LE(out.next.p1.x, out.next.p2.x) << "characters crossed";
        ASSERT_EQ(out.round_over, out.next.p1.hp == 0 || out.next.p2.hp == 0 || out.next.timer_frames_left == 0);
        s = out.next;
        if (out.round_over) break;
    }
    EXPECT_LE(frames, cfg.round_frames);
}

TEST_P(ArenaProperty, ReplayIsBitwiseIdentical) {
    const EnvConfig cfg;
    auto run = [&] {
        Rng rng(GetParam());
        GameState s = new_game(cfg, GetParam());
        std::vector<std::uint64_t> hashes;
        for (int i = 0; i < 600 && !s.round_over(); ++i) {
            const auto a1 = static_cast<ActionId>(rng.below(kNumActions));
            const auto a2 = static_cast<ActionId>(rng.below(kNumActions));
            s = step(cfg, s, a1, a2).next;
            hashes.push_back(state_hash(s));
        }
        return hashes;
    };
    EXPECT_EQ(run(), run());
}

TEST_P(ArenaProperty, CornerPixelsAndAntisymmetryOnRandomStates) {
    const EnvConfig cfg;
    Rng rng(GetParam() + 100);
    for (int i = 0; i < 200; ++i) {
        const GameState s = harness::random_state(cfg, rng);
        const ObservationFrame f = render_frame(cfg, s);
        // Exact rational floor(v / max * 255).
        auto oracle = [](long long v, long long max) { return static_cast<int>((v * 255) / max); };
        ASSERT_EQ(f.at(0, 0), oracle(s.p1.hp, cfg.hp_max));
        ASSERT_EQ(f.at(0, 1), oracle(s.p1.energy, cfg.energy_max));
        ASSERT_EQ(f.at(0, 95), oracle(s.p2.hp, cfg.hp_max));
        ASSERT_EQ(f.at(0, 94), oracle(s.p2.energy, cfg.energy_max));
        const FeatureVector a = encode_features(cfg, s, Side::P1);
        const FeatureVector b = encode_features(cfg, s, Side::P2);
        ASSERT_EQ(a.dx(), -b.dx());
        ASSERT_EQ(a.dy(), -b.dy());
        ASSERT_EQ(a.self_action(), b.opp_action());
        ASSERT_GE(a.dx(), -1.0);
        ASSERT_LE(a.dx(), 1.0);
    }
}

INSTANTIATE_TEST_SUITE_P(Seeds, ArenaProperty, ::testing::Values(1u, 2u, 3u, 17u, 123456789u));
