#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "pdda/agents.hpp"
#include "pdda/arena.hpp"
#include "pdda/imitation.hpp"
#include "pdda/personas.hpp"
#include "pdda/policy.hpp"

namespace pdda {

inline constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::max();

struct SwapSchedule {
    std::int64_t interval = 1;           // K: swap opportunities at frames divisible by K
    std::int64_t min_observations = 300; // no swap before this many imitation examples
    void validate() const;               // throws ConfigError

    bool due(std::int64_t frame) const { return frame >= min_observations && frame % interval == 0; }
};

// Returns `candidate` when the schedule allows a swap at `frame`, else `current`.
AgentSnapshot swap_opponent(const AgentSnapshot& current, const AgentSnapshot& candidate, std::int64_t frame,
                            const SwapSchedule& schedule);

// Single-value mailbox for handing immutable snapshots between threads.
template <class T>
class SnapshotSlot {
public:
    void publish(std::shared_ptr<const T> value) {
        std::lock_guard lock(mu_);
        value_ = std::move(value);
        ++generation_;
    }
    std::shared_ptr<const T> load() const {
        std::lock_guard lock(mu_);
        return value_;
    }
    std::uint64_t generation() const {
        std::lock_guard lock(mu_);
        return generation_;
    }

private:
    mutable std::mutex mu_;
    std::shared_ptr<const T> value_;
    std::uint64_t generation_ = 0;
};

struct TrainerStats {
    std::int64_t frames = 0;
    std::int64_t updates = 0;
    std::int64_t episodes = 0;
    std::int64_t episode_wins = 0;  // training episodes the learner won
    std::int64_t divergence_resets = 0;
    policy::LossReport last_loss;
};

// Self-play style trainer: the learner is always p2 and faces a frozen
// snapshot on p1. Opponent changes take effect at the next episode boundary.
// tick() must only be called from one thread; set_opponent() and
// latest_params() may be called from any thread.
class BackgroundTrainer {
public:
    static constexpr std::int64_t kCheckpointEvery = 100;  // updates between last-good copies

    // episode_frames > 0 cuts training episodes after that many frames and
    // respawns; the cut is a truncation, so the return is bootstrapped.
    BackgroundTrainer(EnvConfig env, policy::TrainConfig rl, AgentSnapshot opponent, std::uint64_t seed,
                      std::int64_t episode_frames = 0);

    void set_opponent(AgentSnapshot opponent);
    // Trains for exactly `budget_frames` environment frames.
    void tick(std::int64_t budget_frames);

    std::shared_ptr<const policy::NetworkParams> latest_params() const { return published_.load(); }
    const policy::NetworkParams& params() const { return params_; }
    void set_params(policy::NetworkParams params);
    const TrainerStats& stats() const { return stats_; }
    const EnvConfig& env() const { return env_; }

private:
    struct EnvSlot {
        std::optional<GameState> game;
        std::int64_t game_frames = 0;
        std::optional<policy::Transition> held;  // decision being repeated
        int held_frames = 0;
        bool ready = false;  // rollout complete, waiting for the pooled update
    };

    void start_episode(EnvSlot& slot);
    void update();
    void recover();

    EnvConfig env_;
    policy::TrainConfig rl_;
    std::uint64_t seed_;
    Rng rng_;

    policy::NetworkParams params_;
    policy::RmsPropState optimizer_;
    policy::NetworkParams last_good_params_;
    policy::RmsPropState last_good_optimizer_;
    SnapshotSlot<policy::NetworkParams> published_;

    mutable std::mutex opponent_mu_;
    std::optional<AgentSnapshot> pending_opponent_;
    AgentSnapshot opponent_;

    std::int64_t episode_frames_;
    std::vector<EnvSlot> envs_;
    std::vector<policy::RolloutBuffer> rollouts_;  // one per environment
    std::size_t cursor_ = 0;
    std::uint64_t games_started_ = 0;
    TrainerStats stats_;
};

struct MatchConfig {
    EnvConfig env;
    imitation::ForestConfig imitation;
    policy::TrainConfig rl;
    SwapSchedule schedule;
    std::int64_t budget_frames = 4;       // training frames granted per live frame
    int rounds = 1;
    double train_spawn_jitter = 1.0;      // spawn jitter inside the trainer's private arena
    std::int64_t train_episode_frames = 256; // trainer episode cut (0 = full rounds)
    std::int64_t imitation_refresh = 300; // live frames between imitation snapshots handed to the trainer

    void validate() const;  // throws ConfigError
};

std::string config_fingerprint(const MatchConfig& config);

struct FrameRecord {
    std::int64_t frame = 0;
    int round = 0;
    FeatureVector features;
    ActionId player_action = ActionId::Idle;
    ActionId opponent_action = ActionId::Idle;
    double reward_p1 = 0.0;
    int hp_p1 = 0;
    int hp_p2 = 0;
    std::uint64_t opponent_version = 0;
    bool operator==(const FrameRecord&) const = default;
};

struct SwapRecord {
    std::int64_t frame = 0;
    std::uint64_t version = 0;
    AgentKind kind = AgentKind::Rl;
    bool operator==(const SwapRecord&) const = default;
};

struct DriftRecord {
    std::int64_t frame = 0;
    int member = 0;
    bool operator==(const DriftRecord&) const = default;
};

struct RoundEndRecord {
    std::int64_t frame = 0;
    int round = 0;
    Winner winner = Winner::None;
    int hp_p1 = 0;
    int hp_p2 = 0;
    bool operator==(const RoundEndRecord&) const = default;
};

using LogRecord = std::variant<FrameRecord, SwapRecord, DriftRecord, RoundEndRecord>;

struct EpisodeLog {
    std::uint64_t seed = 0;
    std::string config_fingerprint;
    std::string persona;
    std::vector<LogRecord> records;
    bool aborted = false;
    std::string abort_reason;

    template <class R>
    std::vector<R> select() const {
        std::vector<R> out;
        for (const auto& r : records)
            if (const R* p = std::get_if<R>(&r)) out.push_back(*p);
        return out;
    }
    bool operator==(const EpisodeLog&) const = default;
};

// One JSON object per line, each with a "type" field.
void write_jsonl(std::ostream& out, const EpisodeLog& log);
EpisodeLog read_jsonl(std::istream& in);  // throws std::runtime_error

class PlayerDisconnected : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Where the human side's inputs come from. May throw PlayerDisconnected.
class PlayerSource {
public:
    virtual ~PlayerSource() = default;
    virtual ActionId next_action(const GameState& state, std::int64_t frame) = 0;
};

class PersonaSource final : public PlayerSource {
public:
    PersonaSource(Persona persona, EnvConfig env) : persona_(std::move(persona)), env_(std::move(env)) {}
    ActionId next_action(const GameState& state, std::int64_t frame) override {
        return persona_act(persona_, env_, state, Side::P1, frame);
    }

private:
    Persona persona_;
    EnvConfig env_;
};

// The adaptive loop for one match: the player is p1, the opponent p2.
// Every frame feeds the imitation learner; the opponent is replaced by the
// latest trained policy whenever the swap schedule allows.
class PddaSession {
public:
    // With inline_training off the caller drives trainer().tick() itself.
    PddaSession(MatchConfig config, std::uint64_t seed, bool inline_training = true);

    // Plays one frame. Throws std::logic_error once the match is finished.
    void advance(ActionId player_action);
    void abort(const std::string& reason);

    bool finished() const { return finished_; }
    const GameState& state() const { return state_; }
    std::int64_t frame() const { return frame_; }
    int round() const { return round_; }
    const AgentSnapshot& opponent() const { return opponent_; }
    const MatchConfig& config() const { return config_; }
    const imitation::ForestModel& forest() const { return forest_; }
    BackgroundTrainer& trainer() { return trainer_; }
    const BackgroundTrainer& trainer() const { return trainer_; }
    const EpisodeLog& log() const { return log_; }
    // Hit events and the finished-round record of the last advance(), for live clients.
    const StepOutcome& last_outcome() const { return last_outcome_; }

private:
    MatchConfig config_;
    std::uint64_t seed_;
    bool inline_training_;
    imitation::ForestModel forest_;
    BackgroundTrainer trainer_;
    AgentSnapshot opponent_;
    GameState state_;
    StepOutcome last_outcome_;
    std::int64_t frame_ = 0;
    int round_ = 0;
    bool finished_ = false;
    EpisodeLog log_;
};

struct MatchResult {
    EpisodeLog log;
    imitation::ForestModel forest;
    policy::NetworkParams params;
    TrainerStats trainer;
};

// Called after every frame, e.g. to sample learner statistics.
using FrameObserver = std::function<void(const PddaSession&)>;

MatchResult run_match(PlayerSource& player, const MatchConfig& config, std::uint64_t seed,
                      const std::string& persona_label = "", const FrameObserver& observer = {});

}  // namespace pdda
