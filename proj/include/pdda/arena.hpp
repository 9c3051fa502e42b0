#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pdda {

enum class ActionId : std::uint8_t {
    Idle = 0,
    MoveLeft = 1,
    MoveRight = 2,
    Jump = 3,
    Guard = 4,
    Punch = 5,
    Kick = 6,
    Special = 7,
};

inline constexpr int kNumActions = 8;

constexpr int to_code(ActionId a) { return static_cast<int>(a); }
ActionId action_from_code(int code);  // throws std::out_of_range outside 0..7
const char* action_name(ActionId a);

enum class Side : std::uint8_t { P1 = 0, P2 = 1 };
constexpr Side other(Side s) { return s == Side::P1 ? Side::P2 : Side::P1; }

enum class Phase : std::uint8_t { None = 0, Startup, Active, Recovery };
enum class Facing : std::uint8_t { Left = 0, Right = 1 };
enum class Winner : std::uint8_t { None = 0, P1, P2, Draw };
const char* winner_name(Winner w);

struct ActionSpec {
    ActionId action = ActionId::Idle;
    int startup_frames = 0;
    int active_frames = 0;
    int recovery_frames = 0;
    int damage = 0;
    int energy_cost = 0;
    int energy_gain_on_hit = 0;
    int reach = 0;
    int move_delta = 0;

    bool is_attack() const { return damage > 0; }
    int total_frames() const { return startup_frames + active_frames + recovery_frames; }
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EnvConfig {
    int hp_max = 400;
    int energy_max = 300;
    int stage_w = 960;
    int stage_h = 640;
    int round_frames = 3600;
    double guard_factor = 0.2;
    int body_w = 60;
    int body_h = 120;
    int vertical_band = 60;
    int jump_height = 120;
    // Spawn randomization in [0,1]; 0 gives the fixed spawns. Only the
    // background training environment sets this.
    double spawn_jitter = 0.0;
    std::array<ActionSpec, kNumActions> actions = default_actions();

    static std::array<ActionSpec, kNumActions> default_actions();
    // Degenerate configuration where any landed attack ends the round.
    static EnvConfig one_hit_ko();

    const ActionSpec& spec(ActionId a) const { return actions[to_code(a)]; }
    void validate() const;  // throws ConfigError
};

struct CharacterState {
    int x = 0;
    int y = 0;
    int hp = 0;
    int energy = 0;
    ActionId current_action = ActionId::Idle;
    Phase phase = Phase::None;
    int phase_frames_left = 0;
    Facing facing = Facing::Right;
    bool attack_connected = false;

    bool busy() const { return phase != Phase::None; }
    bool operator==(const CharacterState&) const = default;
};

struct GameState {
    std::int64_t frame = 0;
    CharacterState p1;
    CharacterState p2;
    int timer_frames_left = 0;
    std::uint64_t rng_state = 0;

    const CharacterState& ch(Side s) const { return s == Side::P1 ? p1 : p2; }
    CharacterState& ch(Side s) { return s == Side::P1 ? p1 : p2; }
    bool round_over() const { return p1.hp == 0 || p2.hp == 0 || timer_frames_left == 0; }
    bool operator==(const GameState&) const = default;
};

struct FeatureVector {
    static constexpr int kSize = 4;
    static constexpr int kDx = 0, kDy = 1, kSelfAction = 2, kOppAction = 3;
    std::array<double, kSize> values{};

    double dx() const { return values[kDx]; }
    double dy() const { return values[kDy]; }
    int self_action() const { return static_cast<int>(values[kSelfAction]); }
    int opp_action() const { return static_cast<int>(values[kOppAction]); }
    bool operator==(const FeatureVector&) const = default;
};

struct ObservationFrame {
    static constexpr int kWidth = 96;
    static constexpr int kHeight = 64;
    static constexpr int kSize = kWidth * kHeight;
    static constexpr std::uint8_t kP1Intensity = 180;
    static constexpr std::uint8_t kP2Intensity = 90;

    std::array<std::uint8_t, kSize> pixels{};

    std::uint8_t at(int row, int col) const { return pixels[row * kWidth + col]; }
    std::uint8_t& at(int row, int col) { return pixels[row * kWidth + col]; }
    bool operator==(const ObservationFrame&) const = default;
};

struct HitEvent {
    Side attacker;
    int damage;
};

struct StepOutcome {
    GameState next;
    std::vector<HitEvent> hit_events;
    double reward_p1 = 0.0;
    double reward_p2 = 0.0;
    bool round_over = false;
    Winner winner = Winner::None;
};

GameState new_game(const EnvConfig& config, std::uint64_t seed);

// Advances one frame. Throws std::logic_error if the round is already over.
StepOutcome step(const EnvConfig& config, const GameState& state, ActionId a1, ActionId a2);

double compute_reward(const EnvConfig& config, const GameState& prev, const GameState& next, Side side);

FeatureVector encode_features(const EnvConfig& config, const GameState& state, Side side);

ObservationFrame render_frame(const EnvConfig& config, const GameState& state);

// The state seen from the other side: characters swapped and x mirrored.
GameState mirrored(const EnvConfig& config, const GameState& state);

Winner decide_winner(const GameState& state);

std::uint64_t state_hash(const GameState& state);

}  // namespace pdda
