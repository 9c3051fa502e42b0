#include "pdda/arena.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "pdda/rng.hpp"

namespace pdda {

namespace {

constexpr const char* kActionNames[kNumActions] = {
    "Idle", "MoveLeft", "MoveRight", "Jump", "Guard", "Punch", "Kick", "Special",
};

void face_opponent(CharacterState& self, const CharacterState& opp) {
    if (opp.x > self.x) self.facing = Facing::Right;
    else if (opp.x < self.x) self.facing = Facing::Left;
}

void enter_phase(const ActionSpec& spec, CharacterState& c, Phase from) {
    // Walks forward from `from`, skipping zero-length phases.
    Phase p = from;
    while (true) {
        int len = 0;
        switch (p) {
            case Phase::Startup: len = spec.startup_frames; break;
            case Phase::Active: len = spec.active_frames; break;
            case Phase::Recovery: len = spec.recovery_frames; break;
            case Phase::None: len = 0; break;
        }
        if (p == Phase::None || len > 0) {
            c.phase = p;
            c.phase_frames_left = len;
            return;
        }
        p = static_cast<Phase>(static_cast<int>(p) + 1 > 3 ? 0 : static_cast<int>(p) + 1);
    }
}

void initiate(const EnvConfig& cfg, CharacterState& c, ActionId a) {
    if (c.busy()) return;
    const ActionSpec& spec = cfg.spec(a);
    if (spec.energy_cost > c.energy) a = ActionId::Idle;
    c.current_action = a;
    c.attack_connected = false;
    const ActionSpec& chosen = cfg.spec(a);
    c.energy -= chosen.energy_cost;
    if (chosen.total_frames() > 0) enter_phase(chosen, c, Phase::Startup);
}

bool attack_hits(const EnvConfig& cfg, const CharacterState& att, const CharacterState& def) {
    if (att.phase != Phase::Active || att.attack_connected) return false;
    const ActionSpec& spec = cfg.spec(att.current_action);
    if (!spec.is_attack()) return false;
    if (std::abs(att.y - def.y) > cfg.vertical_band) return false;
    int lo = att.x, hi = att.x + spec.reach;
    if (att.facing == Facing::Left) {
        lo = att.x - spec.reach;
        hi = att.x;
    }
    const int half = cfg.body_w / 2;
    return lo <= def.x + half && hi >= def.x - half;
}

int guarded_damage(const EnvConfig& cfg, int damage, const CharacterState& def) {
    if (def.current_action == ActionId::Guard && !def.busy())
        return static_cast<int>(std::floor(damage * cfg.guard_factor + 1e-9));
    return damage;
}

void advance_phase(const EnvConfig& cfg, CharacterState& c) {
    if (!c.busy()) return;
    if (--c.phase_frames_left > 0) return;
    const ActionSpec& spec = cfg.spec(c.current_action);
    switch (c.phase) {
        case Phase::Startup: enter_phase(spec, c, Phase::Active); break;
        case Phase::Active: enter_phase(spec, c, Phase::Recovery); break;
        default: enter_phase(spec, c, Phase::None); break;
    }
    if (c.phase == Phase::None) {
        c.current_action = ActionId::Idle;
        c.y = 0;
    }
}

}  // namespace

ActionId action_from_code(int code) {
    if (code < 0 || code >= kNumActions) throw std::out_of_range("action code out of range: " + std::to_string(code));
    return static_cast<ActionId>(code);
}

const char* action_name(ActionId a) { return kActionNames[to_code(a)]; }

const char* winner_name(Winner w) {
    switch (w) {
        case Winner::P1: return "p1";
        case Winner::P2: return "p2";
        case Winner::Draw: return "draw";
        default: return "none";
    }
}

std::array<ActionSpec, kNumActions> EnvConfig::default_actions() {
    std::array<ActionSpec, kNumActions> t{};
    for (int i = 0; i < kNumActions; ++i) t[i].action = static_cast<ActionId>(i);
    t[to_code(ActionId::MoveLeft)].move_delta = -6;
    t[to_code(ActionId::MoveRight)].move_delta = 6;
    t[to_code(ActionId::Jump)].active_frames = 24;
    auto& punch = t[to_code(ActionId::Punch)];
    punch.startup_frames = 3, punch.active_frames = 2, punch.recovery_frames = 8;
    punch.damage = 10, punch.reach = 80, punch.energy_gain_on_hit = 10;
    auto& kick = t[to_code(ActionId::Kick)];
    kick.startup_frames = 5, kick.active_frames = 3, kick.recovery_frames = 12;
    kick.damage = 20, kick.reach = 100, kick.energy_gain_on_hit = 20;
    auto& special = t[to_code(ActionId::Special)];
    special.startup_frames = 10, special.active_frames = 4, special.recovery_frames = 20;
    special.damage = 50, special.reach = 140, special.energy_cost = 100;
    return t;
}

EnvConfig EnvConfig::one_hit_ko() {
    EnvConfig c;
    c.hp_max = 10;
    return c;
}

void EnvConfig::validate() const {
    if (hp_max <= 0) throw ConfigError("env: hp_max must be positive");
    if (energy_max <= 0) throw ConfigError("env: energy_max must be positive");
    if (stage_w <= 0 || stage_h <= 0) throw ConfigError("env: stage dimensions must be positive");
    if (round_frames <= 0) throw ConfigError("env: round_frames must be positive");
    if (guard_factor < 0.0 || guard_factor > 1.0) throw ConfigError("env: guard_factor must be in [0,1]");
    if (body_w <= 0 || body_h <= 0 || body_w >= stage_w / 2) throw ConfigError("env: invalid body size");
    if (spawn_jitter < 0.0 || spawn_jitter > 1.0) throw ConfigError("env: spawn_jitter must be in [0,1]");
    for (int i = 0; i < kNumActions; ++i) {
        const ActionSpec& s = actions[i];
        if (to_code(s.action) != i) throw ConfigError("env: action table out of order");
        if (s.startup_frames < 0 || s.active_frames < 0 || s.recovery_frames < 0)
            throw ConfigError("env: negative frame count");
        if (s.damage < 0 || s.energy_cost < 0 || s.energy_gain_on_hit < 0 || s.reach < 0)
            throw ConfigError("env: negative action parameter");
        bool special = s.action == ActionId::Special;
        if (special != (s.energy_cost > 0)) throw ConfigError("env: only Special may cost energy");
    }
}

GameState new_game(const EnvConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    GameState s;
    s.timer_frames_left = config.round_frames;
    const int half = config.body_w / 2;
    int x1 = config.stage_w / 4;
    int x2 = config.stage_w * 3 / 4;
    if (config.spawn_jitter > 0.0) {
        // The gap shrinks toward body contact by up to `spawn_jitter` of its
        // slack, and the pair slides sideways by the same fraction of the room
        // left. p1 always stays on the left.
        const int gap0 = x2 - x1;
        const int gap = gap0 - static_cast<int>(std::lround(rng.uniform() * config.spawn_jitter * (gap0 - config.body_w)));
        const int lo = half, hi = config.stage_w - half - gap;
        const int base = (x1 + x2 - gap) / 2;
        const int room = std::min(base - lo, hi - base);
        const int shift = static_cast<int>(std::lround((rng.uniform() * 2.0 - 1.0) * config.spawn_jitter * room));
        x1 = std::clamp(base + shift, lo, hi);
        x2 = x1 + gap;
    }
    for (Side side : {Side::P1, Side::P2}) {
        CharacterState& c = s.ch(side);
        c.hp = config.hp_max;
        c.x = side == Side::P1 ? x1 : x2;
        c.facing = side == Side::P1 ? Facing::Right : Facing::Left;
    }
    s.rng_state = rng.state();
    return s;
}

StepOutcome step(const EnvConfig& cfg, const GameState& state, ActionId a1, ActionId a2) {
    if (state.round_over()) throw std::logic_error("step: round is already over");
    StepOutcome out;
    GameState& n = out.next;
    n = state;

    // (1) initiation
    for (Side side : {Side::P1, Side::P2}) {
        CharacterState& c = n.ch(side);
        if (!c.busy()) face_opponent(c, n.ch(other(side)));
        initiate(cfg, c, side == Side::P1 ? a1 : a2);
    }

    // (2) movement
    const int half = cfg.body_w / 2;
    const CharacterState before1 = n.p1, before2 = n.p2;
    for (Side side : {Side::P1, Side::P2}) {
        CharacterState& c = n.ch(side);
        if (c.busy()) {
            if (c.current_action == ActionId::Jump) {
                const int total = cfg.spec(ActionId::Jump).active_frames;
                const int t = total - c.phase_frames_left + 1;
                c.y = static_cast<int>(4LL * cfg.jump_height * t * (total - t) / (static_cast<long long>(total) * total));
            }
            continue;
        }
        const int delta = cfg.spec(c.current_action).move_delta;
        if (delta != 0) c.x = std::clamp(c.x + delta, half, cfg.stage_w - half);
    }
    const int gap = std::abs(n.p1.x - n.p2.x);
    if (gap < cfg.body_w && gap < std::abs(before1.x - before2.x)) {
        // Bodies block each other at every height, so the characters never
        // swap sides; cancel this frame's horizontal moves.
        n.p1.x = before1.x;
        n.p2.x = before2.x;
    }

    // (3) hit resolution, simultaneous
    const bool hit1 = attack_hits(cfg, n.p1, n.p2);
    const bool hit2 = attack_hits(cfg, n.p2, n.p1);
    int dmg_to_p2 = hit1 ? guarded_damage(cfg, cfg.spec(n.p1.current_action).damage, n.p2) : 0;
    int dmg_to_p1 = hit2 ? guarded_damage(cfg, cfg.spec(n.p2.current_action).damage, n.p1) : 0;
    if (hit1) out.hit_events.push_back({Side::P1, dmg_to_p2});
    if (hit2) out.hit_events.push_back({Side::P2, dmg_to_p1});
    n.p1.hp = std::max(0, n.p1.hp - dmg_to_p1);
    n.p2.hp = std::max(0, n.p2.hp - dmg_to_p2);

    // (4) energy gain for landing a hit
    if (hit1) {
        n.p1.attack_connected = true;
        n.p1.energy = std::min(cfg.energy_max, n.p1.energy + cfg.spec(n.p1.current_action).energy_gain_on_hit);
    }
    if (hit2) {
        n.p2.attack_connected = true;
        n.p2.energy = std::min(cfg.energy_max, n.p2.energy + cfg.spec(n.p2.current_action).energy_gain_on_hit);
    }

    // (5) phase and timer bookkeeping
    advance_phase(cfg, n.p1);
    advance_phase(cfg, n.p2);
    n.frame = state.frame + 1;
    n.timer_frames_left = state.timer_frames_left - 1;

    out.reward_p1 = compute_reward(cfg, state, n, Side::P1);
    out.reward_p2 = -out.reward_p1;
    out.round_over = n.round_over();
    out.winner = out.round_over ? decide_winner(n) : Winner::None;
    return out;
}

double compute_reward(const EnvConfig& config, const GameState& prev, const GameState& next, Side side) {
    const Side opp = other(side);
    const double hp = config.hp_max;
    return (prev.ch(opp).hp - next.ch(opp).hp) / hp - (prev.ch(side).hp - next.ch(side).hp) / hp;
}

Winner decide_winner(const GameState& s) {
    if (!s.round_over()) return Winner::None;
    if (s.p1.hp > s.p2.hp) return Winner::P1;
    if (s.p2.hp > s.p1.hp) return Winner::P2;
    return Winner::Draw;
}

FeatureVector encode_features(const EnvConfig& config, const GameState& state, Side side) {
    const CharacterState& self = state.ch(side);
    const CharacterState& opp = state.ch(other(side));
    FeatureVector f;
    f.values[FeatureVector::kDx] = static_cast<double>(opp.x - self.x) / config.stage_w;
    f.values[FeatureVector::kDy] = static_cast<double>(opp.y - self.y) / config.stage_h;
    f.values[FeatureVector::kSelfAction] = to_code(self.current_action);
    f.values[FeatureVector::kOppAction] = to_code(opp.current_action);
    return f;
}

namespace {

void draw_body(const EnvConfig& cfg, const CharacterState& c, std::uint8_t intensity, ObservationFrame& frame) {
    const int half = cfg.body_w / 2;
    const int c0 = std::max(0, (c.x - half) / 10);
    const int c1 = std::min(ObservationFrame::kWidth - 1, (c.x + half - 1) / 10);
    const int r_lo = std::max(0, c.y / 10);
    const int r_hi = std::min(ObservationFrame::kHeight - 1, (c.y + cfg.body_h - 1) / 10);
    for (int level = r_lo; level <= r_hi; ++level) {
        const int row = ObservationFrame::kHeight - 1 - level;
        for (int col = c0; col <= c1; ++col) frame.at(row, col) = intensity;
    }
}

std::uint8_t scaled(int value, int max) { return static_cast<std::uint8_t>(static_cast<long long>(value) * 255 / max); }

}  // namespace

ObservationFrame render_frame(const EnvConfig& config, const GameState& state) {
    ObservationFrame f;
    draw_body(config, state.p2, ObservationFrame::kP2Intensity, f);
    draw_body(config, state.p1, ObservationFrame::kP1Intensity, f);
    f.at(0, 0) = scaled(state.p1.hp, config.hp_max);
    f.at(0, 1) = scaled(state.p1.energy, config.energy_max);
    f.at(0, ObservationFrame::kWidth - 1) = scaled(state.p2.hp, config.hp_max);
    f.at(0, ObservationFrame::kWidth - 2) = scaled(state.p2.energy, config.energy_max);
    return f;
}

GameState mirrored(const EnvConfig& config, const GameState& state) {
    GameState m = state;
    m.p1 = state.p2;
    m.p2 = state.p1;
    for (CharacterState* c : {&m.p1, &m.p2}) {
        c->x = config.stage_w - c->x;
        c->facing = c->facing == Facing::Left ? Facing::Right : Facing::Left;
        if (c->current_action == ActionId::MoveLeft) c->current_action = ActionId::MoveRight;
        else if (c->current_action == ActionId::MoveRight) c->current_action = ActionId::MoveLeft;
    }
    return m;
}

std::uint64_t state_hash(const GameState& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::int64_t v) {
        auto u = static_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) {
            h ^= (u >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    mix(s.frame);
    for (const CharacterState* c : {&s.p1, &s.p2}) {
        mix(c->x), mix(c->y), mix(c->hp), mix(c->energy);
        mix(to_code(c->current_action)), mix(static_cast<int>(c->phase)), mix(c->phase_frames_left);
        mix(static_cast<int>(c->facing)), mix(c->attack_connected);
    }
    mix(s.timer_frames_left);
    mix(static_cast<std::int64_t>(s.rng_state));
    return h;
}

}  // namespace pdda
