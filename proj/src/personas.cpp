#include "pdda/personas.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <sstream>

namespace pdda {

namespace {

std::vector<std::string_view> split_tokens(std::string_view spec) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = spec.find(':', start);
        out.push_back(spec.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) return out;
        start = pos + 1;
    }
}

class Parser {
public:
    Parser(std::string_view spec, std::vector<std::string_view> tokens) : spec_(spec), tokens_(std::move(tokens)) {}

    Persona parse(std::uint64_t seed) {
        Persona p = parse_one(seed);
        if (pos_ != tokens_.size()) fail("unexpected trailing token '" + std::string(tokens_[pos_]) + "'");
        return p;
    }

private:
    [[noreturn]] void fail(const std::string& why) const {
        throw PersonaParseError("invalid persona '" + std::string(spec_) + "': " + why);
    }

    std::string_view next(const char* what) {
        if (pos_ >= tokens_.size()) fail(std::string("missing ") + what);
        return tokens_[pos_++];
    }

    Persona parse_one(std::uint64_t seed) {
        const std::string_view name = next("persona name");
        Persona p;
        p.rng = Rng(seed);
        if (name == "idle") p.kind = PersonaKind::Idle;
        else if (name == "random") p.kind = PersonaKind::Random;
        else if (name == "rushdown") p.kind = PersonaKind::Rushdown;
        else if (name == "turtle") p.kind = PersonaKind::Turtle;
        else if (name == "zoner") p.kind = PersonaKind::Zoner;
        else if (name == "noisy") {
            p.kind = PersonaKind::Noisy;
            p.parts.push_back(parse_one(Rng::derive(seed, 1)));
            p.epsilon = parse_double(next("noise rate"));
            if (!(p.epsilon >= 0.0 && p.epsilon <= 1.0)) fail("noise rate must be in [0, 1]");
        } else if (name == "switching") {
            p.kind = PersonaKind::Switching;
            p.parts.push_back(parse_one(Rng::derive(seed, 1)));
            p.parts.push_back(parse_one(Rng::derive(seed, 2)));
            p.switch_frame = parse_int(next("switch frame"));
            if (p.switch_frame < 0) fail("switch frame must be non-negative");
        } else {
            fail("unknown persona '" + std::string(name) + "'");
        }
        return p;
    }

    double parse_double(std::string_view s) const {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) fail("bad number '" + std::string(s) + "'");
        return v;
    }

    std::int64_t parse_int(std::string_view s) const {
        std::int64_t v = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) fail("bad integer '" + std::string(s) + "'");
        return v;
    }

    std::string_view spec_;
    std::vector<std::string_view> tokens_;
    std::size_t pos_ = 0;
};

ActionId toward(int dx) { return dx >= 0 ? ActionId::MoveRight : ActionId::MoveLeft; }
ActionId away(int dx) { return dx >= 0 ? ActionId::MoveLeft : ActionId::MoveRight; }

ActionId zoner_act(const EnvConfig& cfg, const CharacterState& self, int dx) {
    const ActionSpec& special = cfg.spec(ActionId::Special);
    const int d = std::abs(dx);
    if (self.energy >= special.energy_cost && d <= special.reach) return ActionId::Special;
    if (d * 5 <= special.reach * 4) return away(dx);
    if (d > special.reach) return toward(dx);
    return ActionId::Guard;
}

}  // namespace

Persona parse_persona(std::string_view spec, std::uint64_t seed) {
    return Parser(spec, split_tokens(spec)).parse(seed);
}

std::string persona_spec(const Persona& p) {
    switch (p.kind) {
        case PersonaKind::Idle: return "idle";
        case PersonaKind::Random: return "random";
        case PersonaKind::Rushdown: return "rushdown";
        case PersonaKind::Turtle: return "turtle";
        case PersonaKind::Zoner: return "zoner";
        case PersonaKind::Noisy: {
            std::ostringstream os;
            os << "noisy:" << persona_spec(p.parts.at(0)) << ':' << p.epsilon;
            return os.str();
        }
        case PersonaKind::Switching:
            return "switching:" + persona_spec(p.parts.at(0)) + ':' + persona_spec(p.parts.at(1)) + ':' +
                   std::to_string(p.switch_frame);
    }
    return "idle";
}

ActionId persona_act(Persona& p, const EnvConfig& config, const GameState& state, Side side, std::int64_t frame) {
    const CharacterState& self = state.ch(side);
    const int dx = state.ch(other(side)).x - self.x;
    switch (p.kind) {
        case PersonaKind::Idle: return ActionId::Idle;
        case PersonaKind::Random: return static_cast<ActionId>(p.rng.below(kNumActions));
        case PersonaKind::Rushdown:
            return std::abs(dx) > config.spec(ActionId::Punch).reach ? toward(dx) : ActionId::Punch;
        case PersonaKind::Turtle:
            return std::abs(dx) <= config.spec(ActionId::Kick).reach ? ActionId::Guard : away(dx);
        case PersonaKind::Zoner:
            return zoner_act(config, self, dx);
        case PersonaKind::Noisy: {
            // The base persona is always consulted so its own state advances
            // identically whether or not the noise fires.
            const ActionId base = persona_act(p.parts.at(0), config, state, side, frame);
            if (p.rng.uniform() < p.epsilon) return static_cast<ActionId>(p.rng.below(kNumActions));
            return base;
        }
        case PersonaKind::Switching: {
            Persona& active = frame < p.switch_frame ? p.parts.at(0) : p.parts.at(1);
            return persona_act(active, config, state, side, frame);
        }
    }
    return ActionId::Idle;
}

}  // namespace pdda
