#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pdda/arena.hpp"
#include "pdda/rng.hpp"

namespace pdda {

enum class PersonaKind : std::uint8_t { Idle, Random, Rushdown, Turtle, Zoner, Noisy, Switching };

// A scripted player. Composite personas own their parts; every persona keeps
// its own generator so a spec string plus a seed fixes the whole action stream.
struct Persona {
    PersonaKind kind = PersonaKind::Idle;
    double epsilon = 0.0;          // Noisy only
    std::int64_t switch_frame = 0; // Switching only
    std::vector<Persona> parts;    // Noisy: {base}; Switching: {before, after}
    Rng rng{0};
};

class PersonaParseError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

// Grammar: idle | random | rushdown | turtle | zoner
//        | noisy:<persona>:<eps> | switching:<a>:<b>:<frame>
// Noisy and switching parts are themselves persona specs.
Persona parse_persona(std::string_view spec, std::uint64_t seed);
std::string persona_spec(const Persona& p);

// Action for `side` at the given frame index. Mutates the persona's generator.
ActionId persona_act(Persona& p, const EnvConfig& config, const GameState& state, Side side, std::int64_t frame);

}  // namespace pdda
