#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

#include "pdda/arena.hpp"

namespace pdda::protocol {

inline constexpr int kVersion = 1;

struct Hello {
    int version = kVersion;
    bool operator==(const Hello&) const = default;
};

struct CharacterView {
    int x = 0;
    int y = 0;
    int hp = 0;
    int energy = 0;
    ActionId action = ActionId::Idle;
    Facing facing = Facing::Right;
    bool operator==(const CharacterView&) const = default;
};

struct State {
    std::int64_t frame = 0;
    std::array<CharacterView, 2> chars{};
    int timer = 0;
    std::uint64_t opponent_version = 0;
    bool operator==(const State&) const = default;
};

struct Input {
    std::int64_t frame = 0;
    ActionId action = ActionId::Idle;
    bool operator==(const Input&) const = default;
};

struct RoundEnd {
    Winner winner = Winner::None;
    std::array<int, 2> hp{};
    std::int64_t frames = 0;
    bool operator==(const RoundEnd&) const = default;
};

struct Rating {
    int value = 1;  // 1..10
    bool operator==(const Rating&) const = default;
};

struct Error {
    std::string code;
    std::string message;
    bool operator==(const Error&) const = default;
};

using Message = std::variant<Hello, State, Input, RoundEnd, Rating, Error>;

// Typed decode failure; code is sent back to the client verbatim.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string code, const std::string& what) : std::runtime_error(what), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

private:
    std::string code_;
};

// One JSON object per message with a "type" discriminator.
std::string encode_message(const Message& m);
// Throws ParseError: "malformed", "unknown_type", "bad_field", "bad_action" or "bad_rating".
Message decode_message(std::string_view text);

State state_message(const GameState& s, std::uint64_t opponent_version);

}  // namespace pdda::protocol
