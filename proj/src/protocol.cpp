#include "pdda/protocol.hpp"

#include <nlohmann/json.hpp>

namespace pdda::protocol {

using nlohmann::json;

namespace {

const char* facing_name(Facing f) { return f == Facing::Left ? "left" : "right"; }

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};

[[noreturn]] void bad_field(const std::string& what) { throw ParseError("bad_field", "bad field: " + what); }

const json& field(const json& j, const char* name) {
    const auto it = j.find(name);
    if (it == j.end()) bad_field(std::string("missing '") + name + "'");
    return *it;
}

std::int64_t int_field(const json& j, const char* name) {
    const json& v = field(j, name);
    if (!v.is_number_integer()) bad_field(std::string("'") + name + "' must be an integer");
    return v.get<std::int64_t>();
}

std::string string_field(const json& j, const char* name) {
    const json& v = field(j, name);
    if (!v.is_string()) bad_field(std::string("'") + name + "' must be a string");
    return v.get<std::string>();
}

ActionId action_field(const json& j, const char* name, const char* code) {
    const std::int64_t a = int_field(j, name);
    if (a < 0 || a >= kNumActions) throw ParseError(code, "action code out of range: " + std::to_string(a));
    return static_cast<ActionId>(a);
}

Facing facing_from(const std::string& s) {
    if (s == "left") return Facing::Left;
    if (s == "right") return Facing::Right;
    bad_field("facing '" + s + "'");
}

Winner winner_from(const std::string& s) {
    for (Winner w : {Winner::None, Winner::P1, Winner::P2, Winner::Draw})
        if (s == winner_name(w)) return w;
    bad_field("winner '" + s + "'");
}

json encode_char(const CharacterView& c) {
    return {{"x", c.x},
            {"y", c.y},
            {"hp", c.hp},
            {"energy", c.energy},
            {"action", static_cast<int>(c.action)},
            {"facing", facing_name(c.facing)}};
}

CharacterView decode_char(const json& j) {
    if (!j.is_object()) bad_field("character must be an object");
    CharacterView c;
    c.x = static_cast<int>(int_field(j, "x"));
    c.y = static_cast<int>(int_field(j, "y"));
    c.hp = static_cast<int>(int_field(j, "hp"));
    c.energy = static_cast<int>(int_field(j, "energy"));
    c.action = action_field(j, "action", "bad_field");
    c.facing = facing_from(string_field(j, "facing"));
    return c;
}

std::array<int, 2> int_pair(const json& j, const char* name) {
    const json& v = field(j, name);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
        bad_field(std::string("'") + name + "' must be two integers");
    return {v[0].get<int>(), v[1].get<int>()};
}

}  // namespace

std::string encode_message(const Message& m) {
    const json j = std::visit(
        Overloaded{
            [](const Hello& h) -> json { return {{"type", "hello"}, {"version", h.version}}; },
            [](const State& s) -> json {
                return {{"type", "state"},
                        {"frame", s.frame},
                        {"chars", {encode_char(s.chars[0]), encode_char(s.chars[1])}},
                        {"timer", s.timer},
                        {"opponent_version", s.opponent_version}};
            },
            [](const Input& i) -> json {
                return {{"type", "input"}, {"frame", i.frame}, {"action", static_cast<int>(i.action)}};
            },
            [](const RoundEnd& r) -> json {
                return {{"type", "round_end"}, {"winner", winner_name(r.winner)}, {"hp", r.hp}, {"frames", r.frames}};
            },
            [](const Rating& r) -> json { return {{"type", "rating"}, {"value", r.value}}; },
            [](const Error& e) -> json { return {{"type", "error"}, {"code", e.code}, {"message", e.message}}; },
        },
        m);
    return j.dump();
}

Message decode_message(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError("malformed", e.what());
    }
    if (!j.is_object()) throw ParseError("malformed", "message must be an object");
    const auto type_it = j.find("type");
    if (type_it == j.end() || !type_it->is_string()) throw ParseError("malformed", "missing 'type'");
    const std::string type = type_it->get<std::string>();

    if (type == "hello") return Hello{static_cast<int>(int_field(j, "version"))};
    if (type == "state") {
        State s;
        s.frame = int_field(j, "frame");
        const json& chars = field(j, "chars");
        if (!chars.is_array() || chars.size() != 2) bad_field("'chars' must hold two characters");
        s.chars = {decode_char(chars[0]), decode_char(chars[1])};
        s.timer = static_cast<int>(int_field(j, "timer"));
        const json& v = field(j, "opponent_version");
        if (!v.is_number_unsigned()) bad_field("'opponent_version' must be a non-negative integer");
        s.opponent_version = v.get<std::uint64_t>();
        return s;
    }
    if (type == "input") return Input{int_field(j, "frame"), action_field(j, "action", "bad_action")};
    if (type == "round_end") {
        return RoundEnd{winner_from(string_field(j, "winner")), int_pair(j, "hp"), int_field(j, "frames")};
    }
    if (type == "rating") {
        const std::int64_t v = int_field(j, "value");
        if (v < 1 || v > 10) throw ParseError("bad_rating", "rating must be in 1..10");
        return Rating{static_cast<int>(v)};
    }
    if (type == "error") return Error{string_field(j, "code"), string_field(j, "message")};
    throw ParseError("unknown_type", "unknown message type '" + type + "'");
}

State state_message(const GameState& s, std::uint64_t opponent_version) {
    State m;
    m.frame = s.frame;
    for (Side side : {Side::P1, Side::P2}) {
        const CharacterState& c = s.ch(side);
        m.chars[static_cast<int>(side)] = {c.x, c.y, c.hp, c.energy, c.current_action, c.facing};
    }
    m.timer = s.timer_frames_left;
    m.opponent_version = opponent_version;
    return m;
}

}  // namespace pdda::protocol
