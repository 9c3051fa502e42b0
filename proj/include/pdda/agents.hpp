#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "pdda/arena.hpp"
#include "pdda/imitation.hpp"
#include "pdda/policy.hpp"

namespace pdda {

// A policy that can drive one side of a match. Implementations are immutable
// once constructed, so they can be shared across threads.
class Agent {
public:
    virtual ~Agent() = default;
    virtual ActionId act(const GameState& state) const = 0;
};

enum class AgentKind : std::uint8_t { RuleBased, Imitation, Rl, Idle };
const char* agent_kind_name(AgentKind k);

struct AgentSnapshot {
    AgentKind kind = AgentKind::RuleBased;
    std::uint64_t version = 0;
    std::shared_ptr<const Agent> agent;

    ActionId act(const GameState& state) const { return agent->act(state); }
};

// Walk in, then Special when affordable, otherwise Punch.
ActionId rule_based_opponent(const EnvConfig& config, const GameState& state, Side side = Side::P2);

class RuleBasedAgent final : public Agent {
public:
    RuleBasedAgent(EnvConfig config, Side side) : config_(std::move(config)), side_(side) {}
    ActionId act(const GameState& state) const override { return rule_based_opponent(config_, state, side_); }

private:
    EnvConfig config_;
    Side side_;
};

// Replays the imitated player's predicted action from a frozen forest.
class ImitationAgent final : public Agent {
public:
    ImitationAgent(std::shared_ptr<const imitation::ForestModel> model, EnvConfig config, Side side)
        : model_(std::move(model)), config_(std::move(config)), side_(side) {}
    ActionId act(const GameState& state) const override;
    const imitation::ForestModel& model() const { return *model_; }

private:
    std::shared_ptr<const imitation::ForestModel> model_;
    EnvConfig config_;
    Side side_;
};

// Greedy actor-critic policy. The network always sees the match from the
// right-hand side; on the left side the state is mirrored and horizontal
// moves are swapped back.
class RlAgent final : public Agent {
public:
    RlAgent(std::shared_ptr<const policy::NetworkParams> params, EnvConfig config, Side side)
        : params_(std::move(params)), config_(std::move(config)), side_(side) {}
    ActionId act(const GameState& state) const override;
    const policy::NetworkParams& params() const { return *params_; }

private:
    std::shared_ptr<const policy::NetworkParams> params_;
    EnvConfig config_;
    Side side_;
};

class IdleAgent final : public Agent {
public:
    ActionId act(const GameState&) const override { return ActionId::Idle; }
};

ActionId mirror_action(ActionId a);

AgentSnapshot idle_snapshot(std::uint64_t version = 0);

AgentSnapshot rule_based_snapshot(const EnvConfig& config, Side side = Side::P2, std::uint64_t version = 0);

// Deep-copies the forest; later learning does not affect the snapshot.
AgentSnapshot imitation_snapshot(const imitation::ForestModel& model, const EnvConfig& config, Side imitated = Side::P1,
                                 std::uint64_t version = 0);

AgentSnapshot rl_snapshot(std::shared_ptr<const policy::NetworkParams> params, const EnvConfig& config,
                          Side side = Side::P2, std::uint64_t version = 0);
AgentSnapshot rl_snapshot(const policy::NetworkParams& params, const EnvConfig& config, Side side = Side::P2,
                          std::uint64_t version = 0);

}  // namespace pdda
