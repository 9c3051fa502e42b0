#include "pdda/agents.hpp"

#include <cstdlib>

namespace pdda {

const char* agent_kind_name(AgentKind k) {
    switch (k) {
        case AgentKind::RuleBased: return "rule_based";
        case AgentKind::Imitation: return "imitation";
        case AgentKind::Rl: return "rl";
        case AgentKind::Idle: return "idle";
    }
    return "unknown";
}

ActionId rule_based_opponent(const EnvConfig& config, const GameState& state, Side side) {
    const CharacterState& self = state.ch(side);
    const CharacterState& opp = state.ch(other(side));
    if (self.busy()) return ActionId::Idle;
    const int d = opp.x - self.x;
    if (std::abs(d) > config.spec(ActionId::Punch).reach) return d > 0 ? ActionId::MoveRight : ActionId::MoveLeft;
    if (self.energy >= config.spec(ActionId::Special).energy_cost) return ActionId::Special;
    return ActionId::Punch;
}

ActionId ImitationAgent::act(const GameState& state) const {
    return model_->predict_one(encode_features(config_, state, side_)).action;
}

ActionId mirror_action(ActionId a) {
    if (a == ActionId::MoveLeft) return ActionId::MoveRight;
    if (a == ActionId::MoveRight) return ActionId::MoveLeft;
    return a;
}

ActionId RlAgent::act(const GameState& state) const {
    Rng unused(0);
    if (side_ == Side::P2) return policy::act(*params_, render_frame(config_, state), policy::ActMode::Greedy, unused).action;
    const GameState view = mirrored(config_, state);
    return mirror_action(policy::act(*params_, render_frame(config_, view), policy::ActMode::Greedy, unused).action);
}

AgentSnapshot idle_snapshot(std::uint64_t version) {
    return {AgentKind::Idle, version, std::make_shared<const IdleAgent>()};
}

AgentSnapshot rule_based_snapshot(const EnvConfig& config, Side side, std::uint64_t version) {
    return {AgentKind::RuleBased, version, std::make_shared<const RuleBasedAgent>(config, side)};
}

AgentSnapshot imitation_snapshot(const imitation::ForestModel& model, const EnvConfig& config, Side imitated,
                                 std::uint64_t version) {
    auto frozen = std::make_shared<const imitation::ForestModel>(model);
    return {AgentKind::Imitation, version, std::make_shared<const ImitationAgent>(std::move(frozen), config, imitated)};
}

AgentSnapshot rl_snapshot(std::shared_ptr<const policy::NetworkParams> params, const EnvConfig& config, Side side,
                          std::uint64_t version) {
    return {AgentKind::Rl, version, std::make_shared<const RlAgent>(std::move(params), config, side)};
}

AgentSnapshot rl_snapshot(const policy::NetworkParams& params, const EnvConfig& config, Side side, std::uint64_t version) {
    return rl_snapshot(std::make_shared<const policy::NetworkParams>(params), config, side, version);
}

}  // namespace pdda
