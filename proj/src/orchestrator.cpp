#include "pdda/orchestrator.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace pdda {

using nlohmann::json;

void SwapSchedule::validate() const {
    if (interval < 1) throw ConfigError("orchestrator: swap interval must be >= 1");
    if (min_observations < 0) throw ConfigError("orchestrator: min_observations must be >= 0");
}

AgentSnapshot swap_opponent(const AgentSnapshot& current, const AgentSnapshot& candidate, std::int64_t frame,
                            const SwapSchedule& schedule) {
    return schedule.due(frame) ? candidate : current;
}

// ---------------------------------------------------------------- trainer

BackgroundTrainer::BackgroundTrainer(EnvConfig env, policy::TrainConfig rl, AgentSnapshot opponent, std::uint64_t seed,
                                     std::int64_t episode_frames)
    : env_(std::move(env)),
      rl_(std::move(rl)),
      seed_(seed),
      rng_(Rng::derive(seed, 0)),
      params_(policy::policy_new(rl_)),
      last_good_params_(params_),
      opponent_(std::move(opponent)),
      episode_frames_(episode_frames),
      envs_(static_cast<std::size_t>(std::max(rl_.n_envs, 1))),
      rollouts_(envs_.size()) {
    env_.validate();
    rl_.validate();
    if (episode_frames_ < 0) throw ConfigError("trainer: episode_frames must be >= 0");
    published_.publish(std::make_shared<const policy::NetworkParams>(params_));
}

void BackgroundTrainer::set_opponent(AgentSnapshot opponent) {
    std::lock_guard lock(opponent_mu_);
    pending_opponent_ = std::move(opponent);
}

void BackgroundTrainer::set_params(policy::NetworkParams params) {
    params_ = std::move(params);
    optimizer_ = {};
    for (auto& e : envs_) e = EnvSlot{};
    for (auto& r : rollouts_) r = {};
    published_.publish(std::make_shared<const policy::NetworkParams>(params_));
}

void BackgroundTrainer::start_episode(EnvSlot& slot) {
    {
        std::lock_guard lock(opponent_mu_);
        if (pending_opponent_) {
            opponent_ = std::move(*pending_opponent_);
            pending_opponent_.reset();
        }
    }
    slot.game = new_game(env_, Rng::derive(seed_, 1 + games_started_++));
    slot.game_frames = 0;
}

void BackgroundTrainer::recover() {
    params_ = last_good_params_;
    optimizer_ = last_good_optimizer_;
    for (auto& e : envs_) e = EnvSlot{};
    for (auto& r : rollouts_) r = {};
    ++stats_.divergence_resets;
    published_.publish(std::make_shared<const policy::NetworkParams>(params_));
}

void BackgroundTrainer::update() {
    try {
        stats_.last_loss = policy::a2c_update(params_, optimizer_, rollouts_, rl_);
    } catch (const policy::DivergenceError&) {
        recover();
        return;
    }
    for (auto& r : rollouts_) r = {};
    for (auto& e : envs_) e.ready = false;
    ++stats_.updates;
    if (stats_.updates % kCheckpointEvery == 0) {
        last_good_params_ = params_;
        last_good_optimizer_ = optimizer_;
    }
    published_.publish(std::make_shared<const policy::NetworkParams>(params_));
}

void BackgroundTrainer::tick(std::int64_t budget_frames) {
    kernels::flush_denormals();
    const std::size_t n = envs_.size();
    for (std::int64_t i = 0; i < budget_frames; ++i) {
        ++stats_.frames;
        while (envs_[cursor_].ready) cursor_ = (cursor_ + 1) % n;
        EnvSlot& e = envs_[cursor_];
        policy::RolloutBuffer& rollout = rollouts_[cursor_];
        if (!e.game) start_episode(e);
        if (!e.held) {
            const ObservationFrame obs = render_frame(env_, *e.game);
            policy::ActResult choice;
            try {
                choice = policy::act(params_, obs, policy::ActMode::Sample, rng_);
            } catch (const policy::DivergenceError&) {
                recover();
                continue;
            }
            e.held = policy::Transition{obs, choice.action, 0.0, false, choice.value_est, choice.log_prob};
            e.held_frames = 0;
        }
        const ActionId opp = opponent_.act(*e.game);
        StepOutcome out = step(env_, *e.game, opp, e.held->action);
        e.held->reward += out.reward_p2;
        e.game = std::move(out.next);
        ++e.game_frames;
        ++e.held_frames;
        const bool truncated = !out.round_over && episode_frames_ > 0 && e.game_frames >= episode_frames_;
        if (!out.round_over && !truncated && e.held_frames < rl_.action_repeat) continue;

        // The decision is complete: record it and move to the next environment.
        e.held->done = out.round_over;
        rollout.steps.push_back(std::move(*e.held));
        e.held.reset();
        cursor_ = (cursor_ + 1) % n;
        if (out.round_over) {
            ++stats_.episodes;
            if (out.winner == Winner::P2) ++stats_.episode_wins;
            rollout.bootstrap_value = 0.0;
            e.game.reset();
            e.ready = true;
        } else if (truncated || static_cast<int>(rollout.steps.size()) >= rl_.n_steps) {
            try {
                rollout.bootstrap_value =
                    policy::act(params_, render_frame(env_, *e.game), policy::ActMode::Greedy, rng_).value_est;
            } catch (const policy::DivergenceError&) {
                recover();
                continue;
            }
            if (truncated) {
                ++stats_.episodes;
                e.game.reset();
            }
            e.ready = true;
        }
        if (std::all_of(envs_.begin(), envs_.end(), [](const EnvSlot& s) { return s.ready; })) update();
    }
}

// ---------------------------------------------------------------- match

void MatchConfig::validate() const {
    env.validate();
    imitation.validate();
    rl.validate();
    schedule.validate();
    if (budget_frames < 0) throw ConfigError("orchestrator: budget_frames must be >= 0");
    if (rounds < 1) throw ConfigError("orchestrator: rounds must be >= 1");
    if (!(train_spawn_jitter >= 0.0 && train_spawn_jitter <= 1.0))
        throw ConfigError("orchestrator: train_spawn_jitter must be in [0, 1]");
    if (imitation_refresh < 1) throw ConfigError("orchestrator: imitation_refresh must be >= 1");
    if (train_episode_frames < 0) throw ConfigError("orchestrator: train_episode_frames must be >= 0");
}

namespace {

void describe_env(std::ostream& os, const EnvConfig& e) {
    os << "env " << e.hp_max << ' ' << e.energy_max << ' ' << e.stage_w << ' ' << e.stage_h << ' ' << e.round_frames
       << ' ' << e.guard_factor << ' ' << e.body_w << ' ' << e.body_h << ' ' << e.vertical_band << ' '
       << e.jump_height << ' ' << e.spawn_jitter << '\n';
    for (const ActionSpec& a : e.actions)
        os << "action " << a.startup_frames << ' ' << a.active_frames << ' ' << a.recovery_frames << ' ' << a.damage
           << ' ' << a.reach << ' ' << a.energy_gain_on_hit << ' ' << a.energy_cost << ' ' << a.move_delta << '\n';
}

}  // namespace

std::string config_fingerprint(const MatchConfig& c) {
    std::ostringstream os;
    os << std::setprecision(17);
    describe_env(os, c.env);
    const auto& f = c.imitation;
    os << "forest " << f.n_trees << ' ' << f.lambda_bagging << ' ' << f.delta_split << ' ' << f.delta_warn << ' '
       << f.delta_drift << ' ' << f.grace_period << ' ' << f.subspace_size << ' ' << f.n_split_candidates << ' '
       << f.tie_threshold << ' ' << f.max_depth << ' ' << f.weight_window << ' ' << f.weight_floor << ' '
       << f.prequential_window << ' ' << f.detectors_enabled << ' ' << f.unit_weights << '\n';
    const auto& r = c.rl;
    os << "rl " << r.gamma << ' ' << r.n_steps << ' ' << r.learning_rate << ' ' << r.entropy_coef << ' '
       << r.value_coef << ' ' << r.max_grad_norm << ' ' << r.rms_decay << ' ' << r.rms_epsilon << ' ' << r.action_repeat << ' ' << r.n_envs << '\n';
    os << "match " << c.schedule.interval << ' ' << c.schedule.min_observations << ' ' << c.budget_frames << ' '
       << c.rounds << ' ' << c.train_spawn_jitter << ' ' << c.train_episode_frames << ' ' << c.imitation_refresh << '\n';
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : os.str()) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

PddaSession::PddaSession(MatchConfig config, std::uint64_t seed, bool inline_training)
    : config_((config.validate(), std::move(config))),
      seed_(seed),
      inline_training_(inline_training),
      forest_(config_.imitation, Rng::derive(seed, 1)),
      trainer_(
          [&] {
              EnvConfig e = config_.env;
              e.spawn_jitter = config_.train_spawn_jitter;
              return e;
          }(),
          [&] {
              policy::TrainConfig r = config_.rl;
              r.seed = Rng::derive(seed, 2);
              return r;
          }(),
          imitation_snapshot(forest_, config_.env, Side::P1), Rng::derive(seed, 3), config_.train_episode_frames),
      opponent_(rule_based_snapshot(config_.env, Side::P2, 0)),
      state_(new_game(config_.env, Rng::derive(seed, 1000))) {
    log_.seed = seed;
    log_.config_fingerprint = config_fingerprint(config_);
}

void PddaSession::advance(ActionId player_action) {
    if (finished_) throw std::logic_error("PddaSession::advance: match is finished");
    const EnvConfig& env = config_.env;

    // The match always opens against the rule-based agent, so frame 0 never swaps.
    if (frame_ > 0 && config_.schedule.due(frame_)) {
        const AgentSnapshot candidate =
            rl_snapshot(trainer_.latest_params(), env, Side::P2, opponent_.version + 1);
        opponent_ = swap_opponent(opponent_, candidate, frame_, config_.schedule);
        log_.records.push_back(SwapRecord{frame_, opponent_.version, opponent_.kind});
    }

    const ActionId opp_action = opponent_.act(state_);
    const FeatureVector features = encode_features(env, state_, Side::P1);
    last_outcome_ = step(env, state_, player_action, opp_action);
    const auto events = forest_.learn_one({features, player_action});

    const GameState& next = last_outcome_.next;
    log_.records.push_back(FrameRecord{frame_, round_, features, player_action, opp_action, last_outcome_.reward_p1,
                                       next.p1.hp, next.p2.hp, opponent_.version});
    for (const auto& e : events)
        if (e.kind == imitation::ForestEventKind::Drift) log_.records.push_back(DriftRecord{frame_, e.member});

    if ((frame_ + 1) % config_.imitation_refresh == 0)
        trainer_.set_opponent(imitation_snapshot(forest_, env, Side::P1, static_cast<std::uint64_t>(frame_ + 1)));

    state_ = next;
    if (last_outcome_.round_over) {
        log_.records.push_back(
            RoundEndRecord{frame_, round_, last_outcome_.winner, state_.p1.hp, state_.p2.hp});
        ++round_;
        if (round_ >= config_.rounds) finished_ = true;
        else state_ = new_game(env, Rng::derive(seed_, 1000 + static_cast<std::uint64_t>(round_)));
    }
    ++frame_;
    if (inline_training_ && !finished_) trainer_.tick(config_.budget_frames);
}

void PddaSession::abort(const std::string& reason) {
    log_.aborted = true;
    log_.abort_reason = reason;
    finished_ = true;
}

MatchResult run_match(PlayerSource& player, const MatchConfig& config, std::uint64_t seed,
                      const std::string& persona_label, const FrameObserver& observer) {
    PddaSession session(config, seed);
    while (!session.finished()) {
        ActionId a;
        try {
            a = player.next_action(session.state(), session.frame());
        } catch (const PlayerDisconnected& e) {
            session.abort(e.what());
            break;
        }
        session.advance(a);
        if (observer) observer(session);
    }
    EpisodeLog log = session.log();
    log.persona = persona_label;
    return {std::move(log), session.forest(), session.trainer().params(), session.trainer().stats()};
}

// ---------------------------------------------------------------- log io

namespace {

struct RecordWriter {
    json operator()(const FrameRecord& r) const {
        return {{"type", "frame"},
                {"frame", r.frame},
                {"round", r.round},
                {"features", r.features.values},
                {"player_action", to_code(r.player_action)},
                {"opponent_action", to_code(r.opponent_action)},
                {"reward_p1", r.reward_p1},
                {"hp_p1", r.hp_p1},
                {"hp_p2", r.hp_p2},
                {"opponent_version", r.opponent_version}};
    }
    json operator()(const SwapRecord& r) const {
        return {{"type", "swap"}, {"frame", r.frame}, {"version", r.version}, {"kind", agent_kind_name(r.kind)}};
    }
    json operator()(const DriftRecord& r) const {
        return {{"type", "drift"}, {"frame", r.frame}, {"member", r.member}};
    }
    json operator()(const RoundEndRecord& r) const {
        return {{"type", "round_end"}, {"frame", r.frame},     {"round", r.round},
                {"winner", winner_name(r.winner)}, {"hp_p1", r.hp_p1}, {"hp_p2", r.hp_p2}};
    }
};

AgentKind kind_from_name(const std::string& s) {
    for (AgentKind k : {AgentKind::RuleBased, AgentKind::Imitation, AgentKind::Rl, AgentKind::Idle})
        if (s == agent_kind_name(k)) return k;
    throw std::runtime_error("episode log: unknown agent kind '" + s + "'");
}

Winner winner_from_name(const std::string& s) {
    for (Winner w : {Winner::None, Winner::P1, Winner::P2, Winner::Draw})
        if (s == winner_name(w)) return w;
    throw std::runtime_error("episode log: unknown winner '" + s + "'");
}

}  // namespace

void write_jsonl(std::ostream& out, const EpisodeLog& log) {
    out << json{{"type", "header"}, {"seed", log.seed}, {"config_fingerprint", log.config_fingerprint},
                {"persona", log.persona}}
               .dump()
        << '\n';
    for (const auto& r : log.records) out << std::visit(RecordWriter{}, r).dump() << '\n';
    out << json{{"type", "footer"}, {"aborted", log.aborted}, {"abort_reason", log.abort_reason}}.dump() << '\n';
}

EpisodeLog read_jsonl(std::istream& in) {
    EpisodeLog log;
    std::string line;
    bool header = false, footer = false;
    try {
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const json j = json::parse(line);
            const std::string type = j.at("type").get<std::string>();
            if (type == "header") {
                log.seed = j.at("seed").get<std::uint64_t>();
                log.config_fingerprint = j.at("config_fingerprint").get<std::string>();
                log.persona = j.at("persona").get<std::string>();
                header = true;
            } else if (type == "footer") {
                log.aborted = j.at("aborted").get<bool>();
                log.abort_reason = j.at("abort_reason").get<std::string>();
                footer = true;
            } else if (type == "frame") {
                FrameRecord r;
                r.frame = j.at("frame").get<std::int64_t>();
                r.round = j.at("round").get<int>();
                r.features.values = j.at("features").get<std::array<double, FeatureVector::kSize>>();
                r.player_action = action_from_code(j.at("player_action").get<int>());
                r.opponent_action = action_from_code(j.at("opponent_action").get<int>());
                r.reward_p1 = j.at("reward_p1").get<double>();
                r.hp_p1 = j.at("hp_p1").get<int>();
                r.hp_p2 = j.at("hp_p2").get<int>();
                r.opponent_version = j.at("opponent_version").get<std::uint64_t>();
                log.records.emplace_back(r);
            } else if (type == "swap") {
                log.records.emplace_back(SwapRecord{j.at("frame").get<std::int64_t>(), j.at("version").get<std::uint64_t>(),
                                                    kind_from_name(j.at("kind").get<std::string>())});
            } else if (type == "drift") {
                log.records.emplace_back(DriftRecord{j.at("frame").get<std::int64_t>(), j.at("member").get<int>()});
            } else if (type == "round_end") {
                log.records.emplace_back(RoundEndRecord{j.at("frame").get<std::int64_t>(), j.at("round").get<int>(),
                                                        winner_from_name(j.at("winner").get<std::string>()),
                                                        j.at("hp_p1").get<int>(), j.at("hp_p2").get<int>()});
            } else {
                throw std::runtime_error("episode log: unknown record type '" + type + "'");
            }
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("episode log: ") + e.what());
    } catch (const std::out_of_range& e) {
        throw std::runtime_error(std::string("episode log: ") + e.what());
    }
    if (!header || !footer) throw std::runtime_error("episode log: missing header or footer");
    return log;
}

}  // namespace pdda
