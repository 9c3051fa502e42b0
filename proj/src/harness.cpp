#include "pdda/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <type_traits>

#include <boost/property_tree/ini_parser.hpp>

namespace pdda::harness {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;
using nlohmann::json;

// ---------------------------------------------------------------- config

namespace {

struct Field {
    std::string key;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& text) {
    throw ConfigError("config: bad value for " + key + ": '" + text + "'");
}

template <class T>
T parse_value(const std::string& key, const std::string& text) {
    if constexpr (std::is_same_v<T, std::string>) {
        return text;
    } else if constexpr (std::is_same_v<T, bool>) {
        if (text == "true" || text == "1") return true;
        if (text == "false" || text == "0") return false;
        bad_value(key, text);
    } else {
        if constexpr (std::is_same_v<T, std::int64_t>)
            if (text == "never") return kNever;
        T v{};
        const char* end = text.data() + text.size();
        auto [ptr, ec] = std::from_chars(text.data(), end, v);
        if (text.empty() || ec != std::errc() || ptr != end) bad_value(key, text);
        return v;
    }
}

template <class T>
std::string format_value(const T& v) {
    if constexpr (std::is_same_v<T, std::string>) {
        return v;
    } else if constexpr (std::is_same_v<T, bool>) {
        return v ? "true" : "false";
    } else {
        if constexpr (std::is_same_v<T, std::int64_t>)
            if (v == kNever) return "never";
        char buf[64];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, ptr);
    }
}

template <class Access>
Field make_field(std::string key, Access access) {
    using T = std::remove_reference_t<decltype(access(std::declval<ExperimentConfig&>()))>;
    return {key,
            [access, key](ExperimentConfig& c, const std::string& text) { access(c) = parse_value<T>(key, text); },
            [access](const ExperimentConfig& c) {
                return format_value<T>(access(const_cast<ExperimentConfig&>(c)));
            }};
}

#define PDDA_FIELD(key, expr) make_field(key, [](ExperimentConfig& c) -> auto& { return c.expr; })

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        PDDA_FIELD("env.hp_max", match.env.hp_max),
        PDDA_FIELD("env.energy_max", match.env.energy_max),
        PDDA_FIELD("env.stage_w", match.env.stage_w),
        PDDA_FIELD("env.stage_h", match.env.stage_h),
        PDDA_FIELD("env.round_frames", match.env.round_frames),
        PDDA_FIELD("env.guard_factor", match.env.guard_factor),
        PDDA_FIELD("env.spawn_jitter", match.env.spawn_jitter),
        PDDA_FIELD("imitation.n_trees", match.imitation.n_trees),
        PDDA_FIELD("imitation.lambda_bagging", match.imitation.lambda_bagging),
        PDDA_FIELD("imitation.delta_split", match.imitation.delta_split),
        PDDA_FIELD("imitation.delta_warn", match.imitation.delta_warn),
        PDDA_FIELD("imitation.delta_drift", match.imitation.delta_drift),
        PDDA_FIELD("imitation.grace_period", match.imitation.grace_period),
        PDDA_FIELD("imitation.subspace_size", match.imitation.subspace_size),
        PDDA_FIELD("imitation.n_split_candidates", match.imitation.n_split_candidates),
        PDDA_FIELD("imitation.tie_threshold", match.imitation.tie_threshold),
        PDDA_FIELD("imitation.max_depth", match.imitation.max_depth),
        PDDA_FIELD("imitation.weight_window", match.imitation.weight_window),
        PDDA_FIELD("imitation.weight_floor", match.imitation.weight_floor),
        PDDA_FIELD("imitation.prequential_window", match.imitation.prequential_window),
        PDDA_FIELD("imitation.detectors_enabled", match.imitation.detectors_enabled),
        PDDA_FIELD("imitation.unit_weights", match.imitation.unit_weights),
        PDDA_FIELD("rl.gamma", match.rl.gamma),
        PDDA_FIELD("rl.n_steps", match.rl.n_steps),
        PDDA_FIELD("rl.learning_rate", match.rl.learning_rate),
        PDDA_FIELD("rl.entropy_coef", match.rl.entropy_coef),
        PDDA_FIELD("rl.value_coef", match.rl.value_coef),
        PDDA_FIELD("rl.max_grad_norm", match.rl.max_grad_norm),
        PDDA_FIELD("rl.rms_decay", match.rl.rms_decay),
        PDDA_FIELD("rl.rms_epsilon", match.rl.rms_epsilon),
        PDDA_FIELD("rl.action_repeat", match.rl.action_repeat),
        PDDA_FIELD("rl.n_envs", match.rl.n_envs),
        PDDA_FIELD("orchestrator.swap_interval", match.schedule.interval),
        PDDA_FIELD("orchestrator.min_observations", match.schedule.min_observations),
        PDDA_FIELD("orchestrator.budget_frames", match.budget_frames),
        PDDA_FIELD("orchestrator.rounds", match.rounds),
        PDDA_FIELD("orchestrator.train_spawn_jitter", match.train_spawn_jitter),
        PDDA_FIELD("orchestrator.train_episode_frames", match.train_episode_frames),
        PDDA_FIELD("orchestrator.imitation_refresh", match.imitation_refresh),
        PDDA_FIELD("persona.spec", persona),
        PDDA_FIELD("experiment.episodes", episodes),
        PDDA_FIELD("experiment.seed", seed),
        PDDA_FIELD("experiment.timeline_interval", timeline_interval),
        PDDA_FIELD("service.port", service.port),
        PDDA_FIELD("service.ratings_file", service.ratings_file),
        PDDA_FIELD("service.static_dir", service.static_dir),
    };
    return table;
}

#undef PDDA_FIELD

const Field& find_field(const std::string& key) {
    for (const Field& f : fields())
        if (f.key == key) return f;
    throw ConfigError("config: unknown key '" + key + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
    match.validate();
    parse_persona(persona, 0);
    if (episodes < 1) throw ConfigError("experiment: episodes must be >= 1");
    if (timeline_interval < 1) throw ConfigError("experiment: timeline_interval must be >= 1");
    if (service.port < 0 || service.port > 65535) throw ConfigError("service: port out of range");
}

ExperimentConfig config_from_ptree(const pt::ptree& tree) {
    ExperimentConfig c;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty())
            throw ConfigError("config: key '" + section + "' outside a section");
        for (const auto& [key, value] : body) find_field(section + "." + key).set(c, value.data());
    }
    return c;
}

pt::ptree config_to_ptree(const ExperimentConfig& c) {
    pt::ptree tree;
    for (const Field& f : fields()) tree.put(pt::ptree::path_type(f.key, '.'), f.get(c));
    return tree;
}

ExperimentConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
    pt::ptree tree;
    if (!path.empty()) {
        try {
            pt::ini_parser::read_ini(path.string(), tree);
        } catch (const pt::ini_parser_error& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
    }
    ExperimentConfig c = config_from_ptree(tree);
    for (const std::string& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ConfigError("config: override must be section.key=value: '" + o + "'");
        find_field(o.substr(0, eq)).set(c, o.substr(eq + 1));
    }
    c.validate();
    return c;
}

void write_config(std::ostream& out, const ExperimentConfig& config) {
    pt::ini_parser::write_ini(out, config_to_ptree(config));
}

// ---------------------------------------------------------------- metrics

EpisodeMetrics episode_metrics_from_log(const EpisodeLog& log) {
    EpisodeMetrics m;
    m.seed = log.seed;
    m.aborted = log.aborted;
    double reward_sum = 0.0;
    const FrameRecord* last = nullptr;
    int p1_wins = 0;
    for (const auto& r : log.records) {
        if (const auto* f = std::get_if<FrameRecord>(&r)) {
            ++m.frames;
            reward_sum -= f->reward_p1;
            last = f;
        } else if (std::holds_alternative<SwapRecord>(r)) {
            ++m.swaps;
        } else if (std::holds_alternative<DriftRecord>(r)) {
            ++m.drift_events;
        } else if (const auto* e = std::get_if<RoundEndRecord>(&r)) {
            ++m.rounds;
            if (e->winner == Winner::P1) ++p1_wins;
            if (e->winner == Winner::P2) ++m.opponent_round_wins;
        }
    }
    if (last) m.hp_differential = last->hp_p1 - last->hp_p2;
    m.opponent_mean_reward = m.frames > 0 ? reward_sum / static_cast<double>(m.frames) : 0.0;
    m.winner = p1_wins > m.opponent_round_wins   ? Winner::P1
               : p1_wins < m.opponent_round_wins ? Winner::P2
               : m.rounds > 0                    ? Winner::Draw
                                                 : Winner::None;
    return m;
}

Aggregate aggregate(const std::vector<double>& values) {
    Aggregate a;
    if (values.empty()) return a;
    double sum = 0.0;
    for (double v : values) sum += v;
    a.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - a.mean) * (v - a.mean);
        a.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return a;
}

std::map<std::string, Aggregate> aggregate_metrics(const std::vector<EpisodeMetrics>& episodes) {
    std::map<std::string, std::vector<double>> columns;
    for (const auto& e : episodes) {
        columns["hp_differential"].push_back(e.hp_differential);
        columns["frames"].push_back(static_cast<double>(e.frames));
        columns["swaps"].push_back(e.swaps);
        columns["drift_events"].push_back(e.drift_events);
        columns["opponent_win_rate"].push_back(e.rounds > 0 ? static_cast<double>(e.opponent_round_wins) / e.rounds
                                                            : 0.0);
        columns["opponent_mean_reward"].push_back(e.opponent_mean_reward);
        columns["lifetime_acc"].push_back(e.lifetime_acc);
        columns["final_window_acc"].push_back(e.window_acc_timeline.empty() ? 0.0
                                                                            : e.window_acc_timeline.back().window_acc);
    }
    std::map<std::string, Aggregate> out;
    for (const auto& [name, values] : columns) out[name] = aggregate(values);
    return out;
}

namespace {

Winner winner_from(const std::string& s) {
    for (Winner w : {Winner::None, Winner::P1, Winner::P2, Winner::Draw})
        if (s == winner_name(w)) return w;
    throw std::runtime_error("metrics: unknown winner '" + s + "'");
}

}  // namespace

json metrics_to_json(const MetricsReport& report) {
    json episodes = json::array();
    for (const auto& e : report.episodes) {
        json timeline = json::array();
        for (const auto& s : e.window_acc_timeline) timeline.push_back({s.frame, s.window_acc});
        episodes.push_back({{"episode", e.episode},
                            {"seed", e.seed},
                            {"winner", winner_name(e.winner)},
                            {"hp_differential", e.hp_differential},
                            {"frames", e.frames},
                            {"swaps", e.swaps},
                            {"drift_events", e.drift_events},
                            {"rounds", e.rounds},
                            {"opponent_round_wins", e.opponent_round_wins},
                            {"opponent_mean_reward", e.opponent_mean_reward},
                            {"window_acc_timeline", timeline},
                            {"lifetime_acc", e.lifetime_acc},
                            {"aborted", e.aborted}});
    }
    json aggregates = json::object();
    for (const auto& [name, a] : report.aggregates) aggregates[name] = {{"mean", a.mean}, {"stddev", a.stddev}};
    return {{"episodes", episodes}, {"aggregates", aggregates}};
}

MetricsReport metrics_from_json(const json& j) {
    MetricsReport r;
    for (const auto& e : j.at("episodes")) {
        EpisodeMetrics m;
        m.episode = e.at("episode").get<int>();
        m.seed = e.at("seed").get<std::uint64_t>();
        m.winner = winner_from(e.at("winner").get<std::string>());
        m.hp_differential = e.at("hp_differential").get<int>();
        m.frames = e.at("frames").get<std::int64_t>();
        m.swaps = e.at("swaps").get<int>();
        m.drift_events = e.at("drift_events").get<int>();
        m.rounds = e.at("rounds").get<int>();
        m.opponent_round_wins = e.at("opponent_round_wins").get<int>();
        m.opponent_mean_reward = e.at("opponent_mean_reward").get<double>();
        for (const auto& s : e.at("window_acc_timeline"))
            m.window_acc_timeline.push_back({s.at(0).get<std::int64_t>(), s.at(1).get<double>()});
        m.lifetime_acc = e.at("lifetime_acc").get<double>();
        m.aborted = e.at("aborted").get<bool>();
        r.episodes.push_back(std::move(m));
    }
    for (const auto& [name, a] : j.at("aggregates").items())
        r.aggregates[name] = {a.at("mean").get<double>(), a.at("stddev").get<double>()};
    return r;
}

// ---------------------------------------------------------------- experiment

namespace {

std::ofstream open_output(const fs::path& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(path, mode);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

}  // namespace

MetricsReport run_experiment(const ExperimentConfig& config, const fs::path& out) {
    config.validate();
    std::error_code ec;
    fs::create_directories(out / "checkpoints", ec);
    if (ec) throw std::runtime_error("cannot create output directory " + out.string() + ": " + ec.message());
    {
        auto snap = open_output(out / "config.snapshot");
        write_config(snap, config);
    }

    MetricsReport report;
    for (int ep = 0; ep < config.episodes; ++ep) {
        const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(ep);
        PersonaSource player(parse_persona(config.persona, Rng::derive(seed, 7)), config.match.env);
        std::vector<AccuracySample> timeline;
        const auto observer = [&](const PddaSession& s) {
            if (s.frame() % config.timeline_interval == 0)
                timeline.push_back({s.frame(), s.forest().prequential_accuracy().window_acc.value_or(0.0)});
        };
        MatchResult result = run_match(player, config.match, seed, config.persona, observer);
        {
            auto f = open_output(out / ("episode_" + std::to_string(ep) + ".jsonl"));
            write_jsonl(f, result.log);
        }
        EpisodeMetrics m = episode_metrics_from_log(result.log);
        m.episode = ep;
        m.window_acc_timeline = std::move(timeline);
        m.lifetime_acc = result.forest.prequential_accuracy().lifetime_acc.value_or(0.0);
        report.episodes.push_back(std::move(m));

        if (ep + 1 == config.episodes) {
            auto fi = open_output(out / "checkpoints" / "imitation.bin", std::ios::out | std::ios::binary);
            result.forest.save(fi);
            auto fp = open_output(out / "checkpoints" / "policy.bin", std::ios::out | std::ios::binary);
            policy::save_params(fp, result.params);
        }
    }
    report.aggregates = aggregate_metrics(report.episodes);
    auto mf = open_output(out / "metrics.json");
    mf << metrics_to_json(report).dump(2) << '\n';
    return report;
}

// ---------------------------------------------------------------- imitation eval

std::size_t ImitationReport::drifts_between(std::int64_t lo, std::int64_t hi) const {
    return static_cast<std::size_t>(std::count_if(events.begin(), events.end(), [&](const DriftEvent& e) {
        return e.kind == imitation::ForestEventKind::Drift && e.step >= lo && e.step < hi;
    }));
}

ImitationReport eval_imitation(const std::string& persona_spec, std::int64_t steps, const ExperimentConfig& config,
                               std::uint64_t seed) {
    if (steps < 1) throw ConfigError("eval-imitation: steps must be >= 1");
    const EnvConfig& env = config.match.env;
    imitation::ForestModel forest(config.match.imitation, Rng::derive(seed, 1));
    Persona persona = parse_persona(persona_spec, Rng::derive(seed, 7));
    ImitationReport report;
    report.window_acc.reserve(static_cast<std::size_t>(steps));
    report.correct.reserve(static_cast<std::size_t>(steps));
    GameState state = new_game(env, Rng::derive(seed, 1000));
    for (std::int64_t i = 0; i < steps; ++i) {
        const ActionId a1 = persona_act(persona, env, state, Side::P1, i);
        const ActionId a2 = rule_based_opponent(env, state, Side::P2);
        const FeatureVector features = encode_features(env, state, Side::P1);
        report.correct.push_back(forest.predict_one(features).action == a1 ? 1 : 0);
        for (const auto& e : forest.learn_one({features, a1}))
            report.events.push_back({i, e.member, e.kind});
        report.window_acc.push_back(
            forest.prequential_accuracy().window_acc.value_or(std::numeric_limits<double>::quiet_NaN()));
        state = step(env, state, a1, a2).next;
        if (state.round_over()) {
            ++report.rounds;
            state = new_game(env, Rng::derive(seed, 1000 + static_cast<std::uint64_t>(report.rounds)));
        }
    }
    report.lifetime_acc = forest.prequential_accuracy().lifetime_acc.value_or(0.0);
    return report;
}

json imitation_report_json(const ImitationReport& report, std::int64_t sample_every) {
    json timeline = json::array();
    const auto n = static_cast<std::int64_t>(report.window_acc.size());
    for (std::int64_t i = sample_every - 1; i < n; i += sample_every) timeline.push_back({i, report.window_acc[i]});
    json events = json::array();
    for (const auto& e : report.events)
        events.push_back({{"step", e.step},
                          {"member", e.member},
                          {"kind", e.kind == imitation::ForestEventKind::Drift ? "drift" : "warning"}});
    return {{"steps", n},
            {"final_window_acc", n > 0 ? report.window_acc.back() : 0.0},
            {"lifetime_acc", report.lifetime_acc},
            {"rounds", report.rounds},
            {"drift_events", report.drifts_between(0, n)},
            {"window_acc_timeline", timeline},
            {"events", events}};
}

// ---------------------------------------------------------------- rl eval

namespace {

using OpponentFn = std::function<ActionId(const GameState&, std::int64_t)>;

RlEvalReport play_rounds(const policy::NetworkParams& params, const std::function<OpponentFn(int)>& make_opponent,
                         int rounds, const EnvConfig& env, std::uint64_t seed) {
    if (rounds < 1) throw ConfigError("eval-rl: rounds must be >= 1");
    const AgentSnapshot learner = rl_snapshot(params, env, Side::P2);
    RlEvalReport report;
    double sum = 0.0;
    for (int r = 0; r < rounds; ++r) {
        OpponentFn opponent = make_opponent(r);
        GameState s = new_game(env, Rng::derive(seed, static_cast<std::uint64_t>(r)));
        for (std::int64_t f = 0; !s.round_over(); ++f) s = step(env, s, opponent(s, f), learner.act(s)).next;
        switch (decide_winner(s)) {
            case Winner::P2: ++report.wins; break;
            case Winner::P1: ++report.losses; break;
            default: ++report.draws; break;
        }
        report.hp_differentials.push_back(s.p2.hp - s.p1.hp);
        sum += s.p2.hp - s.p1.hp;
    }
    report.mean_hp_differential = sum / rounds;
    return report;
}

}  // namespace

RlEvalReport eval_rl_against(const policy::NetworkParams& params, const AgentSnapshot& opponent, int rounds,
                             const EnvConfig& env, std::uint64_t seed) {
    return play_rounds(
        params, [&](int) -> OpponentFn { return [&](const GameState& s, std::int64_t) { return opponent.act(s); }; },
        rounds, env, seed);
}

RlEvalReport eval_rl(const policy::NetworkParams& params, const std::string& opponent_spec, int rounds,
                     const EnvConfig& env, std::uint64_t seed) {
    if (opponent_spec == "self") return eval_rl_against(params, rl_snapshot(params, env, Side::P1), rounds, env, seed);
    const std::string prefix = "imitation:";
    if (opponent_spec.rfind(prefix, 0) == 0) {
        const std::string path = opponent_spec.substr(prefix.size());
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot read imitation checkpoint " + path);
        const auto model = imitation::ForestModel::load(in);
        return eval_rl_against(params, imitation_snapshot(model, env, Side::P1), rounds, env, seed);
    }
    parse_persona(opponent_spec, 0);  // validate before playing
    return play_rounds(
        params,
        [&](int r) -> OpponentFn {
            auto persona = std::make_shared<Persona>(
                parse_persona(opponent_spec, Rng::derive(seed, 5000 + static_cast<std::uint64_t>(r))));
            return [persona, &env](const GameState& s, std::int64_t f) {
                return persona_act(*persona, env, s, Side::P1, f);
            };
        },
        rounds, env, seed);
}

json rl_report_json(const RlEvalReport& r) {
    return {{"wins", r.wins},
            {"losses", r.losses},
            {"draws", r.draws},
            {"rounds", r.wins + r.losses + r.draws},
            {"mean_hp_differential", r.mean_hp_differential},
            {"hp_differentials", r.hp_differentials}};
}

// ---------------------------------------------------------------- verify

GameState random_state(const EnvConfig& env, Rng& rng) {
    auto in_range = [&rng](int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); };
    GameState s;
    s.frame = in_range(0, env.round_frames - 1);
    s.timer_frames_left = env.round_frames - static_cast<int>(s.frame);
    s.rng_state = rng.state();
    const int half = env.body_w / 2;
    for (Side side : {Side::P1, Side::P2}) {
        CharacterState& c = s.ch(side);
        c.x = in_range(half, env.stage_w - half);
        c.hp = in_range(0, env.hp_max);
        c.energy = in_range(0, env.energy_max);
        c.current_action = static_cast<ActionId>(rng.below(kNumActions));
        const ActionSpec& spec = env.spec(c.current_action);
        if (spec.total_frames() > 0) {
            std::vector<std::pair<Phase, int>> phases;
            if (spec.startup_frames > 0) phases.emplace_back(Phase::Startup, spec.startup_frames);
            if (spec.active_frames > 0) phases.emplace_back(Phase::Active, spec.active_frames);
            if (spec.recovery_frames > 0) phases.emplace_back(Phase::Recovery, spec.recovery_frames);
            const auto& [phase, len] = phases[rng.below(phases.size())];
            c.phase = phase;
            c.phase_frames_left = in_range(1, len);
        }
        if (c.current_action == ActionId::Jump) c.y = in_range(0, env.jump_height);
    }
    s.p1.facing = s.p2.x >= s.p1.x ? Facing::Right : Facing::Left;
    s.p2.facing = s.p1.x >= s.p2.x ? Facing::Right : Facing::Left;
    return s;
}

namespace {

SuiteResult suite_arena(std::uint64_t seed) {
    const EnvConfig env;
    bool deterministic = true, zero_sum = true, bounded = true, monotone = true, terminates = true;
    std::int64_t frames = 0;
    for (std::uint64_t run = 0; run < 4; ++run) {
        std::vector<std::uint64_t> hashes[2];
        for (int rep = 0; rep < 2; ++rep) {
            Rng actions(Rng::derive(seed, run));
            GameState s = new_game(env, Rng::derive(seed, 100 + run));
            int round_len = 0;
            for (int f = 0; f < 5000; ++f) {
                const auto a1 = static_cast<ActionId>(actions.below(kNumActions));
                const auto a2 = static_cast<ActionId>(actions.below(kNumActions));
                const StepOutcome out = step(env, s, a1, a2);
                hashes[rep].push_back(state_hash(out.next));
                if (rep == 0) {
                    ++frames;
                    zero_sum = zero_sum && out.reward_p1 + out.reward_p2 == 0.0;
                    for (Side side : {Side::P1, Side::P2}) {
                        const CharacterState& c = out.next.ch(side);
                        bounded = bounded && c.hp >= 0 && c.hp <= env.hp_max && c.energy >= 0 &&
                                  c.energy <= env.energy_max;
                        monotone = monotone && c.hp <= s.ch(side).hp;
                    }
                }
                ++round_len;
                s = out.next;
                if (out.round_over) {
                    terminates = terminates && round_len <= env.round_frames;
                    round_len = 0;
                    s = new_game(env, Rng::derive(seed, 200 + run + static_cast<std::uint64_t>(f)));
                }
            }
        }
        deterministic = deterministic && hashes[0] == hashes[1];
    }
    const bool pass = deterministic && zero_sum && bounded && monotone && terminates;
    return {"arena", pass,
            {{"frames", frames},
             {"deterministic", deterministic},
             {"zero_sum", zero_sum},
             {"bounded", bounded},
             {"hp_monotone", monotone},
             {"terminates", terminates}}};
}

SuiteResult suite_encoder(std::uint64_t seed) {
    const EnvConfig env;
    Rng rng(Rng::derive(seed, 11));
    int corner_failures = 0, antisymmetry_failures = 0;
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
        const GameState s = random_state(env, rng);
        const ObservationFrame f = render_frame(env, s);
        const auto expect = [](int v, int max) { return static_cast<int>(static_cast<long long>(v) * 255 / max); };
        if (f.at(0, 0) != expect(s.p1.hp, env.hp_max) || f.at(0, 1) != expect(s.p1.energy, env.energy_max) ||
            f.at(0, 95) != expect(s.p2.hp, env.hp_max) || f.at(0, 94) != expect(s.p2.energy, env.energy_max))
            ++corner_failures;
        const FeatureVector a = encode_features(env, s, Side::P1), b = encode_features(env, s, Side::P2);
        if (a.dx() != -b.dx() || a.dy() != -b.dy() || a.self_action() != b.opp_action() ||
            a.opp_action() != b.self_action())
            ++antisymmetry_failures;
    }
    return {"encoder", corner_failures == 0 && antisymmetry_failures == 0,
            {{"states", n}, {"corner_failures", corner_failures}, {"antisymmetry_failures", antisymmetry_failures}}};
}

SuiteResult suite_hoeffding(std::uint64_t seed) {
    Rng rng(Rng::derive(seed, 12));
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double range = 0.1 + rng.uniform() * 10.0;
        const double delta = std::pow(10.0, -1.0 - rng.uniform() * 8.0);
        const double n = 1.0 + std::floor(rng.uniform() * 1e6);
        const double closed = std::sqrt(range * range * std::log(1.0 / delta) / (2.0 * n));
        worst = std::max(worst, std::abs(imitation::hoeffding_bound(range, delta, n) - closed));
    }
    return {"hoeffding", worst <= 1e-12, {{"triples", 100}, {"max_abs_error", worst}}};
}

SuiteResult suite_adwin(std::uint64_t seed) {
    Rng rng(Rng::derive(seed, 13));
    imitation::AdwinDetector shift(0.002);
    std::int64_t first_detection = -1, false_alarms = 0;
    for (int i = 0; i < 2000; ++i) {
        const double p = i < 1000 ? 0.9 : 0.1;
        const bool cut = shift.update(rng.uniform() < p ? 1.0 : 0.0);
        if (cut && i < 1000) ++false_alarms;
        if (cut && i >= 1000 && first_detection < 0) first_detection = i;
    }
    imitation::AdwinDetector constant(0.002);
    int constant_cuts = 0;
    for (int i = 0; i < 10000; ++i) constant_cuts += constant.update(1.0) ? 1 : 0;
    const bool pass = first_detection >= 1000 && false_alarms == 0 && constant_cuts == 0;
    return {"adwin", pass,
            {{"detection_step", first_detection},
             {"delay", first_detection < 0 ? -1 : first_detection - 1000},
             {"false_alarms", false_alarms},
             {"constant_cuts", constant_cuts}}};
}

SuiteResult suite_gradients(std::uint64_t seed) {
    const auto fx = policy::make_gradient_check_fixture(seed);
    const auto res = policy::gradient_check(fx.net, fx.batch, {0.5, 0.01});
    return {"gradients", res.max_relative_error < 1e-4,
            {{"parameters", fx.net.theta.size()}, {"max_relative_error", res.max_relative_error}}};
}

SuiteResult suite_returns(std::uint64_t) {
    policy::RolloutBuffer rb;
    for (double r : {1.0, 0.0, 1.0}) rb.steps.push_back({{}, ActionId::Idle, r, false, 0.0, 0.0});
    rb.bootstrap_value = 2.0;
    const double g_boot = policy::n_step_returns(rb, 0.9)[0].ret;
    rb.steps.back().done = true;
    const double g_done = policy::n_step_returns(rb, 0.9)[0].ret;
    rb.steps.back().done = false;
    bool collapse = true;
    for (std::size_t t = 0; t < rb.steps.size(); ++t)
        collapse = collapse && policy::n_step_returns(rb, 0.0)[t].ret == rb.steps[t].reward;
    const bool pass = std::abs(g_boot - 3.268) <= 1e-9 && std::abs(g_done - 1.81) <= 1e-9 && collapse;
    return {"returns", pass, {{"bootstrapped", g_boot}, {"terminal", g_done}, {"gamma_zero_exact", collapse}}};
}

}  // namespace

const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names = {"arena", "encoder", "hoeffding", "adwin", "gradients", "returns"};
    return names;
}

std::vector<SuiteResult> verify(const std::string& selector, std::uint64_t seed) {
    using Suite = SuiteResult (*)(std::uint64_t);
    static const std::map<std::string, Suite> suites = {
        {"arena", suite_arena},         {"encoder", suite_encoder},     {"hoeffding", suite_hoeffding},
        {"adwin", suite_adwin},         {"gradients", suite_gradients}, {"returns", suite_returns},
    };
    std::vector<SuiteResult> out;
    if (selector == "all") {
        for (const auto& name : suite_names()) out.push_back(suites.at(name)(seed));
        return out;
    }
    const auto it = suites.find(selector);
    if (it == suites.end()) throw ConfigError("verify: unknown suite '" + selector + "'");
    out.push_back(it->second(seed));
    return out;
}

}  // namespace pdda::harness
