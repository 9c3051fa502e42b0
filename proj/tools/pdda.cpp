#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <pthread.h>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "pdda/harness.hpp"
#include "pdda/kernels.hpp"
#include "pdda/service.hpp"

namespace fs = std::filesystem;
using namespace pdda;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInvalidConfig = 2;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    std::vector<std::string> set;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "INI config file (defaults when omitted)");
    cmd->add_option("--seed", c.seed, "Seed; overrides experiment.seed");
    cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
    cmd->add_option("--set", c.set, "Override a config value, section.key=value (repeatable)");
}

harness::ExperimentConfig load(const Common& c, std::vector<std::string> extra = {}) {
    std::vector<std::string> overrides = c.set;
    overrides.insert(overrides.end(), extra.begin(), extra.end());
    if (c.seed) overrides.push_back("experiment.seed=" + std::to_string(*c.seed));
    return harness::load_config(c.config, overrides);
}

void write_json(const fs::path& dir, const std::string& name, const json& j) {
    fs::create_directories(dir);
    std::ofstream f(dir / name);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    f << j.dump(2) << '\n';
}

AgentSnapshot training_opponent(const std::string& spec, const EnvConfig& env) {
    const std::string prefix = "imitation:";
    if (spec == "idle") return idle_snapshot();
    if (spec == "rule_based") return rule_based_snapshot(env, Side::P1);
    if (spec.rfind(prefix, 0) == 0) {
        std::ifstream in(spec.substr(prefix.size()), std::ios::binary);
        if (!in) throw std::runtime_error("cannot read " + spec.substr(prefix.size()));
        return imitation_snapshot(imitation::ForestModel::load(in), env, Side::P1);
    }
    throw ConfigError("eval-rl: training opponent must be idle, rule_based or imitation:<path>, got '" + spec + "'");
}

int run_serve(const harness::ExperimentConfig& config, const Common& c) {
    // Route SIGINT/SIGTERM to this thread so the server threads never see them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    service::Server server(config, config.seed, c.out);
    const unsigned short port = server.listen(static_cast<unsigned short>(config.service.port));
    std::cout << "serving on port " << port << " (ws /play, static " << config.service.static_dir << ")"
              << std::endl;
    std::thread io([&] { server.run(); });
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
    io.join();
    std::cout << "stopped; frame overruns: " << server.overruns() << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Personalized dynamic difficulty adjustment: simulation, evaluation and live service"};
    app.require_subcommand(1);

    Common sim_c, imit_c, rl_c, verify_c, serve_c;
    std::optional<std::string> sim_persona;
    std::optional<int> sim_episodes;
    auto* sim = app.add_subcommand("sim", "Run persona matches through the full adaptive loop");
    add_common(sim, sim_c);
    sim->add_option("--persona", sim_persona, "Persona spec, e.g. noisy:rushdown:0.2");
    sim->add_option("--episodes", sim_episodes, "Number of matches");

    std::optional<std::string> imit_persona;
    std::int64_t imit_steps = 20000;
    std::int64_t imit_every = 100;
    auto* imit = app.add_subcommand("eval-imitation", "Stream persona frames through the imitation learner");
    add_common(imit, imit_c);
    imit->add_option("--persona", imit_persona, "Persona spec (defaults to persona.spec)");
    imit->add_option("--steps", imit_steps, "Frames to stream")->capture_default_str();
    imit->add_option("--sample-every", imit_every, "Timeline sampling interval")->capture_default_str();

    std::string rl_checkpoint, rl_train_opponent = "idle";
    std::optional<std::string> rl_opponent;
    int rl_rounds = 20;
    std::int64_t rl_train_frames = 0;
    auto* rl = app.add_subcommand("eval-rl", "Evaluate (optionally first train) a greedy policy");
    add_common(rl, rl_c);
    rl->add_option("--checkpoint", rl_checkpoint, "Policy checkpoint to evaluate");
    rl->add_option("--opponent", rl_opponent, "Persona, imitation:<path> or self (defaults to persona.spec)");
    rl->add_option("--rounds", rl_rounds, "Evaluation rounds")->capture_default_str();
    rl->add_option("--train-frames", rl_train_frames, "Train a fresh policy for this many frames first");
    rl->add_option("--train-opponent", rl_train_opponent, "idle, rule_based or imitation:<path>")->capture_default_str();

    std::string suite = "all";
    auto* ver = app.add_subcommand("verify", "Run built-in invariant suites");
    add_common(ver, verify_c);
    ver->add_option("suite", suite, "all or one of: arena encoder hoeffding adwin gradients returns")
        ->capture_default_str();

    std::optional<int> serve_port;
    std::optional<std::string> serve_static, serve_ratings;
    auto* serve = app.add_subcommand("serve", "Serve live matches over WebSocket");
    add_common(serve, serve_c);
    serve->add_option("--port", serve_port, "TCP port; overrides service.port");
    serve->add_option("--static-dir", serve_static, "Client bundle directory");
    serve->add_option("--ratings", serve_ratings, "Ratings file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInvalidConfig;
    }

    kernels::flush_denormals();
    try {
        if (sim->parsed()) {
            std::vector<std::string> extra;
            if (sim_persona) extra.push_back("persona.spec=" + *sim_persona);
            if (sim_episodes) extra.push_back("experiment.episodes=" + std::to_string(*sim_episodes));
            const auto config = load(sim_c, extra);
            const auto report = harness::run_experiment(config, sim_c.out);
            std::cout << harness::metrics_to_json(report)["aggregates"].dump() << '\n';
            return kExitOk;
        }
        if (imit->parsed()) {
            const auto config = load(imit_c);
            const std::string spec = imit_persona.value_or(config.persona);
            parse_persona(spec, 0);
            const auto report = harness::eval_imitation(spec, imit_steps, config, config.seed);
            json j = harness::imitation_report_json(report, imit_every);
            j["persona"] = spec;
            j["seed"] = config.seed;
            write_json(imit_c.out, "imitation.json", j);
            std::cout << "window_acc " << j["final_window_acc"] << " lifetime_acc " << j["lifetime_acc"]
                      << " drift_events " << j["drift_events"] << '\n';
            return kExitOk;
        }
        if (rl->parsed()) {
            const auto config = load(rl_c);
            const std::string opponent = rl_opponent.value_or(config.persona);
            policy::NetworkParams params;
            if (rl_train_frames > 0) {
                EnvConfig train_env = config.match.env;
                train_env.spawn_jitter = config.match.train_spawn_jitter;
                policy::TrainConfig tc = config.match.rl;
                tc.seed = config.seed;
                BackgroundTrainer trainer(train_env, tc, training_opponent(rl_train_opponent, config.match.env),
                                          config.seed, config.match.train_episode_frames);
                trainer.tick(rl_train_frames);
                params = trainer.params();
                fs::create_directories(rl_c.out);
                std::ofstream f(fs::path(rl_c.out) / "policy.bin", std::ios::binary);
                policy::save_params(f, params);
            } else {
                if (rl_checkpoint.empty()) throw ConfigError("eval-rl: --checkpoint or --train-frames is required");
                std::ifstream in(rl_checkpoint, std::ios::binary);
                if (!in) throw std::runtime_error("cannot read checkpoint " + rl_checkpoint);
                params = policy::load_params(in);
            }
            const auto report = harness::eval_rl(params, opponent, rl_rounds, config.match.env, config.seed);
            json j = harness::rl_report_json(report);
            j["opponent"] = opponent;
            j["seed"] = config.seed;
            write_json(rl_c.out, "rl_eval.json", j);
            std::cout << "wins " << report.wins << " losses " << report.losses << " draws " << report.draws
                      << " mean_hp_differential " << report.mean_hp_differential << '\n';
            return kExitOk;
        }
        if (ver->parsed()) {
            const auto config = load(verify_c);
            const auto results = harness::verify(suite, config.seed);
            bool all = true;
            json j = json::array();
            for (const auto& r : results) {
                all = all && r.pass;
                json line = {{"suite", r.name}, {"pass", r.pass}, {"detail", r.detail}};
                std::cout << line.dump() << '\n';
                j.push_back(line);
            }
            if (verify_c.out != "out" || fs::exists(verify_c.out)) write_json(verify_c.out, "verify.json", j);
            return all ? kExitOk : kExitFailure;
        }
        if (serve->parsed()) {
            std::vector<std::string> extra;
            if (serve_port) extra.push_back("service.port=" + std::to_string(*serve_port));
            if (serve_static) extra.push_back("service.static_dir=" + *serve_static);
            if (serve_ratings) extra.push_back("service.ratings_file=" + *serve_ratings);
            return run_serve(load(serve_c, extra), serve_c);
        }
    } catch (const ConfigError& e) {
        std::cerr << "invalid config: " << e.what() << '\n';
        return kExitInvalidConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitFailure;
}
