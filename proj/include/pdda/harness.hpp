#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "pdda/orchestrator.hpp"

namespace pdda::harness {

struct ServiceSettings {
    int port = 8080;
    std::string ratings_file = "ratings.tsv";
    std::string static_dir = "webui";
};

struct ExperimentConfig {
    MatchConfig match;
    std::string persona = "idle";
    int episodes = 1;
    std::uint64_t seed = 0;
    std::int64_t timeline_interval = 500;  // frames between imitation accuracy samples
    ServiceSettings service;

    void validate() const;  // throws ConfigError
};

// Key-value config with sections [env] [imitation] [rl] [orchestrator]
// [persona] [experiment] [service]. Unknown keys are rejected.
ExperimentConfig config_from_ptree(const boost::property_tree::ptree& tree);
boost::property_tree::ptree config_to_ptree(const ExperimentConfig& config);

// Reads an INI file (or starts from defaults when path is empty) and applies
// "section.key=value" overrides in order. Throws ConfigError.
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
void write_config(std::ostream& out, const ExperimentConfig& config);

struct AccuracySample {
    std::int64_t frame = 0;
    double window_acc = 0.0;
};

struct EpisodeMetrics {
    int episode = 0;
    std::uint64_t seed = 0;
    Winner winner = Winner::None;  // majority of round wins
    int hp_differential = 0;       // p1 minus p2 after the last frame
    std::int64_t frames = 0;
    int swaps = 0;
    int drift_events = 0;
    int rounds = 0;
    int opponent_round_wins = 0;
    double opponent_mean_reward = 0.0;  // per frame, opponent's perspective
    std::vector<AccuracySample> window_acc_timeline;
    double lifetime_acc = 0.0;
    bool aborted = false;
};

struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation; 0 with one episode
};

struct MetricsReport {
    std::vector<EpisodeMetrics> episodes;
    std::map<std::string, Aggregate> aggregates;
};

// Per-episode quantities that can be recomputed from an EpisodeLog alone.
EpisodeMetrics episode_metrics_from_log(const EpisodeLog& log);
Aggregate aggregate(const std::vector<double>& values);
std::map<std::string, Aggregate> aggregate_metrics(const std::vector<EpisodeMetrics>& episodes);

nlohmann::json metrics_to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const nlohmann::json& j);

// Runs config.episodes matches with seeds seed+0, seed+1, ... and writes
// config.snapshot, episode_<n>.jsonl, metrics.json and checkpoints/ under out.
MetricsReport run_experiment(const ExperimentConfig& config, const std::filesystem::path& out);

struct DriftEvent {
    std::int64_t step = 0;
    int member = 0;
    imitation::ForestEventKind kind = imitation::ForestEventKind::Drift;
};

struct ImitationReport {
    std::vector<double> window_acc;    // per step, NaN until the first outcome
    std::vector<std::uint8_t> correct;  // per step, 1 when the test-then-train prediction was right
    double lifetime_acc = 0.0;
    std::vector<DriftEvent> events;
    std::int64_t rounds = 0;

    std::size_t drifts_between(std::int64_t lo, std::int64_t hi) const;  // steps in [lo, hi)
};

// Test-then-train on (features, persona action) pairs from live frames, the
// persona on p1 against the rule-based opponent on p2.
ImitationReport eval_imitation(const std::string& persona_spec, std::int64_t steps, const ExperimentConfig& config,
                               std::uint64_t seed);
nlohmann::json imitation_report_json(const ImitationReport& report, std::int64_t sample_every = 100);

struct RlEvalReport {
    int wins = 0;
    int losses = 0;
    int draws = 0;
    double mean_hp_differential = 0.0;  // learner minus opponent
    std::vector<int> hp_differentials;
};

// The greedy policy plays p2 against the opponent for `rounds` rounds; round r
// starts from new_game(env, derive(seed, r)). Opponent specs: any persona,
// "imitation:<path to forest checkpoint>", or "self".
RlEvalReport eval_rl(const policy::NetworkParams& params, const std::string& opponent_spec, int rounds,
                     const EnvConfig& env, std::uint64_t seed);
RlEvalReport eval_rl_against(const policy::NetworkParams& params, const AgentSnapshot& opponent, int rounds,
                             const EnvConfig& env, std::uint64_t seed);
nlohmann::json rl_report_json(const RlEvalReport& report);

struct SuiteResult {
    std::string name;
    bool pass = false;
    nlohmann::json detail;
};

const std::vector<std::string>& suite_names();
// "all" or one suite name; throws ConfigError on an unknown selector.
std::vector<SuiteResult> verify(const std::string& selector, std::uint64_t seed = 0);

// Uniformly random, internally consistent game state for property checks.
GameState random_state(const EnvConfig& env, Rng& rng);

}  // namespace pdda::harness
