#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "pdda/arena.hpp"
#include "pdda/rng.hpp"

namespace pdda::imitation {

using Distribution = std::array<double, kNumActions>;

struct LabeledExample {
    FeatureVector features;
    ActionId label = ActionId::Idle;
};

// sqrt(R^2 ln(1/delta) / (2n))
double hoeffding_bound(double range, double delta, double n);

// Adaptive windowing over a stream of values in [0,1], kept as an exponential
// histogram. A cut drops the oldest buckets while two sub-windows differ by
// more than sqrt(1/(2m) * ln(4 width / delta)), m = 1/(1/n0 + 1/n1).
class AdwinDetector {
public:
    static constexpr int kMaxBucketsPerRow = 5;
    static constexpr std::int64_t kMinSubWindow = 5;

    explicit AdwinDetector(double delta = 0.002);

    // Returns true when the window was cut.
    bool update(double value);

    double delta() const { return delta_; }
    std::int64_t width() const { return width_; }
    double total() const { return total_; }
    double mean() const { return width_ > 0 ? total_ / width_ : 0.0; }
    // Mean of the newer sub-window minus the older one at the most recent cut.
    double last_shift() const { return last_shift_; }
    std::size_t bucket_count() const;

    void write(std::ostream& out) const;
    static AdwinDetector read(std::istream& in);

    bool operator==(const AdwinDetector&) const = default;

private:
    bool detect_and_cut();
    void drop_oldest_bucket();

    double delta_;
    std::int64_t width_ = 0;
    double total_ = 0.0;
    double last_shift_ = 0.0;
    // rows_[i] holds buckets of 2^i elements, newest at the back.
    std::vector<std::deque<double>> rows_;
};

// Fixed-size trailing window of 0/1 outcomes.
class OutcomeWindow {
public:
    explicit OutcomeWindow(std::size_t capacity = 1000) : capacity_(capacity) {}

    void add(bool correct);
    void clear();
    std::size_t size() const { return bits_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::optional<double> rate() const;

    void write(std::ostream& out) const;
    static OutcomeWindow read(std::istream& in);
    bool operator==(const OutcomeWindow&) const = default;

private:
    std::size_t capacity_;
    std::deque<std::uint8_t> bits_;
    std::size_t correct_ = 0;
};

struct TreeParams {
    int grace_period = 50;
    double delta_split = 1e-7;
    double tie_threshold = 0.05;
    int n_split_candidates = 10;
    int subspace_size = 2;
    int max_depth = 20;
};

// Per-class Gaussian summary of one numeric attribute.
struct GaussianStats {
    double count = 0.0;
    double mean = 0.0;
    double m2 = 0.0;
    double min = 0.0;
    double max = 0.0;

    void add(double x);
    double stddev() const { return count > 1.0 ? std::sqrt(m2 / (count - 1.0)) : 0.0; }
    // Estimated number of observations <= t.
    double count_at_most(double t) const;
    bool operator==(const GaussianStats&) const = default;
};

struct LeafStats {
    std::array<std::uint64_t, kNumActions> class_counts{};
    std::uint64_t n_seen = 0;
    std::array<std::array<GaussianStats, kNumActions>, 2> numeric{};                         // dx, dy
    std::array<std::array<std::array<double, kNumActions>, kNumActions>, 2> categorical{};  // [attr][value][class]

    void add(const FeatureVector& f, ActionId label);
    Distribution distribution() const;
    bool operator==(const LeafStats&) const = default;
};

struct SplitCandidate {
    int attribute = -1;
    double threshold = 0.0;
    double merit = 0.0;
};

inline constexpr bool is_numeric_attribute(int attr) { return attr < 2; }

// Best candidate for one attribute, or nullopt when the attribute offers no
// split separating the observed examples.
std::optional<SplitCandidate> best_split_for(const LeafStats& leaf, int attribute, int n_candidates);

double entropy_bits(std::span<const double> counts);

struct TreeNode {
    bool is_leaf = true;
    int depth = 0;
    int attribute = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    LeafStats stats;  // meaningful for leaves only
    bool operator==(const TreeNode&) const = default;
};

class HoeffdingTree {
public:
    HoeffdingTree();

    // Learns one example. `subspace` is redrawn from `rng` at every split
    // attempt when subspace_size is smaller than the feature count.
    void learn(const FeatureVector& f, ActionId label, const TreeParams& params, Rng& rng, std::vector<int>& subspace);
    Distribution predict(const FeatureVector& f) const;

    int leaf_for(const FeatureVector& f) const;
    const std::vector<TreeNode>& nodes() const { return nodes_; }
    std::size_t leaf_count() const;
    std::uint64_t examples_seen() const { return examples_seen_; }

    void write(std::ostream& out) const;
    static HoeffdingTree read(std::istream& in);
    bool operator==(const HoeffdingTree&) const = default;

private:
    void attempt_split(int node, const TreeParams& params, Rng& rng, std::vector<int>& subspace);
    void write_node(std::ostream& out, int node) const;
    int read_node(std::istream& in);

    std::vector<TreeNode> nodes_;
    std::uint64_t examples_seen_ = 0;
};

struct ForestConfig {
    int n_trees = 10;
    double lambda_bagging = 6.0;
    double delta_split = 1e-7;
    double delta_warn = 0.01;
    double delta_drift = 0.002;
    int grace_period = 50;
    int subspace_size = 2;
    int n_split_candidates = 10;
    double tie_threshold = 0.05;
    int max_depth = 20;
    int weight_window = 200;
    double weight_floor = 0.01;
    int prequential_window = 1000;
    bool detectors_enabled = true;
    // Replaces the Poisson draw with a constant 1 (plain single-pass learning).
    bool unit_weights = false;

    TreeParams tree_params() const;
    void validate() const;  // throws ConfigError
    bool operator==(const ForestConfig&) const = default;
};

struct ForestMember {
    HoeffdingTree tree;
    AdwinDetector drift_detector;
    AdwinDetector warning_detector;
    std::optional<HoeffdingTree> background_tree;
    OutcomeWindow weight_stats;
    std::vector<int> subspace;
    Rng rng;

    double weight(double floor) const;
    bool operator==(const ForestMember&) const = default;
};

enum class ForestEventKind : std::uint8_t { Warning, Drift };

struct ForestEvent {
    int member;
    ForestEventKind kind;
};

struct Prediction {
    ActionId action = ActionId::Idle;
    Distribution distribution{};
};

struct PrequentialAccuracy {
    std::optional<double> window_acc;
    std::optional<double> lifetime_acc;
};

// Argmax with lowest-code tie-break.
ActionId argmax_action(const Distribution& d);

// Accuracy-weighted sum of member distributions, normalized.
Prediction weighted_vote(std::span<const Distribution> votes, std::span<const double> weights);

class ForestModel {
public:
    static constexpr std::uint32_t kFormatVersion = 1;

    ForestModel(const ForestConfig& config, std::uint64_t seed);

    std::vector<ForestEvent> learn_one(const LabeledExample& ex);
    Prediction predict_one(const FeatureVector& f) const;
    PrequentialAccuracy prequential_accuracy() const;

    const ForestConfig& config() const { return config_; }
    const std::vector<ForestMember>& members() const { return members_; }
    std::uint64_t lifetime_total() const { return lifetime_total_; }
    std::uint64_t lifetime_correct() const { return lifetime_correct_; }

    void save(std::ostream& out) const;
    static ForestModel load(std::istream& in);  // throws std::runtime_error on bad data

    bool operator==(const ForestModel&) const = default;

private:
    ForestModel() = default;
    ForestMember make_member(std::uint64_t seed) const;

    ForestConfig config_;
    std::vector<ForestMember> members_;
    OutcomeWindow prequential_;
    std::uint64_t lifetime_correct_ = 0;
    std::uint64_t lifetime_total_ = 0;
};

// Knuth's product method; exact for the small rates used by online bagging.
int poisson(double lambda, Rng& rng);

}  // namespace pdda::imitation
