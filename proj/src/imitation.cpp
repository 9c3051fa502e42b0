#include "pdda/imitation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pdda/binary_io.hpp"

namespace pdda::imitation {

namespace {

constexpr int kNumAttributes = FeatureVector::kSize;
const double kLabelRange = std::log2(static_cast<double>(kNumActions));

void write_gaussian(std::ostream& out, const GaussianStats& g) {
    bin::put_f64(out, g.count);
    bin::put_f64(out, g.mean);
    bin::put_f64(out, g.m2);
    bin::put_f64(out, g.min);
    bin::put_f64(out, g.max);
}

GaussianStats read_gaussian(std::istream& in) {
    GaussianStats g;
    g.count = bin::get_f64(in);
    g.mean = bin::get_f64(in);
    g.m2 = bin::get_f64(in);
    g.min = bin::get_f64(in);
    g.max = bin::get_f64(in);
    return g;
}

void draw_subspace(int size, Rng& rng, std::vector<int>& subspace) {
    std::array<int, kNumAttributes> all{};
    std::iota(all.begin(), all.end(), 0);
    if (size >= kNumAttributes) {
        subspace.assign(all.begin(), all.end());
        return;
    }
    for (int i = 0; i < size; ++i) {
        const int j = i + static_cast<int>(rng.below(kNumAttributes - i));
        std::swap(all[i], all[j]);
    }
    subspace.assign(all.begin(), all.begin() + size);
    std::sort(subspace.begin(), subspace.end());
}

}  // namespace

double hoeffding_bound(double range, double delta, double n) {
    return std::sqrt(range * range * std::log(1.0 / delta) / (2.0 * n));
}

int poisson(double lambda, Rng& rng) {
    const double limit = std::exp(-lambda);
    int k = 0;
    double p = 1.0;
    do {
        ++k;
        p *= rng.uniform();
    } while (p > limit);
    return k - 1;
}

// ---------------------------------------------------------------- ADWIN

AdwinDetector::AdwinDetector(double delta) : delta_(delta) {}

std::size_t AdwinDetector::bucket_count() const {
    std::size_t n = 0;
    for (const auto& row : rows_) n += row.size();
    return n;
}

bool AdwinDetector::update(double value) {
    if (rows_.empty()) rows_.emplace_back();
    rows_[0].push_back(value);
    ++width_;
    total_ += value;
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        if (static_cast<int>(rows_[i].size()) <= kMaxBucketsPerRow) break;
        const double merged = rows_[i][0] + rows_[i][1];
        rows_[i].pop_front();
        rows_[i].pop_front();
        if (i + 1 == rows_.size()) rows_.emplace_back();
        rows_[i + 1].push_back(merged);
    }
    bool cut = false;
    while (detect_and_cut()) {
        if (!cut) cut = true;
    }
    return cut;
}

bool AdwinDetector::detect_and_cut() {
    if (width_ < 2 * kMinSubWindow) return false;
    std::int64_t n0 = 0;
    double s0 = 0.0;
    const double log_term = std::log(4.0 * static_cast<double>(width_) / delta_);
    for (std::size_t r = rows_.size(); r-- > 0;) {
        const std::int64_t size = std::int64_t{1} << r;
        for (double bucket : rows_[r]) {
            n0 += size;
            s0 += bucket;
            const std::int64_t n1 = width_ - n0;
            if (n1 < kMinSubWindow) return false;
            if (n0 < kMinSubWindow) continue;
            const double m = 1.0 / (1.0 / n0 + 1.0 / n1);
            const double eps = std::sqrt(log_term / (2.0 * m));
            const double mean0 = s0 / n0;
            const double mean1 = (total_ - s0) / n1;
            if (std::abs(mean0 - mean1) > eps) {
                last_shift_ = mean1 - mean0;
                drop_oldest_bucket();
                return true;
            }
        }
    }
    return false;
}

void AdwinDetector::drop_oldest_bucket() {
    for (std::size_t r = rows_.size(); r-- > 0;) {
        if (rows_[r].empty()) continue;
        width_ -= std::int64_t{1} << r;
        total_ -= rows_[r].front();
        rows_[r].pop_front();
        break;
    }
    while (!rows_.empty() && rows_.back().empty()) rows_.pop_back();
    if (width_ == 0) total_ = 0.0;
}

void AdwinDetector::write(std::ostream& out) const {
    bin::put_f64(out, delta_);
    bin::put_i64(out, width_);
    bin::put_f64(out, total_);
    bin::put_f64(out, last_shift_);
    bin::put_u32(out, static_cast<std::uint32_t>(rows_.size()));
    for (const auto& row : rows_) {
        bin::put_u32(out, static_cast<std::uint32_t>(row.size()));
        for (double b : row) bin::put_f64(out, b);
    }
}

AdwinDetector AdwinDetector::read(std::istream& in) {
    AdwinDetector d(bin::get_f64(in));
    d.width_ = bin::get_i64(in);
    d.total_ = bin::get_f64(in);
    d.last_shift_ = bin::get_f64(in);
    const std::uint32_t rows = bin::get_u32(in);
    if (rows > 64) throw std::runtime_error("adwin: corrupt row count");
    d.rows_.resize(rows);
    for (auto& row : d.rows_) {
        const std::uint32_t n = bin::get_u32(in);
        if (n > kMaxBucketsPerRow + 1) throw std::runtime_error("adwin: corrupt bucket count");
        for (std::uint32_t i = 0; i < n; ++i) row.push_back(bin::get_f64(in));
    }
    return d;
}

// ---------------------------------------------------------------- outcome window

void OutcomeWindow::add(bool correct) {
    bits_.push_back(correct ? 1 : 0);
    correct_ += correct ? 1 : 0;
    if (bits_.size() > capacity_) {
        correct_ -= bits_.front();
        bits_.pop_front();
    }
}

void OutcomeWindow::clear() {
    bits_.clear();
    correct_ = 0;
}

std::optional<double> OutcomeWindow::rate() const {
    if (bits_.empty()) return std::nullopt;
    return static_cast<double>(correct_) / static_cast<double>(bits_.size());
}

void OutcomeWindow::write(std::ostream& out) const {
    bin::put_u64(out, capacity_);
    bin::put_u64(out, bits_.size());
    for (auto b : bits_) bin::put_u8(out, b);
}

OutcomeWindow OutcomeWindow::read(std::istream& in) {
    OutcomeWindow w(bin::get_u64(in));
    const std::uint64_t n = bin::get_u64(in);
    if (n > w.capacity_) throw std::runtime_error("outcome window: corrupt size");
    for (std::uint64_t i = 0; i < n; ++i) w.add(bin::get_u8(in) != 0);
    return w;
}

// ---------------------------------------------------------------- leaf statistics

void GaussianStats::add(double x) {
    if (count == 0.0) {
        min = max = x;
    } else {
        min = std::min(min, x);
        max = std::max(max, x);
    }
    count += 1.0;
    const double d = x - mean;
    mean += d / count;
    m2 += d * (x - mean);
}

double GaussianStats::count_at_most(double t) const {
    if (count == 0.0 || t < min) return 0.0;
    if (t >= max) return count;
    const double sd = stddev();
    if (sd <= 0.0) return mean <= t ? count : 0.0;
    return count * 0.5 * std::erfc(-(t - mean) / (sd * std::sqrt(2.0)));
}

void LeafStats::add(const FeatureVector& f, ActionId label) {
    const int c = to_code(label);
    ++class_counts[c];
    ++n_seen;
    numeric[0][c].add(f.values[FeatureVector::kDx]);
    numeric[1][c].add(f.values[FeatureVector::kDy]);
    categorical[0][f.self_action()][c] += 1.0;
    categorical[1][f.opp_action()][c] += 1.0;
}

Distribution LeafStats::distribution() const {
    Distribution d{};
    if (n_seen == 0) {
        d.fill(1.0 / kNumActions);
        return d;
    }
    for (int c = 0; c < kNumActions; ++c) d[c] = static_cast<double>(class_counts[c]) / static_cast<double>(n_seen);
    return d;
}

double entropy_bits(std::span<const double> counts) {
    double total = 0.0;
    for (double c : counts) total += c;
    if (total <= 0.0) return 0.0;
    double h = 0.0;
    for (double c : counts) {
        if (c <= 0.0) continue;
        const double p = c / total;
        h -= p * std::log2(p);
    }
    return h;
}

namespace {

double information_gain(const Distribution& parent, const Distribution& left, const Distribution& right) {
    double n = 0.0, nl = 0.0, nr = 0.0;
    for (int c = 0; c < kNumActions; ++c) {
        n += parent[c];
        nl += left[c];
        nr += right[c];
    }
    if (n <= 0.0) return 0.0;
    return entropy_bits(parent) - (nl / n) * entropy_bits(left) - (nr / n) * entropy_bits(right);
}

}  // namespace

std::optional<SplitCandidate> best_split_for(const LeafStats& leaf, int attribute, int n_candidates) {
    Distribution parent{};
    for (int c = 0; c < kNumActions; ++c) parent[c] = static_cast<double>(leaf.class_counts[c]);
    std::optional<SplitCandidate> best;
    auto consider = [&](double threshold, const Distribution& left) {
        Distribution right{};
        double nl = 0.0, nr = 0.0;
        for (int c = 0; c < kNumActions; ++c) {
            right[c] = std::max(0.0, parent[c] - left[c]);
            nl += left[c];
            nr += right[c];
        }
        if (nl <= 0.0 || nr <= 0.0) return;
        const double merit = information_gain(parent, left, right);
        if (!best || merit > best->merit) best = SplitCandidate{attribute, threshold, merit};
    };

    if (is_numeric_attribute(attribute)) {
        const auto& per_class = leaf.numeric[attribute];
        double lo = 0.0, hi = 0.0;
        bool any = false;
        for (const auto& g : per_class) {
            if (g.count == 0.0) continue;
            lo = any ? std::min(lo, g.min) : g.min;
            hi = any ? std::max(hi, g.max) : g.max;
            any = true;
        }
        if (!any || !(hi > lo)) return std::nullopt;
        for (int i = 0; i < n_candidates; ++i) {
            const double t = lo + (hi - lo) * (i + 1) / (n_candidates + 1);
            Distribution left{};
            for (int c = 0; c < kNumActions; ++c) left[c] = per_class[c].count_at_most(t);
            consider(t, left);
        }
    } else {
        const auto& table = leaf.categorical[attribute - 2];
        for (int v = 0; v < kNumActions; ++v) consider(v, table[v]);
    }
    return best;
}

// ---------------------------------------------------------------- Hoeffding tree

HoeffdingTree::HoeffdingTree() { nodes_.emplace_back(); }

int HoeffdingTree::leaf_for(const FeatureVector& f) const {
    int n = 0;
    while (!nodes_[n].is_leaf) {
        const TreeNode& node = nodes_[n];
        const double x = f.values[node.attribute];
        const bool go_left = is_numeric_attribute(node.attribute) ? x <= node.threshold : x == node.threshold;
        n = go_left ? node.left : node.right;
    }
    return n;
}

std::size_t HoeffdingTree::leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf; }));
}

Distribution HoeffdingTree::predict(const FeatureVector& f) const { return nodes_[leaf_for(f)].stats.distribution(); }

void HoeffdingTree::learn(const FeatureVector& f, ActionId label, const TreeParams& params, Rng& rng,
                          std::vector<int>& subspace) {
    ++examples_seen_;
    const int leaf = leaf_for(f);
    LeafStats& stats = nodes_[leaf].stats;
    stats.add(f, label);
    if (stats.n_seen % static_cast<std::uint64_t>(params.grace_period) == 0 && nodes_[leaf].depth < params.max_depth)
        attempt_split(leaf, params, rng, subspace);
}

void HoeffdingTree::attempt_split(int node, const TreeParams& params, Rng& rng, std::vector<int>& subspace) {
    const LeafStats& stats = nodes_[node].stats;
    const auto classes_present = std::count_if(stats.class_counts.begin(), stats.class_counts.end(),
                                               [](std::uint64_t c) { return c > 0; });
    if (classes_present < 2) return;

    draw_subspace(params.subspace_size, rng, subspace);
    std::vector<SplitCandidate> candidates;
    for (int attr : subspace) {
        if (auto c = best_split_for(stats, attr, params.n_split_candidates)) candidates.push_back(*c);
    }
    if (candidates.empty()) return;
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const SplitCandidate& a, const SplitCandidate& b) { return a.merit > b.merit; });
    const SplitCandidate best = candidates[0];
    const double second = candidates.size() > 1 ? candidates[1].merit : 0.0;
    const double eps = hoeffding_bound(kLabelRange, params.delta_split, static_cast<double>(stats.n_seen));
    if (!(best.merit > 0.0) || !(best.merit - second > eps || eps < params.tie_threshold)) return;

    const int depth = nodes_[node].depth + 1;
    TreeNode child;
    child.depth = depth;
    const int left = static_cast<int>(nodes_.size());
    nodes_.push_back(child);
    nodes_.push_back(child);
    TreeNode& split = nodes_[node];
    split.is_leaf = false;
    split.attribute = best.attribute;
    split.threshold = best.threshold;
    split.left = left;
    split.right = left + 1;
    split.stats = LeafStats{};
}

void HoeffdingTree::write_node(std::ostream& out, int n) const {
    const TreeNode& node = nodes_[n];
    bin::put_u8(out, node.is_leaf ? 0 : 1);
    bin::put_u32(out, static_cast<std::uint32_t>(node.depth));
    if (!node.is_leaf) {
        bin::put_u8(out, static_cast<std::uint8_t>(node.attribute));
        bin::put_f64(out, node.threshold);
        write_node(out, node.left);
        write_node(out, node.right);
        return;
    }
    const LeafStats& s = node.stats;
    bin::put_u64(out, s.n_seen);
    for (auto c : s.class_counts) bin::put_u64(out, c);
    for (const auto& attr : s.numeric)
        for (const auto& g : attr) write_gaussian(out, g);
    for (const auto& attr : s.categorical)
        for (const auto& row : attr)
            for (double v : row) bin::put_f64(out, v);
}

int HoeffdingTree::read_node(std::istream& in) {
    const int index = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    const bool internal = bin::get_u8(in) != 0;
    const int depth = static_cast<int>(bin::get_u32(in));
    nodes_[index].depth = depth;
    if (internal) {
        const int attr = bin::get_u8(in);
        if (attr >= kNumAttributes) throw std::runtime_error("tree: corrupt split attribute");
        const double threshold = bin::get_f64(in);
        const int left = read_node(in);
        const int right = read_node(in);
        TreeNode& node = nodes_[index];
        node.is_leaf = false;
        node.attribute = attr;
        node.threshold = threshold;
        node.left = left;
        node.right = right;
        return index;
    }
    LeafStats s;
    s.n_seen = bin::get_u64(in);
    for (auto& c : s.class_counts) c = bin::get_u64(in);
    for (auto& attr : s.numeric)
        for (auto& g : attr) g = read_gaussian(in);
    for (auto& attr : s.categorical)
        for (auto& row : attr)
            for (double& v : row) v = bin::get_f64(in);
    nodes_[index].stats = s;
    return index;
}

void HoeffdingTree::write(std::ostream& out) const {
    bin::put_u64(out, examples_seen_);
    bin::put_u32(out, static_cast<std::uint32_t>(nodes_.size()));
    write_node(out, 0);
}

HoeffdingTree HoeffdingTree::read(std::istream& in) {
    HoeffdingTree t;
    t.nodes_.clear();
    t.examples_seen_ = bin::get_u64(in);
    const std::uint32_t count = bin::get_u32(in);
    t.nodes_.reserve(count);
    t.read_node(in);
    if (t.nodes_.size() != count) throw std::runtime_error("tree: node count mismatch");
    return t;
}

// ---------------------------------------------------------------- forest

TreeParams ForestConfig::tree_params() const {
    TreeParams p;
    p.grace_period = grace_period;
    p.delta_split = delta_split;
    p.tie_threshold = tie_threshold;
    p.n_split_candidates = n_split_candidates;
    p.subspace_size = subspace_size;
    p.max_depth = max_depth;
    return p;
}

void ForestConfig::validate() const {
    auto open_unit = [](double d) { return d > 0.0 && d < 1.0; };
    if (n_trees < 1) throw ConfigError("imitation: n_trees must be >= 1");
    if (!open_unit(delta_split) || !open_unit(delta_warn) || !open_unit(delta_drift))
        throw ConfigError("imitation: deltas must lie in (0,1)");
    if (lambda_bagging <= 0.0) throw ConfigError("imitation: lambda_bagging must be positive");
    if (grace_period < 1) throw ConfigError("imitation: grace_period must be >= 1");
    if (subspace_size < 1) throw ConfigError("imitation: subspace_size must be >= 1");
    if (n_split_candidates < 1) throw ConfigError("imitation: n_split_candidates must be >= 1");
    if (weight_window < 1 || prequential_window < 1) throw ConfigError("imitation: windows must be >= 1");
    if (weight_floor <= 0.0 || weight_floor > 1.0) throw ConfigError("imitation: weight_floor must be in (0,1]");
}

double ForestMember::weight(double floor) const {
    const auto r = weight_stats.rate();
    return r ? std::max(floor, *r) : floor;
}

ActionId argmax_action(const Distribution& d) {
    int best = 0;
    for (int c = 1; c < kNumActions; ++c)
        if (d[c] > d[best]) best = c;
    return static_cast<ActionId>(best);
}

Prediction weighted_vote(std::span<const Distribution> votes, std::span<const double> weights) {
    Prediction p;
    double total = 0.0;
    for (std::size_t m = 0; m < votes.size(); ++m)
        for (int c = 0; c < kNumActions; ++c) {
            p.distribution[c] += weights[m] * votes[m][c];
        }
    for (double v : p.distribution) total += v;
    if (total > 0.0) {
        for (double& v : p.distribution) v /= total;
    } else {
        p.distribution.fill(1.0 / kNumActions);
    }
    p.action = argmax_action(p.distribution);
    return p;
}

ForestMember ForestModel::make_member(std::uint64_t seed) const {
    ForestMember m{
        HoeffdingTree{},
        AdwinDetector(config_.delta_drift),
        AdwinDetector(config_.delta_warn),
        std::nullopt,
        OutcomeWindow(static_cast<std::size_t>(config_.weight_window)),
        {},
        Rng(seed),
    };
    draw_subspace(config_.subspace_size, m.rng, m.subspace);
    return m;
}

ForestModel::ForestModel(const ForestConfig& config, std::uint64_t seed)
    : config_(config), prequential_(static_cast<std::size_t>(config.prequential_window)) {
    config_.validate();
    members_.reserve(config_.n_trees);
    for (int i = 0; i < config_.n_trees; ++i) members_.push_back(make_member(Rng::derive(seed, i)));
}

Prediction ForestModel::predict_one(const FeatureVector& f) const {
    std::vector<Distribution> votes;
    std::vector<double> weights;
    votes.reserve(members_.size());
    weights.reserve(members_.size());
    for (const auto& m : members_) {
        votes.push_back(m.tree.predict(f));
        weights.push_back(m.weight(config_.weight_floor));
    }
    return weighted_vote(votes, weights);
}

std::vector<ForestEvent> ForestModel::learn_one(const LabeledExample& ex) {
    const bool forest_correct = predict_one(ex.features).action == ex.label;
    prequential_.add(forest_correct);
    ++lifetime_total_;
    lifetime_correct_ += forest_correct ? 1 : 0;

    std::vector<ForestEvent> events;
    const TreeParams params = config_.tree_params();
    for (int i = 0; i < static_cast<int>(members_.size()); ++i) {
        ForestMember& m = members_[i];
        const bool correct = argmax_action(m.tree.predict(ex.features)) == ex.label;
        m.weight_stats.add(correct);

        const int k = config_.unit_weights ? 1 : poisson(config_.lambda_bagging, m.rng);
        for (int j = 0; j < k; ++j) {
            m.tree.learn(ex.features, ex.label, params, m.rng, m.subspace);
            if (m.background_tree) m.background_tree->learn(ex.features, ex.label, params, m.rng, m.subspace);
        }

        if (!config_.detectors_enabled) continue;
        const double bit = correct ? 1.0 : 0.0;
        // Only a drop in accuracy counts; cuts caused by a tree improving are ignored.
        const bool warning = m.warning_detector.update(bit) && m.warning_detector.last_shift() < 0.0;
        const bool drift = m.drift_detector.update(bit) && m.drift_detector.last_shift() < 0.0;
        if (warning) {
            m.background_tree.emplace();
            m.warning_detector = AdwinDetector(config_.delta_warn);
            events.push_back({i, ForestEventKind::Warning});
        }
        if (drift) {
            m.tree = m.background_tree ? std::move(*m.background_tree) : HoeffdingTree{};
            m.background_tree.reset();
            m.drift_detector = AdwinDetector(config_.delta_drift);
            m.warning_detector = AdwinDetector(config_.delta_warn);
            m.weight_stats.clear();
            events.push_back({i, ForestEventKind::Drift});
        }
    }
    return events;
}

PrequentialAccuracy ForestModel::prequential_accuracy() const {
    PrequentialAccuracy acc;
    acc.window_acc = prequential_.rate();
    if (lifetime_total_ > 0)
        acc.lifetime_acc = static_cast<double>(lifetime_correct_) / static_cast<double>(lifetime_total_);
    return acc;
}

namespace {
constexpr char kForestMagic[9] = "PDDAFRST";
}

void ForestModel::save(std::ostream& out) const {
    bin::put_magic(out, kForestMagic);
    bin::put_u32(out, kFormatVersion);
    const ForestConfig& c = config_;
    bin::put_u32(out, static_cast<std::uint32_t>(c.n_trees));
    bin::put_f64(out, c.lambda_bagging);
    bin::put_f64(out, c.delta_split);
    bin::put_f64(out, c.delta_warn);
    bin::put_f64(out, c.delta_drift);
    bin::put_u32(out, static_cast<std::uint32_t>(c.grace_period));
    bin::put_u32(out, static_cast<std::uint32_t>(c.subspace_size));
    bin::put_u32(out, static_cast<std::uint32_t>(c.n_split_candidates));
    bin::put_f64(out, c.tie_threshold);
    bin::put_u32(out, static_cast<std::uint32_t>(c.max_depth));
    bin::put_u32(out, static_cast<std::uint32_t>(c.weight_window));
    bin::put_f64(out, c.weight_floor);
    bin::put_u32(out, static_cast<std::uint32_t>(c.prequential_window));
    bin::put_u8(out, c.detectors_enabled ? 1 : 0);
    bin::put_u8(out, c.unit_weights ? 1 : 0);

    bin::put_u64(out, lifetime_correct_);
    bin::put_u64(out, lifetime_total_);
    prequential_.write(out);

    for (const auto& m : members_) {
        m.tree.write(out);
        m.drift_detector.write(out);
        m.warning_detector.write(out);
        bin::put_u8(out, m.background_tree ? 1 : 0);
        if (m.background_tree) m.background_tree->write(out);
        m.weight_stats.write(out);
        bin::put_u32(out, static_cast<std::uint32_t>(m.subspace.size()));
        for (int a : m.subspace) bin::put_u8(out, static_cast<std::uint8_t>(a));
        bin::put_u64(out, m.rng.state());
    }
}

ForestModel ForestModel::load(std::istream& in) {
    bin::expect_magic(in, kForestMagic);
    const std::uint32_t version = bin::get_u32(in);
    if (version != kFormatVersion) throw std::runtime_error("forest: unsupported format version " + std::to_string(version));
    ForestModel f;
    ForestConfig& c = f.config_;
    c.n_trees = static_cast<int>(bin::get_u32(in));
    c.lambda_bagging = bin::get_f64(in);
    c.delta_split = bin::get_f64(in);
    c.delta_warn = bin::get_f64(in);
    c.delta_drift = bin::get_f64(in);
    c.grace_period = static_cast<int>(bin::get_u32(in));
    c.subspace_size = static_cast<int>(bin::get_u32(in));
    c.n_split_candidates = static_cast<int>(bin::get_u32(in));
    c.tie_threshold = bin::get_f64(in);
    c.max_depth = static_cast<int>(bin::get_u32(in));
    c.weight_window = static_cast<int>(bin::get_u32(in));
    c.weight_floor = bin::get_f64(in);
    c.prequential_window = static_cast<int>(bin::get_u32(in));
    c.detectors_enabled = bin::get_u8(in) != 0;
    c.unit_weights = bin::get_u8(in) != 0;
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw std::runtime_error(std::string("forest: corrupt config block: ") + e.what());
    }

    f.lifetime_correct_ = bin::get_u64(in);
    f.lifetime_total_ = bin::get_u64(in);
    f.prequential_ = OutcomeWindow::read(in);

    for (int i = 0; i < c.n_trees; ++i) {
        ForestMember m{HoeffdingTree::read(in), AdwinDetector::read(in), AdwinDetector::read(in), std::nullopt,
                       OutcomeWindow(), {}, Rng(0)};
        if (bin::get_u8(in) != 0) m.background_tree = HoeffdingTree::read(in);
        m.weight_stats = OutcomeWindow::read(in);
        const std::uint32_t n = bin::get_u32(in);
        if (n > kNumAttributes) throw std::runtime_error("forest: corrupt subspace");
        for (std::uint32_t k = 0; k < n; ++k) m.subspace.push_back(bin::get_u8(in));
        m.rng.set_state(bin::get_u64(in));
        f.members_.push_back(std::move(m));
    }
    return f;
}

}  // namespace pdda::imitation
