#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "pdda/arena.hpp"
#include "pdda/kernels.hpp"
#include "pdda/rng.hpp"

namespace pdda::policy {

using kernels::Exec;

// conv(k1/s1, relu) -> conv(k2/s2, relu) -> dense(relu) -> {policy logits, value}
struct NetShape {
    int in_h = ObservationFrame::kHeight;
    int in_w = ObservationFrame::kWidth;
    int conv1_filters = 16;
    int conv1_kernel = 8;
    int conv1_stride = 4;
    int conv2_filters = 32;
    int conv2_kernel = 4;
    int conv2_stride = 2;
    int hidden = 256;
    int actions = kNumActions;

    static NetShape standard() { return {}; }
    // Small variant for exhaustive finite-difference checks.
    static NetShape reduced();

    kernels::ConvGeometry conv1() const { return {1, in_h, in_w, conv1_filters, conv1_kernel, conv1_stride}; }
    kernels::ConvGeometry conv2() const {
        const auto c1 = conv1();
        return {conv1_filters, c1.out_h(), c1.out_w(), conv2_filters, conv2_kernel, conv2_stride};
    }
    int input_size() const { return in_h * in_w; }
    int flat_size() const { return conv2_filters * conv2().positions(); }
    void validate() const;

    bool operator==(const NetShape&) const = default;
};

// Offsets of each tensor inside the flat parameter vector.
struct ParamLayout {
    std::size_t w1, b1, w2, b2, w3, b3, wp, bp, wv, bv, total;
    explicit ParamLayout(const NetShape& s);
};

template <class T>
struct BasicNetwork {
    NetShape shape;
    std::vector<T> theta;

    ParamLayout layout() const { return ParamLayout(shape); }
    bool operator==(const BasicNetwork&) const = default;
};

using NetworkParams = BasicNetwork<float>;

struct TrainConfig {
    double gamma = 0.99;
    int n_steps = 5;
    double learning_rate = 7e-4;
    double entropy_coef = 0.01;
    double value_coef = 0.5;
    double max_grad_norm = 0.5;
    double rms_decay = 0.99;
    double rms_epsilon = 1e-5;
    std::uint64_t seed = 0;
    int action_repeat = 1;  // frames each sampled action is held while training
    int n_envs = 1;         // synchronous environments pooled into one update

    void validate() const;  // throws ConfigError
};

class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Fan-in scaled uniform weights from the seeded generator, zero biases.
NetworkParams policy_new(const TrainConfig& config, const NetShape& shape = NetShape::standard());

template <class T>
BasicNetwork<T> init_network(const NetShape& shape, std::uint64_t seed);

template <class To, class From>
BasicNetwork<To> convert(const BasicNetwork<From>& net) {
    BasicNetwork<To> out{net.shape, {}};
    out.theta.assign(net.theta.begin(), net.theta.end());
    return out;
}

template <class T>
struct ForwardCache {
    std::vector<T> input, cols1, act1, cols2, act2, act3;
    std::array<double, kNumActions> logits{};
    double value = 0.0;
};

template <class T>
void forward(const BasicNetwork<T>& net, std::span<const T> input, ForwardCache<T>& cache, Exec exec = Exec::Parallel);

// Accumulates d(loss)/d(theta) into grad given d(loss)/d(logits) and d(loss)/d(value).
template <class T>
void backward(const BasicNetwork<T>& net, const ForwardCache<T>& cache, std::span<const double> dlogits, double dvalue,
              std::span<T> grad, Exec exec = Exec::Parallel);

template <class T>
std::vector<T> frame_input(const ObservationFrame& frame);

std::array<double, kNumActions> softmax(std::span<const double> logits);
double entropy(std::span<const double> probs);

enum class ActMode { Sample, Greedy };

struct ActResult {
    ActionId action = ActionId::Idle;
    double log_prob = 0.0;
    double value_est = 0.0;
};

// Picks from logits; greedy ties go to the lowest action code.
ActResult select_action(std::span<const double> logits, double value, ActMode mode, Rng& rng);

// Throws DivergenceError on non-finite network output.
ActResult act(const NetworkParams& params, const ObservationFrame& obs, ActMode mode, Rng& rng,
              Exec exec = Exec::Parallel);

struct Transition {
    ObservationFrame obs;
    ActionId action = ActionId::Idle;
    double reward = 0.0;
    bool done = false;
    double value_est = 0.0;
    double log_prob = 0.0;
};

struct RolloutBuffer {
    std::vector<Transition> steps;
    double bootstrap_value = 0.0;  // zero when the last step is terminal
};

struct ReturnAdvantage {
    double ret;
    double advantage;
};

std::vector<ReturnAdvantage> n_step_returns(const RolloutBuffer& rollout, double gamma);

struct LossReport {
    double policy_loss = 0.0;
    double value_loss = 0.0;  // mean squared return error, before value_coef
    double entropy = 0.0;
    double total = 0.0;
    double grad_norm = 0.0;
};

struct LossCoefficients {
    double value_coef = 0.5;
    double entropy_coef = 0.01;
};

// One batch of a2c inputs with returns and advantages already fixed.
template <class T>
struct LossBatch {
    std::vector<std::vector<T>> inputs;
    std::vector<ActionId> actions;
    std::vector<double> returns;
    std::vector<double> advantages;
};

// mean_t[-log pi(a_t|s_t) A_t + c_v (G_t - V(s_t))^2 - c_e H(pi(.|s_t))]; grad may be empty.
template <class T>
LossReport a2c_loss(const BasicNetwork<T>& net, const LossBatch<T>& batch, const LossCoefficients& coefs,
                    std::span<T> grad, Exec exec = Exec::Parallel);

struct RmsPropState {
    std::vector<float> square_avg;
    bool operator==(const RmsPropState&) const = default;
};

// One synchronous actor-critic step: backprop, global-norm clipping, RMSprop.
// Throws DivergenceError (leaving params untouched) on a non-finite loss.
LossReport a2c_update(NetworkParams& params, RmsPropState& optimizer, const RolloutBuffer& rollout,
                      const TrainConfig& config, Exec exec = Exec::Parallel);
// Same step over the pooled steps of several rollouts (one per environment).
LossReport a2c_update(NetworkParams& params, RmsPropState& optimizer, std::span<const RolloutBuffer> rollouts,
                      const TrainConfig& config, Exec exec = Exec::Parallel);

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    std::vector<double> analytic;
    std::vector<double> numeric;
};

// Central differences over every parameter, 64-bit.
GradientCheckResult gradient_check(const BasicNetwork<double>& net, const LossBatch<double>& batch,
                                   const LossCoefficients& coefs, double h = 1e-4);

// Random reduced network plus a random batch, for self-checks.
struct GradientCheckFixture {
    BasicNetwork<double> net;
    LossBatch<double> batch;
};
GradientCheckFixture make_gradient_check_fixture(std::uint64_t seed, int steps = 5);

std::uint64_t params_hash(const NetworkParams& params);

void save_params(std::ostream& out, const NetworkParams& params);
NetworkParams load_params(std::istream& in);  // throws std::runtime_error

}  // namespace pdda::policy
