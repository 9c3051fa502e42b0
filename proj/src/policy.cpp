#include "pdda/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pdda/binary_io.hpp"

namespace pdda::policy {

namespace {

constexpr char kParamsMagic[9] = "PDDAA2C0";
constexpr std::uint32_t kParamsVersion = 1;

template <class T>
void relu_inplace(std::vector<T>& v) {
    for (T& x : v) x = x > T(0) ? x : T(0);
}

template <class T>
void mask_by(std::vector<T>& grad, const std::vector<T>& act) {
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!(act[i] > T(0))) grad[i] = T(0);
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

NetShape NetShape::reduced() {
    NetShape s;
    s.in_h = 8;
    s.in_w = 12;
    s.conv1_filters = 4;
    s.conv1_kernel = 3;
    s.conv1_stride = 1;
    s.conv2_filters = 4;
    s.conv2_kernel = 2;
    s.conv2_stride = 2;
    s.hidden = 16;
    return s;
}

void NetShape::validate() const {
    if (!conv1().valid() || !conv2().valid() || hidden <= 0 || actions != kNumActions)
        throw ConfigError("policy: inconsistent network shape");
}

ParamLayout::ParamLayout(const NetShape& s) {
    const auto c1 = s.conv1();
    const auto c2 = s.conv2();
    std::size_t at = 0;
    auto take = [&at](std::size_t n) {
        const std::size_t start = at;
        at += n;
        return start;
    };
    w1 = take(static_cast<std::size_t>(c1.out_c) * c1.patch());
    b1 = take(c1.out_c);
    w2 = take(static_cast<std::size_t>(c2.out_c) * c2.patch());
    b2 = take(c2.out_c);
    w3 = take(static_cast<std::size_t>(s.hidden) * s.flat_size());
    b3 = take(s.hidden);
    wp = take(static_cast<std::size_t>(s.actions) * s.hidden);
    bp = take(s.actions);
    wv = take(s.hidden);
    bv = take(1);
    total = at;
}

void TrainConfig::validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("rl: gamma must be in [0,1)");
    if (n_steps < 1) throw ConfigError("rl: n_steps must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("rl: learning_rate must be positive");
    if (entropy_coef < 0.0 || value_coef < 0.0) throw ConfigError("rl: loss coefficients must be non-negative");
    if (!(max_grad_norm > 0.0)) throw ConfigError("rl: max_grad_norm must be positive");
    if (action_repeat < 1) throw ConfigError("rl: action_repeat must be >= 1");
    if (n_envs < 1) throw ConfigError("rl: n_envs must be >= 1");
    if (!(rms_decay > 0.0 && rms_decay < 1.0) || !(rms_epsilon > 0.0)) throw ConfigError("rl: invalid RMSprop settings");
}

template <class T>
BasicNetwork<T> init_network(const NetShape& shape, std::uint64_t seed) {
    shape.validate();
    BasicNetwork<T> net{shape, {}};
    const ParamLayout L(shape);
    net.theta.assign(L.total, T(0));
    Rng rng(seed);
    auto fill = [&](std::size_t offset, std::size_t count, int fan_in, double gain) {
        const double bound = gain * std::sqrt(3.0 / fan_in);
        for (std::size_t i = 0; i < count; ++i) net.theta[offset + i] = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
    };
    const double relu_gain = std::sqrt(2.0);
    const auto c1 = shape.conv1();
    const auto c2 = shape.conv2();
    fill(L.w1, L.b1 - L.w1, c1.patch(), relu_gain);
    fill(L.w2, L.b2 - L.w2, c2.patch(), relu_gain);
    fill(L.w3, L.b3 - L.w3, shape.flat_size(), relu_gain);
    fill(L.wp, L.bp - L.wp, shape.hidden, 0.01);
    fill(L.wv, L.bv - L.wv, shape.hidden, 1.0);
    return net;
}

NetworkParams policy_new(const TrainConfig& config, const NetShape& shape) { return init_network<float>(shape, config.seed); }

template <class T>
std::vector<T> frame_input(const ObservationFrame& frame) {
    std::vector<T> v(frame.pixels.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(frame.pixels[i]) / T(255);
    return v;
}

template <class T>
void forward(const BasicNetwork<T>& net, std::span<const T> input, ForwardCache<T>& cache, Exec exec) {
    const NetShape& s = net.shape;
    const ParamLayout L(s);
    const T* th = net.theta.data();
    const auto c1 = s.conv1();
    const auto c2 = s.conv2();
    if (static_cast<int>(input.size()) != s.input_size()) throw std::invalid_argument("forward: input size mismatch");

    cache.input.assign(input.begin(), input.end());
    cache.cols1.resize(static_cast<std::size_t>(c1.positions()) * c1.patch());
    kernels::im2col(c1, cache.input.data(), cache.cols1.data());
    cache.act1.resize(static_cast<std::size_t>(c1.out_c) * c1.positions());
    kernels::gemm_nt(exec, c1.out_c, c1.positions(), c1.patch(), th + L.w1, cache.cols1.data(), th + L.b1, cache.act1.data());
    relu_inplace(cache.act1);

    cache.cols2.resize(static_cast<std::size_t>(c2.positions()) * c2.patch());
    kernels::im2col(c2, cache.act1.data(), cache.cols2.data());
    cache.act2.resize(static_cast<std::size_t>(c2.out_c) * c2.positions());
    kernels::gemm_nt(exec, c2.out_c, c2.positions(), c2.patch(), th + L.w2, cache.cols2.data(), th + L.b2, cache.act2.data());
    relu_inplace(cache.act2);

    cache.act3.resize(s.hidden);
    kernels::gemm_nt(exec, s.hidden, 1, s.flat_size(), th + L.w3, cache.act2.data(), th + L.b3, cache.act3.data());
    relu_inplace(cache.act3);

    std::array<T, kNumActions> logits{};
    kernels::gemm_nt(exec, s.actions, 1, s.hidden, th + L.wp, cache.act3.data(), th + L.bp, logits.data());
    for (int a = 0; a < kNumActions; ++a) cache.logits[a] = static_cast<double>(logits[a]);
    cache.value = static_cast<double>(kernels::dot(th + L.wv, cache.act3.data(), s.hidden) + th[L.bv]);
}

template <class T>
void backward(const BasicNetwork<T>& net, const ForwardCache<T>& cache, std::span<const double> dlogits, double dvalue,
              std::span<T> grad, Exec exec) {
    const NetShape& s = net.shape;
    const ParamLayout L(s);
    const T* th = net.theta.data();
    T* g = grad.data();
    const auto c1 = s.conv1();
    const auto c2 = s.conv2();

    std::array<T, kNumActions> dl{};
    for (int a = 0; a < kNumActions; ++a) dl[a] = static_cast<T>(dlogits[a]);
    const T dv = static_cast<T>(dvalue);

    // heads
    kernels::gemm_nn_acc(exec, s.actions, 1, s.hidden, dl.data(), cache.act3.data(), g + L.wp, g + L.bp);
    kernels::axpy(dv, cache.act3.data(), g + L.wv, s.hidden);
    g[L.bv] += dv;
    std::vector<T> g3(s.hidden);
    kernels::gemm_tn(exec, s.actions, 1, s.hidden, dl.data(), th + L.wp, g3.data());
    kernels::axpy(dv, th + L.wv, g3.data(), s.hidden);
    mask_by(g3, cache.act3);

    // dense
    kernels::gemm_nn_acc(exec, s.hidden, 1, s.flat_size(), g3.data(), cache.act2.data(), g + L.w3, g + L.b3);
    std::vector<T> g2(s.flat_size());
    kernels::gemm_tn(exec, s.hidden, 1, s.flat_size(), g3.data(), th + L.w3, g2.data());
    mask_by(g2, cache.act2);

    // conv2
    kernels::gemm_nn_acc(exec, c2.out_c, c2.positions(), c2.patch(), g2.data(), cache.cols2.data(), g + L.w2, g + L.b2);
    std::vector<T> gcols2(static_cast<std::size_t>(c2.positions()) * c2.patch());
    kernels::gemm_tn(exec, c2.out_c, c2.positions(), c2.patch(), g2.data(), th + L.w2, gcols2.data());
    std::vector<T> g1(cache.act1.size(), T(0));
    kernels::col2im_add(c2, gcols2.data(), g1.data());
    mask_by(g1, cache.act1);

    // conv1; the input gradient is not needed
    kernels::gemm_nn_acc(exec, c1.out_c, c1.positions(), c1.patch(), g1.data(), cache.cols1.data(), g + L.w1, g + L.b1);
}

std::array<double, kNumActions> softmax(std::span<const double> logits) {
    std::array<double, kNumActions> p{};
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (int a = 0; a < kNumActions; ++a) sum += (p[a] = std::exp(logits[a] - m));
    for (double& x : p) x /= sum;
    return p;
}

namespace {

double log_sum_exp(std::span<const double> logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - m);
    return m + std::log(sum);
}

}  // namespace

double entropy(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

ActResult select_action(std::span<const double> logits, double value, ActMode mode, Rng& rng) {
    const auto probs = softmax(logits);
    int chosen = 0;
    if (mode == ActMode::Greedy) {
        for (int a = 1; a < kNumActions; ++a)
            if (logits[a] > logits[chosen]) chosen = a;
    } else {
        const double u = rng.uniform();
        double cum = 0.0;
        chosen = kNumActions - 1;
        for (int a = 0; a < kNumActions; ++a) {
            cum += probs[a];
            if (u < cum) {
                chosen = a;
                break;
            }
        }
    }
    ActResult r;
    r.action = static_cast<ActionId>(chosen);
    r.log_prob = logits[chosen] - log_sum_exp(logits);
    r.value_est = value;
    return r;
}

ActResult act(const NetworkParams& params, const ObservationFrame& obs, ActMode mode, Rng& rng, Exec exec) {
    thread_local ForwardCache<float> cache;
    const auto input = frame_input<float>(obs);
    forward<float>(params, input, cache, exec);
    if (!all_finite(cache.logits) || !std::isfinite(cache.value))
        throw DivergenceError("policy produced non-finite output");
    return select_action(cache.logits, cache.value, mode, rng);
}

std::vector<ReturnAdvantage> n_step_returns(const RolloutBuffer& rollout, double gamma) {
    std::vector<ReturnAdvantage> out(rollout.steps.size());
    double running = rollout.steps.empty() || rollout.steps.back().done ? 0.0 : rollout.bootstrap_value;
    for (std::size_t i = rollout.steps.size(); i-- > 0;) {
        const Transition& t = rollout.steps[i];
        running = t.done ? t.reward : t.reward + gamma * running;
        out[i] = {running, running - t.value_est};
    }
    return out;
}

template <class T>
LossReport a2c_loss(const BasicNetwork<T>& net, const LossBatch<T>& batch, const LossCoefficients& coefs,
                    std::span<T> grad, Exec exec) {
    LossReport r;
    const std::size_t n = batch.inputs.size();
    if (n == 0) return r;
    const double inv_n = 1.0 / static_cast<double>(n);
    ForwardCache<T> cache;
    for (std::size_t t = 0; t < n; ++t) {
        forward<T>(net, batch.inputs[t], cache, exec);
        const double lse = log_sum_exp(cache.logits);
        std::array<double, kNumActions> logp{}, p{};
        for (int a = 0; a < kNumActions; ++a) {
            logp[a] = cache.logits[a] - lse;
            p[a] = std::exp(logp[a]);
        }
        double h = 0.0;
        for (int a = 0; a < kNumActions; ++a) h -= p[a] * logp[a];
        const int act = to_code(batch.actions[t]);
        const double adv = batch.advantages[t];
        const double err = batch.returns[t] - cache.value;
        r.policy_loss += -logp[act] * adv;
        r.value_loss += err * err;
        r.entropy += h;
        if (grad.empty()) continue;
        std::array<double, kNumActions> dlogits{};
        for (int a = 0; a < kNumActions; ++a) {
            const double pg = (p[a] - (a == act ? 1.0 : 0.0)) * adv;
            const double ent = p[a] * (logp[a] + h);  // -dH/dlogit
            dlogits[a] = (pg + coefs.entropy_coef * ent) * inv_n;
        }
        const double dvalue = -2.0 * coefs.value_coef * err * inv_n;
        backward<T>(net, cache, dlogits, dvalue, grad, exec);
    }
    r.policy_loss *= inv_n;
    r.value_loss *= inv_n;
    r.entropy *= inv_n;
    r.total = r.policy_loss + coefs.value_coef * r.value_loss - coefs.entropy_coef * r.entropy;
    return r;
}

LossReport a2c_update(NetworkParams& params, RmsPropState& optimizer, const RolloutBuffer& rollout,
                      const TrainConfig& config, Exec exec) {
    return a2c_update(params, optimizer, std::span<const RolloutBuffer>(&rollout, 1), config, exec);
}

LossReport a2c_update(NetworkParams& params, RmsPropState& optimizer, std::span<const RolloutBuffer> rollouts,
                      const TrainConfig& config, Exec exec) {
    LossBatch<float> batch;
    for (const RolloutBuffer& rollout : rollouts) {
        const auto ra = n_step_returns(rollout, config.gamma);
        for (std::size_t t = 0; t < rollout.steps.size(); ++t) {
            batch.inputs.push_back(frame_input<float>(rollout.steps[t].obs));
            batch.actions.push_back(rollout.steps[t].action);
            batch.returns.push_back(ra[t].ret);
            batch.advantages.push_back(ra[t].advantage);
        }
    }
    if (batch.inputs.empty()) throw std::invalid_argument("a2c_update: empty rollout");
    std::vector<float> grad(params.theta.size(), 0.0f);
    LossReport report = a2c_loss<float>(params, batch, {config.value_coef, config.entropy_coef}, grad, exec);

    double sq = 0.0;
    for (float g : grad) sq += static_cast<double>(g) * g;
    report.grad_norm = std::sqrt(sq);
    if (!std::isfinite(report.total) || !std::isfinite(report.grad_norm))
        throw DivergenceError("a2c_update: non-finite loss or gradient");

    const double clip = std::min(1.0, config.max_grad_norm / (report.grad_norm + 1e-6));
    if (optimizer.square_avg.size() != params.theta.size()) optimizer.square_avg.assign(params.theta.size(), 0.0f);
    const float decay = static_cast<float>(config.rms_decay);
    const float lr = static_cast<float>(config.learning_rate);
    const float eps = static_cast<float>(config.rms_epsilon);
    const float scale = static_cast<float>(clip);
    float* theta = params.theta.data();
    float* avg = optimizer.square_avg.data();
    const std::size_t n = params.theta.size();
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) {
        const float g = grad[i] * scale;
        avg[i] = decay * avg[i] + (1.0f - decay) * g * g;
        theta[i] -= lr * g / (std::sqrt(avg[i]) + eps);
    }
    return report;
}

GradientCheckResult gradient_check(const BasicNetwork<double>& net, const LossBatch<double>& batch,
                                   const LossCoefficients& coefs, double h) {
    GradientCheckResult res;
    res.analytic.assign(net.theta.size(), 0.0);
    a2c_loss<double>(net, batch, coefs, res.analytic, Exec::Serial);
    BasicNetwork<double> probe = net;
    res.numeric.resize(net.theta.size());
    for (std::size_t i = 0; i < net.theta.size(); ++i) {
        const double orig = probe.theta[i];
        probe.theta[i] = orig + h;
        const double up = a2c_loss<double>(probe, batch, coefs, {}, Exec::Serial).total;
        probe.theta[i] = orig - h;
        const double down = a2c_loss<double>(probe, batch, coefs, {}, Exec::Serial).total;
        probe.theta[i] = orig;
        res.numeric[i] = (up - down) / (2.0 * h);
        const double ga = res.analytic[i], gn = res.numeric[i];
        const double rel = std::abs(ga - gn) / std::max({std::abs(ga), std::abs(gn), 1e-8});
        if (rel > res.max_relative_error) {
            res.max_relative_error = rel;
            res.worst_index = i;
        }
    }
    return res;
}

namespace {

// Smallest |pre-activation| over all hidden units for the batch; the loss is
// only differentiable where this is bounded away from zero.
double kink_margin(const BasicNetwork<double>& net, const LossBatch<double>& batch) {
    // Pre-activations are recovered by re-running each layer without the ReLU.
    const NetShape& s = net.shape;
    const ParamLayout L(s);
    const double* th = net.theta.data();
    const auto c1 = s.conv1();
    const auto c2 = s.conv2();
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& input : batch.inputs) {
        std::vector<double> cols1(static_cast<std::size_t>(c1.positions()) * c1.patch());
        kernels::im2col(c1, input.data(), cols1.data());
        std::vector<double> z1(static_cast<std::size_t>(c1.out_c) * c1.positions());
        kernels::serial::gemm_nt(c1.out_c, c1.positions(), c1.patch(), th + L.w1, cols1.data(), th + L.b1, z1.data());
        for (double z : z1) margin = std::min(margin, std::abs(z));
        for (double& z : z1) z = std::max(z, 0.0);
        std::vector<double> cols2(static_cast<std::size_t>(c2.positions()) * c2.patch());
        kernels::im2col(c2, z1.data(), cols2.data());
        std::vector<double> z2(static_cast<std::size_t>(c2.out_c) * c2.positions());
        kernels::serial::gemm_nt(c2.out_c, c2.positions(), c2.patch(), th + L.w2, cols2.data(), th + L.b2, z2.data());
        for (double z : z2) margin = std::min(margin, std::abs(z));
        for (double& z : z2) z = std::max(z, 0.0);
        std::vector<double> z3(s.hidden);
        kernels::serial::gemm_nt(s.hidden, 1, s.flat_size(), th + L.w3, z2.data(), th + L.b3, z3.data());
        for (double z : z3) margin = std::min(margin, std::abs(z));
    }
    return margin;
}

}  // namespace

GradientCheckFixture make_gradient_check_fixture(std::uint64_t seed, int steps) {
    Rng rng(seed);
    for (;;) {
        GradientCheckFixture fx{init_network<double>(NetShape::reduced(), rng()), {}};
        const ParamLayout L(fx.net.shape);
        // Non-zero biases so every parameter group is exercised away from init.
        for (std::size_t off : {L.b1, L.b2, L.b3}) {
            const std::size_t end = off == L.b1 ? L.w2 : off == L.b2 ? L.w3 : L.wp;
            for (std::size_t i = off; i < end; ++i) fx.net.theta[i] = 0.2 * (rng.uniform() - 0.5);
        }
        for (std::size_t i = L.wp; i < L.bp; ++i) fx.net.theta[i] *= 50.0;
        for (int t = 0; t < steps; ++t) {
            std::vector<double> in(fx.net.shape.input_size());
            for (double& x : in) x = rng.uniform();
            fx.batch.inputs.push_back(std::move(in));
            fx.batch.actions.push_back(static_cast<ActionId>(rng.below(kNumActions)));
            fx.batch.returns.push_back(2.0 * rng.uniform() - 1.0);
            fx.batch.advantages.push_back(2.0 * rng.uniform() - 1.0);
        }
        // A central difference straddling a ReLU kink measures nothing useful.
        if (kink_margin(fx.net, fx.batch) > 1e-3) return fx;
    }
}

std::uint64_t params_hash(const NetworkParams& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (float f : params.theta) {
        const auto bits = std::bit_cast<std::uint32_t>(f);
        for (int i = 0; i < 4; ++i) {
            h ^= (bits >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

void save_params(std::ostream& out, const NetworkParams& params) {
    bin::put_magic(out, kParamsMagic);
    bin::put_u32(out, kParamsVersion);
    const NetShape& s = params.shape;
    for (int v : {s.in_h, s.in_w, s.conv1_filters, s.conv1_kernel, s.conv1_stride, s.conv2_filters, s.conv2_kernel,
                  s.conv2_stride, s.hidden, s.actions})
        bin::put_u32(out, static_cast<std::uint32_t>(v));
    bin::put_u64(out, params.theta.size());
    for (float f : params.theta) bin::put_f32(out, f);
}

NetworkParams load_params(std::istream& in) {
    bin::expect_magic(in, kParamsMagic);
    const std::uint32_t version = bin::get_u32(in);
    if (version != kParamsVersion) throw std::runtime_error("policy checkpoint: unsupported version " + std::to_string(version));
    NetShape s;
    for (int* v : {&s.in_h, &s.in_w, &s.conv1_filters, &s.conv1_kernel, &s.conv1_stride, &s.conv2_filters,
                   &s.conv2_kernel, &s.conv2_stride, &s.hidden, &s.actions})
        *v = static_cast<int>(bin::get_u32(in));
    try {
        s.validate();
    } catch (const ConfigError& e) {
        throw std::runtime_error(std::string("policy checkpoint: ") + e.what());
    }
    const std::uint64_t count = bin::get_u64(in);
    if (count != ParamLayout(s).total) throw std::runtime_error("policy checkpoint: parameter count does not match shape");
    NetworkParams p{s, std::vector<float>(count)};
    for (float& f : p.theta) f = bin::get_f32(in);
    return p;
}

template BasicNetwork<float> init_network<float>(const NetShape&, std::uint64_t);
template BasicNetwork<double> init_network<double>(const NetShape&, std::uint64_t);
template std::vector<float> frame_input<float>(const ObservationFrame&);
template std::vector<double> frame_input<double>(const ObservationFrame&);
template void forward<float>(const BasicNetwork<float>&, std::span<const float>, ForwardCache<float>&, Exec);
template void forward<double>(const BasicNetwork<double>&, std::span<const double>, ForwardCache<double>&, Exec);
template void backward<float>(const BasicNetwork<float>&, const ForwardCache<float>&, std::span<const double>, double,
                              std::span<float>, Exec);
template void backward<double>(const BasicNetwork<double>&, const ForwardCache<double>&, std::span<const double>,
                               double, std::span<double>, Exec);
template LossReport a2c_loss<float>(const BasicNetwork<float>&, const LossBatch<float>&, const LossCoefficients&,
                                    std::span<float>, Exec);
template LossReport a2c_loss<double>(const BasicNetwork<double>&, const LossBatch<double>&, const LossCoefficients&,
                                     std::span<double>, Exec);

}  // namespace pdda::policy
