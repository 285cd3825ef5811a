#include "genfl/snn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "genfl/common.hpp"

namespace genfl::snn {

namespace {

void check_arch(const Arch& arch) {
    if (arch.input_dim < 1 || arch.output_dim < 1) {
        throw std::invalid_argument("arch: input_dim and output_dim must be >= 1");
    }
    for (int h : arch.hidden_dims) {
        if (h < 1) throw std::invalid_argument("arch: hidden dims must be >= 1");
    }
}

template <typename Fn>
void for_each_field(Fn&& fn) {
    fn(&LayerParams::mu_w);
    fn(&LayerParams::mu_b);
    fn(&LayerParams::rho_w);
    fn(&LayerParams::rho_b);
}

void check_same_shape(const GaussianNetParams& a, const GaussianNetParams& b, const char* what) {
    if (a.arch != b.arch || a.layers.size() != b.layers.size()) {
        throw std::invalid_argument(std::string(what) + ": architecture mismatch");
    }
}

}  // namespace

std::size_t GaussianNetParams::num_coeffs() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.mu_w.size() + l.mu_b.size() + l.rho_w.size() + l.rho_b.size();
    return n;
}

double softplus(double rho) {
    if (rho > 0.0) return rho + std::log1p(std::exp(-rho));
    return std::log1p(std::exp(rho));
}

double softplus_inverse(double sigma) {
    if (!(sigma > 0.0)) throw std::domain_error("softplus_inverse: sigma must be positive");
    if (sigma > 30.0) return sigma + std::log1p(-std::exp(-sigma));
    return std::log(std::expm1(sigma));
}

double softplus_prime(double rho) { return 1.0 / (1.0 + std::exp(-rho)); }

GaussianNetParams make_zero_params(const Arch& arch) {
    check_arch(arch);
    GaussianNetParams p;
    p.arch = arch;
    p.layers.resize(arch.num_layers());
    for (int l = 0; l < arch.num_layers(); ++l) {
        const std::size_t nw = static_cast<std::size_t>(arch.fan_out(l)) * arch.fan_in(l);
        const std::size_t nb = static_cast<std::size_t>(arch.fan_out(l));
        p.layers[l].mu_w.assign(nw, 0.0);
        p.layers[l].mu_b.assign(nb, 0.0);
        p.layers[l].rho_w.assign(nw, 0.0);
        p.layers[l].rho_b.assign(nb, 0.0);
    }
    return p;
}

GaussianNetParams init_prior_random(const Arch& arch, double sigma_prior, std::uint64_t seed) {
    if (!(sigma_prior > 0.0)) throw std::domain_error("init_prior_random: sigma_prior must be positive");
    GaussianNetParams p = make_zero_params(arch);
    rng::Stream stream(seed);
    const double rho0 = softplus_inverse(sigma_prior);
    for (int l = 0; l < arch.num_layers(); ++l) {
        const double stddev = 1.0 / std::sqrt(static_cast<double>(arch.fan_in(l)));
        auto& layer = p.layers[l];
        for (auto& m : layer.mu_w) m = stddev * stream.next_normal_truncated(2.0);
        for (auto& m : layer.mu_b) m = stddev * stream.next_normal_truncated(2.0);
        std::fill(layer.rho_w.begin(), layer.rho_w.end(), rho0);
        std::fill(layer.rho_b.begin(), layer.rho_b.end(), rho0);
    }
    return p;
}

SampledWeights sample_weights(const GaussianNetParams& params, rng::Stream& stream) {
    SampledWeights s;
    s.arch = params.arch;
    s.weights.resize(params.layers.size());
    s.noise.resize(params.layers.size());
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& lp = params.layers[l];
        auto& w = s.weights[l];
        auto& v = s.noise[l];
        w.w.resize(lp.mu_w.size());
        w.b.resize(lp.mu_b.size());
        v.w.resize(lp.mu_w.size());
        v.b.resize(lp.mu_b.size());
        for (std::size_t i = 0; i < lp.mu_w.size(); ++i) {
            v.w[i] = stream.next_normal();
            w.w[i] = lp.mu_w[i] + softplus(lp.rho_w[i]) * v.w[i];
        }
        for (std::size_t i = 0; i < lp.mu_b.size(); ++i) {
            v.b[i] = stream.next_normal();
            w.b[i] = lp.mu_b[i] + softplus(lp.rho_b[i]) * v.b[i];
        }
    }
    return s;
}

SampledWeights sample_weights(const GaussianNetParams& params, std::uint64_t seed) {
    rng::Stream stream(seed);
    return sample_weights(params, stream);
}

SampledWeights realize_weights(const GaussianNetParams& params,
                               const std::vector<LayerCoeffs>& noise) {
    if (noise.size() != params.layers.size()) {
        throw std::invalid_argument("realize_weights: layer count mismatch");
    }
    SampledWeights s;
    s.arch = params.arch;
    s.noise = noise;
    s.weights.resize(params.layers.size());
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& lp = params.layers[l];
        const auto& v = noise[l];
        if (v.w.size() != lp.mu_w.size() || v.b.size() != lp.mu_b.size()) {
            throw std::invalid_argument("realize_weights: noise shape mismatch");
        }
        auto& w = s.weights[l];
        w.w.resize(lp.mu_w.size());
        w.b.resize(lp.mu_b.size());
        for (std::size_t i = 0; i < lp.mu_w.size(); ++i) {
            w.w[i] = lp.mu_w[i] + softplus(lp.rho_w[i]) * v.w[i];
        }
        for (std::size_t i = 0; i < lp.mu_b.size(); ++i) {
            w.b[i] = lp.mu_b[i] + softplus(lp.rho_b[i]) * v.b[i];
        }
    }
    return s;
}

namespace {

// act[0] is the promoted input, act[l+1] the output of layer l
// (ReLU-activated for hidden layers, raw logits for the last).
void forward_trace(const Arch& arch, const std::vector<LayerCoeffs>& weights,
                   std::span<const float> x, std::vector<std::vector<double>>& act) {
    if (static_cast<int>(x.size()) != arch.input_dim) {
        throw std::invalid_argument("forward: input dimension mismatch");
    }
    const int L = arch.num_layers();
    act.resize(L + 1);
    act[0].assign(x.begin(), x.end());
    for (int l = 0; l < L; ++l) {
        const int in = arch.fan_in(l), out = arch.fan_out(l);
        const auto& w = weights[l];
        act[l + 1].resize(out);
        const std::vector<double>& a = act[l];
        for (int o = 0; o < out; ++o) {
            const double* row = w.w.data() + static_cast<std::size_t>(o) * in;
            double z = w.b[o];
            for (int i = 0; i < in; ++i) z += row[i] * a[i];
            act[l + 1][o] = (l + 1 < L && z < 0.0) ? 0.0 : z;
        }
    }
}

// Backpropagates dlogits through the trace, accumulating d(loss)/dW into acc.
void backward_weight_grads(const Arch& arch, const std::vector<LayerCoeffs>& weights,
                           const std::vector<std::vector<double>>& act,
                           std::vector<double> delta, std::vector<LayerCoeffs>& acc) {
    const int L = arch.num_layers();
    std::vector<double> delta_prev;
    for (int l = L - 1; l >= 0; --l) {
        const int in = arch.fan_in(l), out = arch.fan_out(l);
        const auto& a = act[l];
        auto& g = acc[l];
        for (int o = 0; o < out; ++o) {
            double* grow = g.w.data() + static_cast<std::size_t>(o) * in;
            const double d = delta[o];
            for (int i = 0; i < in; ++i) grow[i] += d * a[i];
            g.b[o] += d;
        }
        if (l == 0) break;
        delta_prev.assign(in, 0.0);
        const auto& w = weights[l];
        for (int o = 0; o < out; ++o) {
            const double* row = w.w.data() + static_cast<std::size_t>(o) * in;
            const double d = delta[o];
            for (int i = 0; i < in; ++i) delta_prev[i] += row[i] * d;
        }
        for (int i = 0; i < in; ++i) {
            if (a[i] <= 0.0) delta_prev[i] = 0.0;  // ReLU subgradient
        }
        delta.swap(delta_prev);
    }
}

std::vector<LayerCoeffs> make_zero_coeffs(const GaussianNetParams& params) {
    std::vector<LayerCoeffs> out(params.layers.size());
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        out[l].w.assign(params.layers[l].mu_w.size(), 0.0);
        out[l].b.assign(params.layers[l].mu_b.size(), 0.0);
    }
    return out;
}

NetGrads make_zero_grads(const GaussianNetParams& params) {
    NetGrads g(params.layers.size());
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        g[l].mu_w.assign(params.layers[l].mu_w.size(), 0.0);
        g[l].mu_b.assign(params.layers[l].mu_b.size(), 0.0);
        g[l].rho_w.assign(params.layers[l].rho_w.size(), 0.0);
        g[l].rho_b.assign(params.layers[l].rho_b.size(), 0.0);
    }
    return g;
}

}  // namespace

std::vector<double> forward(const SampledWeights& w, std::span<const float> x) {
    std::vector<std::vector<double>> act;
    forward_trace(w.arch, w.weights, x, act);
    return act.back();
}

std::vector<double> forward_mu(const GaussianNetParams& params, std::span<const float> x) {
    if (static_cast<int>(x.size()) != params.arch.input_dim) {
        throw std::invalid_argument("forward_mu: input dimension mismatch");
    }
    const Arch& arch = params.arch;
    const int L = arch.num_layers();
    std::vector<double> a(x.begin(), x.end()), next;
    for (int l = 0; l < L; ++l) {
        const int in = arch.fan_in(l), out = arch.fan_out(l);
        const auto& lp = params.layers[l];
        next.resize(out);
        for (int o = 0; o < out; ++o) {
            const double* row = lp.mu_w.data() + static_cast<std::size_t>(o) * in;
            double z = lp.mu_b[o];
            for (int i = 0; i < in; ++i) z += row[i] * a[i];
            next[o] = (l + 1 < L && z < 0.0) ? 0.0 : z;
        }
        a.swap(next);
    }
    return a;
}

std::vector<double> forward_mu_dropout(const GaussianNetParams& params, std::span<const float> x,
                                       double dropout_rate, rng::Stream& stream) {
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw std::domain_error("dropout_rate must lie in [0,1)");
    }
    const Arch& arch = params.arch;
    const int L = arch.num_layers();
    std::vector<double> a(x.begin(), x.end()), next;
    const double keep_scale = 1.0 / (1.0 - dropout_rate);
    for (int l = 0; l < L; ++l) {
        const int in = arch.fan_in(l), out = arch.fan_out(l);
        const auto& lp = params.layers[l];
        next.resize(out);
        for (int o = 0; o < out; ++o) {
            const double* row = lp.mu_w.data() + static_cast<std::size_t>(o) * in;
            double z = lp.mu_b[o];
            for (int i = 0; i < in; ++i) z += row[i] * a[i];
            next[o] = (l + 1 < L && z < 0.0) ? 0.0 : z;
        }
        if (l + 1 < L && dropout_rate > 0.0) {
            for (int o = 0; o < out; ++o) {
                next[o] = stream.next_double() < dropout_rate ? 0.0 : next[o] * keep_scale;
            }
        }
        a.swap(next);
    }
    return a;
}

CeResult bounded_cross_entropy(std::span<const double> logits, int label, double p_min) {
    if (!(p_min > 0.0 && p_min < 1.0)) throw std::domain_error("p_min must lie in (0,1)");
    if (label < 0 || label >= static_cast<int>(logits.size())) {
        throw std::invalid_argument("bounded_cross_entropy: label out of range");
    }
    const int n = static_cast<int>(logits.size());
    double zmax = logits[0];
    for (int j = 1; j < n; ++j) zmax = std::max(zmax, logits[j]);
    std::vector<double> prob(n);
    double norm = 0.0;
    for (int j = 0; j < n; ++j) {
        prob[j] = std::exp(logits[j] - zmax);
        norm += prob[j];
    }
    for (int j = 0; j < n; ++j) prob[j] /= norm;

    CeResult out;
    out.prob_label = prob[label];
    out.dlogits.assign(n, 0.0);
    const double log_pmin = std::log(p_min);
    if (prob[label] <= p_min) {
        out.loss = 1.0;  // clamp active: constant branch, zero gradient
        return out;
    }
    out.loss = std::log(prob[label]) / log_pmin;
    const double scale = 1.0 / -log_pmin;
    for (int j = 0; j < n; ++j) {
        out.dlogits[j] = (prob[j] - (j == label ? 1.0 : 0.0)) * scale;
    }
    return out;
}

int zero_one_loss(std::span<const double> logits, int label) {
    int best = 0;
    for (int j = 1; j < static_cast<int>(logits.size()); ++j) {
        if (logits[j] > logits[best]) best = j;
    }
    return best == label ? 0 : 1;
}

NetGrads loss_backward(const GaussianNetParams& params, const SampledWeights& w,
                       std::span<const float> x, int label, double p_min) {
    if (params.arch != w.arch) throw std::invalid_argument("loss_backward: architecture mismatch");
    std::vector<std::vector<double>> act;
    forward_trace(w.arch, w.weights, x, act);
    CeResult ce = bounded_cross_entropy(act.back(), label, p_min);
    auto gw = make_zero_coeffs(params);
    backward_weight_grads(w.arch, w.weights, act, std::move(ce.dlogits), gw);

    NetGrads g = make_zero_grads(params);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& lp = params.layers[l];
        const auto& v = w.noise[l];
        for (std::size_t i = 0; i < lp.mu_w.size(); ++i) {
            g[l].mu_w[i] = gw[l].w[i];
            g[l].rho_w[i] = gw[l].w[i] * v.w[i] * softplus_prime(lp.rho_w[i]);
        }
        for (std::size_t i = 0; i < lp.mu_b.size(); ++i) {
            g[l].mu_b[i] = gw[l].b[i];
            g[l].rho_b[i] = gw[l].b[i] * v.b[i] * softplus_prime(lp.rho_b[i]);
        }
    }
    return g;
}

double gaussian_kl(const GaussianNetParams& post, const GaussianNetParams& prior) {
    check_same_shape(post, prior, "gaussian_kl");
    double acc = 0.0;
    std::vector<double> sq, sp;
    for (std::size_t l = 0; l < post.layers.size(); ++l) {
        const auto& q = post.layers[l];
        const auto& p = prior.layers[l];
        auto add = [&](const std::vector<double>& mu_q, const std::vector<double>& rho_q,
                       const std::vector<double>& mu_p, const std::vector<double>& rho_p) {
            if (mu_q.size() != mu_p.size()) {
                throw std::invalid_argument("gaussian_kl: shape mismatch");
            }
            sq.resize(rho_q.size());
            sp.resize(rho_p.size());
            for (std::size_t i = 0; i < rho_q.size(); ++i) sq[i] = softplus(rho_q[i]);
            for (std::size_t i = 0; i < rho_p.size(); ++i) sp[i] = softplus(rho_p[i]);
            acc += pacbayes::gaussian_kl(mu_q, sq, mu_p, sp);
        };
        add(q.mu_w, q.rho_w, p.mu_w, p.rho_w);
        add(q.mu_b, q.rho_b, p.mu_b, p.rho_b);
    }
    return acc;
}

NetGrads gaussian_kl_grads(const GaussianNetParams& post, const GaussianNetParams& prior) {
    check_same_shape(post, prior, "gaussian_kl_grads");
    NetGrads g = make_zero_grads(post);
    for (std::size_t l = 0; l < post.layers.size(); ++l) {
        const auto& q = post.layers[l];
        const auto& p = prior.layers[l];
        auto fill = [&](const std::vector<double>& mu_q, const std::vector<double>& rho_q,
                        const std::vector<double>& mu_p, const std::vector<double>& rho_p,
                        std::vector<double>& g_mu, std::vector<double>& g_rho) {
            for (std::size_t i = 0; i < mu_q.size(); ++i) {
                double sig_q = softplus(rho_q[i]);
                double sig_p = softplus(rho_p[i]);
                double inv_var_p = 1.0 / (sig_p * sig_p);
                g_mu[i] = (mu_q[i] - mu_p[i]) * inv_var_p;
                g_rho[i] = (sig_q * inv_var_p - 1.0 / sig_q) * softplus_prime(rho_q[i]);
            }
        };
        fill(q.mu_w, q.rho_w, p.mu_w, p.rho_w, g[l].mu_w, g[l].rho_w);
        fill(q.mu_b, q.rho_b, p.mu_b, p.rho_b, g[l].mu_b, g[l].rho_b);
    }
    return g;
}

ObjectiveBatchResult objective_backward(const GaussianNetParams& post,
                                        const GaussianNetParams& prior, const SampledWeights& w,
                                        std::span<const ExampleRef> batch,
                                        const pacbayes::ObjectiveKind& kind, long m_denom,
                                        double delta, double p_min) {
    if (batch.empty()) throw std::invalid_argument("objective_backward: empty minibatch");
    if (post.arch != w.arch) throw std::invalid_argument("objective_backward: architecture mismatch");

    auto gw = make_zero_coeffs(post);
    std::vector<std::vector<double>> act;
    double loss_sum = 0.0;
    for (const auto& ex : batch) {
        forward_trace(w.arch, w.weights, {ex.x, static_cast<std::size_t>(post.arch.input_dim)},
                      act);
        CeResult ce = bounded_cross_entropy(act.back(), ex.label, p_min);
        loss_sum += ce.loss;
        backward_weight_grads(w.arch, w.weights, act, std::move(ce.dlogits), gw);
    }
    const double inv_n = 1.0 / static_cast<double>(batch.size());

    ObjectiveBatchResult out;
    out.r_hat = loss_sum * inv_n;
    out.kl_div = gaussian_kl(post, prior);
    pacbayes::BoundBudget budget;
    budget.kl_div = out.kl_div;
    budget.m = m_denom;
    budget.delta = delta;
    pacbayes::ObjectiveEval eval = pacbayes::objective_eval(out.r_hat, budget, kind);
    out.objective = eval.value;

    NetGrads klg = gaussian_kl_grads(post, prior);
    out.grads = make_zero_grads(post);
    for (std::size_t l = 0; l < post.layers.size(); ++l) {
        const auto& lp = post.layers[l];
        const auto& v = w.noise[l];
        for (std::size_t i = 0; i < lp.mu_w.size(); ++i) {
            double gw_mean = gw[l].w[i] * inv_n;
            out.grads[l].mu_w[i] = eval.d_r_hat * gw_mean + eval.d_kl * klg[l].mu_w[i];
            out.grads[l].rho_w[i] = eval.d_r_hat * gw_mean * v.w[i] * softplus_prime(lp.rho_w[i]) +
                                    eval.d_kl * klg[l].rho_w[i];
        }
        for (std::size_t i = 0; i < lp.mu_b.size(); ++i) {
            double gb_mean = gw[l].b[i] * inv_n;
            out.grads[l].mu_b[i] = eval.d_r_hat * gb_mean + eval.d_kl * klg[l].mu_b[i];
            out.grads[l].rho_b[i] = eval.d_r_hat * gb_mean * v.b[i] * softplus_prime(lp.rho_b[i]) +
                                    eval.d_kl * klg[l].rho_b[i];
        }
    }
    return out;
}

OptimizerState make_optimizer(const GaussianNetParams& params, double learning_rate,
                              double momentum) {
    if (!(learning_rate > 0.0)) throw std::domain_error("learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::domain_error("momentum must lie in [0,1)");
    OptimizerState s;
    s.velocity = make_zero_grads(params);
    s.learning_rate = learning_rate;
    s.momentum = momentum;
    return s;
}

void sgd_momentum_step(OptimizerState& state, GaussianNetParams& params, const NetGrads& grads) {
    if (state.velocity.size() != params.layers.size() || grads.size() != params.layers.size()) {
        throw std::invalid_argument("sgd_momentum_step: layer count mismatch");
    }
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        for_each_field([&](auto field) {
            auto& theta = params.layers[l].*field;
            auto& vel = state.velocity[l].*field;
            const auto& g = grads[l].*field;
            if (theta.size() != g.size() || vel.size() != g.size()) {
                throw std::invalid_argument("sgd_momentum_step: shape mismatch");
            }
            for (std::size_t i = 0; i < theta.size(); ++i) {
                vel[i] = state.momentum * vel[i] + g[i];
                theta[i] -= state.learning_rate * vel[i];
            }
        });
    }
}

ErmBatchResult erm_backward(const GaussianNetParams& params, std::span<const ExampleRef> batch,
                            double dropout_rate, double p_min, rng::Stream& stream) {
    if (batch.empty()) throw std::invalid_argument("erm_backward: empty minibatch");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw std::domain_error("dropout_rate must lie in [0,1)");
    }
    const Arch& arch = params.arch;
    const int L = arch.num_layers();
    const double keep_scale = 1.0 / (1.0 - dropout_rate);

    ErmBatchResult out;
    out.grads = make_zero_grads(params);
    std::vector<std::vector<double>> act(L + 1);
    std::vector<std::vector<double>> mask(L);  // per hidden layer, 0 or keep_scale
    std::vector<double> delta, delta_prev;

    double loss_sum = 0.0;
    for (const auto& ex : batch) {
        act[0].assign(ex.x, ex.x + arch.input_dim);
        for (int l = 0; l < L; ++l) {
            const int in = arch.fan_in(l), out_dim = arch.fan_out(l);
            const auto& lp = params.layers[l];
            act[l + 1].resize(out_dim);
            for (int o = 0; o < out_dim; ++o) {
                const double* row = lp.mu_w.data() + static_cast<std::size_t>(o) * in;
                double z = lp.mu_b[o];
                for (int i = 0; i < in; ++i) z += row[i] * act[l][i];
                act[l + 1][o] = (l + 1 < L && z < 0.0) ? 0.0 : z;
            }
            if (l + 1 < L) {
                mask[l].resize(out_dim);
                if (dropout_rate > 0.0) {
                    for (int o = 0; o < out_dim; ++o) {
                        mask[l][o] = stream.next_double() < dropout_rate ? 0.0 : keep_scale;
                        act[l + 1][o] *= mask[l][o];
                    }
                } else {
                    std::fill(mask[l].begin(), mask[l].end(), 1.0);
                }
            }
        }
        CeResult ce = bounded_cross_entropy(act[L], ex.label, p_min);
        loss_sum += ce.loss;

        delta = std::move(ce.dlogits);
        for (int l = L - 1; l >= 0; --l) {
            const int in = arch.fan_in(l), out_dim = arch.fan_out(l);
            auto& g = out.grads[l];
            for (int o = 0; o < out_dim; ++o) {
                double* grow = g.mu_w.data() + static_cast<std::size_t>(o) * in;
                const double d = delta[o];
                for (int i = 0; i < in; ++i) grow[i] += d * act[l][i];
                g.mu_b[o] += d;
            }
            if (l == 0) break;
            delta_prev.assign(in, 0.0);
            const auto& lp = params.layers[l];
            for (int o = 0; o < out_dim; ++o) {
                const double* row = lp.mu_w.data() + static_cast<std::size_t>(o) * in;
                const double d = delta[o];
                for (int i = 0; i < in; ++i) delta_prev[i] += row[i] * d;
            }
            for (int i = 0; i < in; ++i) {
                // dropout mask folds the ReLU subgradient: masked or
                // non-positive activations carry no signal
                delta_prev[i] = act[l][i] > 0.0 ? delta_prev[i] * mask[l - 1][i] : 0.0;
            }
            delta.swap(delta_prev);
        }
    }
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    out.mean_loss = loss_sum * inv_n;
    for (auto& g : out.grads) {
        for (auto& v : g.mu_w) v *= inv_n;
        for (auto& v : g.mu_b) v *= inv_n;
    }
    return out;
}

GaussianNetParams train_prior_erm(std::span<const ExampleRef> examples, GaussianNetParams init,
                                  double dropout_rate, int epochs, int batch_size,
                                  double learning_rate, double momentum, double p_min,
                                  rng::Stream& stream) {
    if (examples.empty()) throw DataError("train_prior_erm: empty dataset");
    if (batch_size < 1) throw std::domain_error("batch_size must be >= 1");
    GaussianNetParams params = std::move(init);
    if (epochs <= 0) return params;
    OptimizerState opt = make_optimizer(params, learning_rate, momentum);
    const int n = static_cast<int>(examples.size());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::vector<ExampleRef> batch;
    for (int e = 0; e < epochs; ++e) {
        for (int i = n - 1; i > 0; --i) {
            int j = static_cast<int>(stream.next_below(static_cast<std::uint64_t>(i) + 1));
            std::swap(order[i], order[j]);
        }
        for (int start = 0; start < n; start += batch_size) {
            const int stop = std::min(n, start + batch_size);
            batch.clear();
            for (int i = start; i < stop; ++i) batch.push_back(examples[order[i]]);
            ErmBatchResult res = erm_backward(params, batch, dropout_rate, p_min, stream);
            sgd_momentum_step(opt, params, res.grads);
        }
    }
    return params;
}

}  // namespace genfl::snn
