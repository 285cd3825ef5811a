#pragma once

// Stochastic multilayer perceptron over diagonal-Gaussian weights.
//
// A network distribution is a (mu, rho) pair per coefficient with
// sigma = softplus(rho). Sampling uses the reparameterization trick
// W = mu + sigma * V, V ~ N(0, Id), and the noise V is kept so gradients
// reach both mu and rho. The backward pass is exact (no autodiff): chain
// rule through the bounded cross-entropy, the ReLU stack and the sampled
// weights, plus the closed-form KL term.

#include <cstdint>
#include <span>
#include <vector>

#include "genfl/pacbayes.hpp"
#include "genfl/rng.hpp"

namespace genfl::snn {

struct Arch {
    int input_dim = 0;
    std::vector<int> hidden_dims;
    int output_dim = 0;

    int num_layers() const { return static_cast<int>(hidden_dims.size()) + 1; }
    int fan_in(int layer) const { return layer == 0 ? input_dim : hidden_dims[layer - 1]; }
    int fan_out(int layer) const {
        return layer == num_layers() - 1 ? output_dim : hidden_dims[layer];
    }
    bool operator==(const Arch&) const = default;
};

// One layer of (mu, rho) coefficients; also reused as the container for
// gradients and optimizer velocity, which share the shapes.
struct LayerParams {
    std::vector<double> mu_w;  // [out x in], row-major
    std::vector<double> mu_b;  // [out]
    std::vector<double> rho_w;
    std::vector<double> rho_b;
};

struct GaussianNetParams {
    Arch arch;
    std::vector<LayerParams> layers;

    std::size_t num_coeffs() const;
};

using NetGrads = std::vector<LayerParams>;

struct LayerCoeffs {
    std::vector<double> w;  // [out x in]
    std::vector<double> b;  // [out]
};

struct SampledWeights {
    Arch arch;
    std::vector<LayerCoeffs> weights;
    std::vector<LayerCoeffs> noise;  // the V draws behind each coefficient
};

double softplus(double rho);
double softplus_inverse(double sigma);  // throws std::domain_error on sigma <= 0
double softplus_prime(double rho);      // logistic function

GaussianNetParams make_zero_params(const Arch& arch);

// Per layer, mu ~ N(0, 1/sqrt(fan_in)) truncated at +-2/sqrt(fan_in) (two
// standard deviations, by rejection); rho set so sigma = sigma_prior.
GaussianNetParams init_prior_random(const Arch& arch, double sigma_prior, std::uint64_t seed);

SampledWeights sample_weights(const GaussianNetParams& params, rng::Stream& stream);
SampledWeights sample_weights(const GaussianNetParams& params, std::uint64_t seed);

// W = mu + softplus(rho) * V for a given noise draw (used to replay a sample).
SampledWeights realize_weights(const GaussianNetParams& params,
                               const std::vector<LayerCoeffs>& noise);

// Affine + ReLU per hidden layer, final affine; returns raw logits.
std::vector<double> forward(const SampledWeights& w, std::span<const float> x);

// Deterministic forward with weights = mu (prior/ERM path).
std::vector<double> forward_mu(const GaussianNetParams& params, std::span<const float> x);

// forward_mu with inverted dropout (scale 1/(1-rate)) on hidden activations.
std::vector<double> forward_mu_dropout(const GaussianNetParams& params, std::span<const float> x,
                                       double dropout_rate, rng::Stream& stream);

struct CeResult {
    double loss = 0.0;                 // in [0,1]
    std::vector<double> dlogits;       // zero in the clamped regime
    double prob_label = 0.0;
};

// Normalised-exponential probabilities; the true-class probability is clamped
// below at p_min and the log rescaled by 1/ln(p_min) so the loss lands in [0,1].
CeResult bounded_cross_entropy(std::span<const double> logits, int label, double p_min);

// 0 iff argmax(logits) == label; ties broken toward the lowest class index.
int zero_one_loss(std::span<const double> logits, int label);

// Gradients of the bounded cross-entropy of one example w.r.t. every mu and
// rho entry, chained through the sampled weights.
NetGrads loss_backward(const GaussianNetParams& params, const SampledWeights& w,
                       std::span<const float> x, int label, double p_min);

// KL(Q||P) between two diagonal-Gaussian nets of identical shape.
double gaussian_kl(const GaussianNetParams& post, const GaussianNetParams& prior);

// Closed-form partials of gaussian_kl w.r.t. the posterior's mu and rho.
NetGrads gaussian_kl_grads(const GaussianNetParams& post, const GaussianNetParams& prior);

struct ExampleRef {
    const float* x = nullptr;
    int label = 0;
};

struct ObjectiveBatchResult {
    double objective = 0.0;
    double r_hat = 0.0;   // minibatch mean bounded cross-entropy
    double kl_div = 0.0;  // KL(Q||P)
    NetGrads grads;
};

// Full objective (f1 or f2) on one minibatch with a fixed weight sample:
// value and exact (mu, rho) gradients, KL term included.
ObjectiveBatchResult objective_backward(const GaussianNetParams& post,
                                        const GaussianNetParams& prior, const SampledWeights& w,
                                        std::span<const ExampleRef> batch,
                                        const pacbayes::ObjectiveKind& kind, long m_denom,
                                        double delta, double p_min);

struct OptimizerState {
    std::vector<LayerParams> velocity;
    double learning_rate = 0.0;
    double momentum = 0.0;  // in [0,1)
};

OptimizerState make_optimizer(const GaussianNetParams& params, double learning_rate,
                              double momentum);

// Classical momentum: v <- beta*v + g; theta <- theta - eta*v.
void sgd_momentum_step(OptimizerState& state, GaussianNetParams& params, const NetGrads& grads);

// Mean bounded-CE gradients w.r.t. mu on one minibatch with deterministic
// weights (= mu) and inverted dropout; rho gradients are zero.
struct ErmBatchResult {
    double mean_loss = 0.0;
    NetGrads grads;
};
ErmBatchResult erm_backward(const GaussianNetParams& params, std::span<const ExampleRef> batch,
                            double dropout_rate, double p_min, rng::Stream& stream);

// Deterministic-weight ERM on the bounded cross-entropy: shuffled minibatches,
// SGD with momentum, dropout on hidden activations. Trains mu only.
GaussianNetParams train_prior_erm(std::span<const ExampleRef> examples, GaussianNetParams init,
                                  double dropout_rate, int epochs, int batch_size,
                                  double learning_rate, double momentum, double p_min,
                                  rng::Stream& stream);

}  // namespace genfl::snn
