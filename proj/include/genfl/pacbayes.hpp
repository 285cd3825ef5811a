#pragma once

// Scalar PAC-Bayes machinery: the Bernoulli KL divergence kl(q||p), its
// partial inverse kl^{-1}(q, c) = sup{ p in [q,1] : kl(q||p) <= c }, the
// diagonal-Gaussian KL kernel, risk-bound evaluators and the two trainable
// objectives. All functions are pure and thread-safe.

#include <cstdint>
#include <span>

namespace genfl::pacbayes {

// KL divergence between Bernoulli(q) and Bernoulli(p), in nats.
// Convention 0*ln(0/x) = 0; returns +inf when p is 0 or 1 and q != p.
// Throws std::domain_error outside [0,1].
double binary_kl(double q, double p);

// d/dp kl(q||p) = (1-q)/(1-p) - q/p, positive for p > q.
double binary_kl_prime(double q, double p);

// Newton iteration for kl^{-1}(q, c) started at q + sqrt(c/2), with the
// >=1 early return and no correctness net. Exposed for tests.
// q = 1 returns 1 (the feasible interval collapses to a point).
double kl_inverse_newton_unchecked(double q, double c, int k_iters);

// Production kl^{-1}: Newton (k_iters steps, iterates clamped to
// (q, 1-1e-15)) followed by a residual check |kl(q||p) - c| < 1e-8; falls
// back to bisection when the check fails (including the early-return-1 case,
// where the residual is infinite).
double kl_inverse_newton(double q, double c, int k_iters = 10);

// Independent root-finder for kl(q||p) = c on [q, 1]; stops when the
// bracket is narrower than tol.
double kl_inverse_bisect(double q, double c, double tol);

// KL(N(mu_q, diag sigma_q^2) || N(mu_p, diag sigma_p^2)) for flat coefficient
// vectors. All sigmas must be strictly positive and inputs finite.
double gaussian_kl(std::span<const double> mu_q, std::span<const double> sigma_q,
                   std::span<const double> mu_p, std::span<const double> sigma_p);

struct BoundBudget {
    double kl_div = 0.0;      // KL(Q||P), nats
    long m = 1;               // bound-accounting sample count
    double delta = 0.05;      // confidence for the main bound
    double delta_prime = 0.01;  // confidence for the MC risk estimate
    long n_mc = 1;            // Monte Carlo sample count
};

// Throws std::domain_error when a budget field is out of range.
void validate(const BoundBudget& b);

// ln(2*sqrt(m)/delta), evaluated as ln2 + ln(m)/2 - ln(delta).
double log_budget_term(long m, double delta);

// kl^{-1}( r_hat || (kl_div + ln(2 sqrt(m)/delta)) / m ). Always >= r_hat.
double bound_mcallester_inverted(double r_hat, const BoundBudget& b);

// r_hat + sqrt( (kl_div + ln(2 sqrt(m)/delta)) / (2m) ); reported unclamped.
double bound_pinsker(double r_hat, const BoundBudget& b);

// ( sqrt(r_hat + t) + sqrt(t) )^2 with t = (kl_div + ln(2 sqrt(m)/delta)) / (2m).
double bound_quadratic(double r_hat, const BoundBudget& b);

enum class ObjectiveTag { FClassic, FQuad };

struct ObjectiveKind {
    ObjectiveTag tag = ObjectiveTag::FClassic;
    double kl_penalty = 1.0;  // in (0,1]; 1 = no penalty

    bool operator==(const ObjectiveKind&) const = default;
};

// Training objectives. The KL term is scaled by kind.kl_penalty; b.m is the
// global count when optimising a shared posterior and the local count when
// personalising.
double objective_f1(double r_hat_batch, const BoundBudget& b, const ObjectiveKind& kind);
double objective_f2(double r_hat_batch, const BoundBudget& b, const ObjectiveKind& kind);

// Objective value plus its partial derivatives, used by the trainer.
struct ObjectiveEval {
    double value = 0.0;
    double d_r_hat = 0.0;
    double d_kl = 0.0;
};
ObjectiveEval objective_eval(double r_hat_batch, const BoundBudget& b, const ObjectiveKind& kind);

}  // namespace genfl::pacbayes
