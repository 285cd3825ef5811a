#include "genfl/pacbayes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "genfl/common.hpp"

namespace genfl::pacbayes {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_unit_interval(double x, const char* name) {
    if (!(x >= 0.0 && x <= 1.0)) {
        throw std::domain_error(std::string(name) + " must lie in [0,1]");
    }
}
}  // namespace

double binary_kl(double q, double p) {
    check_unit_interval(q, "q");
    check_unit_interval(p, "p");
    if (q == p) return 0.0;
    if (p == 0.0 || p == 1.0) return kInf;
    double acc = 0.0;
    if (q > 0.0) acc += q * std::log(q / p);
    if (q < 1.0) acc += (1.0 - q) * std::log((1.0 - q) / (1.0 - p));
    return acc;
}

double binary_kl_prime(double q, double p) {
    return (1.0 - q) / (1.0 - p) - q / p;
}

namespace {

double newton_core(double q, double c, int k_iters) {
    // start from the Pinsker estimate, an upper bound on the root, so the
    // iteration descends monotonically on the convex increasing kl(q||.)
    double p = q + std::sqrt(c / 2.0);
    const double hi = 1.0 - 1e-15;
    const double lo = std::nextafter(q, 1.0);
    for (int i = 0; i < k_iters; ++i) {
        p = std::clamp(p, lo, hi);
        double f = binary_kl(q, p) - c;
        double fp = binary_kl_prime(q, p);
        p -= f / fp;
    }
    return std::clamp(p, q, 1.0);
}

}  // namespace

double kl_inverse_newton_unchecked(double q, double c, int k_iters) {
    check_unit_interval(q, "q");
    if (!(c >= 0.0)) throw std::domain_error("c must be nonnegative");
    if (q == 1.0) return 1.0;  // the feasible interval [q,1] is the single point 1
    if (c == 0.0) return q;
    double b_tilde = q + std::sqrt(c / 2.0);
    if (b_tilde >= 1.0) return 1.0;
    return newton_core(q, c, k_iters);
}

double kl_inverse_newton(double q, double c, int k_iters) {
    double p = kl_inverse_newton_unchecked(q, c, k_iters);
    double residual = std::abs(binary_kl(q, p) - c);
    if (residual < 1e-8) return p;
    double best = kl_inverse_bisect(q, c, 1e-12);
    if (best >= 1.0) return 1.0;  // the supremum really is 1
    // polish the bisection root; kl' can be huge near 1, where the bisection
    // tolerance alone leaves a visible kl-residual
    double best_res = std::abs(binary_kl(q, best) - c);
    const double hi = std::nextafter(1.0, 0.0);  // roots can sit within ulps of 1
    const double lo = std::nextafter(q, 1.0);
    double cur = best;
    for (int i = 0; i < 12 && best_res > 0.0; ++i) {
        cur = std::clamp(cur, lo, hi);
        cur -= (binary_kl(q, cur) - c) / binary_kl_prime(q, cur);
        cur = std::clamp(cur, lo, hi);
        double res = std::abs(binary_kl(q, cur) - c);
        if (res < best_res) {
            best = cur;
            best_res = res;
        }
    }
    return best;
}

double kl_inverse_bisect(double q, double c, double tol) {
    check_unit_interval(q, "q");
    if (!(c >= 0.0)) throw std::domain_error("c must be nonnegative");
    if (!(tol > 0.0)) throw std::domain_error("tol must be positive");
    if (q == 1.0) return 1.0;
    if (c == 0.0) return q;
    // kl(q||.) is continuous and increasing on [q,1), diverging at 1, so the
    // root is bracketed unless c exceeds every finite value below 1.
    if (binary_kl(q, 1.0 - 1e-16) < c) return 1.0;
    double lo = q, hi = 1.0;
    while (hi - lo > tol) {
        double mid = lo + (hi - lo) / 2.0;
        if (mid <= lo || mid >= hi) break;  // ran out of doubles
        if (binary_kl(q, mid) > c) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return lo + (hi - lo) / 2.0;
}

double gaussian_kl(std::span<const double> mu_q, std::span<const double> sigma_q,
                   std::span<const double> mu_p, std::span<const double> sigma_p) {
    const std::size_t n = mu_q.size();
    if (sigma_q.size() != n || mu_p.size() != n || sigma_p.size() != n) {
        throw std::invalid_argument("gaussian_kl: mismatched coefficient counts");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double sq = sigma_q[i], sp = sigma_p[i];
        double dmu = mu_q[i] - mu_p[i];
        if (!(sq > 0.0) || !(sp > 0.0) || !std::isfinite(mu_q[i]) || !std::isfinite(mu_p[i]) ||
            !std::isfinite(sq) || !std::isfinite(sp)) {
            throw NumericError("gaussian_kl: nonpositive sigma or nonfinite parameter");
        }
        acc += std::log(sp / sq) + (sq * sq + dmu * dmu) / (2.0 * sp * sp) - 0.5;
    }
    return acc;
}

void validate(const BoundBudget& b) {
    if (!(b.kl_div >= 0.0) || !std::isfinite(b.kl_div)) throw std::domain_error("kl_div must be finite and >= 0");
    if (b.m < 1) throw std::domain_error("m must be >= 1");
    if (!(b.delta > 0.0 && b.delta < 1.0)) throw std::domain_error("delta must lie in (0,1)");
    if (!(b.delta_prime > 0.0 && b.delta_prime < 1.0)) throw std::domain_error("delta_prime must lie in (0,1)");
    if (!(b.delta + b.delta_prime < 1.0)) throw std::domain_error("delta + delta_prime must be < 1");
    if (b.n_mc < 1) throw std::domain_error("n_mc must be >= 1");
}

double log_budget_term(long m, double delta) {
    return std::log(2.0) + 0.5 * std::log(static_cast<double>(m)) - std::log(delta);
}

double bound_mcallester_inverted(double r_hat, const BoundBudget& b) {
    check_unit_interval(r_hat, "r_hat");
    validate(b);
    double c = (b.kl_div + log_budget_term(b.m, b.delta)) / static_cast<double>(b.m);
    return kl_inverse_newton(r_hat, c);
}

double bound_pinsker(double r_hat, const BoundBudget& b) {
    check_unit_interval(r_hat, "r_hat");
    validate(b);
    return r_hat + std::sqrt((b.kl_div + log_budget_term(b.m, b.delta)) / (2.0 * static_cast<double>(b.m)));
}

double bound_quadratic(double r_hat, const BoundBudget& b) {
    check_unit_interval(r_hat, "r_hat");
    validate(b);
    double t = (b.kl_div + log_budget_term(b.m, b.delta)) / (2.0 * static_cast<double>(b.m));
    double s = std::sqrt(r_hat + t) + std::sqrt(t);
    return s * s;
}

namespace {
void check_kind(const ObjectiveKind& kind) {
    if (!(kind.kl_penalty > 0.0 && kind.kl_penalty <= 1.0)) {
        throw std::domain_error("kl_penalty must lie in (0,1]");
    }
}
}  // namespace

ObjectiveEval objective_eval(double r_hat_batch, const BoundBudget& b, const ObjectiveKind& kind) {
    check_kind(kind);
    validate(b);
    const double m = static_cast<double>(b.m);
    const double t = (kind.kl_penalty * b.kl_div + log_budget_term(b.m, b.delta)) / (2.0 * m);
    ObjectiveEval out;
    if (kind.tag == ObjectiveTag::FClassic) {
        double root = std::sqrt(t);
        out.value = r_hat_batch + root;
        out.d_r_hat = 1.0;
        out.d_kl = kind.kl_penalty / (4.0 * m * root);
    } else {
        double a = std::sqrt(r_hat_batch + t);
        double root = std::sqrt(t);
        double s = a + root;
        out.value = s * s;
        out.d_r_hat = 1.0 + root / a;
        out.d_kl = s * (1.0 / a + 1.0 / root) * kind.kl_penalty / (2.0 * m);
    }
    return out;
}

double objective_f1(double r_hat_batch, const BoundBudget& b, const ObjectiveKind& kind) {
    if (kind.tag != ObjectiveTag::FClassic) throw std::domain_error("objective_f1 expects the FClassic tag");
    return objective_eval(r_hat_batch, b, kind).value;
}

double objective_f2(double r_hat_batch, const BoundBudget& b, const ObjectiveKind& kind) {
    if (kind.tag != ObjectiveTag::FQuad) throw std::domain_error("objective_f2 expects the FQuad tag");
    return objective_eval(r_hat_batch, b, kind).value;
}

}  // namespace genfl::pacbayes
