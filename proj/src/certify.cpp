#include "genfl/certify.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "genfl/common.hpp"

namespace genfl::certify {

namespace {

constexpr long kMcChunk = 256;  // fixed chunk size keeps reductions schedule-independent

double point_loss(std::span<const double> logits, int label, LossKind loss, double p_min) {
    if (loss == LossKind::ZeroOne) {
        return static_cast<double>(snn::zero_one_loss(logits, label));
    }
    const int n = static_cast<int>(logits.size());
    double zmax = logits[0];
    for (int j = 1; j < n; ++j) zmax = std::max(zmax, logits[j]);
    double norm = 0.0;
    for (int j = 0; j < n; ++j) norm += std::exp(logits[j] - zmax);
    double prob = std::exp(logits[label] - zmax) / norm;
    prob = std::max(prob, p_min);
    return std::log(prob) / std::log(p_min);
}

// empirical risk of one weight draw over an index set
double empirical_risk(const data::Dataset& ds, std::span<const int> indices,
                      const snn::SampledWeights& w, LossKind loss, double p_min) {
    double acc = 0.0;
    for (int idx : indices) {
        std::vector<double> logits =
            snn::forward(w, {ds.row(idx), static_cast<std::size_t>(ds.dim)});
        acc += point_loss(logits, ds.labels[idx], loss, p_min);
    }
    return acc / static_cast<double>(indices.size());
}

}  // namespace

McEstimate client_mc_sampling(const data::Dataset& ds, const data::ClientShard& shard,
                              const snn::GaussianNetParams& posterior, long n_mc, LossKind loss,
                              rng::Stream& stream, double p_min) {
    if (n_mc < 1) throw std::domain_error("client_mc_sampling: n_mc must be >= 1");
    if (shard.split.posterior.empty()) {
        throw DataError("client_mc_sampling: empty evaluation set for client " +
                        std::to_string(shard.client_id));
    }
    double acc = 0.0;
    for (long i = 0; i < n_mc; ++i) {
        snn::SampledWeights w = snn::sample_weights(posterior, stream);
        acc += empirical_risk(ds, shard.split.posterior, w, loss, p_min);
    }
    McEstimate est;
    est.client_id = shard.client_id;
    est.n = n_mc;
    est.mean_risk = acc / static_cast<double>(n_mc);
    est.loss = loss;
    return est;
}

double mc_mean_risk(const data::Dataset& ds, std::span<const int> indices,
                    const snn::GaussianNetParams& posterior, long n_mc, LossKind loss,
                    double p_min, std::uint64_t stream_root, int threads) {
    if (n_mc < 1) throw std::domain_error("mc_mean_risk: n_mc must be >= 1");
    if (indices.empty()) throw DataError("mc_mean_risk: empty evaluation set");
    const long n_chunks = (n_mc + kMcChunk - 1) / kMcChunk;
    std::vector<double> chunk_sums(n_chunks, 0.0);
    parallel_for(static_cast<int>(n_chunks), threads, [&](int c) {
        const long lo = static_cast<long>(c) * kMcChunk;
        const long hi = std::min(n_mc, lo + kMcChunk);
        double acc = 0.0;
        for (long i = lo; i < hi; ++i) {
            snn::SampledWeights w =
                snn::sample_weights(posterior, rng::derive(stream_root, static_cast<std::uint64_t>(i)));
            acc += empirical_risk(ds, indices, w, loss, p_min);
        }
        chunk_sums[c] = acc;
    });
    double total = 0.0;
    for (double s : chunk_sums) total += s;
    return total / static_cast<double>(n_mc);
}

namespace {

BoundCertificate finish_certificate(double error, double kl_div, const pacbayes::BoundBudget& b,
                                    LossKind loss, int client_id) {
    BoundCertificate cert;
    cert.mc_risk = error;
    cert.kl_div = kl_div;
    cert.m = b.m;
    cert.n_mc = b.n_mc;
    cert.delta = b.delta;
    cert.delta_prime = b.delta_prime;
    cert.loss = loss;
    cert.client_id = client_id;
    const double mc_budget = std::log(2.0 / b.delta_prime) / static_cast<double>(b.n_mc);
    cert.mc_risk_inverted = pacbayes::kl_inverse_newton(error, mc_budget);
    pacbayes::BoundBudget main = b;
    main.kl_div = kl_div;
    cert.risk_bound = pacbayes::bound_mcallester_inverted(cert.mc_risk_inverted, main);
    return cert;
}

}  // namespace

BoundCertificate fed_bound(const data::Dataset& ds, const std::vector<data::ClientShard>& shards,
                           const snn::GaussianNetParams& posterior,
                           const snn::GaussianNetParams& prior, pacbayes::BoundBudget budget,
                           LossKind loss, McStreams streams, std::uint64_t seed, int threads,
                           double p_min) {
    if (shards.empty()) throw std::invalid_argument("fed_bound: no shards");
    long m_total = 0;
    for (const auto& s : shards) {
        if (s.m_i != static_cast<int>(s.split.posterior.size())) {
            throw std::invalid_argument("fed_bound: shard m_i inconsistent with its split");
        }
        m_total += s.m_i;
    }
    if (budget.m != m_total) {
        throw std::invalid_argument("fed_bound: budget.m (" + std::to_string(budget.m) +
                                    ") does not match the shards' total (" +
                                    std::to_string(m_total) + ")");
    }
    const double kl_div = snn::gaussian_kl(posterior, prior);
    const int num_clients = static_cast<int>(shards.size());
    const long n_mc = budget.n_mc;
    std::vector<double> error_k(num_clients, 0.0);

    if (streams == McStreams::Coupled) {
        // one shared weight sequence: sample W_i once, evaluate on every client
        const long n_chunks = (n_mc + kMcChunk - 1) / kMcChunk;
        std::vector<double> chunk_sums(static_cast<std::size_t>(n_chunks) * num_clients, 0.0);
        const std::uint64_t root = rng::derive(seed, rng::kCertify);
        parallel_for(static_cast<int>(n_chunks), threads, [&](int c) {
            const long lo = static_cast<long>(c) * kMcChunk;
            const long hi = std::min(n_mc, lo + kMcChunk);
            double* sums = chunk_sums.data() + static_cast<std::size_t>(c) * num_clients;
            for (long i = lo; i < hi; ++i) {
                snn::SampledWeights w =
                    snn::sample_weights(posterior, rng::derive(root, static_cast<std::uint64_t>(i)));
                for (int k = 0; k < num_clients; ++k) {
                    sums[k] += empirical_risk(ds, shards[k].split.posterior, w, loss, p_min);
                }
            }
        });
        for (int k = 0; k < num_clients; ++k) {
            double acc = 0.0;
            for (long c = 0; c < n_chunks; ++c) {
                acc += chunk_sums[static_cast<std::size_t>(c) * num_clients + k];
            }
            error_k[k] = acc / static_cast<double>(n_mc);
        }
    } else {
        parallel_for(num_clients, threads, [&](int k) {
            rng::Stream stream(
                rng::derive(seed, rng::kCertify, static_cast<std::uint64_t>(shards[k].client_id)));
            error_k[k] =
                client_mc_sampling(ds, shards[k], posterior, n_mc, loss, stream, p_min).mean_risk;
        });
    }

    double error = 0.0;
    for (int k = 0; k < num_clients; ++k) {
        error += static_cast<double>(shards[k].m_i) / static_cast<double>(m_total) * error_k[k];
    }
    return finish_certificate(error, kl_div, budget, loss, -1);
}

std::vector<BoundCertificate> personalised_bounds(
    const data::Dataset& ds, const std::vector<data::ClientShard>& shards,
    const std::vector<std::pair<int, snn::GaussianNetParams>>& posteriors,
    const snn::GaussianNetParams& prior, pacbayes::BoundBudget budget, LossKind loss,
    std::uint64_t seed, int threads, double p_min) {
    if (shards.size() != posteriors.size()) {
        throw std::invalid_argument("personalised_bounds: shard/posterior count mismatch");
    }
    const int num_clients = static_cast<int>(shards.size());
    std::vector<BoundCertificate> certs(num_clients);
    parallel_for(num_clients, threads, [&](int k) {
        const auto& [client_id, posterior] = posteriors[k];
        if (client_id != shards[k].client_id) {
            throw std::invalid_argument("personalised_bounds: client order mismatch");
        }
        rng::Stream stream(rng::derive(seed, rng::kCertify, static_cast<std::uint64_t>(client_id)));
        McEstimate est = client_mc_sampling(ds, shards[k], posterior, budget.n_mc, loss, stream,
                                            p_min);
        pacbayes::BoundBudget local = budget;
        local.m = shards[k].m_i;
        const double kl_div = snn::gaussian_kl(posterior, prior);
        certs[k] = finish_certificate(est.mean_risk, kl_div, local, loss, client_id);
    });
    return certs;
}

Summary summarize(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("summarize: empty list");
    Summary s;
    s.min = values[0];
    s.max = values[0];
    double acc = 0.0;
    for (double v : values) {
        s.min = std::min(s.min, v);
        s.max = std::max(s.max, v);
        acc += v;
    }
    s.mean = acc / static_cast<double>(values.size());
    return s;
}

CertificateSummary summarize_certificates(std::span<const BoundCertificate> certs) {
    if (certs.empty()) throw std::invalid_argument("summarize_certificates: empty list");
    std::vector<double> bound, inv, risk, kl;
    for (const auto& c : certs) {
        bound.push_back(c.risk_bound);
        inv.push_back(c.mc_risk_inverted);
        risk.push_back(c.mc_risk);
        kl.push_back(c.kl_div);
    }
    return {summarize(bound), summarize(inv), summarize(risk), summarize(kl)};
}

double stochastic_test_error(const data::Dataset& test, const snn::GaussianNetParams& posterior,
                             int n_test_mc, std::uint64_t seed, int threads) {
    std::vector<int> all(test.size());
    for (int i = 0; i < test.size(); ++i) all[i] = i;
    return mc_mean_risk(test, all, posterior, n_test_mc, LossKind::ZeroOne, 1e-4,
                        rng::derive(seed, rng::kTestEval), threads);
}

}  // namespace genfl::certify
