#pragma once

// Risk certification: Monte-Carlo risk estimation over the posterior, the
// two-level inverted-kl certificate, the federated aggregation of per-client
// estimates, and per-client personalised certificates. MC reductions follow a
// fixed (client, chunk, sample) order, so results are bit-identical across
// execution schedules.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "genfl/data.hpp"
#include "genfl/pacbayes.hpp"
#include "genfl/snn.hpp"

namespace genfl::certify {

enum class LossKind { ZeroOne, BoundedCe };

// Whether every client evaluates the same weight draws W_i (one shared
// sequence) or draws its own.
enum class McStreams { Coupled, PerClient };

struct McEstimate {
    int client_id = -1;  // -1 = global
    long n = 0;
    double mean_risk = 0.0;
    LossKind loss = LossKind::ZeroOne;
};

struct BoundCertificate {
    double risk_bound = 1.0;
    double mc_risk = 0.0;           // averaged MC empirical risk
    double mc_risk_inverted = 0.0;  // kl^{-1}(mc_risk || ln(2/delta')/n)
    double kl_div = 0.0;
    long m = 0;
    long n_mc = 0;
    double delta = 0.0;
    double delta_prime = 0.0;
    LossKind loss = LossKind::ZeroOne;
    int client_id = -1;  // -1 = global certificate
};

// Mean over n_mc posterior draws of the empirical risk on the client's
// bound-accounting split (the posterior split), consuming the given stream.
McEstimate client_mc_sampling(const data::Dataset& ds, const data::ClientShard& shard,
                              const snn::GaussianNetParams& posterior, long n_mc, LossKind loss,
                              rng::Stream& stream, double p_min = 1e-4);

// Mean MC risk of the posterior over an explicit index set, with one weight
// draw per sample index derived from stream_root; chunk-parallel.
double mc_mean_risk(const data::Dataset& ds, std::span<const int> indices,
                    const snn::GaussianNetParams& posterior, long n_mc, LossKind loss,
                    double p_min, std::uint64_t stream_root, int threads);

// Shared-posterior certificate: client estimates weighted by m_k/m, then the
// two nested inversions
//   mc_risk_inverted = kl^{-1}( error      || ln(2/delta')/n )
//   risk_bound       = kl^{-1}( mc_risk_inverted || (KL(Q||P) + ln(2 sqrt(m)/delta))/m ).
// budget.m must equal the shards' total posterior count; budget.kl_div is
// computed here and ignored on input.
BoundCertificate fed_bound(const data::Dataset& ds, const std::vector<data::ClientShard>& shards,
                           const snn::GaussianNetParams& posterior,
                           const snn::GaussianNetParams& prior, pacbayes::BoundBudget budget,
                           LossKind loss, McStreams streams, std::uint64_t seed, int threads,
                           double p_min = 1e-4);

// Per-client certificates with the client's own posterior, MC estimate and
// denominator m_i; no aggregation. budget.m is ignored (replaced by m_i).
std::vector<BoundCertificate> personalised_bounds(
    const data::Dataset& ds, const std::vector<data::ClientShard>& shards,
    const std::vector<std::pair<int, snn::GaussianNetParams>>& posteriors,
    const snn::GaussianNetParams& prior, pacbayes::BoundBudget budget, LossKind loss,
    std::uint64_t seed, int threads, double p_min = 1e-4);

struct Summary {
    double min = 0.0;
    double mean = 0.0;
    double max = 0.0;
};

Summary summarize(std::span<const double> values);  // throws on empty input

struct CertificateSummary {
    Summary risk_bound;
    Summary mc_risk_inverted;
    Summary mc_risk;
    Summary kl_div;
};

CertificateSummary summarize_certificates(std::span<const BoundCertificate> certs);

// Stochastic-network 0-1 test error: mean over n_test_mc posterior draws of
// the 0-1 error on the whole dataset.
double stochastic_test_error(const data::Dataset& test, const snn::GaussianNetParams& posterior,
                             int n_test_mc, std::uint64_t seed, int threads);

}  // namespace genfl::certify
