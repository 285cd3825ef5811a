#pragma once

// Federated round protocol: server state, client sampling, local updates and
// weighted aggregation, plus the two-phase personalised pipeline. Client
// updates within a round may run in parallel; every client owns a parameter
// copy and an RNG stream derived from (seed, context, round, client), so the
// result is independent of the execution schedule.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "genfl/data.hpp"
#include "genfl/pacbayes.hpp"
#include "genfl/snn.hpp"

namespace genfl::fed {

using snn::GaussianNetParams;

enum class Mode { FlSob, Pfl };
enum class PriorMode { Random, Learnt };

struct FLConfig {
    int num_clients = 100;     // K
    double participation = 0.1;  // C, fraction of clients sampled per round
    int local_epochs = 5;      // E
    int batch_size = 25;       // B
    double learning_rate = 5e-3;
    double momentum = 0.95;
    int rounds = 10;           // T (posterior phase)
    pacbayes::ObjectiveKind objective;
    double sigma_prior = 2.5e-2;
    double p_min = 1e-4;
    double delta = 0.05;
    Mode mode = Mode::FlSob;
    PriorMode prior_mode = PriorMode::Learnt;
    int prior_rounds = 100;
    int prior_epochs = 5;
    double prior_momentum = 0.99;
    double prior_dropout = 0.2;
    std::uint64_t seed = 1;
    int threads = 0;  // 0 = hardware concurrency

    bool operator==(const FLConfig&) const = default;
};

// max(floor(C*K), 1) with a tolerance for the floating-point product.
int sampled_clients_per_round(double participation, int num_clients);

struct RoundLog {
    int round = 0;
    std::vector<int> client_ids;        // ascending
    std::vector<double> objectives;     // last minibatch objective per client
    std::uint64_t checksum = 0;         // aggregated-parameter checksum
    double duration_ms = 0.0;
};

struct GlobalModel {
    GaussianNetParams params;
    int round = 0;
};

std::uint64_t params_checksum(const GaussianNetParams& params);

// One local PAC-Bayes update: E epochs of minibatch SGD with momentum on the
// chosen objective, weights re-sampled once per minibatch, prior fixed.
// m_denom is the global count in the shared-objective setting and the local
// m_i when personalising. Momentum starts from zero within each call.
GaussianNetParams client_update(const data::Dataset& ds, const data::ClientShard& client,
                                GaussianNetParams w, long m_denom, const FLConfig& cfg,
                                const GaussianNetParams& prior, rng::Stream& stream,
                                double* last_objective = nullptr);

struct AggregateEntry {
    int client_id = 0;
    double weight = 0.0;  // m_k
    const GaussianNetParams* params = nullptr;
};

// Entrywise weighted mean of mu and rho, weights normalised over the entries'
// total; summation in ascending client_id order, so the result does not
// depend on input order.
GaussianNetParams aggregate(std::vector<AggregateEntry> entries);

struct GenflResult {
    GlobalModel model;
    std::vector<RoundLog> logs;
};

// T rounds of sample -> local update -> aggregate, starting from the prior.
GenflResult run_genfl(const FLConfig& cfg, const data::Dataset& ds,
                      const std::vector<data::ClientShard>& shards,
                      const GaussianNetParams& prior);

// Federated ERM over the prior splits (deterministic weights, dropout);
// trains mu only, sigma stays at sigma_prior.
GenflResult run_fed_prior_erm(const FLConfig& cfg, const data::Dataset& ds,
                              const std::vector<data::ClientShard>& shards,
                              GaussianNetParams init);

struct PflResult {
    GaussianNetParams shared_prior;
    std::vector<std::pair<int, GaussianNetParams>> posteriors;  // by client_id
    std::vector<RoundLog> prior_logs;
};

// Phase 1 builds the shared prior (random init, or federated ERM over the
// prior splits); phase 2 personalises it per client with denominator m_i.
PflResult run_pfl(const FLConfig& cfg, const data::Dataset& ds,
                  const std::vector<data::ClientShard>& shards, const snn::Arch& arch);

// Flat binary checkpoint: 8-byte magic, version byte, little-endian layout
// and 64-bit floats.
void save_checkpoint(const std::string& path, const GaussianNetParams& params, int round);
GlobalModel load_checkpoint(const std::string& path);

// One structured-text record per round, e.g.
//   round=3 clients=0,4 objectives=0.71,0.69 checksum=00f3... duration_ms=8.1
void append_round_log(std::ostream& out, const RoundLog& log);

}  // namespace genfl::fed
