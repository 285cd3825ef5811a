#include "genfl/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include "genfl/common.hpp"

namespace genfl::fed {

namespace {

bool all_finite(const GaussianNetParams& params) {
    for (const auto& l : params.layers) {
        for (const auto* arr : {&l.mu_w, &l.mu_b, &l.rho_w, &l.rho_b}) {
            for (double v : *arr) {
                if (!std::isfinite(v)) return false;
            }
        }
    }
    return true;
}

void serialize_coeffs(const GaussianNetParams& params, std::vector<unsigned char>& out) {
    for (const auto& l : params.layers) {
        for (const auto* arr : {&l.mu_w, &l.mu_b, &l.rho_w, &l.rho_b}) {
            for (double v : *arr) put_f64(out, v);
        }
    }
}

void shuffle_ints(std::vector<int>& v, rng::Stream& stream) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
        int j = static_cast<int>(stream.next_below(static_cast<std::uint64_t>(i) + 1));
        std::swap(v[i], v[j]);
    }
}

std::vector<int> sample_without_replacement(int population, int count, rng::Stream& stream) {
    std::vector<int> ids(population);
    std::iota(ids.begin(), ids.end(), 0);
    // partial Fisher-Yates: the first `count` slots end up uniform
    for (int i = 0; i < count; ++i) {
        int j = i + static_cast<int>(stream.next_below(static_cast<std::uint64_t>(population - i)));
        std::swap(ids[i], ids[j]);
    }
    ids.resize(count);
    std::sort(ids.begin(), ids.end());
    return ids;
}

long total_posterior_size(const std::vector<data::ClientShard>& shards) {
    long m = 0;
    for (const auto& s : shards) m += s.m_i;
    return m;
}

}  // namespace

int sampled_clients_per_round(double participation, int num_clients) {
    int n = static_cast<int>(std::floor(participation * num_clients + 1e-9));
    return std::max(n, 1);
}

std::uint64_t params_checksum(const GaussianNetParams& params) {
    std::vector<unsigned char> bytes;
    bytes.reserve(params.num_coeffs() * 8);
    serialize_coeffs(params, bytes);
    return fnv1a(bytes.data(), bytes.size());
}

GaussianNetParams client_update(const data::Dataset& ds, const data::ClientShard& client,
                                GaussianNetParams w, long m_denom, const FLConfig& cfg,
                                const GaussianNetParams& prior, rng::Stream& stream,
                                double* last_objective) {
    if (client.split.posterior.empty()) {
        throw DataError("client_update: client " + std::to_string(client.client_id) +
                        " has an empty posterior split");
    }
    if (cfg.local_epochs <= 0) return w;
    snn::OptimizerState opt = snn::make_optimizer(w, cfg.learning_rate, cfg.momentum);
    std::vector<int> order = client.split.posterior;
    const int n = static_cast<int>(order.size());
    std::vector<snn::ExampleRef> batch;
    for (int e = 0; e < cfg.local_epochs; ++e) {
        shuffle_ints(order, stream);
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int stop = std::min(n, start + cfg.batch_size);
            batch.clear();
            for (int i = start; i < stop; ++i) {
                batch.push_back({ds.row(order[i]), ds.labels[order[i]]});
            }
            snn::SampledWeights sampled = snn::sample_weights(w, stream);
            snn::ObjectiveBatchResult res = snn::objective_backward(
                w, prior, sampled, batch, cfg.objective, m_denom, cfg.delta, cfg.p_min);
            snn::sgd_momentum_step(opt, w, res.grads);
            if (last_objective != nullptr) *last_objective = res.objective;
        }
    }
    return w;
}

GaussianNetParams aggregate(std::vector<AggregateEntry> entries) {
    if (entries.empty()) throw std::invalid_argument("aggregate: empty update list");
    std::sort(entries.begin(), entries.end(),
              [](const AggregateEntry& a, const AggregateEntry& b) {
                  return a.client_id < b.client_id;
              });
    double total = 0.0;
    for (const auto& e : entries) total += e.weight;
    if (!(total > 0.0)) throw std::invalid_argument("aggregate: total weight must be positive");

    const GaussianNetParams& first = *entries.front().params;
    GaussianNetParams out = snn::make_zero_params(first.arch);
    for (const auto& e : entries) {
        const GaussianNetParams& p = *e.params;
        if (p.arch != first.arch) throw std::invalid_argument("aggregate: shape mismatch");
        const double w = e.weight / total;
        for (std::size_t l = 0; l < out.layers.size(); ++l) {
            auto axpy = [w](const std::vector<double>& src, std::vector<double>& dst) {
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += w * src[i];
            };
            axpy(p.layers[l].mu_w, out.layers[l].mu_w);
            axpy(p.layers[l].mu_b, out.layers[l].mu_b);
            axpy(p.layers[l].rho_w, out.layers[l].rho_w);
            axpy(p.layers[l].rho_b, out.layers[l].rho_b);
        }
    }
    return out;
}

GenflResult run_genfl(const FLConfig& cfg, const data::Dataset& ds,
                      const std::vector<data::ClientShard>& shards,
                      const GaussianNetParams& prior) {
    if (static_cast<int>(shards.size()) != cfg.num_clients) {
        throw std::invalid_argument("run_genfl: shard count does not match num_clients");
    }
    const long m_global = total_posterior_size(shards);
    const int per_round = sampled_clients_per_round(cfg.participation, cfg.num_clients);

    GenflResult result;
    result.model.params = prior;
    for (int t = 1; t <= cfg.rounds; ++t) {
        const auto t0 = std::chrono::steady_clock::now();
        rng::Stream sampling(rng::derive(cfg.seed, rng::kClientSampling, t));
        std::vector<int> selected = sample_without_replacement(cfg.num_clients, per_round, sampling);

        std::vector<GaussianNetParams> updates(selected.size());
        std::vector<double> objectives(selected.size(), 0.0);
        const GaussianNetParams& w_t = result.model.params;
        parallel_for(static_cast<int>(selected.size()), cfg.threads, [&](int i) {
            const int k = selected[i];
            rng::Stream stream(rng::derive(cfg.seed, rng::kClientUpdate, t, k));
            updates[i] =
                client_update(ds, shards[k], w_t, m_global, cfg, prior, stream, &objectives[i]);
        });

        std::vector<AggregateEntry> entries;
        entries.reserve(selected.size());
        for (std::size_t i = 0; i < selected.size(); ++i) {
            entries.push_back({selected[i], static_cast<double>(shards[selected[i]].m_i),
                               &updates[i]});
        }
        result.model.params = aggregate(std::move(entries));
        result.model.round = t;
        if (!all_finite(result.model.params)) {
            throw NumericError("run_genfl: nonfinite parameters after round " + std::to_string(t));
        }

        RoundLog log;
        log.round = t;
        log.client_ids = selected;
        log.objectives = objectives;
        log.checksum = params_checksum(result.model.params);
        log.duration_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
        result.logs.push_back(std::move(log));
    }
    return result;
}

namespace {

GaussianNetParams erm_client_update(const data::Dataset& ds, const data::ClientShard& client,
                                    GaussianNetParams w, const FLConfig& cfg, rng::Stream& stream,
                                    double* last_loss) {
    if (client.split.prior.empty()) {
        throw DataError("prior training: client " + std::to_string(client.client_id) +
                        " has an empty prior split");
    }
    snn::OptimizerState opt = snn::make_optimizer(w, cfg.learning_rate, cfg.prior_momentum);
    std::vector<int> order = client.split.prior;
    const int n = static_cast<int>(order.size());
    std::vector<snn::ExampleRef> batch;
    for (int e = 0; e < cfg.prior_epochs; ++e) {
        shuffle_ints(order, stream);
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int stop = std::min(n, start + cfg.batch_size);
            batch.clear();
            for (int i = start; i < stop; ++i) {
                batch.push_back({ds.row(order[i]), ds.labels[order[i]]});
            }
            snn::ErmBatchResult res =
                snn::erm_backward(w, batch, cfg.prior_dropout, cfg.p_min, stream);
            snn::sgd_momentum_step(opt, w, res.grads);
            if (last_loss != nullptr) *last_loss = res.mean_loss;
        }
    }
    return w;
}

}  // namespace

GenflResult run_fed_prior_erm(const FLConfig& cfg, const data::Dataset& ds,
                              const std::vector<data::ClientShard>& shards,
                              GaussianNetParams init) {
    if (static_cast<int>(shards.size()) != cfg.num_clients) {
        throw std::invalid_argument("run_fed_prior_erm: shard count does not match num_clients");
    }
    const int per_round = sampled_clients_per_round(cfg.participation, cfg.num_clients);

    GenflResult result;
    result.model.params = std::move(init);
    for (int t = 1; t <= cfg.prior_rounds; ++t) {
        const auto t0 = std::chrono::steady_clock::now();
        rng::Stream sampling(rng::derive(cfg.seed, rng::kPriorSampling, t));
        std::vector<int> selected = sample_without_replacement(cfg.num_clients, per_round, sampling);

        std::vector<GaussianNetParams> updates(selected.size());
        std::vector<double> losses(selected.size(), 0.0);
        const GaussianNetParams& w_t = result.model.params;
        parallel_for(static_cast<int>(selected.size()), cfg.threads, [&](int i) {
            const int k = selected[i];
            rng::Stream stream(rng::derive(cfg.seed, rng::kPriorUpdate, t, k));
            updates[i] = erm_client_update(ds, shards[k], w_t, cfg, stream, &losses[i]);
        });

        std::vector<AggregateEntry> entries;
        entries.reserve(selected.size());
        for (std::size_t i = 0; i < selected.size(); ++i) {
            const auto& shard = shards[selected[i]];
            entries.push_back({selected[i], static_cast<double>(shard.split.prior.size()),
                               &updates[i]});
        }
        result.model.params = aggregate(std::move(entries));
        result.model.round = t;
        if (!all_finite(result.model.params)) {
            throw NumericError("run_fed_prior_erm: nonfinite parameters after round " +
                               std::to_string(t));
        }

        RoundLog log;
        log.round = t;
        log.client_ids = selected;
        log.objectives = losses;
        log.checksum = params_checksum(result.model.params);
        log.duration_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
        result.logs.push_back(std::move(log));
    }
    return result;
}

PflResult run_pfl(const FLConfig& cfg, const data::Dataset& ds,
                  const std::vector<data::ClientShard>& shards, const snn::Arch& arch) {
    if (cfg.mode != Mode::Pfl) throw std::invalid_argument("run_pfl: config mode must be Pfl");

    GaussianNetParams init =
        snn::init_prior_random(arch, cfg.sigma_prior, rng::derive(cfg.seed, rng::kPriorInit));

    PflResult result;
    if (cfg.prior_mode == PriorMode::Learnt) {
        GenflResult prior_run = run_fed_prior_erm(cfg, ds, shards, std::move(init));
        result.shared_prior = std::move(prior_run.model.params);
        result.prior_logs = std::move(prior_run.logs);
    } else {
        result.shared_prior = std::move(init);
    }

    result.posteriors.resize(shards.size());
    parallel_for(static_cast<int>(shards.size()), cfg.threads, [&](int i) {
        const auto& shard = shards[i];
        rng::Stream stream(rng::derive(cfg.seed, rng::kPersonalise, shard.client_id));
        GaussianNetParams personalised = client_update(ds, shard, result.shared_prior, shard.m_i,
                                                       cfg, result.shared_prior, stream);
        result.posteriors[i] = {shard.client_id, std::move(personalised)};
    });
    for (const auto& [id, params] : result.posteriors) {
        if (!all_finite(params)) {
            throw NumericError("run_pfl: nonfinite personalised parameters for client " +
                               std::to_string(id));
        }
    }
    return result;
}

namespace {
constexpr unsigned char kCheckpointMagic[8] = {'G', 'F', 'L', 'C', 'K', 'P', 'T', '1'};
constexpr unsigned char kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const std::string& path, const GaussianNetParams& params, int round) {
    std::vector<unsigned char> bytes;
    bytes.insert(bytes.end(), kCheckpointMagic, kCheckpointMagic + 8);
    bytes.push_back(kCheckpointVersion);
    put_u32(bytes, static_cast<std::uint32_t>(params.arch.input_dim));
    put_u32(bytes, static_cast<std::uint32_t>(params.arch.hidden_dims.size()));
    for (int h : params.arch.hidden_dims) put_u32(bytes, static_cast<std::uint32_t>(h));
    put_u32(bytes, static_cast<std::uint32_t>(params.arch.output_dim));
    put_u64(bytes, static_cast<std::uint64_t>(round));
    serialize_coeffs(params, bytes);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("checkpoint write failed for " + path);
}

GlobalModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
        if (pos + n > bytes.size()) throw DataError("truncated checkpoint " + path);
    };
    need(9);
    if (!std::equal(kCheckpointMagic, kCheckpointMagic + 8, bytes.data())) {
        throw DataError("bad checkpoint magic in " + path);
    }
    if (bytes[8] != kCheckpointVersion) throw DataError("unsupported checkpoint version in " + path);
    pos = 9;

    auto read_u32 = [&]() {
        need(4);
        std::uint32_t v = get_u32(bytes.data() + pos);
        pos += 4;
        return v;
    };
    snn::Arch arch;
    arch.input_dim = static_cast<int>(read_u32());
    const std::uint32_t n_hidden = read_u32();
    for (std::uint32_t i = 0; i < n_hidden; ++i) arch.hidden_dims.push_back(static_cast<int>(read_u32()));
    arch.output_dim = static_cast<int>(read_u32());
    need(8);
    const int round = static_cast<int>(get_u64(bytes.data() + pos));
    pos += 8;

    GlobalModel model;
    model.round = round;
    model.params = snn::make_zero_params(arch);
    for (auto& l : model.params.layers) {
        for (auto* arr : {&l.mu_w, &l.mu_b, &l.rho_w, &l.rho_b}) {
            for (double& v : *arr) {
                need(8);
                v = get_f64(bytes.data() + pos);
                pos += 8;
            }
        }
    }
    if (pos != bytes.size()) throw DataError("trailing bytes in checkpoint " + path);
    return model;
}

void append_round_log(std::ostream& out, const RoundLog& log) {
    char buf[64];
    out << "round=" << log.round << " clients=";
    for (std::size_t i = 0; i < log.client_ids.size(); ++i) {
        out << (i ? "," : "") << log.client_ids[i];
    }
    out << " objectives=";
    for (std::size_t i = 0; i < log.objectives.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", log.objectives[i]);
        out << (i ? "," : "") << buf;
    }
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(log.checksum));
    out << " checksum=" << buf;
    std::snprintf(buf, sizeof(buf), "%.3f", log.duration_ms);
    out << " duration_ms=" << buf << "\n";
}

}  // namespace genfl::fed
