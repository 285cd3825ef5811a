// Acceptance suite: one gated check per criterion, one pass/fail line each.
// Exit code is the number of failed gated criteria. Pass criterion numbers as
// arguments to run a subset, e.g. ./acceptance 1 2 3.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "genfl/certify.hpp"
#include "genfl/common.hpp"
#include "genfl/experiment.hpp"
#include "genfl/federation.hpp"

using namespace genfl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    bool skipped = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string acceptance_dir() {
    return (fs::temp_directory_path() / "genfl_acceptance").string();
}

// ---------------------------------------------------------------- criterion 1

Outcome criterion_kl_inverse_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double q = i * 0.01;
        for (double c : {0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0}) {
            double newton = pacbayes::kl_inverse_newton(q, c, 10);
            double bisect = pacbayes::kl_inverse_bisect(q, c, 1e-12);
            worst = std::max(worst, std::abs(newton - bisect));
        }
    }
    const double dt = seconds_since(t0);
    Outcome out;
    out.pass = worst < 1e-9 && dt < 1.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "max |newton - bisect| = %.3g (tol 1e-9), %.3f s (limit 1 s)",
                  worst, dt);
    out.detail = buf;
    return out;
}

// ---------------------------------------------------------------- criterion 2

double objective_value_fixed_noise(const snn::GaussianNetParams& post,
                                   const snn::GaussianNetParams& prior,
                                   const std::vector<snn::LayerCoeffs>& noise,
                                   const std::vector<snn::ExampleRef>& batch,
                                   const pacbayes::ObjectiveKind& kind, long m, double delta,
                                   double p_min) {
    snn::SampledWeights w = snn::realize_weights(post, noise);
    double loss_sum = 0.0;
    for (const auto& ex : batch) {
        std::vector<double> logits = snn::forward(w, {ex.x, 2});
        loss_sum += snn::bounded_cross_entropy(logits, ex.label, p_min).loss;
    }
    pacbayes::BoundBudget b;
    b.kl_div = snn::gaussian_kl(post, prior);
    b.m = m;
    b.delta = delta;
    return pacbayes::objective_eval(loss_sum / batch.size(), b, kind).value;
}

Outcome criterion_gradient_correctness() {
    const auto t0 = std::chrono::steady_clock::now();
    const snn::Arch arch{2, {8}, 3};
    rng::Stream gen(4242);
    double worst = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        snn::GaussianNetParams post = snn::make_zero_params(arch);
        snn::GaussianNetParams prior = snn::make_zero_params(arch);
        for (auto* params : {&post, &prior}) {
            for (auto& l : params->layers) {
                for (double& v : l.mu_w) v = 0.6 * gen.next_normal();
                for (double& v : l.mu_b) v = 0.6 * gen.next_normal();
                for (double& v : l.rho_w) v = -3.0 + 3.5 * gen.next_double();
                for (double& v : l.rho_b) v = -3.0 + 3.5 * gen.next_double();
            }
        }
        snn::SampledWeights sampled = snn::sample_weights(post, gen);
        std::vector<std::vector<float>> xs;
        std::vector<snn::ExampleRef> batch;
        for (int i = 0; i < 4; ++i) {
            xs.push_back({static_cast<float>(gen.next_double()),
                          static_cast<float>(gen.next_double())});
            batch.push_back({xs.back().data(), i % 3});
        }
        const pacbayes::ObjectiveKind kind{rep % 2 == 0 ? pacbayes::ObjectiveTag::FClassic
                                                        : pacbayes::ObjectiveTag::FQuad,
                                           rep % 4 == 0 ? 0.1 : 1.0};
        const long m = 500;
        snn::ObjectiveBatchResult res =
            snn::objective_backward(post, prior, sampled, batch, kind, m, 0.05, 1e-4);

        snn::GaussianNetParams probe = post;
        for (std::size_t l = 0; l < post.layers.size(); ++l) {
            auto check = [&](std::vector<double> snn::LayerParams::* field,
                             const std::vector<double>& analytic) {
                auto& arr = probe.layers[l].*field;
                for (std::size_t i = 0; i < arr.size(); ++i) {
                    const double saved = arr[i];
                    const double h = 1e-6 * (1.0 + std::abs(saved));
                    arr[i] = saved + h;
                    double up = objective_value_fixed_noise(probe, prior, sampled.noise, batch,
                                                            kind, m, 0.05, 1e-4);
                    arr[i] = saved - h;
                    double down = objective_value_fixed_noise(probe, prior, sampled.noise, batch,
                                                              kind, m, 0.05, 1e-4);
                    arr[i] = saved;
                    const double fd = (up - down) / (2.0 * h);
                    const double rel =
                        std::abs(analytic[i] - fd) /
                        std::max({1e-4, std::abs(analytic[i]), std::abs(fd)});
                    worst = std::max(worst, rel);
                }
            };
            check(&snn::LayerParams::mu_w, res.grads[l].mu_w);
            check(&snn::LayerParams::mu_b, res.grads[l].mu_b);
            check(&snn::LayerParams::rho_w, res.grads[l].rho_w);
            check(&snn::LayerParams::rho_b, res.grads[l].rho_b);
        }
    }
    const double dt = seconds_since(t0);
    Outcome out;
    out.pass = worst < 1e-4 && dt < 10.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "max relative error = %.3g over 50 cases (tol 1e-4), %.1f s (limit 10 s)", worst,
                  dt);
    out.detail = buf;
    return out;
}

// ---------------------------------------------------------------- criterion 3

Outcome criterion_gaussian_kl_mc() {
    const auto t0 = std::chrono::steady_clock::now();
    rng::Stream gen(31337);
    int ok = 0;
    double worst_z = 0.0;
    for (int pair = 0; pair < 20; ++pair) {
        const int dim = 20;
        std::vector<double> mu_q(dim), sigma_q(dim), mu_p(dim), sigma_p(dim);
        for (int i = 0; i < dim; ++i) {
            mu_q[i] = 0.5 * gen.next_normal();
            mu_p[i] = 0.5 * gen.next_normal();
            sigma_q[i] = 0.3 + 0.6 * gen.next_double();
            sigma_p[i] = 0.3 + 0.6 * gen.next_double();
        }
        const double closed = pacbayes::gaussian_kl(mu_q, sigma_q, mu_p, sigma_p);
        const long n = 1000000;
        double sum = 0.0, sum_sq = 0.0;
        for (long s = 0; s < n; ++s) {
            double log_ratio = 0.0;
            for (int i = 0; i < dim; ++i) {
                double w = mu_q[i] + sigma_q[i] * gen.next_normal();
                double zq = (w - mu_q[i]) / sigma_q[i];
                double zp = (w - mu_p[i]) / sigma_p[i];
                log_ratio += std::log(sigma_p[i] / sigma_q[i]) + 0.5 * (zp * zp - zq * zq);
            }
            sum += log_ratio;
            sum_sq += log_ratio * log_ratio;
        }
        const double mean = sum / n;
        const double se = std::sqrt((sum_sq / n - mean * mean) / n);
        const double z = std::abs(mean - closed) / se;
        worst_z = std::max(worst_z, z);
        if (z < 3.0) ++ok;
    }
    const double dt = seconds_since(t0);
    Outcome out;
    out.pass = ok == 20 && dt < 30.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "%d/20 pairs within 3 SE (worst |z| = %.2f), %.1f s (limit 30 s)", ok, worst_z,
                  dt);
    out.detail = buf;
    return out;
}

// ---------------------------------------------------------------- criterion 4

void shuffle_like_client(std::vector<int>& v, rng::Stream& stream) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
        int j = static_cast<int>(stream.next_below(static_cast<std::uint64_t>(i) + 1));
        std::swap(v[i], v[j]);
    }
}

Outcome criterion_single_client_equivalence() {
    data::Dataset ds = data::gen_synthetic(4, 30, 20, 5.0, 77);
    std::vector<data::ClientShard> shards = data::partition_iid_balanced(ds, 1, 0, 78);
    snn::Arch arch{20, {16}, 4};
    snn::GaussianNetParams prior = snn::init_prior_random(arch, 0.025, 79);

    fed::FLConfig cfg;
    cfg.num_clients = 1;
    cfg.participation = 1.0;
    cfg.rounds = 5;
    cfg.local_epochs = 2;
    cfg.batch_size = 25;
    cfg.learning_rate = 5e-3;
    cfg.momentum = 0.95;
    cfg.objective = {pacbayes::ObjectiveTag::FClassic, 1.0};
    cfg.seed = 80;
    cfg.threads = 2;
    fed::GenflResult fl = fed::run_genfl(cfg, ds, shards, prior);

    snn::GaussianNetParams w = prior;
    const long m = shards[0].m_i;
    for (int t = 1; t <= cfg.rounds; ++t) {
        rng::Stream stream(rng::derive(cfg.seed, rng::kClientUpdate, t, 0));
        snn::OptimizerState opt = snn::make_optimizer(w, cfg.learning_rate, cfg.momentum);
        std::vector<int> order = shards[0].split.posterior;
        for (int e = 0; e < cfg.local_epochs; ++e) {
            shuffle_like_client(order, stream);
            for (int start = 0; start < static_cast<int>(order.size()); start += cfg.batch_size) {
                int stop = std::min<int>(static_cast<int>(order.size()), start + cfg.batch_size);
                std::vector<snn::ExampleRef> batch;
                for (int i = start; i < stop; ++i) {
                    batch.push_back({ds.row(order[i]), ds.labels[order[i]]});
                }
                snn::SampledWeights sampled = snn::sample_weights(w, stream);
                auto res = snn::objective_backward(w, prior, sampled, batch, cfg.objective, m,
                                                   cfg.delta, cfg.p_min);
                snn::sgd_momentum_step(opt, w, res.grads);
            }
        }
    }
    bool bitwise = fed::params_checksum(fl.model.params) == fed::params_checksum(w);
    for (std::size_t l = 0; bitwise && l < w.layers.size(); ++l) {
        bitwise = fl.model.params.layers[l].mu_w == w.layers[l].mu_w &&
                  fl.model.params.layers[l].rho_w == w.layers[l].rho_w &&
                  fl.model.params.layers[l].mu_b == w.layers[l].mu_b &&
                  fl.model.params.layers[l].rho_b == w.layers[l].rho_b;
    }
    Outcome out;
    out.pass = bitwise;
    out.detail = bitwise ? "federated and direct trajectories are bit-identical"
                         : "trajectories diverged";
    return out;
}

// ---------------------------------------------------------------- criterion 5

std::string c5_config(const std::string& objective, const std::string& out_dir) {
    return "run_id = c5_" + objective + "\n" +
           "mode = flsob\n"
           "prior = learnt\n"
           "objective = " + objective + "\n" +
           "clients = 10\n"
           "participation = 1.0\n"
           "local_epochs = 1\n"
           "batch_size = 25\n"
           "learning_rate = 0.1\n"
           "momentum = 0.95\n"
           "rounds = 30\n"
           "prior_rounds = 20\n"
           "prior_epochs = 2\n"
           "prior_momentum = 0.95\n"
           "prior_dropout = 0.2\n"
           "hidden = 50\n"
           "dataset = synthetic\n"
           "synth_classes = 4\n"
           "synth_per_class = 1500\n"
           "synth_test_per_class = 500\n"
           "synth_dim = 20\n"
           "synth_separation = 5.0\n"
           "n_mc = 10000\n"
           "n_test_mc = 100\n"
           "seeds = 1,2,3,4,5,6,7,8,9,10\n"
           "threads = 0\n"
           "out_dir = " + out_dir + "\n";
}

double nearest_centroid_error(const data::Dataset& train, const data::Dataset& eval) {
    std::vector<std::vector<double>> mean(train.num_classes,
                                          std::vector<double>(train.dim, 0.0));
    std::vector<int> count(train.num_classes, 0);
    for (int i = 0; i < train.size(); ++i) {
        for (int j = 0; j < train.dim; ++j) mean[train.labels[i]][j] += train.row(i)[j];
        ++count[train.labels[i]];
    }
    for (int c = 0; c < train.num_classes; ++c) {
        for (auto& v : mean[c]) v /= count[c];
    }
    int errors = 0;
    for (int i = 0; i < eval.size(); ++i) {
        int best = 0;
        double best_dist = 1e300;
        for (int c = 0; c < train.num_classes; ++c) {
            double dist = 0.0;
            for (int j = 0; j < train.dim; ++j) {
                double diff = eval.row(i)[j] - mean[c][j];
                dist += diff * diff;
            }
            if (dist < best_dist) {
                best_dist = dist;
                best = c;
            }
        }
        if (best != eval.labels[i]) ++errors;
    }
    return static_cast<double>(errors) / eval.size();
}

Outcome criterion_desk_scale_certificates() {
    const auto t0 = std::chrono::steady_clock::now();
    // the oracle pin: the chosen separation must give a < 5% centroid error
    {
        data::Dataset train =
            data::gen_synthetic(4, 1500, 20, 5.0, rng::derive(1, rng::kDataGen, 0));
        data::Dataset test =
            data::gen_synthetic(4, 500, 20, 5.0, rng::derive(1, rng::kDataGen, 1));
        double oracle = nearest_centroid_error(train, test);
        if (oracle >= 0.05) {
            Outcome out;
            out.detail = "nearest-centroid oracle error " + std::to_string(oracle) + " >= 0.05";
            return out;
        }
    }
    int good = 0, runs = 0;
    double worst_bound = 0.0;
    for (const std::string objective : {"f1", "f2"}) {
        const std::string dir = acceptance_dir() + "/c5_" + objective;
        cli::ExperimentSpec spec = cli::parse_config_text(c5_config(objective, dir), "c5");
        std::vector<cli::SeedResult> results = cli::run_experiment(spec);
        for (const auto& r : results) {
            ++runs;
            worst_bound = std::max(worst_bound, r.row.bound_01);
            if (r.row.bound_01 < 0.5 && r.row.bound_01 >= r.row.test_err_01) ++good;
        }
    }
    const double dt = seconds_since(t0);
    Outcome out;
    out.pass = good >= 19 && runs == 20 && dt < 900.0;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "%d/20 runs with bound < 0.5 and >= test error (worst bound %.3f), %.0f s "
                  "(limit 900 s)",
                  good, worst_bound, dt);
    out.detail = buf;
    return out;
}

// ---------------------------------------------------------------- criterion 6

Outcome criterion_statistical_validity() {
    const auto t0 = std::chrono::steady_clock::now();
    int valid = 0;
    const int runs = 100;
    double smallest_margin = 1.0;
    for (int run = 1; run <= runs; ++run) {
        const std::uint64_t seed = rng::derive(9000, run);
        data::Dataset train = data::gen_synthetic(3, 400, 10, 5.0, rng::derive(seed, 0));
        data::Dataset fresh = data::gen_synthetic(3, 33334, 10, 5.0, rng::derive(seed, 1));
        std::vector<data::ClientShard> shards =
            data::partition_iid_balanced(train, 4, 0, rng::derive(seed, 2));
        for (auto& s : shards) {
            data::apply_split_policy(train, s, data::SplitPolicy::LearntPriorIid,
                                     rng::derive(seed, 3, s.client_id));
        }
        snn::Arch arch{10, {20}, 3};
        fed::FLConfig cfg;
        cfg.num_clients = 4;
        cfg.participation = 1.0;
        cfg.local_epochs = 1;
        cfg.batch_size = 25;
        cfg.learning_rate = 0.1;
        cfg.momentum = 0.95;
        cfg.prior_momentum = 0.95;
        cfg.rounds = 12;
        cfg.prior_rounds = 12;
        cfg.prior_epochs = 2;
        cfg.objective = {pacbayes::ObjectiveTag::FClassic, 1.0};
        cfg.seed = seed;
        cfg.threads = 0;
        snn::GaussianNetParams init =
            snn::init_prior_random(arch, cfg.sigma_prior, rng::derive(seed, 4));
        snn::GaussianNetParams prior =
            fed::run_fed_prior_erm(cfg, train, shards, init).model.params;
        snn::GaussianNetParams posterior = fed::run_genfl(cfg, train, shards, prior).model.params;

        long m = 0;
        for (const auto& s : shards) m += s.m_i;
        pacbayes::BoundBudget budget;
        budget.m = m;
        budget.n_mc = 1500;
        certify::BoundCertificate cert =
            certify::fed_bound(train, shards, posterior, prior, budget, certify::LossKind::ZeroOne,
                               certify::McStreams::Coupled, seed, 0);
        const double true_risk =
            certify::stochastic_test_error(fresh, posterior, 60, rng::derive(seed, 5), 0);
        smallest_margin = std::min(smallest_margin, cert.risk_bound - true_risk);
        if (cert.risk_bound >= true_risk) ++valid;
    }
    const double dt = seconds_since(t0);
    Outcome out;
    out.pass = valid >= 99 && dt < 3600.0;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "certificate >= true risk in %d/100 runs (smallest margin %.3f), %.0f s "
                  "(limit 3600 s)",
                  valid, smallest_margin, dt);
    out.detail = buf;
    return out;
}

// ---------------------------------------------------------------- criterion 7

std::string c7_config(const std::string& out_dir) {
    return std::string("run_id = c7\n") +
           "mode = pfl\n"
           "prior = learnt\n"
           "objective = f1\n"
           "clients = 20\n"
           "participation = 1.0\n"
           "local_epochs = 20\n"
           "batch_size = 25\n"
           "learning_rate = 0.1\n"
           "momentum = 0.95\n"
           "prior_rounds = 120\n"
           "prior_epochs = 1\n"
           "prior_momentum = 0.95\n"
           "prior_dropout = 0.2\n"
           "sigma_prior = 0.1\n"
           "hidden = 50\n"
           "partition = sorted\n"
           "shard_size = 150\n"
           "shards_per_client = 2\n"
           "dataset = synthetic\n"
           "synth_classes = 10\n"
           "synth_per_class = 600\n"
           "synth_test_per_class = 50\n"
           "synth_dim = 20\n"
           "synth_separation = 5.0\n"
           "n_mc = 2000\n"
           "n_test_mc = 20\n"
           "seeds = 1,2,3,4,5,6,7,8,9,10\n"
           "threads = 0\n"
           "out_dir = " + out_dir + "\n";
}

Outcome criterion_pfl_pipeline() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string dir = acceptance_dir() + "/c7";
    cli::ExperimentSpec spec = cli::parse_config_text(c7_config(dir), "c7");
    std::vector<cli::SeedResult> results = cli::run_experiment(spec);

    double worst_bound = 0.0;
    double personalised_sum = 0.0, shared_sum = 0.0;
    bool files_ok = true;
    int vacuous = 0;
    for (const auto& r : results) {
        for (const auto& cert : r.certs) {
            worst_bound = std::max(worst_bound, cert.risk_bound);
            if (!(cert.risk_bound < 1.0)) ++vacuous;
        }
        personalised_sum += certify::summarize(r.test_errors).mean;
        shared_sum += r.shared_prior_test_error;

        const std::string hist_path = dir + "/c7_seed" + std::to_string(r.seed) + "_hist.tsv";
        std::ifstream hist(hist_path);
        if (!hist) {
            files_ok = false;
            continue;
        }
        std::string line;
        std::getline(hist, line);  // header
        int bound_total = 0, test_total = 0, rows = 0;
        while (std::getline(hist, line)) {
            std::istringstream cells(line);
            std::string lo, hi, bc, tc;
            std::getline(cells, lo, '\t');
            std::getline(cells, hi, '\t');
            std::getline(cells, bc, '\t');
            std::getline(cells, tc, '\t');
            bound_total += std::stoi(bc);
            test_total += std::stoi(tc);
            ++rows;
        }
        if (rows != 20 || bound_total != 20 || test_total != 20) files_ok = false;
        if (!fs::exists(dir + "/c7_seed" + std::to_string(r.seed) + "_report.tsv")) {
            files_ok = false;
        }
    }
    const double personalised_mean = personalised_sum / results.size();
    const double shared_mean = shared_sum / results.size();
    const double dt = seconds_since(t0);
    Outcome out;
    out.pass = vacuous == 0 && files_ok && personalised_mean < shared_mean && dt < 1200.0;
    char buf[240];
    std::snprintf(buf, sizeof(buf),
                  "certificates < 1.0: %s (worst %.3f); summaries+histograms: %s; personalised "
                  "%.3f vs shared prior %.3f; %.0f s (limit 1200 s)",
                  vacuous == 0 ? "yes" : "NO", worst_bound, files_ok ? "emitted" : "MISSING",
                  personalised_mean, shared_mean, dt);
    out.detail = buf;
    return out;
}

// ---------------------------------------------------------------- criterion 8

Outcome criterion_mnist_fullscale() {
    Outcome out;
    out.skipped = true;
    out.detail =
        "not gated (multi-hour full-scale run); configs/mnist_flsob_learnt_f1.cfg and "
        "configs/mnist_flsob_random_f1.cfg target the published operating points, see README";
    return out;
}

// ---------------------------------------------------------------- criterion 9

Outcome criterion_byte_determinism() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string dir = acceptance_dir() + "/c9";
    cli::ExperimentSpec spec = cli::parse_config_text(c5_config("f1", dir), "c9");
    spec.run_id = "c9";
    spec.seeds = {1};

    cli::run_one_seed(spec, 1);
    const std::string base = dir + "/c9_seed1";
    const std::vector<std::string> tracked = {"_report.tsv", "_certificates.tsv", "_run.json",
                                              "_effective.cfg", "_prior.ckpt", "_model.ckpt"};
    std::map<std::string, std::string> snapshot;
    for (const auto& suffix : tracked) {
        std::ifstream in(base + suffix, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        snapshot[suffix] = ss.str();
    }
    cli::run_one_seed(spec, 1);
    bool identical = true;
    for (const auto& suffix : tracked) {
        std::ifstream in(base + suffix, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        if (ss.str() != snapshot[suffix] || snapshot[suffix].empty()) identical = false;
    }
    const double dt = seconds_since(t0);
    Outcome out;
    out.pass = identical;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "rerun artifacts %s (%zu files compared), %.0f s",
                  identical ? "byte-identical" : "DIFFER", tracked.size(), dt);
    out.detail = buf;
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    struct Criterion {
        int id;
        const char* name;
        Outcome (*run)();
    };
    const std::vector<Criterion> criteria = {
        {1, "kl-inverse oracle equivalence", criterion_kl_inverse_oracle},
        {2, "objective gradient correctness", criterion_gradient_correctness},
        {3, "gaussian KL vs Monte-Carlo estimate", criterion_gaussian_kl_mc},
        {4, "single-client equivalence", criterion_single_client_equivalence},
        {5, "desk-scale FL-SOB certificate quality", criterion_desk_scale_certificates},
        {6, "statistical validity of certificates", criterion_statistical_validity},
        {7, "personalised pipeline", criterion_pfl_pipeline},
        {8, "full-scale MNIST reproduction", criterion_mnist_fullscale},
        {9, "byte-identical reruns", criterion_byte_determinism},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    fs::create_directories(acceptance_dir());
    int failed = 0;
    for (const auto& criterion : criteria) {
        if (!selected.empty() && selected.count(criterion.id) == 0) continue;
        Outcome out;
        try {
            out = criterion.run();
        } catch (const std::exception& e) {
            out.pass = false;
            out.detail = std::string("exception: ") + e.what();
        }
        const char* status = out.skipped ? "SKIP" : out.pass ? "PASS" : "FAIL";
        std::printf("criterion %d [%s]: %s (%s)\n", criterion.id, criterion.name, status,
                    out.detail.c_str());
        std::fflush(stdout);
        if (!out.skipped && !out.pass) ++failed;
    }
    if (failed > 0) std::printf("%d criterion(s) failed\n", failed);
    return failed;
}
