// Command-line front end: run experiments from a config file, certify saved
// checkpoints, verify emitted reports, and inspect client partitions.

#include <cstdio>
#include <iostream>
#include <stdexcept>
#include <string>

#include "CLI11.hpp"
#include "genfl/common.hpp"
#include "genfl/experiment.hpp"

namespace {

void print_flsob_row(const genfl::cli::ReportRow& row) {
    std::printf("%s seed=%llu %s/%s/%s bound=%.4f test_err=%.4f kl/m=%.6f mc_risk=%.4f m=%ld\n",
                row.run_id.c_str(), static_cast<unsigned long long>(row.seed), row.mode.c_str(),
                row.prior.c_str(), row.objective.c_str(), row.bound_01, row.test_err_01,
                row.kl_over_m, row.mc_risk, row.m);
}

int dispatch(const std::string& command, const std::string& config_path,
             const std::string& model_ckpt, const std::string& prior_ckpt,
             const std::string& run_dir, bool inspect, std::uint64_t seed_override,
             bool has_seed_override) {
    using namespace genfl;

    if (command == "run") {
        cli::ExperimentSpec spec = cli::parse_config(config_path);
        if (has_seed_override) spec.seeds = {seed_override};
        std::vector<cli::SeedResult> results = cli::run_experiment(spec);
        for (const auto& r : results) {
            if (spec.fl.mode == fed::Mode::FlSob) {
                print_flsob_row(r.row);
            } else {
                std::printf("%s seed=%llu pfl bound min/mean/max = %.4f/%.4f/%.4f "
                            "test_err mean = %.4f (shared prior %.4f)\n",
                            r.row.run_id.c_str(), static_cast<unsigned long long>(r.seed),
                            r.summary.risk_bound.min, r.summary.risk_bound.mean,
                            r.summary.risk_bound.max, r.row.test_err_01,
                            r.shared_prior_test_error);
            }
            for (const auto& f : r.files) std::printf("  wrote %s\n", f.c_str());
        }
        std::printf("wrote %s/%s_summary.tsv\n", spec.out_dir.c_str(), spec.run_id.c_str());
        return 0;
    }
    if (command == "certify") {
        cli::ExperimentSpec spec = cli::parse_config(config_path);
        const std::uint64_t seed = has_seed_override ? seed_override : spec.seeds.front();
        cli::SeedResult r = cli::certify_checkpoint(spec, seed, model_ckpt, prior_ckpt);
        print_flsob_row(r.row);
        const auto& c = r.certs.front();
        std::printf("certificate: bound=%.6f mc_risk=%.6f mc_risk_inverted=%.6f kl=%.3f m=%ld "
                    "n_mc=%ld delta=%g delta_prime=%g\n",
                    c.risk_bound, c.mc_risk, c.mc_risk_inverted, c.kl_div, c.m, c.n_mc, c.delta,
                    c.delta_prime);
        return 0;
    }
    if (command == "report") {
        cli::ReportCheck check = cli::verify_run_dir(run_dir, std::cout);
        std::printf("%d files, %d certificates, %d mismatches\n", check.files_checked,
                    check.certificates_checked, check.mismatches);
        return check.mismatches == 0 ? 0 : 1;
    }
    if (command == "partition") {
        if (!inspect) {
            std::fprintf(stderr, "partition: only --inspect is supported\n");
            return 2;
        }
        cli::ExperimentSpec spec = cli::parse_config(config_path);
        cli::inspect_partition(spec, std::cout);
        return 0;
    }
    std::fprintf(stderr, "unknown command\n");
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"federated PAC-Bayes training and risk certification"};
    app.require_subcommand(1);

    std::string config_path, model_ckpt, prior_ckpt, run_dir;
    bool inspect = false;
    std::uint64_t seed_override = 0;

    CLI::App* run = app.add_subcommand("run", "run an experiment from a config file");
    run->add_option("config", config_path, "experiment config file")->required();
    CLI::Option* run_seed = run->add_option("--seed", seed_override, "run a single seed");

    CLI::App* certify = app.add_subcommand("certify", "certify a saved model checkpoint");
    certify->add_option("checkpoint", model_ckpt, "model checkpoint")->required();
    certify->add_option("config", config_path, "experiment config file")->required();
    certify->add_option("--prior", prior_ckpt, "prior checkpoint (omit for a random prior)");
    CLI::Option* cert_seed = certify->add_option("--seed", seed_override, "seed to rebuild data");

    CLI::App* report = app.add_subcommand("report", "verify the reports in a run directory");
    report->add_option("run_dir", run_dir, "directory with *_run.json files")->required();

    CLI::App* partition = app.add_subcommand("partition", "inspect the client partition");
    partition->add_flag("--inspect", inspect, "print per-client split and label counts");
    partition->add_option("config", config_path, "experiment config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    const bool has_seed_override =
        (command == "run" && run_seed->count() > 0) ||
        (command == "certify" && cert_seed->count() > 0);
    try {
        return dispatch(command, config_path, model_ckpt, prior_ckpt, run_dir, inspect,
                        seed_override, has_seed_override);
    } catch (const genfl::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const genfl::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const genfl::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const std::domain_error& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
