#pragma once

// Experiment orchestration: config parsing and validation, the full pipeline
// (data -> prior -> federated training -> certification), and report files.
// Everything emitted except the round logs (which carry timings) is a pure
// function of (config, seed), byte for byte.

#include <array>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "genfl/certify.hpp"
#include "genfl/data.hpp"
#include "genfl/federation.hpp"

namespace genfl::cli {

enum class DataSource { Synthetic, Mnist };

struct SyntheticSpec {
    int classes = 4;
    int per_class = 1500;
    int test_per_class = 1000;
    int dim = 20;
    double separation = 5.0;

    bool operator==(const SyntheticSpec&) const = default;
};

struct MnistPaths {
    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;

    bool operator==(const MnistPaths&) const = default;
};

struct ExperimentSpec {
    std::string run_id;
    fed::FLConfig fl;
    std::vector<int> hidden_dims = {600, 600};
    data::PartitionMode partition = data::PartitionMode::IidBalanced;
    int per_class_count = 0;  // 0 = as many as the data allows
    int shard_size = 300;
    int shards_per_client = 2;
    DataSource source = DataSource::Synthetic;
    SyntheticSpec synth;
    MnistPaths mnist;
    double delta_prime = 0.01;
    long n_mc = 150000;
    int n_test_mc = 100;
    bool mc_coupled = true;
    certify::LossKind cert_loss = certify::LossKind::ZeroOne;
    std::string out_dir;
    std::vector<std::uint64_t> seeds = {1};
    bool parallel_seeds = false;

    bool operator==(const ExperimentSpec&) const = default;
};

// key = value lines, '#' comments; unknown keys are rejected and every
// validation error names the offending field. Omitted learning_rate defaults
// to 5e-3 for more than one client and 5e-4 for a single client; omitted
// rounds default to 10 with a learnt prior and 200 with a random one.
ExperimentSpec parse_config(const std::string& path);
ExperimentSpec parse_config_text(const std::string& text, const std::string& name);

// Emits every key with its resolved value; re-parsing gives back an equal
// ExperimentSpec.
std::vector<std::pair<std::string, std::string>> effective_config_pairs(const ExperimentSpec& s);
void write_effective_config(const ExperimentSpec& s, std::ostream& out);

// The split policy implied by (mode, prior, partition).
data::SplitPolicy derive_split_policy(const ExperimentSpec& s);

struct ReportRow {
    std::string run_id;
    std::uint64_t seed = 0;
    std::string mode;
    std::string prior;
    std::string objective;
    int num_clients = 0;
    double kl_penalty = 1.0;
    double bound_01 = 1.0;
    double test_err_01 = 1.0;
    double kl_over_m = 0.0;
    double mc_risk = 0.0;
    long m = 0;
    long n_mc = 0;
};

struct SeedResult {
    std::uint64_t seed = 0;
    ReportRow row;
    std::vector<certify::BoundCertificate> certs;  // one (global) or per client
    certify::CertificateSummary summary;           // personalised runs only
    std::vector<double> test_errors;               // per client, personalised runs
    double shared_prior_test_error = 0.0;          // personalised runs
    std::vector<std::string> files;                // emitted artifact paths
};

// Runs the pipeline for one seed and writes the per-seed artifacts
// (report.tsv, certificates.tsv, run.json, effective.cfg, checkpoints,
// rounds.log, and for personalised runs hist.tsv). thread_override >= 0
// replaces the configured thread count for compute only; emitted artifacts
// always reflect the configuration as given.
SeedResult run_one_seed(const ExperimentSpec& spec, std::uint64_t seed, int thread_override = -1);

// Full sweep plus the cross-seed summary table.
std::vector<SeedResult> run_experiment(const ExperimentSpec& spec);

// 20 equal bins over [0,1]; values are clamped into the outer bins.
std::array<int, 20> histogram20(std::span<const double> values);

// Recomputes every certificate in a run directory's run.json files from its
// own logged fields (bisection route) and counts mismatches.
struct ReportCheck {
    int files_checked = 0;
    int certificates_checked = 0;
    int mismatches = 0;
};
ReportCheck verify_run_dir(const std::string& dir, std::ostream& out);

// Rebuilds data and splits for (spec, seed), certifies a checkpointed
// posterior. prior_checkpoint may be empty for a random prior.
SeedResult certify_checkpoint(const ExperimentSpec& spec, std::uint64_t seed,
                              const std::string& model_checkpoint,
                              const std::string& prior_checkpoint);

void inspect_partition(const ExperimentSpec& spec, std::ostream& out);

// stable serialisations shared by reports and configs
std::string format_double(double v);
std::string default_out_dir();  // $GENFL_OUT_DIR or "runs"

}  // namespace genfl::cli
