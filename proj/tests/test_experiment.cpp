#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "genfl/common.hpp"
#include "genfl/experiment.hpp"

using namespace genfl;
using namespace genfl::cli;

namespace {

namespace fs = std::filesystem;

std::string smoke_config(const std::string& run_id, const std::string& out_dir) {
    return "run_id = " + run_id + "\n" +
           "mode = flsob\n"
           "prior = learnt\n"
           "objective = f1\n"
           "clients = 4\n"
           "participation = 1.0\n"
           "local_epochs = 1\n"
           "batch_size = 10\n"
           "rounds = 3\n"
           "prior_rounds = 3\n"
           "prior_epochs = 1\n"
           "hidden = 8\n"
           "dataset = synthetic\n"
           "synth_classes = 3\n"
           "synth_per_class = 80\n"
           "synth_test_per_class = 100\n"
           "synth_dim = 6\n"
           "synth_separation = 5.0\n"
           "n_mc = 400\n"
           "n_test_mc = 20\n"
           "seeds = 1\n"
           "threads = 2\n"
           "out_dir = " + out_dir + "\n";
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("parse_config_text") {
    SUBCASE("empty file demands a run id") {
        try {
            parse_config_text("", "empty.cfg");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("run_id") != std::string::npos);
        }
    }
    SUBCASE("defaults resolve to the full-scale setup") {
        ExperimentSpec s = parse_config_text("run_id = defaults\n", "t.cfg");
        CHECK(s.fl.num_clients == 100);
        CHECK(s.fl.learning_rate == 5e-3);       // multi-client default
        CHECK(s.fl.rounds == 10);                // learnt prior default
        CHECK(s.fl.momentum == 0.95);
        CHECK(s.fl.prior_momentum == 0.99);
        CHECK(s.fl.sigma_prior == 2.5e-2);
        CHECK(s.fl.p_min == 1e-4);
        CHECK(s.fl.batch_size == 25);
        CHECK(s.fl.delta == 0.05);
        CHECK(s.delta_prime == 0.01);
        CHECK(s.n_mc == 150000);
        CHECK(s.hidden_dims == std::vector<int>{600, 600});
        CHECK(s.fl.objective.kl_penalty == 1.0);
    }
    SUBCASE("single-client learning rate default") {
        ExperimentSpec s = parse_config_text("run_id = one\nclients = 1\n", "t.cfg");
        CHECK(s.fl.learning_rate == 5e-4);
    }
    SUBCASE("random prior defaults to 200 rounds") {
        ExperimentSpec s = parse_config_text("run_id = r\nprior = random\n", "t.cfg");
        CHECK(s.fl.rounds == 200);
    }
    SUBCASE("invalid participation is rejected by name") {
        try {
            parse_config_text("run_id = x\nparticipation = 1.5\n", "t.cfg");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("participation") != std::string::npos);
        }
    }
    SUBCASE("unknown keys are rejected with a line number") {
        try {
            parse_config_text("run_id = x\nnot_a_key = 3\n", "t.cfg");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            std::string msg = e.what();
            CHECK(msg.find("not_a_key") != std::string::npos);
            CHECK(msg.find(":2") != std::string::npos);
        }
    }
    SUBCASE("duplicate keys are rejected") {
        CHECK_THROWS_AS(parse_config_text("run_id = x\nrun_id = y\n", "t.cfg"), ConfigError);
    }
    SUBCASE("malformed lines carry their number") {
        try {
            parse_config_text("run_id = x\nthis is not a kv line\n", "t.cfg");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find(":2") != std::string::npos);
        }
    }
    SUBCASE("mnist requires the four paths") {
        try {
            parse_config_text("run_id = x\ndataset = mnist\n", "t.cfg");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("mnist_train_images") != std::string::npos);
        }
    }
}

TEST_CASE("effective config round-trips to an identical spec") {
    ExperimentSpec s = parse_config_text(
        "run_id = round_trip\nmode = pfl\nprior = learnt\nobjective = f2\nkl_penalty = 0.1\n"
        "clients = 20\nparticipation = 0.35\nlocal_epochs = 7\nbatch_size = 13\n"
        "learning_rate = 0.00731\nmomentum = 0.9\nrounds = 17\nprior_rounds = 23\n"
        "prior_epochs = 3\nprior_momentum = 0.97\nprior_dropout = 0.15\nsigma_prior = 0.031\n"
        "p_min = 0.00013\ndelta = 0.041\ndelta_prime = 0.013\nn_mc = 777\nn_test_mc = 55\n"
        "mc_coupled = false\ncert_loss = bounded_ce\nhidden = 50,60\npartition = sorted\n"
        "per_class_count = 0\nshard_size = 150\nshards_per_client = 3\ndataset = synthetic\n"
        "synth_classes = 5\nsynth_per_class = 123\nsynth_test_per_class = 77\nsynth_dim = 9\n"
        "synth_separation = 3.25\nseeds = 3,5,8\nparallel_seeds = true\nthreads = 2\n"
        "out_dir = /tmp/genfl_rt\n",
        "rt.cfg");
    std::ostringstream emitted;
    write_effective_config(s, emitted);
    ExperimentSpec back = parse_config_text(emitted.str(), "emitted.cfg");
    CHECK(back == s);

    // a second emission is byte-identical
    std::ostringstream again;
    write_effective_config(back, again);
    CHECK(again.str() == emitted.str());
}

TEST_CASE("split policy derivation") {
    ExperimentSpec s;
    s.fl.mode = fed::Mode::FlSob;
    s.fl.prior_mode = fed::PriorMode::Random;
    CHECK(derive_split_policy(s) == data::SplitPolicy::None);
    s.fl.prior_mode = fed::PriorMode::Learnt;
    s.partition = data::PartitionMode::IidBalanced;
    CHECK(derive_split_policy(s) == data::SplitPolicy::LearntPriorIid);
    s.partition = data::PartitionMode::SortedShards;
    CHECK(derive_split_policy(s) == data::SplitPolicy::LearntPriorNonIid);
    s.fl.mode = fed::Mode::Pfl;
    s.fl.prior_mode = fed::PriorMode::Random;
    CHECK(derive_split_policy(s) == data::SplitPolicy::RandomPriorVal);
    s.fl.prior_mode = fed::PriorMode::Learnt;
    CHECK(derive_split_policy(s) == data::SplitPolicy::LearntPriorNonIid);
}

TEST_CASE("histogram20") {
    std::vector<double> values = {0.0, 0.01, 0.049, 0.05, 0.51, 0.87, 1.0, 1.2, -0.1};
    std::array<int, 20> bins = histogram20(values);
    CHECK(std::accumulate(bins.begin(), bins.end(), 0) == static_cast<int>(values.size()));
    CHECK(bins[0] == 4);   // 0.0, 0.01, 0.049 and the clamped -0.1
    CHECK(bins[1] == 1);   // 0.05
    CHECK(bins[10] == 1);  // 0.51
    CHECK(bins[17] == 1);  // 0.87
    CHECK(bins[19] == 2);  // 1.0 and the clamped 1.2
}

TEST_CASE("flsob smoke run emits a coherent report") {
    TempDir dir("genfl_test_flsob");
    ExperimentSpec spec = parse_config_text(smoke_config("smoke", dir.path.string()), "s.cfg");
    std::vector<SeedResult> results = run_experiment(spec);
    REQUIRE(results.size() == 1);
    const SeedResult& r = results[0];

    CHECK(r.row.bound_01 > 0.0);
    CHECK(r.row.bound_01 <= 1.0);
    CHECK(r.certs.size() == 1);
    CHECK(r.certs[0].risk_bound >= r.certs[0].mc_risk_inverted);
    CHECK(r.certs[0].m == 120);  // 4 clients x 30 posterior-half points

    const std::string base = (dir.path / "smoke_seed1").string();
    for (const std::string suffix :
         {"_report.tsv", "_certificates.tsv", "_run.json", "_effective.cfg", "_rounds.log",
          "_prior.ckpt", "_model.ckpt"}) {
        CHECK(fs::exists(base + suffix));
    }
    CHECK(fs::exists(dir.path / "smoke_summary.tsv"));

    // the emitted effective config re-parses to the very same spec
    ExperimentSpec back = parse_config(base + "_effective.cfg");
    CHECK(back == spec);

    // the written table re-parses to the same row
    std::string report = read_file(base + "_report.tsv");
    std::istringstream lines(report);
    std::string header, row;
    std::getline(lines, header);
    std::getline(lines, row);
    CHECK(header.find("bound_01") != std::string::npos);
    std::istringstream cells(row);
    std::string run_id, seed, mode, prior, objective, clients, kl_penalty, bound;
    std::getline(cells, run_id, '\t');
    std::getline(cells, seed, '\t');
    std::getline(cells, mode, '\t');
    std::getline(cells, prior, '\t');
    std::getline(cells, objective, '\t');
    std::getline(cells, clients, '\t');
    std::getline(cells, kl_penalty, '\t');
    std::getline(cells, bound, '\t');
    CHECK(run_id == "smoke");
    CHECK(mode == "flsob");
    CHECK(std::stod(bound) == doctest::Approx(r.row.bound_01).epsilon(1e-15));

    // report verification recomputes every certificate without mismatches
    std::ostringstream verify_out;
    ReportCheck check = verify_run_dir(dir.path.string(), verify_out);
    CHECK(check.files_checked == 1);
    CHECK(check.certificates_checked == 1);
    CHECK(check.mismatches == 0);
}

TEST_CASE("rerunning a seed is byte identical") {
    TempDir dir("genfl_test_determinism");
    ExperimentSpec spec = parse_config_text(smoke_config("det", dir.path.string()), "d.cfg");
    run_one_seed(spec, 1);
    const std::string base = (dir.path / "det_seed1").string();
    std::map<std::string, std::string> first;
    for (const std::string suffix : {"_report.tsv", "_certificates.tsv", "_run.json",
                                     "_effective.cfg", "_prior.ckpt", "_model.ckpt"}) {
        first[suffix] = read_file(base + suffix);
    }
    run_one_seed(spec, 1);
    for (const auto& [suffix, content] : first) {
        CAPTURE(suffix);
        CHECK(read_file(base + suffix) == content);
    }
}

TEST_CASE("certify reproduces the certificate from checkpoints") {
    TempDir dir("genfl_test_certify_verb");
    ExperimentSpec spec = parse_config_text(smoke_config("cv", dir.path.string()), "c.cfg");
    std::vector<SeedResult> results = run_experiment(spec);
    const std::string base = (dir.path / "cv_seed1").string();
    SeedResult again = certify_checkpoint(spec, 1, base + "_model.ckpt", base + "_prior.ckpt");
    CHECK(again.certs.size() == 1);
    CHECK(again.certs[0].risk_bound == results[0].certs[0].risk_bound);
    CHECK(again.certs[0].mc_risk == results[0].certs[0].mc_risk);
    CHECK(again.row.test_err_01 == results[0].row.test_err_01);
}

TEST_CASE("pfl smoke run emits summaries and histograms") {
    TempDir dir("genfl_test_pfl");
    std::string cfg_text =
        "run_id = pfls\nmode = pfl\nprior = learnt\nobjective = f1\nclients = 4\n"
        "participation = 1.0\nlocal_epochs = 2\nbatch_size = 10\nprior_rounds = 3\n"
        "prior_epochs = 1\nhidden = 8\npartition = sorted\nshard_size = 60\n"
        "shards_per_client = 2\ndataset = synthetic\nsynth_classes = 4\n"
        "synth_per_class = 150\nsynth_test_per_class = 50\nsynth_dim = 6\n"
        "synth_separation = 5.0\nn_mc = 300\nn_test_mc = 20\nseeds = 2\nthreads = 2\n"
        "out_dir = " + dir.path.string() + "\n";
    ExperimentSpec spec = parse_config_text(cfg_text, "p.cfg");
    std::vector<SeedResult> results = run_experiment(spec);
    REQUIRE(results.size() == 1);
    const SeedResult& r = results[0];
    CHECK(r.certs.size() == 4);
    CHECK(r.test_errors.size() == 4);
    for (const auto& c : r.certs) {
        CHECK(c.m == 60);  // 120-point shard, 10/40/50 split -> 60 posterior
        CHECK(c.risk_bound >= c.mc_risk_inverted);
    }
    CHECK(r.summary.risk_bound.min <= r.summary.risk_bound.mean);
    CHECK(r.summary.risk_bound.mean <= r.summary.risk_bound.max);

    const std::string base = (dir.path / "pfls_seed2").string();
    CHECK(fs::exists(base + "_hist.tsv"));
    std::string hist = read_file(base + "_hist.tsv");
    std::istringstream lines(hist);
    std::string line;
    std::getline(lines, line);  // header
    int bound_total = 0, test_total = 0, rows = 0;
    while (std::getline(lines, line)) {
        std::istringstream cells(line);
        std::string lo, hi, bound_count, test_count;
        std::getline(cells, lo, '\t');
        std::getline(cells, hi, '\t');
        std::getline(cells, bound_count, '\t');
        std::getline(cells, test_count, '\t');
        bound_total += std::stoi(bound_count);
        test_total += std::stoi(test_count);
        ++rows;
    }
    CHECK(rows == 20);
    CHECK(bound_total == 4);  // histogram counts sum to the client count
    CHECK(test_total == 4);

    std::ostringstream verify_out;
    ReportCheck check = verify_run_dir(dir.path.string(), verify_out);
    CHECK(check.certificates_checked == 4);
    CHECK(check.mismatches == 0);
}

TEST_CASE("parallel seed sweeps produce the same bytes as sequential ones") {
    TempDir seq_dir("genfl_test_seq");
    TempDir par_dir("genfl_test_par");
    std::string base_cfg = smoke_config("sweep", seq_dir.path.string());
    base_cfg += "\n";  // seeds overridden below
    ExperimentSpec seq = parse_config_text(base_cfg, "s.cfg");
    seq.seeds = {1, 2};
    run_experiment(seq);

    ExperimentSpec par = seq;
    par.out_dir = par_dir.path.string();
    par.parallel_seeds = true;
    run_experiment(par);

    for (std::uint64_t seed : {1, 2}) {
        for (const std::string suffix : {"_report.tsv", "_certificates.tsv", "_run.json"}) {
            std::string a = read_file(
                (seq_dir.path / ("sweep_seed" + std::to_string(seed) + suffix)).string());
            std::string b = read_file(
                (par_dir.path / ("sweep_seed" + std::to_string(seed) + suffix)).string());
            // the effective config embeds out_dir/parallel flag; artifacts must
            // otherwise be identical up to those two fields
            if (suffix == "_run.json") {
                size_t pa = a.find("\"out_dir\"");
                size_t pb = b.find("\"out_dir\"");
                REQUIRE(pa != std::string::npos);
                a.erase(pa, a.find('\n', pa) - pa);
                b.erase(pb, b.find('\n', pb) - pb);
                pa = a.find("\"parallel_seeds\"");
                pb = b.find("\"parallel_seeds\"");
                a.erase(pa, a.find('\n', pa) - pa);
                b.erase(pb, b.find('\n', pb) - pb);
            }
            CAPTURE(seed);
            CAPTURE(suffix);
            CHECK(a == b);
        }
    }
}

TEST_CASE("partition inspection prints one row per client") {
    TempDir dir("genfl_test_inspect");
    ExperimentSpec spec = parse_config_text(smoke_config("ins", dir.path.string()), "i.cfg");
    std::ostringstream out;
    inspect_partition(spec, out);
    std::string text = out.str();
    CHECK(text.find("client\tsize\tprior\tposterior\tvalidation\tlabels") != std::string::npos);
    CHECK(text.find("total m = 120") != std::string::npos);
}
