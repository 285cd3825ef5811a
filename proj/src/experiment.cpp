#include "genfl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>

#include "genfl/common.hpp"
#include "json.hpp"

namespace genfl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string default_out_dir() {
    const char* env = std::getenv("GENFL_OUT_DIR");
    return env != nullptr && *env != '\0' ? env : "runs";
}

namespace {

std::string mode_name(fed::Mode m) { return m == fed::Mode::FlSob ? "flsob" : "pfl"; }
std::string prior_name(fed::PriorMode p) {
    return p == fed::PriorMode::Random ? "random" : "learnt";
}
std::string objective_name(const pacbayes::ObjectiveKind& k) {
    return k.tag == pacbayes::ObjectiveTag::FClassic ? "f1" : "f2";
}
std::string loss_name(certify::LossKind l) {
    return l == certify::LossKind::ZeroOne ? "zero_one" : "bounded_ce";
}
std::string partition_name(data::PartitionMode m) {
    return m == data::PartitionMode::IidBalanced ? "iid" : "sorted";
}
std::string source_name(DataSource s) { return s == DataSource::Synthetic ? "synthetic" : "mnist"; }

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

struct RawConfig {
    std::map<std::string, std::string> values;
    std::map<std::string, int> lines;
    std::string name;

    bool has(const std::string& key) const { return values.count(key) != 0; }
};

[[noreturn]] void field_error(const std::string& field, const std::string& why) {
    throw ConfigError("field '" + field + "': " + why);
}

double parse_double(const RawConfig& raw, const std::string& key) {
    const std::string& s = raw.values.at(key);
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') field_error(key, "not a number: '" + s + "'");
    return v;
}

long parse_long(const RawConfig& raw, const std::string& key) {
    const std::string& s = raw.values.at(key);
    char* end = nullptr;
    long v = std::strtol(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0') field_error(key, "not an integer: '" + s + "'");
    return v;
}

int parse_int(const RawConfig& raw, const std::string& key) {
    return static_cast<int>(parse_long(raw, key));
}

bool parse_bool(const RawConfig& raw, const std::string& key) {
    const std::string& s = raw.values.at(key);
    if (s == "true") return true;
    if (s == "false") return false;
    field_error(key, "expected true or false, got '" + s + "'");
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = {
        "run_id", "mode", "prior", "objective", "kl_penalty", "clients", "participation",
        "local_epochs", "batch_size", "learning_rate", "momentum", "rounds", "prior_rounds",
        "prior_epochs", "prior_momentum", "prior_dropout", "sigma_prior", "p_min", "delta",
        "delta_prime", "n_mc", "n_test_mc", "mc_coupled", "cert_loss", "hidden", "partition",
        "per_class_count", "shard_size", "shards_per_client", "dataset", "synth_classes",
        "synth_per_class", "synth_test_per_class", "synth_dim", "synth_separation",
        "mnist_train_images", "mnist_train_labels", "mnist_test_images", "mnist_test_labels",
        "seeds", "parallel_seeds", "threads", "out_dir"};
    return keys;
}

}  // namespace

ExperimentSpec parse_config_text(const std::string& text, const std::string& name) {
    RawConfig raw;
    raw.name = name;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(name + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError(name + ":" + std::to_string(line_no) + ": empty key");
        }
        if (std::find(known_keys().begin(), known_keys().end(), key) == known_keys().end()) {
            throw ConfigError(name + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
        if (raw.values.count(key) != 0) {
            throw ConfigError(name + ":" + std::to_string(line_no) + ": duplicate key '" + key +
                              "' (first set on line " + std::to_string(raw.lines[key]) + ")");
        }
        raw.values[key] = value;
        raw.lines[key] = line_no;
    }

    ExperimentSpec s;
    if (!raw.has("run_id") || raw.values.at("run_id").empty()) {
        field_error("run_id", "required");
    }
    s.run_id = raw.values.at("run_id");
    for (char c : s.run_id) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) {
            field_error("run_id", "must be alphanumeric plus '_' or '-'");
        }
    }

    if (raw.has("mode")) {
        const std::string& v = raw.values.at("mode");
        if (v == "flsob") s.fl.mode = fed::Mode::FlSob;
        else if (v == "pfl") s.fl.mode = fed::Mode::Pfl;
        else field_error("mode", "expected flsob or pfl, got '" + v + "'");
    }
    if (raw.has("prior")) {
        const std::string& v = raw.values.at("prior");
        if (v == "random") s.fl.prior_mode = fed::PriorMode::Random;
        else if (v == "learnt") s.fl.prior_mode = fed::PriorMode::Learnt;
        else field_error("prior", "expected random or learnt, got '" + v + "'");
    }
    if (raw.has("objective")) {
        const std::string& v = raw.values.at("objective");
        if (v == "f1") s.fl.objective.tag = pacbayes::ObjectiveTag::FClassic;
        else if (v == "f2") s.fl.objective.tag = pacbayes::ObjectiveTag::FQuad;
        else field_error("objective", "expected f1 or f2, got '" + v + "'");
    }
    if (raw.has("kl_penalty")) s.fl.objective.kl_penalty = parse_double(raw, "kl_penalty");
    if (raw.has("clients")) s.fl.num_clients = parse_int(raw, "clients");
    if (raw.has("participation")) s.fl.participation = parse_double(raw, "participation");
    if (raw.has("local_epochs")) s.fl.local_epochs = parse_int(raw, "local_epochs");
    if (raw.has("batch_size")) s.fl.batch_size = parse_int(raw, "batch_size");
    if (raw.has("momentum")) s.fl.momentum = parse_double(raw, "momentum");
    if (raw.has("prior_rounds")) s.fl.prior_rounds = parse_int(raw, "prior_rounds");
    if (raw.has("prior_epochs")) s.fl.prior_epochs = parse_int(raw, "prior_epochs");
    if (raw.has("prior_momentum")) s.fl.prior_momentum = parse_double(raw, "prior_momentum");
    if (raw.has("prior_dropout")) s.fl.prior_dropout = parse_double(raw, "prior_dropout");
    if (raw.has("sigma_prior")) s.fl.sigma_prior = parse_double(raw, "sigma_prior");
    if (raw.has("p_min")) s.fl.p_min = parse_double(raw, "p_min");
    if (raw.has("delta")) s.fl.delta = parse_double(raw, "delta");
    if (raw.has("delta_prime")) s.delta_prime = parse_double(raw, "delta_prime");
    if (raw.has("n_mc")) s.n_mc = parse_long(raw, "n_mc");
    if (raw.has("n_test_mc")) s.n_test_mc = parse_int(raw, "n_test_mc");
    if (raw.has("mc_coupled")) s.mc_coupled = parse_bool(raw, "mc_coupled");
    if (raw.has("cert_loss")) {
        const std::string& v = raw.values.at("cert_loss");
        if (v == "zero_one") s.cert_loss = certify::LossKind::ZeroOne;
        else if (v == "bounded_ce") s.cert_loss = certify::LossKind::BoundedCe;
        else field_error("cert_loss", "expected zero_one or bounded_ce, got '" + v + "'");
    }
    if (raw.has("hidden")) {
        s.hidden_dims.clear();
        for (const std::string& item : split_commas(raw.values.at("hidden"))) {
            char* end = nullptr;
            long v = std::strtol(item.c_str(), &end, 10);
            if (end == item.c_str() || *end != '\0' || v < 1) {
                field_error("hidden", "expected comma-separated positive integers");
            }
            s.hidden_dims.push_back(static_cast<int>(v));
        }
        if (s.hidden_dims.empty()) field_error("hidden", "at least one hidden layer required");
    }
    if (raw.has("partition")) {
        const std::string& v = raw.values.at("partition");
        if (v == "iid") s.partition = data::PartitionMode::IidBalanced;
        else if (v == "sorted") s.partition = data::PartitionMode::SortedShards;
        else field_error("partition", "expected iid or sorted, got '" + v + "'");
    }
    if (raw.has("per_class_count")) s.per_class_count = parse_int(raw, "per_class_count");
    if (raw.has("shard_size")) s.shard_size = parse_int(raw, "shard_size");
    if (raw.has("shards_per_client")) s.shards_per_client = parse_int(raw, "shards_per_client");
    if (raw.has("dataset")) {
        const std::string& v = raw.values.at("dataset");
        if (v == "synthetic") s.source = DataSource::Synthetic;
        else if (v == "mnist") s.source = DataSource::Mnist;
        else field_error("dataset", "expected synthetic or mnist, got '" + v + "'");
    }
    if (raw.has("synth_classes")) s.synth.classes = parse_int(raw, "synth_classes");
    if (raw.has("synth_per_class")) s.synth.per_class = parse_int(raw, "synth_per_class");
    if (raw.has("synth_test_per_class")) s.synth.test_per_class = parse_int(raw, "synth_test_per_class");
    if (raw.has("synth_dim")) s.synth.dim = parse_int(raw, "synth_dim");
    if (raw.has("synth_separation")) s.synth.separation = parse_double(raw, "synth_separation");
    if (raw.has("mnist_train_images")) s.mnist.train_images = raw.values.at("mnist_train_images");
    if (raw.has("mnist_train_labels")) s.mnist.train_labels = raw.values.at("mnist_train_labels");
    if (raw.has("mnist_test_images")) s.mnist.test_images = raw.values.at("mnist_test_images");
    if (raw.has("mnist_test_labels")) s.mnist.test_labels = raw.values.at("mnist_test_labels");
    if (raw.has("seeds")) {
        s.seeds.clear();
        for (const std::string& item : split_commas(raw.values.at("seeds"))) {
            char* end = nullptr;
            unsigned long long v = std::strtoull(item.c_str(), &end, 10);
            if (end == item.c_str() || *end != '\0') {
                field_error("seeds", "expected comma-separated nonnegative integers");
            }
            s.seeds.push_back(static_cast<std::uint64_t>(v));
        }
        if (s.seeds.empty()) field_error("seeds", "at least one seed required");
    }
    if (raw.has("parallel_seeds")) s.parallel_seeds = parse_bool(raw, "parallel_seeds");
    if (raw.has("threads")) s.fl.threads = parse_int(raw, "threads");
    s.out_dir = raw.has("out_dir") ? raw.values.at("out_dir") : default_out_dir();

    // defaults that depend on other fields
    if (raw.has("learning_rate")) {
        s.fl.learning_rate = parse_double(raw, "learning_rate");
    } else {
        s.fl.learning_rate = s.fl.num_clients > 1 ? 5e-3 : 5e-4;
    }
    if (raw.has("rounds")) {
        s.fl.rounds = parse_int(raw, "rounds");
    } else {
        s.fl.rounds = s.fl.prior_mode == fed::PriorMode::Learnt ? 10 : 200;
    }

    // range validation, named per field
    if (s.fl.num_clients < 1) field_error("clients", "must be >= 1");
    if (!(s.fl.participation > 0.0 && s.fl.participation <= 1.0)) {
        field_error("participation", "must lie in (0,1]");
    }
    if (s.fl.local_epochs < 0) field_error("local_epochs", "must be >= 0");
    if (s.fl.batch_size < 1) field_error("batch_size", "must be >= 1");
    if (!(s.fl.learning_rate > 0.0)) field_error("learning_rate", "must be positive");
    if (!(s.fl.momentum >= 0.0 && s.fl.momentum < 1.0)) field_error("momentum", "must lie in [0,1)");
    if (s.fl.rounds < 0) field_error("rounds", "must be >= 0");
    if (s.fl.prior_rounds < 0) field_error("prior_rounds", "must be >= 0");
    if (s.fl.prior_epochs < 0) field_error("prior_epochs", "must be >= 0");
    if (!(s.fl.prior_momentum >= 0.0 && s.fl.prior_momentum < 1.0)) {
        field_error("prior_momentum", "must lie in [0,1)");
    }
    if (!(s.fl.prior_dropout >= 0.0 && s.fl.prior_dropout < 1.0)) {
        field_error("prior_dropout", "must lie in [0,1)");
    }
    if (!(s.fl.sigma_prior > 0.0)) field_error("sigma_prior", "must be positive");
    if (!(s.fl.p_min > 0.0 && s.fl.p_min < 1.0)) field_error("p_min", "must lie in (0,1)");
    if (!(s.fl.delta > 0.0 && s.fl.delta < 1.0)) field_error("delta", "must lie in (0,1)");
    if (!(s.delta_prime > 0.0 && s.delta_prime < 1.0)) field_error("delta_prime", "must lie in (0,1)");
    if (!(s.fl.delta + s.delta_prime < 1.0)) {
        field_error("delta_prime", "delta + delta_prime must be < 1");
    }
    if (!(s.fl.objective.kl_penalty > 0.0 && s.fl.objective.kl_penalty <= 1.0)) {
        field_error("kl_penalty", "must lie in (0,1]");
    }
    if (s.n_mc < 1) field_error("n_mc", "must be >= 1");
    if (s.n_test_mc < 1) field_error("n_test_mc", "must be >= 1");
    if (s.per_class_count < 0) field_error("per_class_count", "must be >= 0");
    if (s.shard_size < 1) field_error("shard_size", "must be >= 1");
    if (s.shards_per_client < 1) field_error("shards_per_client", "must be >= 1");
    if (s.fl.threads < 0) field_error("threads", "must be >= 0");
    if (s.source == DataSource::Synthetic) {
        if (s.synth.classes < 1) field_error("synth_classes", "must be >= 1");
        if (s.synth.per_class < 1) field_error("synth_per_class", "must be >= 1");
        if (s.synth.test_per_class < 1) field_error("synth_test_per_class", "must be >= 1");
        if (s.synth.dim < s.synth.classes) field_error("synth_dim", "must be >= synth_classes");
        if (!(s.synth.separation >= 0.0)) field_error("synth_separation", "must be >= 0");
    } else {
        if (s.mnist.train_images.empty()) field_error("mnist_train_images", "required for dataset = mnist");
        if (s.mnist.train_labels.empty()) field_error("mnist_train_labels", "required for dataset = mnist");
        if (s.mnist.test_images.empty()) field_error("mnist_test_images", "required for dataset = mnist");
        if (s.mnist.test_labels.empty()) field_error("mnist_test_labels", "required for dataset = mnist");
    }
    return s;
}

ExperimentSpec parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

std::vector<std::pair<std::string, std::string>> effective_config_pairs(const ExperimentSpec& s) {
    std::vector<std::pair<std::string, std::string>> kv;
    kv.emplace_back("run_id", s.run_id);
    kv.emplace_back("mode", mode_name(s.fl.mode));
    kv.emplace_back("prior", prior_name(s.fl.prior_mode));
    kv.emplace_back("objective", objective_name(s.fl.objective));
    kv.emplace_back("kl_penalty", format_double(s.fl.objective.kl_penalty));
    kv.emplace_back("clients", std::to_string(s.fl.num_clients));
    kv.emplace_back("participation", format_double(s.fl.participation));
    kv.emplace_back("local_epochs", std::to_string(s.fl.local_epochs));
    kv.emplace_back("batch_size", std::to_string(s.fl.batch_size));
    kv.emplace_back("learning_rate", format_double(s.fl.learning_rate));
    kv.emplace_back("momentum", format_double(s.fl.momentum));
    kv.emplace_back("rounds", std::to_string(s.fl.rounds));
    kv.emplace_back("prior_rounds", std::to_string(s.fl.prior_rounds));
    kv.emplace_back("prior_epochs", std::to_string(s.fl.prior_epochs));
    kv.emplace_back("prior_momentum", format_double(s.fl.prior_momentum));
    kv.emplace_back("prior_dropout", format_double(s.fl.prior_dropout));
    kv.emplace_back("sigma_prior", format_double(s.fl.sigma_prior));
    kv.emplace_back("p_min", format_double(s.fl.p_min));
    kv.emplace_back("delta", format_double(s.fl.delta));
    kv.emplace_back("delta_prime", format_double(s.delta_prime));
    kv.emplace_back("n_mc", std::to_string(s.n_mc));
    kv.emplace_back("n_test_mc", std::to_string(s.n_test_mc));
    kv.emplace_back("mc_coupled", s.mc_coupled ? "true" : "false");
    kv.emplace_back("cert_loss", loss_name(s.cert_loss));
    {
        std::string h;
        for (std::size_t i = 0; i < s.hidden_dims.size(); ++i) {
            h += (i ? "," : "") + std::to_string(s.hidden_dims[i]);
        }
        kv.emplace_back("hidden", h);
    }
    kv.emplace_back("partition", partition_name(s.partition));
    kv.emplace_back("per_class_count", std::to_string(s.per_class_count));
    kv.emplace_back("shard_size", std::to_string(s.shard_size));
    kv.emplace_back("shards_per_client", std::to_string(s.shards_per_client));
    kv.emplace_back("dataset", source_name(s.source));
    if (s.source == DataSource::Synthetic) {
        kv.emplace_back("synth_classes", std::to_string(s.synth.classes));
        kv.emplace_back("synth_per_class", std::to_string(s.synth.per_class));
        kv.emplace_back("synth_test_per_class", std::to_string(s.synth.test_per_class));
        kv.emplace_back("synth_dim", std::to_string(s.synth.dim));
        kv.emplace_back("synth_separation", format_double(s.synth.separation));
    } else {
        kv.emplace_back("mnist_train_images", s.mnist.train_images);
        kv.emplace_back("mnist_train_labels", s.mnist.train_labels);
        kv.emplace_back("mnist_test_images", s.mnist.test_images);
        kv.emplace_back("mnist_test_labels", s.mnist.test_labels);
    }
    {
        std::string seeds;
        for (std::size_t i = 0; i < s.seeds.size(); ++i) {
            seeds += (i ? "," : "") + std::to_string(s.seeds[i]);
        }
        kv.emplace_back("seeds", seeds);
    }
    kv.emplace_back("parallel_seeds", s.parallel_seeds ? "true" : "false");
    kv.emplace_back("threads", std::to_string(s.fl.threads));
    kv.emplace_back("out_dir", s.out_dir);
    return kv;
}

void write_effective_config(const ExperimentSpec& s, std::ostream& out) {
    for (const auto& [key, value] : effective_config_pairs(s)) {
        out << key << " = " << value << "\n";
    }
}

data::SplitPolicy derive_split_policy(const ExperimentSpec& s) {
    if (s.fl.mode == fed::Mode::Pfl) {
        return s.fl.prior_mode == fed::PriorMode::Random ? data::SplitPolicy::RandomPriorVal
                                                         : data::SplitPolicy::LearntPriorNonIid;
    }
    if (s.fl.prior_mode == fed::PriorMode::Random) return data::SplitPolicy::None;
    return s.partition == data::PartitionMode::IidBalanced ? data::SplitPolicy::LearntPriorIid
                                                           : data::SplitPolicy::LearntPriorNonIid;
}

std::array<int, 20> histogram20(std::span<const double> values) {
    std::array<int, 20> bins{};
    for (double v : values) {
        int b = static_cast<int>(std::floor(v * 20.0));
        b = std::clamp(b, 0, 19);
        ++bins[b];
    }
    return bins;
}

namespace {

struct PipelineData {
    data::Dataset train;
    data::Dataset test;  // synthetic/mnist held-out set
    std::vector<data::ClientShard> shards;
    snn::Arch arch;
    long m_total = 0;
};

PipelineData prepare_data(const ExperimentSpec& spec, std::uint64_t seed) {
    PipelineData out;
    if (spec.source == DataSource::Synthetic) {
        out.train = data::gen_synthetic(spec.synth.classes, spec.synth.per_class, spec.synth.dim,
                                        spec.synth.separation, rng::derive(seed, rng::kDataGen, 0));
        out.test = data::gen_synthetic(spec.synth.classes, spec.synth.test_per_class,
                                       spec.synth.dim, spec.synth.separation,
                                       rng::derive(seed, rng::kDataGen, 1));
    } else {
        out.train = data::load_mnist_idx(spec.mnist.train_images, spec.mnist.train_labels);
        out.test = data::load_mnist_idx(spec.mnist.test_images, spec.mnist.test_labels);
    }
    if (spec.partition == data::PartitionMode::IidBalanced) {
        out.shards = data::partition_iid_balanced(out.train, spec.fl.num_clients,
                                                  spec.per_class_count,
                                                  rng::derive(seed, rng::kPartition));
    } else {
        out.shards = data::partition_sorted_shards(out.train, spec.fl.num_clients, spec.shard_size,
                                                   spec.shards_per_client,
                                                   rng::derive(seed, rng::kPartition));
    }
    const data::SplitPolicy policy = derive_split_policy(spec);
    for (auto& shard : out.shards) {
        data::apply_split_policy(out.train, shard, policy,
                                 rng::derive(seed, rng::kSplit,
                                             static_cast<std::uint64_t>(shard.client_id)));
        out.m_total += shard.m_i;
    }
    out.arch.input_dim = out.train.dim;
    out.arch.hidden_dims = spec.hidden_dims;
    out.arch.output_dim = out.train.num_classes;
    return out;
}

std::string seed_base(const ExperimentSpec& spec, std::uint64_t seed) {
    return (fs::path(spec.out_dir) / (spec.run_id + "_seed" + std::to_string(seed))).string();
}

json certificate_json(const certify::BoundCertificate& c) {
    json j;
    j["client_id"] = c.client_id;
    j["risk_bound"] = c.risk_bound;
    j["mc_risk"] = c.mc_risk;
    j["mc_risk_inverted"] = c.mc_risk_inverted;
    j["kl_div"] = c.kl_div;
    j["m"] = c.m;
    j["n_mc"] = c.n_mc;
    j["delta"] = c.delta;
    j["delta_prime"] = c.delta_prime;
    j["loss"] = loss_name(c.loss);
    return j;
}

void write_text_file(const std::string& path, const std::string& content,
                     std::vector<std::string>& files) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out << content;
    if (!out) throw DataError("write failed for " + path);
    files.push_back(path);
}

const char* kFlsobHeader =
    "run_id\tseed\tmode\tprior\tobjective\tclients\tkl_penalty\tbound_01\ttest_err_01\t"
    "kl_over_m\tmc_risk\tm\tn_mc\n";

std::string flsob_row_line(const ReportRow& r) {
    std::ostringstream os;
    os << r.run_id << '\t' << r.seed << '\t' << r.mode << '\t' << r.prior << '\t' << r.objective
       << '\t' << r.num_clients << '\t' << format_double(r.kl_penalty) << '\t'
       << format_double(r.bound_01) << '\t' << format_double(r.test_err_01) << '\t'
       << format_double(r.kl_over_m) << '\t' << format_double(r.mc_risk) << '\t' << r.m << '\t'
       << r.n_mc << '\n';
    return os.str();
}

const char* kPflHeader =
    "run_id\tseed\tmode\tprior\tobjective\tclients\tkl_penalty\tmetric\tmin\tmean\tmax\n";

const char* kCertificatesHeader =
    "run_id\tseed\tclient_id\tprior\tobjective\tloss\tbound\tmc_risk\tkl_over_m\tm\tn_mc\t"
    "delta\tdelta_prime\n";

std::string certificates_table(const ExperimentSpec& spec, std::uint64_t seed,
                               std::span<const certify::BoundCertificate> certs) {
    std::ostringstream os;
    os << kCertificatesHeader;
    for (const auto& c : certs) {
        os << spec.run_id << '\t' << seed << '\t' << c.client_id << '\t'
           << prior_name(spec.fl.prior_mode) << '\t' << objective_name(spec.fl.objective) << '\t'
           << loss_name(c.loss) << '\t' << format_double(c.risk_bound) << '\t'
           << format_double(c.mc_risk) << '\t'
           << format_double(c.kl_div / static_cast<double>(c.m)) << '\t' << c.m << '\t' << c.n_mc
           << '\t' << format_double(c.delta) << '\t' << format_double(c.delta_prime) << '\n';
    }
    return os.str();
}

std::string pfl_metric_line(const ReportRow& r, const std::string& metric,
                            const certify::Summary& s) {
    std::ostringstream os;
    os << r.run_id << '\t' << r.seed << '\t' << r.mode << '\t' << r.prior << '\t' << r.objective
       << '\t' << r.num_clients << '\t' << format_double(r.kl_penalty) << '\t' << metric << '\t'
       << format_double(s.min) << '\t' << format_double(s.mean) << '\t' << format_double(s.max)
       << '\n';
    return os.str();
}

void write_rounds_log(const std::string& path, const std::vector<fed::RoundLog>& prior_logs,
                      const std::vector<fed::RoundLog>& posterior_logs,
                      std::vector<std::string>& files) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    if (!prior_logs.empty()) {
        out << "# phase prior\n";
        for (const auto& log : prior_logs) fed::append_round_log(out, log);
    }
    out << "# phase posterior\n";
    for (const auto& log : posterior_logs) fed::append_round_log(out, log);
    files.push_back(path);
}

json config_json(const ExperimentSpec& spec) {
    json j = json::object();
    for (const auto& [key, value] : effective_config_pairs(spec)) j[key] = value;
    return j;
}

}  // namespace

SeedResult run_one_seed(const ExperimentSpec& spec, std::uint64_t seed, int thread_override) {
    fs::create_directories(spec.out_dir);
    PipelineData pd = prepare_data(spec, seed);
    fed::FLConfig cfg = spec.fl;
    cfg.seed = seed;
    if (thread_override >= 0) cfg.threads = thread_override;

    SeedResult result;
    result.seed = seed;
    result.row.run_id = spec.run_id;
    result.row.seed = seed;
    result.row.mode = mode_name(cfg.mode);
    result.row.prior = prior_name(cfg.prior_mode);
    result.row.objective = objective_name(cfg.objective);
    result.row.num_clients = cfg.num_clients;
    result.row.kl_penalty = cfg.objective.kl_penalty;
    result.row.m = pd.m_total;
    result.row.n_mc = spec.n_mc;

    pacbayes::BoundBudget budget;
    budget.m = pd.m_total;
    budget.delta = cfg.delta;
    budget.delta_prime = spec.delta_prime;
    budget.n_mc = spec.n_mc;

    const std::string base = seed_base(spec, seed);
    json run_json;
    run_json["run_id"] = spec.run_id;
    run_json["seed"] = seed;
    run_json["config"] = config_json(spec);

    if (cfg.mode == fed::Mode::FlSob) {
        snn::GaussianNetParams prior = snn::init_prior_random(
            pd.arch, cfg.sigma_prior, rng::derive(seed, rng::kPriorInit));
        std::vector<fed::RoundLog> prior_logs;
        if (cfg.prior_mode == fed::PriorMode::Learnt) {
            fed::GenflResult prior_run = fed::run_fed_prior_erm(cfg, pd.train, pd.shards, prior);
            prior = std::move(prior_run.model.params);
            prior_logs = std::move(prior_run.logs);
        }
        fed::GenflResult posterior_run = fed::run_genfl(cfg, pd.train, pd.shards, prior);
        const snn::GaussianNetParams& posterior = posterior_run.model.params;

        certify::BoundCertificate cert = certify::fed_bound(
            pd.train, pd.shards, posterior, prior, budget, spec.cert_loss,
            spec.mc_coupled ? certify::McStreams::Coupled : certify::McStreams::PerClient, seed,
            cfg.threads);
        result.certs.push_back(cert);
        result.row.bound_01 = cert.risk_bound;
        result.row.mc_risk = cert.mc_risk;
        result.row.kl_over_m = cert.kl_div / static_cast<double>(cert.m);
        result.row.test_err_01 =
            certify::stochastic_test_error(pd.test, posterior, spec.n_test_mc, seed, cfg.threads);

        fed::save_checkpoint(base + "_prior.ckpt", prior, 0);
        result.files.push_back(base + "_prior.ckpt");
        fed::save_checkpoint(base + "_model.ckpt", posterior, posterior_run.model.round);
        result.files.push_back(base + "_model.ckpt");
        write_rounds_log(base + "_rounds.log", prior_logs, posterior_run.logs, result.files);
        write_text_file(base + "_report.tsv", kFlsobHeader + flsob_row_line(result.row),
                        result.files);
        write_text_file(base + "_certificates.tsv", certificates_table(spec, seed, result.certs),
                        result.files);

        run_json["certificates"] = json::array({certificate_json(cert)});
        run_json["test_error"] = result.row.test_err_01;
    } else {
        fed::PflResult pfl = fed::run_pfl(cfg, pd.train, pd.shards, pd.arch);
        result.certs = certify::personalised_bounds(pd.train, pd.shards, pfl.posteriors,
                                                    pfl.shared_prior, budget, spec.cert_loss, seed,
                                                    cfg.threads);
        result.summary = certify::summarize_certificates(result.certs);

        result.test_errors.assign(pd.shards.size(), 0.0);
        std::vector<double> prior_errors(pd.shards.size(), 0.0);
        parallel_for(static_cast<int>(pd.shards.size()), cfg.threads, [&](int k) {
            const auto& shard = pd.shards[k];
            result.test_errors[k] = certify::mc_mean_risk(
                pd.train, shard.split.validation, pfl.posteriors[k].second, spec.n_test_mc,
                certify::LossKind::ZeroOne, cfg.p_min,
                rng::derive(seed, rng::kTestEval, 2, static_cast<std::uint64_t>(shard.client_id)),
                1);
            prior_errors[k] = certify::mc_mean_risk(
                pd.train, shard.split.validation, pfl.shared_prior, spec.n_test_mc,
                certify::LossKind::ZeroOne, cfg.p_min,
                rng::derive(seed, rng::kTestEval, 3, static_cast<std::uint64_t>(shard.client_id)),
                1);
        });
        result.shared_prior_test_error =
            certify::summarize(prior_errors).mean;
        certify::Summary test_summary = certify::summarize(result.test_errors);

        result.row.bound_01 = result.summary.risk_bound.mean;
        result.row.mc_risk = result.summary.mc_risk.mean;
        result.row.test_err_01 = test_summary.mean;
        double kl_over_m = 0.0;
        for (const auto& c : result.certs) {
            kl_over_m += c.kl_div / static_cast<double>(c.m);
        }
        result.row.kl_over_m = kl_over_m / static_cast<double>(result.certs.size());

        fed::save_checkpoint(base + "_prior.ckpt", pfl.shared_prior, 0);
        result.files.push_back(base + "_prior.ckpt");
        write_rounds_log(base + "_rounds.log", pfl.prior_logs, {}, result.files);

        std::string report = kPflHeader;
        report += pfl_metric_line(result.row, "bound_01", result.summary.risk_bound);
        report += pfl_metric_line(result.row, "test_err_01", test_summary);
        report += pfl_metric_line(result.row, "mc_risk", result.summary.mc_risk);
        report += pfl_metric_line(result.row, "kl_div", result.summary.kl_div);
        write_text_file(base + "_report.tsv", report, result.files);
        write_text_file(base + "_certificates.tsv", certificates_table(spec, seed, result.certs),
                        result.files);

        std::vector<double> bounds;
        for (const auto& c : result.certs) bounds.push_back(c.risk_bound);
        std::array<int, 20> bound_hist = histogram20(bounds);
        std::array<int, 20> test_hist = histogram20(result.test_errors);
        std::ostringstream hist;
        hist << "bin_lo\tbin_hi\tbound_count\ttest_err_count\n";
        for (int b = 0; b < 20; ++b) {
            hist << format_double(b / 20.0) << '\t' << format_double((b + 1) / 20.0) << '\t'
                 << bound_hist[b] << '\t' << test_hist[b] << '\n';
        }
        write_text_file(base + "_hist.tsv", hist.str(), result.files);

        json certs = json::array();
        for (const auto& c : result.certs) certs.push_back(certificate_json(c));
        run_json["certificates"] = certs;
        run_json["test_errors"] = result.test_errors;
        run_json["shared_prior_test_error"] = result.shared_prior_test_error;
        run_json["histogram"] = {{"bounds", bound_hist}, {"test_errors", test_hist}};
    }

    {
        std::ostringstream cfg_text;
        write_effective_config(spec, cfg_text);
        write_text_file(base + "_effective.cfg", cfg_text.str(), result.files);
    }
    write_text_file(base + "_run.json", run_json.dump(2) + "\n", result.files);
    return result;
}

std::vector<SeedResult> run_experiment(const ExperimentSpec& spec) {
    fs::create_directories(spec.out_dir);
    std::vector<SeedResult> results(spec.seeds.size());
    if (spec.parallel_seeds && spec.seeds.size() > 1) {
        // per-seed work becomes the unit of parallelism
        parallel_for(static_cast<int>(spec.seeds.size()), spec.fl.threads,
                     [&](int i) { results[i] = run_one_seed(spec, spec.seeds[i], 1); });
    } else {
        for (std::size_t i = 0; i < spec.seeds.size(); ++i) {
            results[i] = run_one_seed(spec, spec.seeds[i]);
        }
    }

    // cross-seed roll-up
    std::string summary;
    if (spec.fl.mode == fed::Mode::FlSob) {
        summary = kFlsobHeader;
        for (const auto& r : results) summary += flsob_row_line(r.row);
    } else {
        summary = kPflHeader;
        for (const auto& r : results) {
            summary += pfl_metric_line(r.row, "bound_01", r.summary.risk_bound);
            summary += pfl_metric_line(r.row, "test_err_01", certify::summarize(r.test_errors));
        }
    }
    const std::string path = (fs::path(spec.out_dir) / (spec.run_id + "_summary.tsv")).string();
    std::vector<std::string> files;
    write_text_file(path, summary, files);
    return results;
}

ReportCheck verify_run_dir(const std::string& dir, std::ostream& out) {
    ReportCheck check;
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string p = entry.path().string();
        if (p.size() > 9 && p.substr(p.size() - 9) == "_run.json") paths.push_back(p);
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw DataError("no *_run.json files in " + dir);
    for (const auto& path : paths) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open " + path);
        json j = json::parse(in, nullptr, true);
        ++check.files_checked;
        int local_mismatches = 0;
        for (const auto& c : j.at("certificates")) {
            ++check.certificates_checked;
            const double mc_risk = c.at("mc_risk").get<double>();
            const double kl_div = c.at("kl_div").get<double>();
            const long m = c.at("m").get<long>();
            const long n_mc = c.at("n_mc").get<long>();
            const double delta = c.at("delta").get<double>();
            const double delta_prime = c.at("delta_prime").get<double>();
            // straight-line recomputation over the independent bisection route
            const double inv = pacbayes::kl_inverse_bisect(
                mc_risk, std::log(2.0 / delta_prime) / static_cast<double>(n_mc), 1e-12);
            const double bound = pacbayes::kl_inverse_bisect(
                inv,
                (kl_div + pacbayes::log_budget_term(m, delta)) / static_cast<double>(m), 1e-12);
            if (std::abs(inv - c.at("mc_risk_inverted").get<double>()) > 1e-9 ||
                std::abs(bound - c.at("risk_bound").get<double>()) > 1e-9) {
                ++local_mismatches;
            }
        }
        check.mismatches += local_mismatches;
        out << path << ": " << j.at("certificates").size() << " certificates, "
            << local_mismatches << " mismatches\n";
    }
    return check;
}

SeedResult certify_checkpoint(const ExperimentSpec& spec, std::uint64_t seed,
                              const std::string& model_checkpoint,
                              const std::string& prior_checkpoint) {
    if (spec.fl.mode != fed::Mode::FlSob) {
        throw ConfigError("certify works on flsob checkpoints; personalised runs are certified "
                          "during 'run'");
    }
    PipelineData pd = prepare_data(spec, seed);
    fed::GlobalModel model = fed::load_checkpoint(model_checkpoint);
    if (model.params.arch != pd.arch) {
        throw DataError("checkpoint architecture does not match the configured dataset");
    }
    snn::GaussianNetParams prior;
    if (prior_checkpoint.empty()) {
        prior = snn::init_prior_random(pd.arch, spec.fl.sigma_prior,
                                       rng::derive(seed, rng::kPriorInit));
    } else {
        prior = fed::load_checkpoint(prior_checkpoint).params;
        if (prior.arch != pd.arch) {
            throw DataError("prior checkpoint architecture does not match the configured dataset");
        }
    }
    pacbayes::BoundBudget budget;
    budget.m = pd.m_total;
    budget.delta = spec.fl.delta;
    budget.delta_prime = spec.delta_prime;
    budget.n_mc = spec.n_mc;

    SeedResult result;
    result.seed = seed;
    certify::BoundCertificate cert = certify::fed_bound(
        pd.train, pd.shards, model.params, prior, budget, spec.cert_loss,
        spec.mc_coupled ? certify::McStreams::Coupled : certify::McStreams::PerClient, seed,
        spec.fl.threads);
    result.certs.push_back(cert);
    result.row.run_id = spec.run_id;
    result.row.seed = seed;
    result.row.mode = mode_name(spec.fl.mode);
    result.row.prior = prior_name(spec.fl.prior_mode);
    result.row.objective = objective_name(spec.fl.objective);
    result.row.num_clients = spec.fl.num_clients;
    result.row.kl_penalty = spec.fl.objective.kl_penalty;
    result.row.m = cert.m;
    result.row.n_mc = cert.n_mc;
    result.row.bound_01 = cert.risk_bound;
    result.row.mc_risk = cert.mc_risk;
    result.row.kl_over_m = cert.kl_div / static_cast<double>(cert.m);
    result.row.test_err_01 = certify::stochastic_test_error(pd.test, model.params, spec.n_test_mc,
                                                            seed, spec.fl.threads);
    return result;
}

void inspect_partition(const ExperimentSpec& spec, std::ostream& out) {
    const std::uint64_t seed = spec.seeds.front();
    PipelineData pd = prepare_data(spec, seed);
    out << "dataset: n=" << pd.train.size() << " dim=" << pd.train.dim
        << " classes=" << pd.train.num_classes << "\n";
    out << "policy: ";
    switch (derive_split_policy(spec)) {
        case data::SplitPolicy::None: out << "none"; break;
        case data::SplitPolicy::RandomPriorVal: out << "random-prior (10% validation)"; break;
        case data::SplitPolicy::LearntPriorIid: out << "learnt-prior halves"; break;
        case data::SplitPolicy::LearntPriorNonIid: out << "learnt-prior 10/40/50"; break;
    }
    out << "\nclient\tsize\tprior\tposterior\tvalidation\tlabels\n";
    for (const auto& shard : pd.shards) {
        std::vector<int> counts(pd.train.num_classes, 0);
        for (int idx : shard.indices) ++counts[pd.train.labels[idx]];
        out << shard.client_id << '\t' << shard.indices.size() << '\t' << shard.split.prior.size()
            << '\t' << shard.split.posterior.size() << '\t' << shard.split.validation.size()
            << '\t';
        bool first = true;
        for (int c = 0; c < pd.train.num_classes; ++c) {
            if (counts[c] > 0) {
                out << (first ? "" : ",") << c << ":" << counts[c];
                first = false;
            }
        }
        out << "\n";
    }
    out << "total m = " << pd.m_total << "\n";
}

}  // namespace genfl::cli
