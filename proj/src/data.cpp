#include "genfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "genfl/common.hpp"
#include "genfl/rng.hpp"

namespace genfl::data {

namespace {

std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
    unsigned char buf[4];
    if (!in.read(reinterpret_cast<char*>(buf), 4)) {
        throw DataError("truncated IDX header in " + path);
    }
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
           (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

void shuffle_ints(std::vector<int>& v, rng::Stream& stream) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
        int j = static_cast<int>(stream.next_below(static_cast<std::uint64_t>(i) + 1));
        std::swap(v[i], v[j]);
    }
}

std::vector<std::vector<int>> positions_by_class(const Dataset& ds,
                                                 const std::vector<int>& indices) {
    std::vector<std::vector<int>> by_class(ds.num_classes);
    for (int idx : indices) by_class[ds.labels[idx]].push_back(idx);
    return by_class;
}

// Integer apportionment of `total` across buckets proportional to counts,
// by largest remainder; sums to exactly `total`.
std::vector<int> apportion(const std::vector<int>& counts, int total) {
    const int sum = std::accumulate(counts.begin(), counts.end(), 0);
    std::vector<int> out(counts.size(), 0);
    if (sum == 0 || total == 0) return out;
    std::vector<std::pair<double, int>> rema;
    int assigned = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        double exact = static_cast<double>(counts[c]) * total / sum;
        out[c] = static_cast<int>(exact);
        out[c] = std::min(out[c], counts[c]);
        assigned += out[c];
        rema.push_back({exact - out[c], static_cast<int>(c)});
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t k = 0; assigned < total && k < rema.size(); ++k) {
        int c = rema[k].second;
        if (out[c] < counts[c]) {
            ++out[c];
            ++assigned;
        }
    }
    if (assigned != total) throw DataError("split policy: infeasible class apportionment");
    return out;
}

}  // namespace

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw DataError("cannot open images file " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw DataError("cannot open labels file " + labels_path);

    const std::uint32_t img_magic = read_be_u32(img, images_path);
    if (img_magic != 0x00000803u) {
        throw DataError("bad magic number in " + images_path + " (expected 0x00000803)");
    }
    const std::uint32_t n_images = read_be_u32(img, images_path);
    const std::uint32_t rows = read_be_u32(img, images_path);
    const std::uint32_t cols = read_be_u32(img, images_path);

    const std::uint32_t lab_magic = read_be_u32(lab, labels_path);
    if (lab_magic != 0x00000801u) {
        throw DataError("bad magic number in " + labels_path + " (expected 0x00000801)");
    }
    const std::uint32_t n_labels = read_be_u32(lab, labels_path);
    if (n_images != n_labels) {
        throw DataError("image/label count mismatch: " + std::to_string(n_images) + " vs " +
                        std::to_string(n_labels));
    }
    if (n_images == 0) throw DataError("empty IDX dataset in " + images_path);

    const std::size_t dim = static_cast<std::size_t>(rows) * cols;
    Dataset ds;
    ds.dim = static_cast<int>(dim);
    ds.features.resize(n_images * dim);
    ds.labels.resize(n_images);

    std::vector<unsigned char> pixel(dim);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        if (!img.read(reinterpret_cast<char*>(pixel.data()), static_cast<std::streamsize>(dim))) {
            throw DataError("truncated image payload in " + images_path);
        }
        float* out = ds.features.data() + static_cast<std::size_t>(i) * dim;
        for (std::size_t j = 0; j < dim; ++j) {
            out[j] = static_cast<float>(pixel[j] / 255.0);
        }
    }
    std::vector<unsigned char> raw_labels(n_images);
    if (!lab.read(reinterpret_cast<char*>(raw_labels.data()), n_images)) {
        throw DataError("truncated label payload in " + labels_path);
    }
    int max_label = 0;
    for (std::uint32_t i = 0; i < n_images; ++i) {
        ds.labels[i] = raw_labels[i];
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.num_classes = max_label + 1;
    return ds;
}

Dataset gen_synthetic(int num_classes, int n_per_class, int d, double class_separation,
                      std::uint64_t seed) {
    if (num_classes < 1 || n_per_class < 1 || d < 1) {
        throw DataError("gen_synthetic: counts must be positive");
    }
    if (num_classes > d) throw DataError("gen_synthetic: requires d >= num_classes");
    if (!(class_separation >= 0.0)) throw DataError("gen_synthetic: negative separation");

    const double coord = class_separation / std::sqrt(2.0);
    // raw coordinates live in [centroid - noise, centroid + noise]; a +-8 sigma
    // margin makes the affine map independent of the sample
    const double lo = -8.0;
    const double hi = coord + 8.0;
    const double scale = 1.0 / (hi - lo);

    rng::Stream stream(seed);
    Dataset ds;
    ds.num_classes = num_classes;
    ds.dim = d;
    const int n = num_classes * n_per_class;
    ds.features.resize(static_cast<std::size_t>(n) * d);
    ds.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        const int c = i % num_classes;  // interleaved so any prefix is balanced
        ds.labels[i] = c;
        float* out = ds.features.data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) {
            double x = stream.next_normal() + (j == c ? coord : 0.0);
            x = (x - lo) * scale;
            out[j] = static_cast<float>(std::clamp(x, 0.0, 1.0));
        }
    }
    return ds;
}

std::vector<ClientShard> partition_iid_balanced(const Dataset& ds, int num_clients,
                                                int per_class_count, std::uint64_t seed) {
    if (num_clients < 1) throw DataError("partition: num_clients must be >= 1");
    std::vector<int> all(ds.size());
    std::iota(all.begin(), all.end(), 0);
    auto by_class = positions_by_class(ds, all);

    int min_freq = ds.size();
    for (const auto& v : by_class) min_freq = std::min(min_freq, static_cast<int>(v.size()));
    if (per_class_count == 0) per_class_count = min_freq / num_clients;
    const long need = static_cast<long>(per_class_count) * num_clients;
    for (int c = 0; c < ds.num_classes; ++c) {
        const long have = static_cast<long>(by_class[c].size());
        if (have < need) {
            throw DataError("partition: class " + std::to_string(c) + " has " +
                            std::to_string(have) + " samples, needs " + std::to_string(need) +
                            " (short by " + std::to_string(need - have) + ")");
        }
    }
    if (per_class_count < 1) throw DataError("partition: per_class_count resolved to 0");

    rng::Stream stream(seed);
    for (auto& v : by_class) shuffle_ints(v, stream);

    long dropped = 0;
    for (const auto& v : by_class) dropped += static_cast<long>(v.size()) - need;
    if (dropped > 0) {
        std::cerr << "partition: dropping " << dropped << " unassigned samples\n";
    }

    std::vector<ClientShard> shards(num_clients);
    for (int k = 0; k < num_clients; ++k) {
        shards[k].client_id = k;
        for (int c = 0; c < ds.num_classes; ++c) {
            const int base = k * per_class_count;
            for (int j = 0; j < per_class_count; ++j) {
                shards[k].indices.push_back(by_class[c][base + j]);
            }
        }
        shards[k].split.posterior = shards[k].indices;
        shards[k].m_i = static_cast<int>(shards[k].indices.size());
    }
    return shards;
}

std::vector<ClientShard> partition_sorted_shards(const Dataset& ds, int num_clients,
                                                 int shard_size, int shards_per_client,
                                                 std::uint64_t seed) {
    if (num_clients < 1 || shard_size < 1 || shards_per_client < 1) {
        throw DataError("partition: counts must be positive");
    }
    const long need = static_cast<long>(num_clients) * shards_per_client * shard_size;
    if (need > ds.size()) {
        throw DataError("partition: need " + std::to_string(need) + " samples, dataset has " +
                        std::to_string(ds.size()));
    }
    std::vector<int> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&ds](int a, int b) { return ds.labels[a] < ds.labels[b]; });

    const int num_chunks = ds.size() / shard_size;
    std::vector<int> chunk_ids(num_chunks);
    std::iota(chunk_ids.begin(), chunk_ids.end(), 0);
    rng::Stream stream(seed);
    shuffle_ints(chunk_ids, stream);

    const long used_chunks = static_cast<long>(num_clients) * shards_per_client;
    const long dropped = ds.size() - used_chunks * shard_size;
    if (dropped > 0) {
        std::cerr << "partition: dropping " << dropped << " unassigned samples\n";
    }

    std::vector<ClientShard> shards(num_clients);
    for (int k = 0; k < num_clients; ++k) {
        shards[k].client_id = k;
        for (int s = 0; s < shards_per_client; ++s) {
            const int chunk = chunk_ids[k * shards_per_client + s];
            for (int j = 0; j < shard_size; ++j) {
                shards[k].indices.push_back(order[static_cast<std::size_t>(chunk) * shard_size + j]);
            }
        }
        shards[k].split.posterior = shards[k].indices;
        shards[k].m_i = static_cast<int>(shards[k].indices.size());
    }
    return shards;
}

void apply_split_policy(const Dataset& ds, ClientShard& shard, SplitPolicy policy,
                        std::uint64_t seed) {
    const int n = static_cast<int>(shard.indices.size());
    if (n < 1) throw DataError("split policy: empty shard");
    shard.split = Split{};
    rng::Stream stream(seed);

    switch (policy) {
        case SplitPolicy::None: {
            shard.split.posterior = shard.indices;
            break;
        }
        case SplitPolicy::RandomPriorVal: {
            if (n < 10) throw DataError("split policy: shard too small for a 10% validation split");
            std::vector<int> pool = shard.indices;
            shuffle_ints(pool, stream);
            const int n_val = n / 10;
            shard.split.validation.assign(pool.begin(), pool.begin() + n_val);
            shard.split.posterior.assign(pool.begin() + n_val, pool.end());
            break;
        }
        case SplitPolicy::LearntPriorIid: {
            if (n < 2) throw DataError("split policy: shard too small to halve");
            auto by_class = positions_by_class(ds, shard.indices);
            for (auto& v : by_class) {
                shuffle_ints(v, stream);
                const int half = static_cast<int>(v.size()) / 2;
                shard.split.prior.insert(shard.split.prior.end(), v.begin(), v.begin() + half);
                shard.split.posterior.insert(shard.split.posterior.end(), v.begin() + half,
                                             v.end());
            }
            break;
        }
        case SplitPolicy::LearntPriorNonIid: {
            if (n < 10) throw DataError("split policy: shard too small for a 10/40/50 split");
            std::vector<int> pool = shard.indices;
            shuffle_ints(pool, stream);
            const int n_val = n / 10;
            shard.split.validation.assign(pool.begin(), pool.begin() + n_val);
            std::vector<int> rest(pool.begin() + n_val, pool.end());
            // the prior draw respects class proportions of the remainder
            auto by_class = positions_by_class(ds, rest);
            std::vector<int> counts;
            counts.reserve(by_class.size());
            for (const auto& v : by_class) counts.push_back(static_cast<int>(v.size()));
            const int n_prior = (n * 4) / 10;
            std::vector<int> take = apportion(counts, n_prior);
            for (std::size_t c = 0; c < by_class.size(); ++c) {
                auto& v = by_class[c];
                shuffle_ints(v, stream);
                shard.split.prior.insert(shard.split.prior.end(), v.begin(), v.begin() + take[c]);
                shard.split.posterior.insert(shard.split.posterior.end(), v.begin() + take[c],
                                             v.end());
            }
            break;
        }
    }
    shard.m_i = static_cast<int>(shard.split.posterior.size());
    if (shard.m_i == 0) throw DataError("split policy: posterior split came out empty");
}

void save_dataset_tsv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "# dim=" << ds.dim << " classes=" << ds.num_classes << "\n";
    char buf[64];
    for (int i = 0; i < ds.size(); ++i) {
        out << ds.labels[i];
        const float* row = ds.row(i);
        for (int j = 0; j < ds.dim; ++j) {
            std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(row[j]));
            out << '\t' << buf;
        }
        out << '\n';
    }
    if (!out) throw DataError("write failed for " + path);
}

Dataset load_dataset_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string header;
    std::getline(in, header);
    Dataset ds;
    if (std::sscanf(header.c_str(), "# dim=%d classes=%d", &ds.dim, &ds.num_classes) != 2) {
        throw DataError("bad dataset header in " + path);
    }
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        int label;
        if (!(ss >> label)) throw DataError("bad dataset row in " + path);
        ds.labels.push_back(label);
        for (int j = 0; j < ds.dim; ++j) {
            double v;
            if (!(ss >> v)) throw DataError("short dataset row in " + path);
            ds.features.push_back(static_cast<float>(v));
        }
    }
    if (ds.labels.empty()) throw DataError("empty dataset in " + path);
    for (int label : ds.labels) {
        if (label < 0 || label >= ds.num_classes) throw DataError("label out of range in " + path);
    }
    return ds;
}

}  // namespace genfl::data
