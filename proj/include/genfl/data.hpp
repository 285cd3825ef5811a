#pragma once

// Dataset ingestion (IDX files, synthetic blobs), client partitioning and the
// per-client prior/posterior/validation splits.

#include <cstdint>
#include <string>
#include <vector>

namespace genfl::data {

struct Dataset {
    std::vector<float> features;  // [N x dim], row-major, values in [0,1]
    std::vector<int> labels;
    int num_classes = 0;
    int dim = 0;

    int size() const { return static_cast<int>(labels.size()); }
    const float* row(int i) const { return features.data() + static_cast<std::size_t>(i) * dim; }
};

struct Split {
    std::vector<int> prior;
    std::vector<int> posterior;
    std::vector<int> validation;
};

struct ClientShard {
    int client_id = -1;
    std::vector<int> indices;  // into the parent Dataset
    Split split;
    int m_i = 0;  // posterior-usable size, used for objective and bound accounting
};

enum class PartitionMode { IidBalanced, SortedShards };

// None             -> everything goes to the posterior split
// RandomPriorVal   -> 10% validation, 90% posterior
// LearntPriorIid   -> class-proportional halves (prior / posterior)
// LearntPriorNonIid-> 10% validation, 40% prior (class-proportional), 50% posterior
enum class SplitPolicy { None, RandomPriorVal, LearntPriorIid, LearntPriorNonIid };

struct PartitionSpec {
    PartitionMode mode = PartitionMode::IidBalanced;
    int num_clients = 1;
    int per_class_count = 0;     // iid mode; 0 = as many as the data allows
    int shard_size = 300;        // sorted-shards mode
    int shards_per_client = 2;   // sorted-shards mode
    SplitPolicy policy = SplitPolicy::None;
};

// Big-endian IDX pair (magic 0x00000803 images / 0x00000801 labels); pixels
// scaled to [0,1] by division by 255. Throws DataError on malformed files.
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);

// Gaussian blobs with unit within-class standard deviation; centroid k sits at
// (class_separation/sqrt(2)) * e_k so centroids are pairwise exactly
// class_separation apart. The affine map to [0,1] depends only on
// (num_classes, d, class_separation), so datasets drawn with different seeds
// share one feature space. Requires d >= num_classes.
Dataset gen_synthetic(int num_classes, int n_per_class, int d, double class_separation,
                      std::uint64_t seed);

// Disjoint shards with exactly per_class_count samples of every class each.
std::vector<ClientShard> partition_iid_balanced(const Dataset& ds, int num_clients,
                                                int per_class_count, std::uint64_t seed);

// Label-sorted chunks of shard_size contiguous samples, shards_per_client
// chunks dealt to each client uniformly at random without replacement.
std::vector<ClientShard> partition_sorted_shards(const Dataset& ds, int num_clients,
                                                 int shard_size, int shards_per_client,
                                                 std::uint64_t seed);

void apply_split_policy(const Dataset& ds, ClientShard& shard, SplitPolicy policy,
                        std::uint64_t seed);

// Delimited-text fixture round trip for synthetic datasets.
void save_dataset_tsv(const Dataset& ds, const std::string& path);
Dataset load_dataset_tsv(const std::string& path);

}  // namespace genfl::data
