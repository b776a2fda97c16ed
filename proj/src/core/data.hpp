#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/models.hpp"
#include "core/numerics.hpp"

namespace fedent {

struct LabeledDataset {
    Batch examples;
    std::string name;
    int num_classes = 0;

    std::size_t size() const { return examples.size(); }
};

// IDX ingestion (the MNIST container format): big-endian 32-bit magic
// 0x00000803 for images with dims [count, rows, cols], 0x00000801 for labels
// with dims [count], followed by unsigned bytes. Pixels are scaled to [0, 1].
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);

// Gaussian class blobs with means `separation` apart (class m sits on axis
// m mod input_dim, sign-flipped on wrap, at distance separation/sqrt(2) from
// the origin so distinct axes are exactly `separation` apart).
LabeledDataset make_synthetic(int num_classes, int per_class, int input_dim,
                              double separation, RngStream& rng);

enum class PartitionScheme { iid, dirichlet, pathological };

struct PartitionSpec {
    PartitionScheme scheme = PartitionScheme::iid;
    int num_clients = 1;
    double alpha_d = 1.0;        // dirichlet only
    int shards_per_client = 2;   // pathological only
    std::uint64_t seed = 0;
};

struct ClientPartition {
    int client_id = 0;
    std::vector<std::uint32_t> indices;
    double theta = 0.0;  // D_i / sum_j D_j

    std::size_t data_size() const { return indices.size(); }
};

// Disjoint cover of the dataset across num_clients clients. Every scheme is a
// pure function of (dataset, spec).
std::vector<ClientPartition> partition(const LabeledDataset& dataset, const PartitionSpec& spec);

// Per-client label histogram, |clients| x num_classes.
std::vector<std::vector<std::uint64_t>> label_histograms(const LabeledDataset& dataset,
                                                         const std::vector<ClientPartition>& parts);

}  // namespace fedent
