#include "core/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace fedent {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::string& path, std::size_t offset) {
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
        fail(ErrorKind::io, path + ": truncated at byte offset " + std::to_string(offset));
    }
    return (static_cast<std::uint32_t>(bytes[0]) << 24) | (static_cast<std::uint32_t>(bytes[1]) << 16) |
           (static_cast<std::uint32_t>(bytes[2]) << 8) | static_cast<std::uint32_t>(bytes[3]);
}

void assign_theta(std::vector<ClientPartition>& parts, std::size_t total) {
    for (ClientPartition& part : parts) {
        part.theta = static_cast<double>(part.indices.size()) / static_cast<double>(total);
    }
}

void require_nonempty_clients(const std::vector<ClientPartition>& parts) {
    for (const ClientPartition& part : parts) {
        if (part.indices.empty()) {
            fail(ErrorKind::config,
                 "client " + std::to_string(part.client_id) +
                     " received zero examples; use a larger dataset or fewer clients");
        }
    }
}

std::vector<ClientPartition> partition_iid(const LabeledDataset& dataset, const PartitionSpec& spec) {
    std::vector<std::uint32_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0u);
    RngStream rng(spec.seed, streams::id(streams::kPartition));
    rng.shuffle(order);

    std::vector<ClientPartition> parts(static_cast<std::size_t>(spec.num_clients));
    std::size_t base = dataset.size() / static_cast<std::size_t>(spec.num_clients);
    std::size_t extra = dataset.size() % static_cast<std::size_t>(spec.num_clients);
    std::size_t cursor = 0;
    for (int i = 0; i < spec.num_clients; ++i) {
        std::size_t take = base + (static_cast<std::size_t>(i) < extra ? 1 : 0);
        parts[static_cast<std::size_t>(i)].client_id = i;
        parts[static_cast<std::size_t>(i)].indices.assign(order.begin() + cursor, order.begin() + cursor + take);
        std::sort(parts[static_cast<std::size_t>(i)].indices.begin(), parts[static_cast<std::size_t>(i)].indices.end());
        cursor += take;
    }
    return parts;
}

// One Dirichlet draw of per-class proportions per client, then each example
// is assigned independently by its label's normalized per-client column. The
// draw happens in log space so concentration parameters like 1e-3 * prior
// survive instead of underflowing to an all-zero vector.
std::vector<ClientPartition> partition_dirichlet_once(const LabeledDataset& dataset,
                                                      const PartitionSpec& spec, int attempt) {
    int classes = dataset.num_classes;
    int clients = spec.num_clients;
    std::vector<double> prior(static_cast<std::size_t>(classes), 0.0);
    for (int label : dataset.examples.labels) prior[static_cast<std::size_t>(label)] += 1.0;
    for (double& v : prior) v /= static_cast<double>(dataset.size());

    RngStream rng(spec.seed, streams::id(streams::kPartition, static_cast<std::uint64_t>(attempt)));

    // q[i][m]: client i's proportion of class m, normalized per client.
    std::vector<std::vector<double>> q(static_cast<std::size_t>(clients),
                                       std::vector<double>(static_cast<std::size_t>(classes), 0.0));
    for (int i = 0; i < clients; ++i) {
        std::vector<double> log_draws(static_cast<std::size_t>(classes),
                                      -std::numeric_limits<double>::infinity());
        double top = -std::numeric_limits<double>::infinity();
        for (int m = 0; m < classes; ++m) {
            double shape = spec.alpha_d * prior[static_cast<std::size_t>(m)];
            if (shape <= 0.0) continue;
            log_draws[static_cast<std::size_t>(m)] = rng.log_gamma_draw(shape);
            top = std::max(top, log_draws[static_cast<std::size_t>(m)]);
        }
        double denom = 0.0;
        for (int m = 0; m < classes; ++m) {
            double& v = q[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)];
            v = std::isfinite(log_draws[static_cast<std::size_t>(m)])
                    ? std::exp(log_draws[static_cast<std::size_t>(m)] - top)
                    : 0.0;
            denom += v;
        }
        for (double& v : q[static_cast<std::size_t>(i)]) v /= denom;
    }

    // Per class, the categorical weights over clients.
    std::vector<std::vector<double>> class_cdf(static_cast<std::size_t>(classes));
    for (int m = 0; m < classes; ++m) {
        std::vector<double>& cdf = class_cdf[static_cast<std::size_t>(m)];
        cdf.resize(static_cast<std::size_t>(clients));
        double total = 0.0;
        for (int i = 0; i < clients; ++i) total += q[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)];
        double acc = 0.0;
        for (int i = 0; i < clients; ++i) {
            acc += total > 0.0 ? q[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)] / total
                               : 1.0 / static_cast<double>(clients);
            cdf[static_cast<std::size_t>(i)] = acc;
        }
        cdf.back() = 1.0;
    }

    std::vector<ClientPartition> parts(static_cast<std::size_t>(clients));
    for (int i = 0; i < clients; ++i) parts[static_cast<std::size_t>(i)].client_id = i;
    for (std::uint32_t idx = 0; idx < dataset.size(); ++idx) {
        int label = dataset.examples.labels[idx];
        const std::vector<double>& cdf = class_cdf[static_cast<std::size_t>(label)];
        double u = rng.uniform01();
        std::size_t chosen =
            static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        if (chosen >= cdf.size()) chosen = cdf.size() - 1;
        parts[chosen].indices.push_back(idx);
    }
    return parts;
}

std::vector<ClientPartition> partition_dirichlet(const LabeledDataset& dataset, const PartitionSpec& spec) {
    constexpr int kMaxAttempts = 10;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        std::vector<ClientPartition> parts = partition_dirichlet_once(dataset, spec, attempt);
        bool ok = std::all_of(parts.begin(), parts.end(),
                              [](const ClientPartition& p) { return !p.indices.empty(); });
        if (ok) return parts;
    }
    fail(ErrorKind::config,
         "dirichlet partition left a client empty after 10 re-seeds; "
         "use a larger dataset, fewer clients, or a larger alpha_d");
}

// Sort-by-label sharding. Shards are carved inside label groups so every
// shard is label-pure, which caps each client at shards_per_client distinct
// labels. Shard counts per label follow the label sizes (largest remainder),
// with at least one shard per nonempty label.
std::vector<ClientPartition> partition_pathological(const LabeledDataset& dataset, const PartitionSpec& spec) {
    int clients = spec.num_clients;
    int shards_per_client = spec.shards_per_client;
    int total_shards = clients * shards_per_client;

    std::vector<std::vector<std::uint32_t>> by_label(static_cast<std::size_t>(dataset.num_classes));
    for (std::uint32_t idx = 0; idx < dataset.size(); ++idx) {
        by_label[static_cast<std::size_t>(dataset.examples.labels[idx])].push_back(idx);
    }
    std::vector<std::size_t> nonempty;
    for (std::size_t m = 0; m < by_label.size(); ++m) {
        if (!by_label[m].empty()) nonempty.push_back(m);
    }
    if (static_cast<std::size_t>(total_shards) < nonempty.size()) {
        fail(ErrorKind::config, "pathological partition needs at least one shard per label; increase "
                                "num_clients or shards_per_client");
    }

    // Largest-remainder allocation of shard counts, floor 1 per label.
    std::vector<int> shard_count(by_label.size(), 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    int assigned = 0;
    for (std::size_t m : nonempty) {
        double quota = static_cast<double>(by_label[m].size()) / static_cast<double>(dataset.size()) *
                       static_cast<double>(total_shards);
        shard_count[m] = std::max(1, static_cast<int>(quota));
        shard_count[m] = std::min<int>(shard_count[m], static_cast<int>(by_label[m].size()));
        assigned += shard_count[m];
        remainders.emplace_back(quota - std::floor(quota), m);
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t r = 0; assigned < total_shards; r = (r + 1) % remainders.size()) {
        std::size_t m = remainders[r].second;
        if (shard_count[m] < static_cast<int>(by_label[m].size())) {
            ++shard_count[m];
            ++assigned;
        }
        // Every label saturated means the dataset is too small for the grid.
        bool any_room = false;
        for (std::size_t mm : nonempty) {
            if (shard_count[mm] < static_cast<int>(by_label[mm].size())) any_room = true;
        }
        if (!any_room) break;
    }
    if (assigned < total_shards) {
        fail(ErrorKind::config, "dataset too small for num_clients * shards_per_client shards");
    }

    std::vector<std::vector<std::uint32_t>> shards;
    shards.reserve(static_cast<std::size_t>(total_shards));
    for (std::size_t m : nonempty) {
        const std::vector<std::uint32_t>& pool = by_label[m];
        int count = shard_count[m];
        std::size_t base = pool.size() / static_cast<std::size_t>(count);
        std::size_t extra = pool.size() % static_cast<std::size_t>(count);
        std::size_t cursor = 0;
        for (int s = 0; s < count; ++s) {
            std::size_t take = base + (static_cast<std::size_t>(s) < extra ? 1 : 0);
            shards.emplace_back(pool.begin() + cursor, pool.begin() + cursor + take);
            cursor += take;
        }
    }

    std::vector<std::uint32_t> shard_order(shards.size());
    std::iota(shard_order.begin(), shard_order.end(), 0u);
    RngStream rng(spec.seed, streams::id(streams::kPartition));
    rng.shuffle(shard_order);

    std::vector<ClientPartition> parts(static_cast<std::size_t>(clients));
    for (int i = 0; i < clients; ++i) {
        ClientPartition& part = parts[static_cast<std::size_t>(i)];
        part.client_id = i;
        for (int s = 0; s < shards_per_client; ++s) {
            const std::vector<std::uint32_t>& shard =
                shards[shard_order[static_cast<std::size_t>(i * shards_per_client + s)]];
            part.indices.insert(part.indices.end(), shard.begin(), shard.end());
        }
        std::sort(part.indices.begin(), part.indices.end());
    }
    return parts;
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream images(images_path, std::ios::binary);
    if (!images) fail(ErrorKind::io, images_path + ": cannot open");
    std::ifstream labels(labels_path, std::ios::binary);
    if (!labels) fail(ErrorKind::io, labels_path + ": cannot open");

    std::uint32_t magic = read_be32(images, images_path, 0);
    if (magic != kImagesMagic) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "bad magic 0x%08x at byte offset 0, expected 0x%08x", magic,
                      kImagesMagic);
        fail(ErrorKind::io, images_path + ": " + buf);
    }
    std::uint32_t count = read_be32(images, images_path, 4);
    std::uint32_t rows = read_be32(images, images_path, 8);
    std::uint32_t cols = read_be32(images, images_path, 12);

    std::uint32_t label_magic = read_be32(labels, labels_path, 0);
    if (label_magic != kLabelsMagic) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "bad magic 0x%08x at byte offset 0, expected 0x%08x", label_magic,
                      kLabelsMagic);
        fail(ErrorKind::io, labels_path + ": " + buf);
    }
    std::uint32_t label_count = read_be32(labels, labels_path, 4);
    if (label_count != count) {
        fail(ErrorKind::io, "image count " + std::to_string(count) + " (" + images_path +
                                ", byte offset 4) does not match label count " +
                                std::to_string(label_count) + " (" + labels_path + ", byte offset 4)");
    }
    if (count == 0) fail(ErrorKind::io, images_path + ": dataset is empty");

    std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    LabeledDataset dataset;
    dataset.name = "idx:" + images_path;
    dataset.examples.input_dim = static_cast<int>(pixels);
    dataset.examples.inputs.resize(static_cast<std::size_t>(count) * pixels);
    dataset.examples.labels.resize(count);

    std::vector<unsigned char> raw(pixels);
    for (std::uint32_t i = 0; i < count; ++i) {
        if (!images.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(pixels))) {
            fail(ErrorKind::io, images_path + ": truncated payload at byte offset " +
                                    std::to_string(16 + static_cast<std::size_t>(i) * pixels));
        }
        double* row = dataset.examples.inputs.data() + static_cast<std::size_t>(i) * pixels;
        for (std::size_t k = 0; k < pixels; ++k) {
            row[k] = static_cast<double>(raw[k]) / 255.0;
        }
    }
    int max_label = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        char byte;
        if (!labels.read(&byte, 1)) {
            fail(ErrorKind::io, labels_path + ": truncated payload at byte offset " +
                                    std::to_string(8 + static_cast<std::size_t>(i)));
        }
        dataset.examples.labels[i] = static_cast<unsigned char>(byte);
        max_label = std::max(max_label, dataset.examples.labels[i]);
    }
    dataset.num_classes = max_label + 1;
    return dataset;
}

LabeledDataset make_synthetic(int num_classes, int per_class, int input_dim, double separation,
                              RngStream& rng) {
    if (num_classes < 2 || per_class < 1 || input_dim < 1) {
        fail(ErrorKind::invalid_argument, "make_synthetic: all sizes must be positive");
    }
    LabeledDataset dataset;
    dataset.name = "synthetic";
    dataset.num_classes = num_classes;
    dataset.examples.input_dim = input_dim;
    std::size_t total = static_cast<std::size_t>(num_classes) * per_class;
    dataset.examples.inputs.resize(total * static_cast<std::size_t>(input_dim));
    dataset.examples.labels.resize(total);

    double offset = separation / std::sqrt(2.0);
    for (std::size_t i = 0; i < total; ++i) {
        int label = static_cast<int>(i % static_cast<std::size_t>(num_classes));
        dataset.examples.labels[i] = label;
        double* row = dataset.examples.inputs.data() + i * static_cast<std::size_t>(input_dim);
        for (int k = 0; k < input_dim; ++k) row[k] = rng.normal();
        int axis = label % input_dim;
        double sign = (label / input_dim) % 2 == 0 ? 1.0 : -1.0;
        row[axis] += sign * offset;
    }
    return dataset;
}

std::vector<ClientPartition> partition(const LabeledDataset& dataset, const PartitionSpec& spec) {
    if (spec.num_clients < 1) fail(ErrorKind::config, "partition needs at least one client");
    if (static_cast<std::size_t>(spec.num_clients) > dataset.size()) {
        fail(ErrorKind::config, "more clients than examples; use a larger dataset or fewer clients");
    }
    if (spec.scheme == PartitionScheme::dirichlet && !(spec.alpha_d > 0.0)) {
        fail(ErrorKind::config, "dirichlet partition requires alpha_d > 0");
    }
    if (spec.scheme == PartitionScheme::pathological && spec.shards_per_client < 1) {
        fail(ErrorKind::config, "pathological partition requires shards_per_client >= 1");
    }

    std::vector<ClientPartition> parts;
    switch (spec.scheme) {
        case PartitionScheme::iid:
            parts = partition_iid(dataset, spec);
            break;
        case PartitionScheme::dirichlet:
            parts = partition_dirichlet(dataset, spec);
            break;
        case PartitionScheme::pathological:
            parts = partition_pathological(dataset, spec);
            break;
    }
    require_nonempty_clients(parts);
    assign_theta(parts, dataset.size());
    return parts;
}

std::vector<std::vector<std::uint64_t>> label_histograms(const LabeledDataset& dataset,
                                                         const std::vector<ClientPartition>& parts) {
    std::vector<std::vector<std::uint64_t>> hist(
        parts.size(), std::vector<std::uint64_t>(static_cast<std::size_t>(dataset.num_classes), 0));
    for (std::size_t i = 0; i < parts.size(); ++i) {
        for (std::uint32_t idx : parts[i].indices) {
            ++hist[i][static_cast<std::size_t>(dataset.examples.labels[idx])];
        }
    }
    return hist;
}

}  // namespace fedent
