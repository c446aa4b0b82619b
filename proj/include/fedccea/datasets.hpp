#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedccea/labeled_dataset.hpp"

namespace fedccea {

enum class NoiseKind { none, label, pattern };

const char* to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& name);

struct ClientPartition {
  int client_id = 0;
  LabeledDataset dataset;
  // Row index in the source dataset of each client sample, in client order.
  std::vector<std::size_t> source_indices;
  NoiseKind noise_kind = NoiseKind::none;
  // Client-local positions whose label or pattern was modified.
  std::vector<std::size_t> noisy_positions;

  bool noisy() const noexcept { return noise_kind != NoiseKind::none; }
  std::size_t size() const noexcept { return dataset.size(); }
};

struct PartitionSpec {
  int n_clients = 2;
  // nullopt means every class (IID).
  std::optional<int> classes_per_client;
  int samples_per_client = 1;
  std::uint64_t seed = 0;
};

struct NoiseSpec {
  NoiseKind kind = NoiseKind::label;
  double client_fraction = 0.0;
  double sample_fraction = 0.0;
  std::uint64_t seed = 0;
  // Side of the square pattern; 0 selects max(2, ceil(sqrt(dim)) / 7).
  int pattern_block = 0;
};

// Balanced Gaussian blobs, one seeded mean per class, clipped to [0, 1].
// Samples are interleaved by class (sample i has label i mod classes).
LabeledDataset generate_synthetic(int classes, int per_class, int dim, double spread,
                                  std::uint64_t seed);

// Splits off the last `test_size` samples as a held-out set. With the
// interleaved order of generate_synthetic both halves stay class-balanced
// when the sizes are multiples of the class count.
std::pair<LabeledDataset, LabeledDataset> split_tail(const LabeledDataset& data,
                                                     std::size_t test_size);

// Big-endian IDX image/label pair (plain or gzip). Pixels are scaled by
// 1/255. num_classes defaults to max label + 1.
LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path,
                        std::optional<int> num_classes = std::nullopt);

// Write an IDX pair; pixels are rounded from [0, 1] back to bytes. Used for
// fixtures and for exporting synthetic data.
void write_idx(const LabeledDataset& data, int rows, int cols,
               const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

std::vector<ClientPartition> partition(const LabeledDataset& data, const PartitionSpec& spec);

std::vector<ClientPartition> inject_noise(std::vector<ClientPartition> partitions,
                                          const NoiseSpec& spec);

// Label set held by a client.
std::vector<int> label_support(const ClientPartition& client);

std::vector<std::size_t> client_sizes(std::span<const ClientPartition> partitions);

// Hash of every client dataset plus the test set.
std::uint64_t partitions_fingerprint(std::span<const ClientPartition> partitions,
                                     const LabeledDataset& test);

void write_partition_manifest(std::span<const ClientPartition> partitions,
                              const std::filesystem::path& path);

}  // namespace fedccea
