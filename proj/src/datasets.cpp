#include "fedccea/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "fedccea/errors.hpp"
#include "fedccea/rng.hpp"

namespace fedccea {

const char* to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::none: return "none";
    case NoiseKind::label: return "label";
    case NoiseKind::pattern: return "pattern";
  }
  return "none";
}

NoiseKind noise_kind_from_string(const std::string& name) {
  if (name == "none") return NoiseKind::none;
  if (name == "label") return NoiseKind::label;
  if (name == "pattern") return NoiseKind::pattern;
  throw ConfigError("unknown noise kind '" + name + "'");
}

LabeledDataset generate_synthetic(int classes, int per_class, int dim, double spread,
                                  std::uint64_t seed) {
  if (classes < 2) throw PreconditionError("generate_synthetic needs at least 2 classes");
  if (per_class < 1) throw PreconditionError("generate_synthetic needs per_class >= 1");
  if (dim < 2) throw PreconditionError("generate_synthetic needs dim >= 2");
  if (!(spread >= 0.0)) throw PreconditionError("generate_synthetic needs spread >= 0");

  RngStream mean_rng = RngStream(seed).child("means");
  RowMatrix means(classes, dim);
  for (int c = 0; c < classes; ++c) {
    for (int j = 0; j < dim; ++j) means(c, j) = mean_rng.uniform(0.2, 0.8);
  }

  RngStream noise_rng = RngStream(seed).child("samples");
  const auto total = static_cast<Eigen::Index>(classes) * per_class;
  RowMatrix features(total, dim);
  std::vector<int> labels(static_cast<std::size_t>(total));
  for (Eigen::Index i = 0; i < total; ++i) {
    const int c = static_cast<int>(i % classes);
    labels[static_cast<std::size_t>(i)] = c;
    for (int j = 0; j < dim; ++j) {
      const double v = means(c, j) + (spread > 0.0 ? spread * noise_rng.normal() : 0.0);
      features(i, j) = std::clamp(v, 0.0, 1.0);
    }
  }
  return LabeledDataset(std::move(features), std::move(labels), classes);
}

std::pair<LabeledDataset, LabeledDataset> split_tail(const LabeledDataset& data,
                                                     std::size_t test_size) {
  if (test_size == 0 || test_size >= data.size()) {
    throw PreconditionError("split_tail: test size must lie in (0, " + std::to_string(data.size()) + ")");
  }
  std::vector<std::size_t> head(data.size() - test_size);
  std::vector<std::size_t> tail(test_size);
  std::iota(head.begin(), head.end(), 0);
  std::iota(tail.begin(), tail.end(), head.size());
  return {data.subset(head), data.subset(tail)};
}

namespace {

struct GzCloser {
  void operator()(gzFile_s* f) const { gzclose(f); }
};
using GzHandle = std::unique_ptr<gzFile_s, GzCloser>;

GzHandle open_gz(const std::filesystem::path& path, const char* mode) {
  gzFile f = gzopen(path.string().c_str(), mode);
  if (f == nullptr) throw FormatError("cannot open " + path.string());
  return GzHandle(f);
}

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DependencyError("missing IDX file " + path.string());
  auto f = open_gz(path, "rb");
  std::vector<unsigned char> out;
  std::array<unsigned char, 1 << 16> buf{};
  for (;;) {
    const int got = gzread(f.get(), buf.data(), static_cast<unsigned>(buf.size()));
    if (got < 0) throw FormatError("read error in " + path.string());
    if (got == 0) break;
    out.insert(out.end(), buf.begin(), buf.begin() + got);
  }
  return out;
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) throw FormatError("truncated IDX header in " + path.string());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  const bool gz = path.extension() == ".gz";
  if (gz) {
    auto f = open_gz(path, "wb");
    if (gzwrite(f.get(), bytes.data(), static_cast<unsigned>(bytes.size())) !=
        static_cast<int>(bytes.size())) {
      throw FormatError("write error in " + path.string());
    }
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

}  // namespace

LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path, std::optional<int> num_classes) {
  const auto images = read_all(images_path);
  const auto labels = read_all(labels_path);

  if (read_be32(images, 0, images_path) != kImageMagic) {
    throw FormatError("bad image magic in " + images_path.string());
  }
  if (read_be32(labels, 0, labels_path) != kLabelMagic) {
    throw FormatError("bad label magic in " + labels_path.string());
  }
  const std::size_t n = read_be32(images, 4, images_path);
  const std::size_t rows = read_be32(images, 8, images_path);
  const std::size_t cols = read_be32(images, 12, images_path);
  const std::size_t n_labels = read_be32(labels, 4, labels_path);
  if (n != n_labels) {
    throw ConsistencyError("image count " + std::to_string(n) + " != label count " +
                           std::to_string(n_labels));
  }
  const std::size_t dim = rows * cols;
  if (images.size() < 16 + n * dim) throw FormatError("truncated image data in " + images_path.string());
  if (labels.size() < 8 + n) throw FormatError("truncated label data in " + labels_path.string());

  RowMatrix features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  std::vector<int> y(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          static_cast<double>(images[16 + i * dim + j]) / 255.0;
    }
    y[i] = labels[8 + i];
    max_label = std::max(max_label, y[i]);
  }
  const int classes = num_classes.value_or(std::max(2, max_label + 1));
  return LabeledDataset(std::move(features), std::move(y), classes);
}

void write_idx(const LabeledDataset& data, int rows, int cols,
               const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  if (static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) != data.dim()) {
    throw ShapeError("rows * cols must equal the feature dimension");
  }
  std::vector<unsigned char> img;
  put_be32(img, kImageMagic);
  put_be32(img, static_cast<std::uint32_t>(data.size()));
  put_be32(img, static_cast<std::uint32_t>(rows));
  put_be32(img, static_cast<std::uint32_t>(cols));
  const auto& f = data.features();
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    for (Eigen::Index j = 0; j < f.cols(); ++j) {
      img.push_back(static_cast<unsigned char>(std::lround(std::clamp(f(i, j), 0.0, 1.0) * 255.0)));
    }
  }
  std::vector<unsigned char> lab;
  put_be32(lab, kLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (int y : data.labels()) lab.push_back(static_cast<unsigned char>(y));
  write_bytes(images_path, img);
  write_bytes(labels_path, lab);
}

std::vector<ClientPartition> partition(const LabeledDataset& data, const PartitionSpec& spec) {
  const int classes = data.num_classes();
  if (spec.n_clients < 2) throw PreconditionError("partition needs at least 2 clients");
  if (spec.samples_per_client < 1) throw PreconditionError("samples_per_client must be positive");
  if (spec.classes_per_client && (*spec.classes_per_client < 1 || *spec.classes_per_client > classes)) {
    throw PreconditionError("classes_per_client must lie in [1, " + std::to_string(classes) + "]");
  }
  const int per_client_classes = spec.classes_per_client.value_or(classes);
  if (spec.samples_per_client < per_client_classes) {
    throw CapacityError("samples_per_client (" + std::to_string(spec.samples_per_client) +
                        ") is smaller than classes_per_client (" +
                        std::to_string(per_client_classes) + ")");
  }

  const RngStream root(spec.seed);
  std::vector<std::vector<std::size_t>> pools(static_cast<std::size_t>(classes));
  const auto labels = data.labels();
  for (std::size_t i = 0; i < labels.size(); ++i) pools[static_cast<std::size_t>(labels[i])].push_back(i);
  RngStream pool_rng = root.child("pools");
  for (auto& pool : pools) pool_rng.shuffle(std::span<std::size_t>(pool));

  std::vector<int> class_order(static_cast<std::size_t>(classes));
  std::iota(class_order.begin(), class_order.end(), 0);
  RngStream class_rng = root.child("classes");
  class_rng.shuffle(std::span<int>(class_order));

  // Per-client (class, count) demand.
  std::vector<std::vector<std::pair<int, std::size_t>>> demand(static_cast<std::size_t>(spec.n_clients));
  std::vector<std::size_t> needed(static_cast<std::size_t>(classes), 0);
  for (int c = 0; c < spec.n_clients; ++c) {
    std::vector<int> assigned;
    for (int j = 0; j < per_client_classes; ++j) {
      const auto slot = spec.classes_per_client
                            ? static_cast<std::size_t>(c * per_client_classes + j) % class_order.size()
                            : static_cast<std::size_t>(j);
      assigned.push_back(class_order[slot]);
    }
    const auto k = static_cast<std::size_t>(per_client_classes);
    const auto total = static_cast<std::size_t>(spec.samples_per_client);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t count = total / k + (j < total % k ? 1 : 0);
      demand[static_cast<std::size_t>(c)].emplace_back(assigned[j], count);
      needed[static_cast<std::size_t>(assigned[j])] += count;
    }
  }

  std::ostringstream deficit;
  bool short_pool = false;
  for (int cls = 0; cls < classes; ++cls) {
    const auto have = pools[static_cast<std::size_t>(cls)].size();
    const auto want = needed[static_cast<std::size_t>(cls)];
    if (want > have) {
      deficit << " class " << cls << ": need " << want << ", have " << have << " (deficit "
              << want - have << ");";
      short_pool = true;
    }
  }
  if (short_pool) throw CapacityError("insufficient samples for partition:" + deficit.str());

  std::vector<std::size_t> cursor(static_cast<std::size_t>(classes), 0);
  std::vector<ClientPartition> out;
  out.reserve(static_cast<std::size_t>(spec.n_clients));
  for (int c = 0; c < spec.n_clients; ++c) {
    std::vector<std::size_t> indices;
    for (const auto& [cls, count] : demand[static_cast<std::size_t>(c)]) {
      auto& pool = pools[static_cast<std::size_t>(cls)];
      auto& at = cursor[static_cast<std::size_t>(cls)];
      indices.insert(indices.end(), pool.begin() + static_cast<std::ptrdiff_t>(at),
                     pool.begin() + static_cast<std::ptrdiff_t>(at + count));
      at += count;
    }
    // Mix classes once so that any prefix is representative; the order is
    // fixed from here on.
    RngStream order_rng = root.child(static_cast<std::uint64_t>(c) + 1);
    order_rng.shuffle(std::span<std::size_t>(indices));
    ClientPartition client;
    client.client_id = c;
    client.dataset = data.subset(indices);
    client.source_indices = std::move(indices);
    out.push_back(std::move(client));
  }
  return out;
}

namespace {

std::vector<std::size_t> pattern_positions(std::size_t dim, int block) {
  const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(dim))));
  std::size_t k = block > 0 ? static_cast<std::size_t>(block) : std::max<std::size_t>(2, side / 7);
  std::vector<std::size_t> positions;
  if (side * side == dim) {
    k = std::min(k, side);
    for (std::size_t r = side - k; r < side; ++r) {
      for (std::size_t c = side - k; c < side; ++c) positions.push_back(r * side + c);
    }
  } else {
    const std::size_t count = std::min(k * k, dim);
    for (std::size_t j = dim - count; j < dim; ++j) positions.push_back(j);
  }
  return positions;
}

std::vector<std::size_t> choose(RngStream& rng, std::size_t population, std::size_t count) {
  std::vector<std::size_t> all(population);
  std::iota(all.begin(), all.end(), 0);
  rng.shuffle(std::span<std::size_t>(all));
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

std::vector<ClientPartition> inject_noise(std::vector<ClientPartition> partitions,
                                          const NoiseSpec& spec) {
  if (!(spec.client_fraction >= 0.0 && spec.client_fraction <= 1.0) ||
      !(spec.sample_fraction >= 0.0 && spec.sample_fraction <= 1.0)) {
    throw PreconditionError("noise fractions must lie in [0, 1]");
  }
  if (spec.kind == NoiseKind::none) return partitions;

  const RngStream root(spec.seed);
  RngStream client_rng = root.child("clients");
  const auto n_noisy = static_cast<std::size_t>(
      std::lround(spec.client_fraction * static_cast<double>(partitions.size())));
  const auto chosen = choose(client_rng, partitions.size(), n_noisy);

  for (std::size_t idx : chosen) {
    auto& client = partitions[idx];
    const LabeledDataset& ds = client.dataset;
    RngStream rng = root.child(static_cast<std::uint64_t>(client.client_id) + 1);
    const auto m = static_cast<std::size_t>(
        std::lround(spec.sample_fraction * static_cast<double>(ds.size())));
    if (m == 0) continue;
    const auto positions = choose(rng, ds.size(), m);

    RowMatrix features = ds.features();
    std::vector<int> labels(ds.labels().begin(), ds.labels().end());
    const int classes = ds.num_classes();
    if (spec.kind == NoiseKind::label) {
      if (classes < 2) throw PreconditionError("label noise needs at least 2 classes");
      const int offset = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(classes - 1)));
      for (std::size_t p : positions) labels[p] = (labels[p] + offset) % classes;
    } else {
      const auto cells = pattern_positions(ds.dim(), spec.pattern_block);
      for (std::size_t p : positions) {
        for (std::size_t j : cells) features(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(j)) = 1.0;
      }
    }
    client.dataset = LabeledDataset(std::move(features), std::move(labels), classes);
    client.noise_kind = spec.kind;
    client.noisy_positions = positions;
  }
  return partitions;
}

std::vector<int> label_support(const ClientPartition& client) {
  const auto counts = client.dataset.class_counts();
  std::vector<int> support;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] > 0) support.push_back(static_cast<int>(c));
  }
  return support;
}

std::vector<std::size_t> client_sizes(std::span<const ClientPartition> partitions) {
  std::vector<std::size_t> sizes;
  sizes.reserve(partitions.size());
  for (const auto& p : partitions) sizes.push_back(p.size());
  return sizes;
}

std::uint64_t partitions_fingerprint(std::span<const ClientPartition> partitions,
                                     const LabeledDataset& test) {
  std::uint64_t h = test.fingerprint();
  for (const auto& p : partitions) h = mix64(h ^ p.dataset.fingerprint());
  return h;
}

void write_partition_manifest(std::span<const ClientPartition> partitions,
                              const std::filesystem::path& path) {
  nlohmann::json clients = nlohmann::json::array();
  for (const auto& p : partitions) {
    clients.push_back({{"client_id", p.client_id},
                       {"size", p.size()},
                       {"sample_indices", p.source_indices},
                       {"noisy", p.noisy()},
                       {"noise_kind", to_string(p.noise_kind)},
                       {"noisy_positions", p.noisy_positions}});
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write partition manifest " + path.string());
  out << nlohmann::json{{"clients", clients}}.dump(1) << '\n';
}

}  // namespace fedccea
