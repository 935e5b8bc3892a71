#include "oko/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <string>

#include "oko/errors.hpp"

namespace oko {

LabeledDataset::LabeledDataset(std::vector<double> inputs, std::vector<int> labels,
                               std::size_t dim, int num_classes)
    : inputs_(std::move(inputs)), labels_(std::move(labels)), dim_(dim), num_classes_(num_classes) {
  if (labels_.empty()) throw InvalidArgument("dataset must hold at least one sample");
  if (dim_ == 0) throw InvalidArgument("dataset feature width must be positive");
  if (num_classes_ < 1) throw InvalidArgument("dataset needs at least one class");
  if (inputs_.size() != labels_.size() * dim_)
    throw InvalidArgument("dataset inputs do not match n x d");
  for (int y : labels_) {
    if (y < 0 || y >= num_classes_) throw InvalidArgument("label out of range: " + std::to_string(y));
  }
  if (!all_finite(inputs_)) throw InvalidArgument("dataset contains non-finite features");
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  std::vector<double> x;
  std::vector<int> y;
  x.reserve(indices.size() * dim_);
  y.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw InvalidArgument("subset index out of range");
    auto r = row(i);
    x.insert(x.end(), r.begin(), r.end());
    y.push_back(labels_[i]);
  }
  return LabeledDataset(std::move(x), std::move(y), dim_, num_classes_);
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes_), 0);
  for (int y : labels_) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

std::size_t ClassPartition::total() const {
  std::size_t n = 0;
  for (const auto& m : members) n += m.size();
  return n;
}

ClassPartition partition_by_class(const LabeledDataset& ds) {
  ClassPartition part;
  part.members.resize(static_cast<std::size_t>(ds.num_classes()));
  for (std::size_t i = 0; i < ds.size(); ++i)
    part.members[static_cast<std::size_t>(ds.label(i))].push_back(i);
  return part;
}

void DistributionSpec::validate(int num_classes) const {
  if (kind == DistributionKind::kUniform) return;
  if (!(head_mass > 0.0 && head_mass < 1.0))
    throw InvalidArgument("heavy-tailed head mass must lie in (0, 1)");
  if (head_classes < 1 || head_classes >= num_classes)
    throw InvalidArgument("heavy-tailed head class count must be in [1, C)");
}

namespace {

// Split `total` evenly over `count` consecutive classes starting at `first`.
void spread(std::vector<std::size_t>& quotas, std::size_t first, std::size_t count,
            std::size_t total) {
  const std::size_t base = total / count;
  std::size_t rem = total - base * count;
  for (std::size_t c = first; c < first + count; ++c) {
    quotas[c] = base + (rem > 0 ? 1 : 0);
    if (rem > 0) --rem;
  }
}

}  // namespace

std::vector<std::size_t> DistributionSpec::class_quotas(std::size_t total_n, int num_classes) const {
  if (total_n == 0) throw InvalidArgument("total_n must be positive");
  if (num_classes < 1) throw InvalidArgument("need at least one class");
  validate(num_classes);
  const auto C = static_cast<std::size_t>(num_classes);
  std::vector<std::size_t> quotas(C, 0);
  if (kind == DistributionKind::kUniform) {
    spread(quotas, 0, C, total_n);
    return quotas;
  }
  // Head classes are 0..head_classes-1 and share floor(p * n); the tail gets
  // the rest. Within each group the leftover goes to the lowest indices.
  const auto H = static_cast<std::size_t>(head_classes);
  const std::size_t head_total = std::min(
      total_n, static_cast<std::size_t>(std::floor(head_mass * static_cast<double>(total_n) + 1e-9)));
  spread(quotas, 0, H, head_total);
  spread(quotas, H, C - H, total_n - head_total);
  return quotas;
}

LabeledDataset make_blobs(int num_classes, std::size_t per_class, std::size_t dim,
                          double separation, RngStream& rng) {
  if (num_classes < 2) throw InvalidArgument("make_blobs: need at least two classes");
  if (per_class < 1 || dim < 1) throw InvalidArgument("make_blobs: empty shape");
  if (!(separation > 0.0)) throw InvalidArgument("make_blobs: separation must be positive");
  const auto C = static_cast<std::size_t>(num_classes);
  std::vector<double> centers(C * dim, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    double* mu = centers.data() + c * dim;
    if (dim >= C) {
      mu[c] = separation;
    } else if (dim >= 2) {
      const double t = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(C);
      mu[0] = separation * std::cos(t);
      mu[1] = separation * std::sin(t);
    } else {
      mu[0] = separation * static_cast<double>(c);
    }
  }
  std::vector<double> x;
  std::vector<int> y;
  x.reserve(C * per_class * dim);
  y.reserve(C * per_class);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t j = 0; j < dim; ++j) x.push_back(centers[c * dim + j] + rng.normal());
      y.push_back(static_cast<int>(c));
    }
  }
  return LabeledDataset(std::move(x), std::move(y), dim, num_classes);
}

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxParseError(IdxErrorKind::kOpen, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t off,
                        const std::filesystem::path& path) {
  if (off + 4 > buf.size())
    throw IdxParseError(IdxErrorKind::kTruncated, "truncated header in " + path.string());
  return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) |
         (std::uint32_t{buf[off + 2]} << 8) | std::uint32_t{buf[off + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void spit(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IdxParseError(IdxErrorKind::kOpen, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

IdxImages read_idx_images(const std::filesystem::path& path) {
  const auto buf = slurp(path);
  const std::uint32_t magic = read_be32(buf, 0, path);
  if (magic != kImagesMagic)
    throw IdxParseError(IdxErrorKind::kMagic, "bad image magic number in " + path.string());
  IdxImages img;
  img.count = read_be32(buf, 4, path);
  img.rows = read_be32(buf, 8, path);
  img.cols = read_be32(buf, 12, path);
  if (img.rows == 0 || img.cols == 0)
    throw IdxParseError(IdxErrorKind::kDimension, "zero image dimension in " + path.string());
  const std::size_t need = std::size_t{img.count} * img.rows * img.cols;
  if (buf.size() - 16 < need)
    throw IdxParseError(IdxErrorKind::kTruncated, "truncated pixel data in " + path.string());
  img.pixels.assign(buf.begin() + 16, buf.begin() + 16 + static_cast<std::ptrdiff_t>(need));
  return img;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  const auto buf = slurp(path);
  const std::uint32_t magic = read_be32(buf, 0, path);
  if (magic != kLabelsMagic)
    throw IdxParseError(IdxErrorKind::kMagic, "bad label magic number in " + path.string());
  const std::uint32_t count = read_be32(buf, 4, path);
  if (buf.size() - 8 < count)
    throw IdxParseError(IdxErrorKind::kTruncated, "truncated label data in " + path.string());
  return {buf.begin() + 8, buf.begin() + 8 + count};
}

void write_idx_images(const std::filesystem::path& path, const IdxImages& images) {
  std::vector<std::uint8_t> out;
  put_be32(out, kImagesMagic);
  put_be32(out, images.count);
  put_be32(out, images.rows);
  put_be32(out, images.cols);
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  spit(path, out);
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  put_be32(out, kLabelsMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  spit(path, out);
}

LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        int num_classes) {
  const IdxImages img = read_idx_images(images);
  const auto lab = read_idx_labels(labels);
  if (lab.size() != img.count)
    throw IdxParseError(IdxErrorKind::kCountMismatch,
                        "image count " + std::to_string(img.count) + " != label count " +
                            std::to_string(lab.size()));
  const std::size_t d = std::size_t{img.rows} * img.cols;
  std::vector<double> x(img.pixels.size());
  std::transform(img.pixels.begin(), img.pixels.end(), x.begin(),
                 [](std::uint8_t p) { return static_cast<double>(p) / 255.0; });
  std::vector<int> y(lab.begin(), lab.end());
  if (num_classes <= 0) num_classes = 1 + *std::max_element(y.begin(), y.end());
  return LabeledDataset(std::move(x), std::move(y), d, num_classes);
}

namespace {

// Partial Fisher-Yates: first k entries become a uniform k-subset in random order.
void partial_shuffle(std::vector<std::size_t>& v, std::size_t k, RngStream& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_index(v.size() - i);
    std::swap(v[i], v[j]);
  }
}

}  // namespace

LabeledDataset apply_distribution(const LabeledDataset& ds, const DistributionSpec& spec,
                                  std::size_t total_n, RngStream& rng) {
  const auto quotas = spec.class_quotas(total_n, ds.num_classes());
  ClassPartition part = partition_by_class(ds);
  std::vector<std::size_t> chosen;
  chosen.reserve(total_n);
  for (std::size_t c = 0; c < quotas.size(); ++c) {
    auto& pool = part.members[c];
    if (quotas[c] > pool.size()) throw InsufficientData(static_cast<int>(c), quotas[c], pool.size());
    partial_shuffle(pool, quotas[c], rng);
    chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(quotas[c]));
  }
  return ds.subset(chosen);
}

TrainTestSplit split_train_test(const LabeledDataset& ds, double test_fraction, RngStream& rng) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw InvalidArgument("test fraction must lie in (0, 1)");
  ClassPartition part = partition_by_class(ds);
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  for (auto& pool : part.members) {
    const auto k = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(pool.size())));
    partial_shuffle(pool, k, rng);
    test_idx.insert(test_idx.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    std::vector<std::size_t> rest(pool.begin() + static_cast<std::ptrdiff_t>(k), pool.end());
    std::sort(rest.begin(), rest.end());
    train_idx.insert(train_idx.end(), rest.begin(), rest.end());
  }
  if (train_idx.empty() || test_idx.empty()) throw InvalidArgument("split leaves an empty side");
  return {ds.subset(train_idx), ds.subset(test_idx)};
}

}  // namespace oko
