#pragma once

#include <zlib.h>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dwf/core/error.hpp"
#include "dwf/core/matrix.hpp"
#include "dwf/core/rng.hpp"

namespace dwf {

/// Samples in rows. `targets` holds one-hot rows for classification or the
/// regression response (n x 1); `labels` is empty for regression.
struct Dataset {
  DenseMatrix inputs;
  std::vector<std::uint32_t> labels;
  DenseMatrix targets;
  std::size_t num_classes = 0;
  std::string split;

  std::size_t size() const noexcept { return inputs.rows(); }
  bool is_classification() const noexcept { return num_classes > 0; }

  void validate() const {
    require(targets.rows() == inputs.rows(), ErrorKind::Data,
            "Dataset: inputs and targets have different row counts");
    if (is_classification()) {
      require(labels.size() == inputs.rows(), ErrorKind::Data,
              "Dataset: inputs and labels have different lengths");
      for (std::uint32_t y : labels)
        require(y < num_classes, ErrorKind::Data, "Dataset: label out of range");
    }
  }
};

inline DenseMatrix one_hot(std::span<const std::uint32_t> labels, std::size_t num_classes) {
  DenseMatrix t(labels.size(), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] < num_classes, ErrorKind::Data, "one_hot: label out of range");
    t(i, labels[i]) = 1.0;
  }
  return t;
}

inline Dataset make_classification(DenseMatrix inputs, std::vector<std::uint32_t> labels,
                                   std::size_t num_classes, std::string split = "train") {
  Dataset ds;
  ds.targets = one_hot(labels, num_classes);
  ds.inputs = std::move(inputs);
  ds.labels = std::move(labels);
  ds.num_classes = num_classes;
  ds.split = std::move(split);
  ds.validate();
  return ds;
}

/// Raw IDX array: unsigned-byte payload with its dimensions.
struct IdxArray {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;

  friend bool operator==(const IdxArray&, const IdxArray&) = default;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Reads an IDX file of unsigned bytes; gzip-compressed input is detected and
/// decompressed transparently.
inline IdxArray read_idx(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::Data, "IDX file not found: " + path.string());
  std::unique_ptr<gzFile_s, decltype(&gzclose)> file(gzopen(path.string().c_str(), "rb"), &gzclose);
  if (!file) fail(ErrorKind::Data, "cannot open IDX file: " + path.string());

  auto read_exact = [&](void* dst, std::size_t n, const char* what) {
    std::size_t got = 0;
    auto* out = static_cast<std::uint8_t*>(dst);
    while (got < n) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n - got, 1u << 30));
      const int r = gzread(file.get(), out + got, chunk);
      if (r <= 0) break;
      got += static_cast<std::size_t>(r);
    }
    if (got != n) {
      fail(ErrorKind::Data, std::string("truncated IDX file (") + what + "): " + path.string() +
                                " expected " + std::to_string(n) + " bytes, got " +
                                std::to_string(got));
    }
  };
  auto read_be32 = [&](const char* what) {
    std::uint8_t b[4];
    read_exact(b, 4, what);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
           std::uint32_t{b[3]};
  };

  IdxArray arr;
  arr.magic = read_be32("magic");
  if ((arr.magic >> 8) != 0x08 || (arr.magic & 0xFF) == 0 || (arr.magic & 0xFF) > 4) {
    fail(ErrorKind::Format, "unsupported IDX magic in " + path.string());
  }
  const std::size_t ndim = arr.magic & 0xFF;
  std::size_t count = 1;
  for (std::size_t d = 0; d < ndim; ++d) {
    arr.dims.push_back(read_be32("dimensions"));
    count *= arr.dims.back();
  }
  arr.data.resize(count);
  read_exact(arr.data.data(), count, "payload");
  return arr;
}

/// Writes an uncompressed IDX file of unsigned bytes.
inline void write_idx(const std::filesystem::path& path, const IdxArray& arr) {
  std::size_t count = 1;
  for (auto d : arr.dims) count *= d;
  require(count == arr.data.size(), ErrorKind::Shape, "write_idx: payload does not match dims");
  require((arr.magic & 0xFF) == arr.dims.size(), ErrorKind::Format,
          "write_idx: magic does not match dimension count");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Data, "cannot write IDX file: " + path.string());
  auto put_be32 = [&](std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                       static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(b, 4);
  };
  put_be32(arr.magic);
  for (auto d : arr.dims) put_be32(d);
  out.write(reinterpret_cast<const char*>(arr.data.data()),
            static_cast<std::streamsize>(arr.data.size()));
}

/// Image/label IDX pair as a classification set with pixels scaled into [0, 1].
inline Dataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path, std::string split = "train",
                        std::size_t num_classes = 10) {
  const IdxArray images = read_idx(images_path);
  const IdxArray labels = read_idx(labels_path);
  if (images.magic != kIdxImagesMagic)
    fail(ErrorKind::Format, "expected image magic 0x00000803 in " + images_path.string());
  if (labels.magic != kIdxLabelsMagic)
    fail(ErrorKind::Format, "expected label magic 0x00000801 in " + labels_path.string());
  const std::size_t n = images.dims[0];
  if (labels.dims[0] != n) {
    fail(ErrorKind::Data, "image/label count mismatch: " + std::to_string(n) + " images, " +
                              std::to_string(labels.dims[0]) + " labels");
  }
  const std::size_t features = std::size_t{images.dims[1]} * images.dims[2];
  DenseMatrix x(n, features);
  for (std::size_t i = 0; i < images.data.size(); ++i)
    x.values()[i] = static_cast<double>(images.data[i]) / 255.0;
  std::vector<std::uint32_t> y(labels.data.begin(), labels.data.end());
  for (std::uint32_t v : y) {
    if (v >= num_classes)
      fail(ErrorKind::Data, "label " + std::to_string(v) + " out of range in " + labels_path.string());
  }
  return make_classification(std::move(x), std::move(y), num_classes, std::move(split));
}

/// Finds `<stem>` or `<stem>.gz` inside `dir`.
inline std::filesystem::path find_idx_file(const std::filesystem::path& dir, const std::string& stem) {
  for (const std::string& name : {stem, stem + ".gz"}) {
    if (std::filesystem::exists(dir / name)) return dir / name;
  }
  fail(ErrorKind::Data, "missing " + stem + "[.gz] in " + dir.string());
}

/// Official MNIST-layout train or test split ("train" or "test") from a directory.
inline Dataset load_mnist(const std::filesystem::path& dir, const std::string& which) {
  const std::string prefix = which == "test" ? "t10k" : "train";
  require(which == "train" || which == "test", ErrorKind::Config,
          "load_mnist: split must be train or test");
  return load_idx(find_idx_file(dir, prefix + "-images-idx3-ubyte"),
                  find_idx_file(dir, prefix + "-labels-idx1-ubyte"), which);
}

struct SparseRegression {
  Dataset data;
  std::vector<double> true_weights;
};

/// X with N(0,1) entries; k nonzero coefficients of magnitude U[0.5, 2] and
/// random sign at random positions; y = X w* + N(0, noise_sigma^2).
inline SparseRegression synth_sparse_regression(std::size_t n, std::size_t p, std::size_t k_nonzero,
                                                double noise_sigma, SeededRng& rng) {
  require(k_nonzero <= p, ErrorKind::Config, "synth_sparse_regression: k_nonzero must be <= p");
  require(noise_sigma >= 0.0, ErrorKind::Config, "synth_sparse_regression: noise_sigma < 0");
  SparseRegression out;
  std::vector<double> w(p, 0.0);
  const auto perm = random_permutation(p, rng);
  for (std::size_t i = 0; i < k_nonzero; ++i) w[perm[i]] = rng.rademacher() * rng.uniform(0.5, 2.0);
  DenseMatrix x(n, p);
  for (double& v : x.values()) v = rng.standard_normal();
  DenseMatrix y(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < p; ++j) s += x(i, j) * w[j];
    y(i, 0) = s + noise_sigma * rng.standard_normal();
  }
  out.data.inputs = std::move(x);
  out.data.targets = std::move(y);
  out.data.split = "train";
  out.true_weights = std::move(w);
  return out;
}

/// Isotropic Gaussian blobs: class c has a random N(0, separation^2) center
/// and unit-variance noise. Labels cycle through the classes.
inline Dataset make_blobs(std::size_t n, std::size_t num_classes, std::size_t features,
                          double separation, SeededRng& rng) {
  require(num_classes >= 2, ErrorKind::Config, "make_blobs: need at least 2 classes");
  DenseMatrix centers(num_classes, features);
  for (double& v : centers.values()) v = rng.normal(0.0, separation);
  DenseMatrix x(n, features);
  std::vector<std::uint32_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<std::uint32_t>(i % num_classes);
    for (std::size_t j = 0; j < features; ++j) x(i, j) = centers(y[i], j) + rng.standard_normal();
  }
  return make_classification(std::move(x), std::move(y), num_classes);
}

/// Rows `idx` of a dataset, in that order.
inline Dataset subset(const Dataset& ds, std::span<const std::size_t> idx, std::string split) {
  Dataset out;
  out.num_classes = ds.num_classes;
  out.split = std::move(split);
  out.inputs = DenseMatrix(idx.size(), ds.inputs.cols());
  out.targets = DenseMatrix(idx.size(), ds.targets.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    require(idx[r] < ds.size(), ErrorKind::Shape, "subset: index out of range");
    std::copy_n(ds.inputs.row(idx[r]).data(), ds.inputs.cols(), out.inputs.row(r).data());
    std::copy_n(ds.targets.row(idx[r]).data(), ds.targets.cols(), out.targets.row(r).data());
    if (ds.is_classification()) out.labels.push_back(ds.labels[idx[r]]);
  }
  return out;
}

/// First n rows.
inline Dataset head(const Dataset& ds, std::size_t n) {
  n = std::min(n, ds.size());
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return subset(ds, idx, ds.split);
}

struct TrainValSplit {
  Dataset train;
  Dataset val;
};

/// Seeded permutation of the rows; the last floor(n * val_fraction) go to validation.
inline TrainValSplit split_dataset(const Dataset& ds, double val_fraction, SeededRng& rng) {
  require(val_fraction >= 0.0 && val_fraction < 1.0, ErrorKind::Config,
          "split: val_fraction must be in [0, 1)");
  const std::size_t n = ds.size();
  const auto perm = random_permutation(n, rng);
  const auto n_val = static_cast<std::size_t>(static_cast<double>(n) * val_fraction);
  const std::span<const std::size_t> all(perm);
  return {subset(ds, all.first(n - n_val), "train"), subset(ds, all.last(n_val), "val")};
}

/// Reshuffled minibatch index lists, ceil(n / batch_size) batches per epoch.
class BatchIterator {
 public:
  BatchIterator(std::size_t n, std::size_t batch_size, SeededRng rng)
      : n_(n), batch_size_(batch_size), rng_(std::move(rng)) {
    require(batch_size >= 1, ErrorKind::Config, "BatchIterator: batch_size must be >= 1");
    require(batch_size <= n, ErrorKind::Config,
            "BatchIterator: batch_size " + std::to_string(batch_size) + " exceeds dataset size " +
                std::to_string(n));
  }

  std::size_t batches_per_epoch() const noexcept { return (n_ + batch_size_ - 1) / batch_size_; }

  /// Index lists for the next epoch; the last batch may be short.
  std::vector<std::vector<std::size_t>> next_epoch() {
    const auto perm = random_permutation(n_, rng_);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n_; start += batch_size_) {
      const std::size_t end = std::min(n_, start + batch_size_);
      out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                       perm.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
  }

 private:
  std::size_t n_;
  std::size_t batch_size_;
  SeededRng rng_;
};

struct Batch {
  DenseMatrix inputs;
  DenseMatrix targets;
  std::vector<std::uint32_t> labels;
};

inline Batch gather(const Dataset& ds, std::span<const std::size_t> idx) {
  Dataset s = subset(ds, idx, ds.split);
  return {std::move(s.inputs), std::move(s.targets), std::move(s.labels)};
}

}  // namespace dwf
