#include "raat/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>

namespace raat {

Dataset Dataset::subset(const std::vector<Index>& rows) const {
  Dataset out;
  out.num_classes = num_classes;
  out.shape = shape;
  out.inputs.resize(static_cast<Index>(rows.size()), inputs.cols());
  out.labels.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Index i = rows[r];
    if (i < 0 || i >= size()) throw InputContractError("dataset row index out of range");
    out.inputs.row(static_cast<Index>(r)) = inputs.row(i);
    out.labels.push_back(labels[static_cast<std::size_t>(i)]);
  }
  return out;
}

void Dataset::validate() const {
  if (static_cast<Index>(labels.size()) != inputs.rows()) {
    throw ValidationError("dataset has " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(inputs.rows()) + " inputs");
  }
  if (is_image() && shape.size() != inputs.cols()) {
    throw ValidationError("dataset image shape does not match the input width");
  }
  if (inputs.size() > 0 && (!all_finite(inputs) || inputs.minCoeff() < 0.0 ||
                            inputs.maxCoeff() > 1.0)) {
    throw ValidationError("dataset inputs must lie in [0, 1]");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw ValidationError("dataset label out of range");
  }
}

Dataset parse_cifar_records(const std::string& bytes, int num_classes) {
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError("CIFAR data length " + std::to_string(bytes.size()) +
                      " is not a multiple of 3073 bytes");
  }
  const auto count = static_cast<Index>(bytes.size() / kCifarRecordBytes);
  Dataset out;
  out.num_classes = num_classes;
  out.shape = kCifarShape;
  out.inputs.resize(count, kCifarShape.size());
  out.labels.resize(static_cast<std::size_t>(count));
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  for (Index r = 0; r < count; ++r) {
    const unsigned char* record = raw + static_cast<std::size_t>(r) * kCifarRecordBytes;
    if (record[0] >= num_classes) {
      throw FormatError("CIFAR record " + std::to_string(r) + " has label byte " +
                        std::to_string(record[0]));
    }
    out.labels[static_cast<std::size_t>(r)] = record[0];
    for (Index j = 0; j < kCifarShape.size(); ++j) out.inputs(r, j) = record[1 + j] / 255.0;
  }
  return out;
}

Dataset load_cifar_binary(const std::string& path, int num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open CIFAR file '" + path + "'");
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_cifar_records(bytes, num_classes);
}

Dataset load_cifar_directory(const std::string& directory, bool train,
                             const std::vector<int>& classes, int per_class) {
  if (classes.size() < 2) throw ConfigError("need at least two CIFAR classes");
  if (per_class <= 0) throw ConfigError("per-class cap must be positive");
  std::vector<std::string> files;
  if (train) {
    for (int b = 1; b <= 5; ++b) files.push_back("data_batch_" + std::to_string(b) + ".bin");
  } else {
    files.push_back("test_batch.bin");
  }
  std::vector<int> relabel(10, -1);
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const int c = classes[k];
    if (c < 0 || c >= 10 || relabel[static_cast<std::size_t>(c)] >= 0) {
      throw ConfigError("CIFAR class list must hold distinct values in 0..9");
    }
    relabel[static_cast<std::size_t>(c)] = static_cast<int>(k);
  }
  std::vector<int> taken(classes.size(), 0);
  std::vector<Eigen::RowVectorXd> rows;
  Labels labels;
  for (const auto& name : files) {
    const auto path = std::filesystem::path(directory) / name;
    if (!std::filesystem::exists(path)) throw FormatError("missing CIFAR file " + path.string());
    const Dataset part = load_cifar_binary(path.string(), 10);
    for (Index i = 0; i < part.size(); ++i) {
      const int mapped = relabel[static_cast<std::size_t>(part.labels[static_cast<std::size_t>(i)])];
      if (mapped < 0 || taken[static_cast<std::size_t>(mapped)] >= per_class) continue;
      ++taken[static_cast<std::size_t>(mapped)];
      rows.emplace_back(part.inputs.row(i));
      labels.push_back(mapped);
    }
  }
  Dataset out;
  out.num_classes = static_cast<int>(classes.size());
  out.shape = kCifarShape;
  out.inputs.resize(static_cast<Index>(rows.size()), kCifarShape.size());
  for (std::size_t r = 0; r < rows.size(); ++r) out.inputs.row(static_cast<Index>(r)) = rows[r];
  out.labels = std::move(labels);
  return out;
}

void AugmentationPolicy::validate() const {
  if (padding < 0) throw ConfigError("augmentation padding must be >= 0");
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
    throw ConfigError("flip probability must lie in [0, 1]");
  }
}

namespace {

void check_image(Index cols, const ImageShape& shape) {
  if (shape.channels <= 0 || shape.size() != cols) {
    throw InputContractError("augmentation needs an image-shaped input");
  }
}

}  // namespace

ImageRow flip_horizontal(const Eigen::Ref<const ImageRow>& image, const ImageShape& shape) {
  check_image(image.size(), shape);
  ImageRow out(image.size());
  const int w = shape.width;
  for (int c = 0; c < shape.channels; ++c)
    for (int y = 0; y < shape.height; ++y) {
      const Index base = (Index{c} * shape.height + y) * w;
      for (int x = 0; x < w; ++x) out(base + x) = image(base + (w - 1 - x));
    }
  return out;
}

ImageRow crop_padded(const Eigen::Ref<const ImageRow>& image, const ImageShape& shape, int padding,
                     int dy, int dx) {
  check_image(image.size(), shape);
  if (dy < 0 || dx < 0 || dy > 2 * padding || dx > 2 * padding) {
    throw InputContractError("crop offset outside the padded image");
  }
  ImageRow out = ImageRow::Zero(image.size());
  const int h = shape.height, w = shape.width;
  for (int c = 0; c < shape.channels; ++c)
    for (int y = 0; y < h; ++y) {
      const int sy = y + dy - padding;
      if (sy < 0 || sy >= h) continue;
      for (int x = 0; x < w; ++x) {
        const int sx = x + dx - padding;
        if (sx < 0 || sx >= w) continue;
        out((Index{c} * h + y) * w + x) = image((Index{c} * h + sy) * w + sx);
      }
    }
  return out;
}

AugmentDraw draw_augmentation(const AugmentationPolicy& policy, Rng& rng) {
  policy.validate();
  AugmentDraw d;
  if (!policy.enabled) return d;
  std::uniform_int_distribution<int> offset(0, 2 * policy.padding);
  std::bernoulli_distribution flip(policy.flip_probability);
  d.dy = offset(rng);
  d.dx = offset(rng);
  d.flip = flip(rng);
  return d;
}

ImageRow apply_augmentation(const Eigen::Ref<const ImageRow>& image, const ImageShape& shape,
                            const AugmentationPolicy& policy, const AugmentDraw& draw) {
  check_image(image.size(), shape);
  if (!policy.enabled) return image;
  ImageRow out = crop_padded(image, shape, policy.padding, draw.dy, draw.dx);
  return draw.flip ? flip_horizontal(out, shape) : out;
}

ImageRow augment(const Eigen::Ref<const ImageRow>& image, const ImageShape& shape,
                 const AugmentationPolicy& policy, Rng& rng) {
  return apply_augmentation(image, shape, policy, draw_augmentation(policy, rng));
}

std::pair<ImageRow, ImageRow> augment_pair(const Eigen::Ref<const ImageRow>& image,
                                           const ImageShape& shape,
                                           const AugmentationPolicy& policy, Rng& rng) {
  ImageRow first = augment(image, shape, policy, rng);
  ImageRow second = augment(image, shape, policy, rng);
  return {std::move(first), std::move(second)};
}

std::pair<ImageRow, ImageRow> augment_pair(const Eigen::Ref<const ImageRow>& image,
                                           const ImageShape& shape,
                                           const AugmentationPolicy& policy, std::uint64_t seed,
                                           std::uint64_t index, std::uint64_t epoch) {
  Rng first = substream(seed, "aug", index, epoch, 0);
  Rng second = substream(seed, "aug", index, epoch, 1);
  return {augment(image, shape, policy, first), augment(image, shape, policy, second)};
}

void GaussianModelSpec::validate() const {
  if (theta.size() == 0) throw ValidationError("Gaussian model needs d >= 1");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ValidationError("sigma must be > 0");
  if (!all_finite(theta)) throw ValidationError("theta must be finite");
}

GaussianModelSpec gaussian_model(int d, double sigma) {
  if (d < 1) throw ValidationError("Gaussian model needs d >= 1");
  return {Vector::Ones(d), sigma};
}

GaussianSample sample_gaussian_model(const GaussianModelSpec& spec, Index n, Rng& rng) {
  spec.validate();
  if (n < 1) throw ValidationError("sample size must be >= 1");
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> noise(0.0, 1.0);
  GaussianSample s;
  s.x.resize(n, spec.dim());
  s.y.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const int y = coin(rng) ? 1 : -1;
    s.y[static_cast<std::size_t>(i)] = y;
    for (Index j = 0; j < spec.dim(); ++j) {
      s.x(i, j) = y * spec.theta(j) + spec.sigma * noise(rng);
    }
  }
  return s;
}

Dataset two_gaussians(Index n, std::uint64_t seed, double spread) {
  if (n < 1) throw ValidationError("dataset size must be >= 1");
  Rng rng = substream(seed, "two-gaussians");
  std::normal_distribution<double> noise(0.0, spread);
  Dataset out;
  out.num_classes = 2;
  out.inputs.resize(n, 2);
  out.labels.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    const double centre = y == 0 ? 0.3 : 0.7;
    out.labels[static_cast<std::size_t>(i)] = y;
    for (Index j = 0; j < 2; ++j) {
      out.inputs(i, j) = std::clamp(centre + noise(rng), 0.0, 1.0);
    }
  }
  return out;
}

Dataset synthetic_images(Index n, int num_classes, std::uint64_t seed, double noise) {
  if (n < 1) throw ValidationError("dataset size must be >= 1");
  if (num_classes < 2) throw ValidationError("need at least two classes");
  Rng rng = substream(seed, "synthetic-images");
  std::normal_distribution<double> jitter(0.0, noise);
  const ImageShape s = kCifarShape;
  Dataset out;
  out.num_classes = num_classes;
  out.shape = s;
  out.inputs.resize(n, s.size());
  out.labels.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % num_classes);
    out.labels[static_cast<std::size_t>(i)] = y;
    const int bright = y % s.channels;
    const bool rows_striped = (y / s.channels) % 2 == 0;
    for (int c = 0; c < s.channels; ++c)
      for (int r = 0; r < s.height; ++r)
        for (int q = 0; q < s.width; ++q) {
          const int phase = rows_striped ? r : q;
          const double stripe = (phase / 4) % 2 == 0 ? 0.15 : -0.15;
          const double base = c == bright ? 0.65 : 0.35;
          out.inputs(i, (Index{c} * s.height + r) * s.width + q) =
              std::clamp(base + stripe + jitter(rng), 0.0, 1.0);
        }
  }
  return out;
}

std::vector<std::vector<Index>> epoch_batches(Index n, Index batch_size, Rng& rng) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<Index>> out;
  for (Index start = 0; start < n; start += batch_size) {
    const Index stop = std::min(n, start + batch_size);
    out.emplace_back(order.begin() + start, order.begin() + stop);
  }
  return out;
}

}  // namespace raat
