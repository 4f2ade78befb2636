#ifndef RAAT_DATA_HPP
#define RAAT_DATA_HPP

#include "raat/common.hpp"
#include "raat/model.hpp"

#include <string>
#include <utility>
#include <vector>

namespace raat {

/// Inputs in [0,1] (one example per row) with integer labels.
struct Dataset {
  Batch inputs;
  Labels labels;
  int num_classes = 0;
  ImageShape shape{0, 0, 0};  // channels == 0 for flat feature vectors

  Index size() const { return inputs.rows(); }
  Index dim() const { return inputs.cols(); }
  bool is_image() const { return shape.channels > 0; }
  Dataset subset(const std::vector<Index>& rows) const;
  /// Throws unless every input is in [0,1] and every label in range.
  void validate() const;
};

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline const ImageShape kCifarShape{3, 32, 32};

/// Parses CIFAR binary records: one label byte followed by 3072 channel-planar
/// pixel bytes. Pixels are scaled by 1/255.
Dataset parse_cifar_records(const std::string& bytes, int num_classes = 10);
Dataset load_cifar_binary(const std::string& path, int num_classes = 10);

/// Loads the training (data_batch_1..5.bin) or test (test_batch.bin) split
/// from a CIFAR-10 binary directory, keeps the listed classes relabelled to
/// 0..k-1 in list order and at most per_class examples of each.
Dataset load_cifar_directory(const std::string& directory, bool train,
                             const std::vector<int>& classes, int per_class);

struct AugmentationPolicy {
  int padding = 4;
  double flip_probability = 0.5;
  bool enabled = true;

  void validate() const;
  friend bool operator==(const AugmentationPolicy&, const AugmentationPolicy&) = default;
};

using ImageRow = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// Mirror of each channel along the width axis.
ImageRow flip_horizontal(const Eigen::Ref<const ImageRow>& image, const ImageShape& shape);

/// Crop at offset (dy, dx) of the zero-padded image; offsets in [0, 2*padding].
ImageRow crop_padded(const Eigen::Ref<const ImageRow>& image, const ImageShape& shape, int padding,
                     int dy, int dx);

struct AugmentDraw {
  int dy = 0;
  int dx = 0;
  bool flip = false;
};

AugmentDraw draw_augmentation(const AugmentationPolicy& policy, Rng& rng);
ImageRow apply_augmentation(const Eigen::Ref<const ImageRow>& image, const ImageShape& shape,
                            const AugmentationPolicy& policy, const AugmentDraw& draw);

/// Random crop with zero padding followed by a random horizontal flip.
ImageRow augment(const Eigen::Ref<const ImageRow>& image, const ImageShape& shape,
                 const AugmentationPolicy& policy, Rng& rng);

/// Two independent augmentations drawn in sequence from rng.
std::pair<ImageRow, ImageRow> augment_pair(const Eigen::Ref<const ImageRow>& image,
                                           const ImageShape& shape,
                                           const AugmentationPolicy& policy, Rng& rng);

/// Pair drawn from the two substreams keyed by (seed, example index, epoch).
std::pair<ImageRow, ImageRow> augment_pair(const Eigen::Ref<const ImageRow>& image,
                                           const ImageShape& shape,
                                           const AugmentationPolicy& policy, std::uint64_t seed,
                                           std::uint64_t index, std::uint64_t epoch);

/// Binary Gaussian model: y uniform on {-1,+1}, x ~ N(y * theta, sigma^2 I).
struct GaussianModelSpec {
  Vector theta;
  double sigma = 1.0;

  Index dim() const { return theta.size(); }
  void validate() const;
};

/// theta = (1, ..., 1), so |theta| = sqrt(d).
GaussianModelSpec gaussian_model(int d, double sigma);

struct GaussianSample {
  Batch x;
  Labels y;  // entries are -1 or +1
};

GaussianSample sample_gaussian_model(const GaussianModelSpec& spec, Index n, Rng& rng);

/// Two isotropic 2-D blobs around (0.3, 0.3) and (0.7, 0.7), clipped to [0,1].
Dataset two_gaussians(Index n, std::uint64_t seed, double spread = 0.1);

/// 3x32x32 images: a class-dependent colour and stripe pattern plus noise.
Dataset synthetic_images(Index n, int num_classes, std::uint64_t seed, double noise = 0.15);

/// Shuffled mini-batch index lists covering 0..n-1 once.
std::vector<std::vector<Index>> epoch_batches(Index n, Index batch_size, Rng& rng);

}  // namespace raat

#endif  // RAAT_DATA_HPP
