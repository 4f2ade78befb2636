#include "helpers.hpp"

#include "raat/data.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace raat;
using namespace raat::testing;

namespace {

std::string record(int label, int fill) {
  std::string r(kCifarRecordBytes, static_cast<char>(fill));
  r[0] = static_cast<char>(label);
  return r;
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("raat_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

ImageRow ramp_image(const ImageShape& s) {
  ImageRow img(s.size());
  for (Index i = 0; i < img.size(); ++i) img(i) = static_cast<double>(i % 97) / 96.0;
  return img;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("cifar records decode by hand") {
    Dataset d = parse_cifar_records(record(7, 255));
    REQUIRE(d.size() == 1);
    CHECK(d.labels[0] == 7);
    CHECK(d.inputs.minCoeff() == 1.0);
    CHECK(d.inputs.maxCoeff() == 1.0);

    d = parse_cifar_records(record(0, 0));
    CHECK(d.inputs.maxCoeff() == 0.0);

    d = parse_cifar_records(record(3, 10) + record(5, 20));
    REQUIRE(d.size() == 2);
    CHECK(d.labels == Labels{3, 5});
    CHECK(d.inputs(1, 0) == doctest::Approx(20.0 / 255.0));
    CHECK(d.shape == kCifarShape);
  }

  TEST_CASE("cifar channel-planar layout") {
    std::string r = record(1, 0);
    // channel 1, row 2, column 5
    const std::size_t pixel = 1024 * 1 + 32 * 2 + 5;
    r[1 + pixel] = static_cast<char>(255);
    const Dataset d = parse_cifar_records(r);
    CHECK(d.inputs(0, static_cast<Index>(pixel)) == 1.0);
    CHECK(d.inputs.sum() == 1.0);
  }

  TEST_CASE("cifar format errors") {
    CHECK_THROWS_AS(parse_cifar_records(record(1, 0).substr(0, 3000)), FormatError);
    CHECK_THROWS_AS(parse_cifar_records(record(10, 0)), FormatError);
    CHECK_THROWS_AS(load_cifar_binary("/nonexistent/raat.bin"), FormatError);
  }

  TEST_CASE("cifar directory with class subset") {
    const auto dir = temp_dir("cifar");
    for (int b = 1; b <= 5; ++b) {
      std::ofstream f(dir / ("data_batch_" + std::to_string(b) + ".bin"), std::ios::binary);
      for (int k = 0; k < 10; ++k) f << record(k, 10 * b + k);
    }
    {
      std::ofstream f(dir / "test_batch.bin", std::ios::binary);
      for (int k = 0; k < 10; ++k) f << record(k, k);
    }
    const Dataset train = load_cifar_directory(dir.string(), true, {3, 5}, 2);
    CHECK(train.size() == 4);
    CHECK(train.num_classes == 2);
    CHECK(std::count(train.labels.begin(), train.labels.end(), 0) == 2);
    CHECK(std::count(train.labels.begin(), train.labels.end(), 1) == 2);
    const Dataset test = load_cifar_directory(dir.string(), false, {5, 3}, 100);
    CHECK(test.size() == 2);
    // class 5 comes first in the list so it becomes label 0
    for (Index i = 0; i < test.size(); ++i) {
      const double fill = test.inputs(i, 0) * 255.0;
      CHECK(test.labels[static_cast<std::size_t>(i)] == (std::lround(fill) == 5 ? 0 : 1));
    }
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("disabled augmentation is the identity") {
    AugmentationPolicy p;
    p.enabled = false;
    const ImageRow img = ramp_image(kCifarShape);
    Rng rng(1);
    CHECK(augment(img, kCifarShape, p, rng) == img);
  }

  TEST_CASE("flip is an involution and crop at the centre is the identity") {
    const ImageRow img = ramp_image(kCifarShape);
    CHECK(flip_horizontal(flip_horizontal(img, kCifarShape), kCifarShape) == img);
    CHECK(flip_horizontal(img, kCifarShape) != img);
    CHECK(crop_padded(img, kCifarShape, 4, 4, 4) == img);
    // shift right by one: column 0 becomes padding
    const ImageRow shifted = crop_padded(img, kCifarShape, 4, 4, 3);
    CHECK(shifted(0) == 0.0);
    CHECK(shifted(1) == img(0));
  }

  TEST_CASE("crop offsets are uniform over the padded grid") {
    const AugmentationPolicy p;
    Rng rng(2024);
    const int n = 10000;
    std::array<int, 81> joint{};
    std::array<int, 9> rows{}, cols{};
    int flips = 0;
    for (int i = 0; i < n; ++i) {
      const AugmentDraw d = draw_augmentation(p, rng);
      REQUIRE(d.dy >= 0);
      REQUIRE(d.dy <= 8);
      REQUIRE(d.dx >= 0);
      REQUIRE(d.dx <= 8);
      ++joint[static_cast<std::size_t>(d.dy * 9 + d.dx)];
      ++rows[static_cast<std::size_t>(d.dy)];
      ++cols[static_cast<std::size_t>(d.dx)];
      flips += d.flip;
    }
    const double se9 = std::sqrt(n * (1.0 / 9) * (8.0 / 9));
    for (int k = 0; k < 9; ++k) {
      CHECK(std::abs(rows[static_cast<std::size_t>(k)] - n / 9.0) <= 3 * se9);
      CHECK(std::abs(cols[static_cast<std::size_t>(k)] - n / 9.0) <= 3 * se9);
    }
    double chi2 = 0;
    for (int c : joint) {
      CHECK(c > 0);
      chi2 += (c - n / 81.0) * (c - n / 81.0) / (n / 81.0);
    }
    CHECK(chi2 < 124.8);  // 99.9% quantile, 80 degrees of freedom
    CHECK(std::abs(flips - n / 2.0) <= 3 * std::sqrt(n * 0.25));
  }

  TEST_CASE("augmented images stay in range and pairs are reproducible") {
    const Dataset d = synthetic_images(4, 2, 3);
    const AugmentationPolicy p;
    for (Index i = 0; i < d.size(); ++i) {
      const auto [a, b] = augment_pair(d.inputs.row(i), d.shape, p, 99, i, 2);
      const auto [c, e] = augment_pair(d.inputs.row(i), d.shape, p, 99, i, 2);
      CHECK(a == c);
      CHECK(b == e);
      CHECK(a.minCoeff() >= 0.0);
      CHECK(a.maxCoeff() <= 1.0);
    }
    // the two views come from different streams
    int differ = 0;
    for (Index i = 0; i < 20; ++i) {
      const auto [a, b] = augment_pair(d.inputs.row(0), d.shape, p, 5, i, 0);
      differ += a != b;
    }
    CHECK(differ >= 15);
  }

  TEST_CASE("gaussian model sampling") {
    SUBCASE("vanishing noise puts samples on the centres") {
      const GaussianModelSpec spec = gaussian_model(4, 1e-12);
      Rng rng(1);
      const GaussianSample s = sample_gaussian_model(spec, 50, rng);
      for (Index i = 0; i < 50; ++i) {
        const double y = s.y[static_cast<std::size_t>(i)];
        CHECK((s.x.row(i).transpose() - y * spec.theta).cwiseAbs().maxCoeff() < 1e-10);
      }
    }
    SUBCASE("moments") {
      const int n = 100000;
      const double sigma = 1.5;
      const GaussianModelSpec spec = gaussian_model(4, sigma);
      Rng rng(7);
      const GaussianSample s = sample_gaussian_model(spec, n, rng);
      Vector mean_pos = Vector::Zero(4), mean_neg = Vector::Zero(4);
      int pos = 0;
      for (Index i = 0; i < n; ++i) {
        if (s.y[static_cast<std::size_t>(i)] == 1) {
          mean_pos += s.x.row(i).transpose();
          ++pos;
        } else {
          mean_neg += s.x.row(i).transpose();
        }
      }
      const int neg = n - pos;
      mean_pos /= pos;
      mean_neg /= neg;
      CHECK(std::abs(pos - n / 2.0) <= 3 * std::sqrt(n * 0.25));
      CHECK((mean_pos - spec.theta).cwiseAbs().maxCoeff() <= 4 * sigma / std::sqrt(pos));
      CHECK((mean_neg + spec.theta).cwiseAbs().maxCoeff() <= 4 * sigma / std::sqrt(neg));
      // residual covariance
      Matrix centred(n, 4);
      for (Index i = 0; i < n; ++i)
        centred.row(i) = s.x.row(i) - s.y[static_cast<std::size_t>(i)] * spec.theta.transpose();
      const Matrix cov = centred.transpose() * centred / n;
      for (int a = 0; a < 4; ++a) {
        CHECK(cov(a, a) == doctest::Approx(sigma * sigma).epsilon(0.03));
        for (int b = 0; b < 4; ++b)
          if (a != b) CHECK(std::abs(cov(a, b)) <= 5 * sigma * sigma / std::sqrt(n));
      }
    }
    SUBCASE("invalid noise") {
      Rng rng(1);
      CHECK_THROWS_AS(sample_gaussian_model(gaussian_model(4, 0.0), 10, rng), ValidationError);
      CHECK_THROWS_AS(sample_gaussian_model(gaussian_model(4, -1.0), 10, rng), ValidationError);
      CHECK_THROWS_AS(gaussian_model(0, 1.0), ValidationError);
    }
  }

  TEST_CASE("toy datasets validate and are seeded") {
    const Dataset a = two_gaussians(200, 3);
    a.validate();
    CHECK(a.dim() == 2);
    CHECK(!a.is_image());
    CHECK(a.inputs == two_gaussians(200, 3).inputs);
    const Dataset img = synthetic_images(10, 3, 4);
    img.validate();
    CHECK(img.is_image());
    CHECK(img.dim() == 3 * 32 * 32);
    CHECK(std::set<int>(img.labels.begin(), img.labels.end()).size() == 3);
  }

  TEST_CASE("validation rejects out-of-range data") {
    Dataset d = two_gaussians(4, 1);
    d.inputs(0, 0) = 1.5;
    CHECK_THROWS_AS(d.validate(), ValidationError);
    d = two_gaussians(4, 1);
    d.labels[0] = 5;
    CHECK_THROWS_AS(d.validate(), ValidationError);
  }

  TEST_CASE("epoch batches cover every index once") {
    Rng rng(3);
    const auto batches = epoch_batches(103, 16, rng);
    CHECK(batches.size() == 7);
    std::vector<int> seen(103, 0);
    for (const auto& b : batches)
      for (Index i : b) ++seen[static_cast<std::size_t>(i)];
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  }
}
