#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pulab/tensor.hpp"

namespace pulab {

class Rng;

enum class Label : std::uint8_t { negative = 0, positive = 1 };

/// Feature rows with one class label each.
struct LabeledPool {
    Tensor features;  // (n, d)
    std::vector<Label> labels;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return features.cols(); }
    std::size_t count(Label l) const;
};

/// Two interleaved half circles. The upper arc (cos t, sin t) is positive, the
/// lower arc (1 - cos t, 0.5 - sin t) negative, t ~ U[0, pi]. Each class gets
/// floor(n / 2) points, so an odd n drops one. Gaussian noise of std-dev
/// `noise` is added to each coordinate.
LabeledPool make_two_moons(std::size_t n, double noise, Rng& rng);

struct GaussianComponent {
    std::vector<double> mean;
    std::vector<std::vector<double>> cov;  // d x d, symmetric PSD
    std::size_t count = 0;
    Label label = Label::positive;
};

/// Samples every component in order (count rows each) via x = mean + A z with
/// A A^T = cov. Throws SpecError for asymmetric or non-PSD covariances.
LabeledPool make_gaussian_mixture(std::span<const GaussianComponent> components, Rng& rng);

// IDX ingestion ---------------------------------------------------------------

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct IdxImages {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels;  // count * rows * cols
};

IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);
void write_idx_images(const std::filesystem::path& path, const IdxImages& images);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

struct IdxOptions {
    /// Side length after block averaging; 0 keeps the native resolution.
    std::size_t downscale = 0;
    /// Raw class ids mapped to the positive label (default: even digits).
    std::vector<int> positive_classes{0, 2, 4, 6, 8};
};

/// Pixels scaled to [0, 1] by /255, optionally block-averaged to s x s, one
/// flattened row per image.
LabeledPool load_idx(const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path, const IdxOptions& options = {});

/// Block-average a rows x cols image to side x side. rows and cols must be
/// multiples of side.
std::vector<double> downscale_image(std::span<const double> image, std::size_t rows,
                                    std::size_t cols, std::size_t side);

}  // namespace pulab
