#include "pulab/datasets.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "pulab/errors.hpp"
#include "pulab/rng.hpp"

namespace pulab {

std::size_t LabeledPool::count(Label l) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l));
}

LabeledPool make_two_moons(std::size_t n, double noise, Rng& rng) {
    if (n < 2) throw SpecError("make_two_moons needs n >= 2");
    if (!(noise >= 0.0)) throw SpecError("make_two_moons noise must be >= 0");
    const std::size_t per_class = n / 2;
    LabeledPool pool;
    pool.features = Tensor::matrix(2 * per_class, 2);
    pool.labels.reserve(2 * per_class);
    for (std::size_t i = 0; i < 2 * per_class; ++i) {
        const bool positive = i < per_class;
        const double t = std::numbers::pi * rng.uniform();
        double x = positive ? std::cos(t) : 1.0 - std::cos(t);
        double y = positive ? std::sin(t) : 0.5 - std::sin(t);
        if (noise > 0.0) {
            x += noise * rng.normal();
            y += noise * rng.normal();
        }
        pool.features.at(i, 0) = x;
        pool.features.at(i, 1) = y;
        pool.labels.push_back(positive ? Label::positive : Label::negative);
    }
    return pool;
}

LabeledPool make_gaussian_mixture(std::span<const GaussianComponent> components, Rng& rng) {
    if (components.empty()) throw SpecError("gaussian mixture needs at least one component");
    const std::size_t d = components.front().mean.size();
    if (d == 0) throw SpecError("gaussian mixture needs a positive dimension");
    std::size_t total = 0;
    std::vector<Eigen::MatrixXd> factors;
    for (std::size_t c = 0; c < components.size(); ++c) {
        const auto& comp = components[c];
        const std::string where = "component " + std::to_string(c);
        if (comp.mean.size() != d || comp.cov.size() != d) {
            throw SpecError(where + ": mean/covariance dimension mismatch");
        }
        Eigen::MatrixXd cov(d, d);
        for (std::size_t i = 0; i < d; ++i) {
            if (comp.cov[i].size() != d) throw SpecError(where + ": covariance is not square");
            for (std::size_t j = 0; j < d; ++j) cov(i, j) = comp.cov[i][j];
        }
        if (!cov.allFinite()) throw SpecError(where + ": covariance is not finite");
        const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
        if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
            throw SpecError(where + ": covariance is not symmetric");
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
        if (eig.eigenvalues().minCoeff() < -1e-10 * scale) {
            throw SpecError(where + ": covariance is not positive semidefinite");
        }
        const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        factors.push_back(eig.eigenvectors() * root.asDiagonal());
        total += comp.count;
    }
    if (total == 0) throw SpecError("gaussian mixture has no samples");

    LabeledPool pool;
    pool.features = Tensor::matrix(total, d);
    pool.labels.reserve(total);
    std::size_t row = 0;
    Eigen::VectorXd z(d);
    for (std::size_t c = 0; c < components.size(); ++c) {
        const auto& comp = components[c];
        for (std::size_t s = 0; s < comp.count; ++s, ++row) {
            for (std::size_t k = 0; k < d; ++k) z(k) = rng.normal();
            const Eigen::VectorXd x = factors[c] * z;
            for (std::size_t k = 0; k < d; ++k) pool.features.at(row, k) = comp.mean[k] + x(k);
            pool.labels.push_back(comp.label);
        }
    }
    return pool;
}

// IDX -------------------------------------------------------------------------

namespace {

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string hex32(std::uint32_t v) {
    std::ostringstream os;
    os << "0x" << std::hex;
    os.width(8);
    os.fill('0');
    os << v;
    return os.str();
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
    if (bytes.size() < offset + 4) {
        throw IngestError(path.string() + ": truncated header at offset " + std::to_string(offset) +
                          " (file has " + std::to_string(bytes.size()) + " bytes)");
    }
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void check_magic(std::uint32_t magic, std::uint32_t expected, const std::filesystem::path& path) {
    if (magic != expected) {
        throw IngestError(path.string() + ": bad magic number " + hex32(magic) + " at offset 0 (expected " +
                          hex32(expected) + ")");
    }
}

void put_be32(std::ofstream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                           static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(bytes, 4);
}

}  // namespace

IdxImages read_idx_images(const std::filesystem::path& path) {
    const auto bytes = read_all(path);
    check_magic(read_be32(bytes, 0, path), kIdxImagesMagic, path);
    IdxImages img;
    img.count = read_be32(bytes, 4, path);
    img.rows = read_be32(bytes, 8, path);
    img.cols = read_be32(bytes, 12, path);
    const std::size_t per_image = img.rows * img.cols;
    const std::size_t available = bytes.size() - 16;
    if (per_image != 0 && img.count > available / per_image) {
        throw IngestError(path.string() + ": truncated pixel data starting at offset 16: expected " +
                          std::to_string(img.count) + " x " + std::to_string(per_image) +
                          " bytes, found " + std::to_string(available));
    }
    const std::size_t expected = img.count * per_image;
    img.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(expected));
    return img;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
    const auto bytes = read_all(path);
    check_magic(read_be32(bytes, 0, path), kIdxLabelsMagic, path);
    const std::size_t count = read_be32(bytes, 4, path);
    if (bytes.size() - 8 < count) {
        throw IngestError(path.string() + ": truncated label data starting at offset 8: expected " +
                          std::to_string(count) + " bytes, found " + std::to_string(bytes.size() - 8));
    }
    return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

void write_idx_images(const std::filesystem::path& path, const IdxImages& images) {
    if (images.pixels.size() != images.count * images.rows * images.cols) {
        throw SpecError("write_idx_images: pixel count does not match header");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestError("cannot write " + path.string());
    put_be32(out, kIdxImagesMagic);
    put_be32(out, static_cast<std::uint32_t>(images.count));
    put_be32(out, static_cast<std::uint32_t>(images.rows));
    put_be32(out, static_cast<std::uint32_t>(images.cols));
    out.write(reinterpret_cast<const char*>(images.pixels.data()),
              static_cast<std::streamsize>(images.pixels.size()));
    if (!out) throw IngestError("write failed for " + path.string());
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestError("cannot write " + path.string());
    put_be32(out, kIdxLabelsMagic);
    put_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
    if (!out) throw IngestError("write failed for " + path.string());
}

std::vector<double> downscale_image(std::span<const double> image, std::size_t rows,
                                    std::size_t cols, std::size_t side) {
    if (side == 0 || rows % side != 0 || cols % side != 0) {
        throw SpecError("cannot block-average " + std::to_string(rows) + "x" + std::to_string(cols) +
                        " to " + std::to_string(side) + "x" + std::to_string(side));
    }
    if (image.size() != rows * cols) throw SpecError("downscale_image: size mismatch");
    const std::size_t br = rows / side, bc = cols / side;
    std::vector<double> out(side * side, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[(r / br) * side + c / bc] += image[r * cols + c];
    const double inv = 1.0 / static_cast<double>(br * bc);
    for (auto& v : out) v *= inv;
    return out;
}

LabeledPool load_idx(const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path, const IdxOptions& options) {
    const IdxImages images = read_idx_images(images_path);
    const auto raw_labels = read_idx_labels(labels_path);
    if (raw_labels.size() != images.count) {
        throw IngestError("count mismatch: " + images_path.string() + " declares " +
                          std::to_string(images.count) + " images at offset 4, " + labels_path.string() +
                          " declares " + std::to_string(raw_labels.size()) + " labels at offset 4");
    }
    if (images.count == 0) throw IngestError(images_path.string() + ": no images");
    const std::size_t native = images.rows * images.cols;
    const std::size_t side = options.downscale;
    const std::size_t dim = side == 0 ? native : side * side;

    LabeledPool pool;
    pool.features = Tensor::matrix(images.count, dim);
    pool.labels.reserve(images.count);
    std::vector<double> scaled(native);
    for (std::size_t i = 0; i < images.count; ++i) {
        for (std::size_t p = 0; p < native; ++p) scaled[p] = images.pixels[i * native + p] / 255.0;
        auto row = pool.features.row(i);
        if (side == 0) {
            std::copy(scaled.begin(), scaled.end(), row.begin());
        } else {
            const auto small = downscale_image(scaled, images.rows, images.cols, side);
            std::copy(small.begin(), small.end(), row.begin());
        }
        const int cls = raw_labels[i];
        const bool positive = std::find(options.positive_classes.begin(), options.positive_classes.end(),
                                        cls) != options.positive_classes.end();
        pool.labels.push_back(positive ? Label::positive : Label::negative);
    }
    return pool;
}

}  // namespace pulab
