#pragma once

// Dataset sources and transforms: noisy-XOR simulation, IDX image files
// (plain or gzip), global standardization and pixel-space augmentation.

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>

#include "fnbg/mlp.hpp"
#include "fnbg/rng.hpp"

namespace fnbg {

// ------------------------------------------------------------------ noisy XOR

struct XorSimConfig {
    std::size_t train_size = 5000;
    std::size_t test_size = 1200;
    double noise_width = 0.4;
    std::uint64_t seed = 0;

    void validate() const {
        if (train_size % 4 || test_size % 4) throw ConfigError("XOR sizes must be divisible by 4");
        if (!(noise_width >= 0 && noise_width < 0.5)) throw ConfigError("XOR noise width must lie in [0, 0.5)");
    }
};

inline constexpr const char* kXorNoiseLaw = "corner + iid Uniform(-w, w) per coordinate, balanced corners";

/// Four balanced corner clusters; (0,0) and (1,1) carry label 0, (0,1) and
/// (1,0) label 1. Points are shuffled after generation.
inline Dataset simulate_xor_split(std::size_t size, double width, Engine rng) {
    static constexpr double corners[4][2] = {{0, 0}, {1, 1}, {0, 1}, {1, 0}};
    Dataset d;
    d.features = 2;
    std::uniform_real_distribution<double> noise(-width, width);
    std::vector<std::size_t> order(size);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    d.inputs.resize(size * 2);
    d.labels.resize(size);
    for (std::size_t i = 0; i < size; ++i) {
        std::size_t c = i % 4;
        std::size_t slot = order[i];
        for (int a = 0; a < 2; ++a) d.inputs[slot * 2 + a] = corners[c][a] + (width > 0 ? noise(rng) : 0.0);
        d.labels[slot] = c < 2 ? 0 : 1;
    }
    return d;
}

inline std::pair<Dataset, Dataset> simulate_noisy_xor(const XorSimConfig& cfg) {
    cfg.validate();
    return {simulate_xor_split(cfg.train_size, cfg.noise_width, make_engine(cfg.seed, Stream::Xor, 0)),
            simulate_xor_split(cfg.test_size, cfg.noise_width, make_engine(cfg.seed, Stream::Xor, 1))};
}

/// Header `x1,...,xd,label`; values written round-trip exact.
inline void write_csv(std::ostream& os, const Dataset& d) {
    for (std::size_t f = 0; f < d.features; ++f) os << 'x' << f + 1 << ',';
    os << "label\n";
    os.precision(17);
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (double v : d.row(i)) os << v << ',';
        os << d.labels[i] << '\n';
    }
}

inline Dataset read_csv(std::istream& is) {
    Dataset d;
    std::string line;
    if (!std::getline(is, line)) throw DataError("empty CSV");
    d.features = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    if (d.features == 0) throw DataError("CSV header needs feature columns and a label column");
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            try {
                if (col < d.features)
                    d.inputs.push_back(std::stod(cell));
                else
                    d.labels.push_back(std::stoi(cell));
            } catch (const std::exception&) {
                throw DataError("CSV line " + std::to_string(lineno) + ": bad value '" + cell + "'");
            }
            ++col;
        }
        if (col != d.features + 1) throw DataError("CSV line " + std::to_string(lineno) + " has wrong column count");
    }
    return d;
}

inline void write_csv_file(const std::filesystem::path& p, const Dataset& d) {
    std::ofstream os(p, std::ios::trunc);
    if (!os) throw IoError("cannot write " + p.string());
    write_csv(os, d);
}

inline Dataset read_csv_file(const std::filesystem::path& p) {
    std::ifstream is(p);
    if (!is) throw IoError("cannot open " + p.string());
    return read_csv(is);
}

// ------------------------------------------------------------------------ IDX

inline constexpr std::int32_t kIdxImageMagic = 2051;
inline constexpr std::int32_t kIdxLabelMagic = 2049;

namespace detail {

/// Whole file contents; gzip input is inflated transparently.
inline std::vector<unsigned char> slurp_maybe_gzip(const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) throw IoError("no such file: " + p.string());
    gzFile f = gzopen(p.string().c_str(), "rb");
    if (!f) throw IoError("cannot open " + p.string());
    std::vector<unsigned char> out;
    unsigned char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + n);
    int err = 0;
    const char* msg = gzerror(f, &err);
    gzclose(f);
    if (n < 0 || (err != Z_OK && err != Z_STREAM_END)) throw DataError("read error in " + p.string() + ": " + msg);
    return out;
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t at) {
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
           std::uint32_t{b[at + 3]};
}

inline void put_be32(std::vector<unsigned char>& b, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

inline void write_maybe_gzip(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
    if (p.extension() == ".gz") {
        gzFile f = gzopen(p.string().c_str(), "wb");
        if (!f) throw IoError("cannot write " + p.string());
        int n = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
        if (gzclose(f) != Z_OK || n != static_cast<int>(bytes.size())) throw IoError("write failed for " + p.string());
    } else {
        std::ofstream os(p, std::ios::binary | std::ios::trunc);
        os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw IoError("write failed for " + p.string());
    }
}

}  // namespace detail

/// Reads an IDX image file (magic 2051, big-endian count/rows/cols, uint8
/// pixels) and its label file (magic 2049). Pixels stay in [0, 255].
inline Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    auto img = detail::slurp_maybe_gzip(images_path);
    auto lab = detail::slurp_maybe_gzip(labels_path);
    if (img.size() < 16) throw DataError(images_path.string() + ": truncated header");
    if (lab.size() < 8) throw DataError(labels_path.string() + ": truncated header");
    if (detail::read_be32(img, 0) != kIdxImageMagic)
        throw DataError(images_path.string() + ": bad magic " + std::to_string(detail::read_be32(img, 0)));
    if (detail::read_be32(lab, 0) != kIdxLabelMagic)
        throw DataError(labels_path.string() + ": bad magic " + std::to_string(detail::read_be32(lab, 0)));
    std::size_t count = detail::read_be32(img, 4), rows = detail::read_be32(img, 8), cols = detail::read_be32(img, 12);
    std::size_t label_count = detail::read_be32(lab, 4);
    if (count != label_count)
        throw DataError("image count " + std::to_string(count) + " != label count " + std::to_string(label_count));
    if (img.size() != 16 + count * rows * cols) throw DataError(images_path.string() + ": truncated or oversized payload");
    if (lab.size() != 8 + count) throw DataError(labels_path.string() + ": truncated or oversized payload");

    Dataset d;
    d.features = rows * cols;
    d.image_rows = rows;
    d.image_cols = cols;
    d.inputs.assign(img.begin() + 16, img.end());
    d.labels.assign(lab.begin() + 8, lab.end());
    return d;
}

/// Writes pixel data (rounded and clamped to uint8) and labels as IDX;
/// a `.gz` extension selects gzip compression.
inline void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                      const Dataset& d) {
    if (d.image_rows * d.image_cols != d.features) throw DataError("dataset has no image shape");
    std::vector<unsigned char> img, lab;
    img.reserve(16 + d.inputs.size());
    detail::put_be32(img, kIdxImageMagic);
    detail::put_be32(img, static_cast<std::uint32_t>(d.size()));
    detail::put_be32(img, static_cast<std::uint32_t>(d.image_rows));
    detail::put_be32(img, static_cast<std::uint32_t>(d.image_cols));
    for (double v : d.inputs) img.push_back(static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L)));
    detail::put_be32(lab, kIdxLabelMagic);
    detail::put_be32(lab, static_cast<std::uint32_t>(d.size()));
    for (int y : d.labels) {
        if (y < 0 || y > 255) throw DataError("label does not fit in an IDX byte");
        lab.push_back(static_cast<unsigned char>(y));
    }
    detail::write_maybe_gzip(images_path, img);
    detail::write_maybe_gzip(labels_path, lab);
}

/// First `count` points (or all); keeps image shape.
inline Dataset head(const Dataset& d, std::size_t count) {
    count = std::min(count, d.size());
    Dataset out = d;
    out.inputs.resize(count * d.features);
    out.labels.resize(count);
    return out;
}

// ---------------------------------------------------------- standardization

struct StandardizeStats {
    double mean = 0;
    double std = 1;
};

/// (x - mean) / std with a single scalar mean and population std over every
/// input value. Precomputed stats (from the training set) can be reused.
inline std::pair<Dataset, StandardizeStats> standardize(const Dataset& d,
                                                        std::optional<StandardizeStats> stats = std::nullopt) {
    if (d.empty()) throw DataError("cannot standardize an empty dataset");
    StandardizeStats s;
    if (stats) {
        s = *stats;
    } else {
        double sum = 0;
        for (double v : d.inputs) sum += v;
        s.mean = sum / static_cast<double>(d.inputs.size());
        double ss = 0;
        for (double v : d.inputs) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(d.inputs.size()));
    }
    if (!(s.std > 0)) throw DataError("standardization needs a positive standard deviation");
    Dataset out = d;
    for (auto& v : out.inputs) v = (v - s.mean) / s.std;
    return {std::move(out), s};
}

// ------------------------------------------------------------- augmentation

enum class Transform { Rotation, Blur, Inversion };

inline std::string to_string(Transform t) {
    switch (t) {
        case Transform::Rotation: return "rotation";
        case Transform::Blur: return "blur";
        case Transform::Inversion: return "inversion";
    }
    return "?";
}

inline Transform parse_transform(std::string_view s) {
    if (s == "rotation" || s == "rotate") return Transform::Rotation;
    if (s == "blur") return Transform::Blur;
    if (s == "inversion" || s == "invert") return Transform::Inversion;
    throw ConfigError("unknown transform '" + std::string(s) + "'");
}

struct ImageTransformConfig {
    double max_angle_degrees = 30;
    double blur_probability = 0.9;
    std::size_t kernel_size = 9;
    double sigma_min = 1.0;
    double sigma_max = 1.5;
    double invert_probability = 0.5;
    std::uint64_t seed = 0;

    void validate() const {
        auto prob = [](double p) { return p >= 0 && p <= 1; };
        if (!prob(blur_probability) || !prob(invert_probability)) throw ConfigError("probabilities must lie in [0,1]");
        if (kernel_size % 2 == 0) throw ConfigError("blur kernel size must be odd");
        if (!(sigma_min > 0 && sigma_max >= sigma_min)) throw ConfigError("blur sigma range is invalid");
        if (max_angle_degrees < 0) throw ConfigError("rotation range must be nonnegative");
    }
};

/// Normalized size x size Gaussian kernel, row-major.
inline std::vector<double> gaussian_kernel(std::size_t size, double sigma) {
    std::vector<double> k(size * size);
    double c = (static_cast<double>(size) - 1) / 2, total = 0;
    for (std::size_t r = 0; r < size; ++r)
        for (std::size_t col = 0; col < size; ++col) {
            double dr = static_cast<double>(r) - c, dc = static_cast<double>(col) - c;
            total += k[r * size + col] = std::exp(-(dr * dr + dc * dc) / (2 * sigma * sigma));
        }
    for (auto& v : k) v /= total;
    return k;
}

/// Zero-padded 2-D convolution with a square kernel.
inline std::vector<double> convolve(std::span<const double> img, std::size_t rows, std::size_t cols,
                                    std::span<const double> kernel, std::size_t ksize) {
    std::vector<double> out(rows * cols, 0.0);
    auto half = static_cast<std::ptrdiff_t>(ksize / 2);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            double acc = 0;
            for (std::ptrdiff_t kr = -half; kr <= half; ++kr)
                for (std::ptrdiff_t kc = -half; kc <= half; ++kc) {
                    auto rr = static_cast<std::ptrdiff_t>(r) + kr, cc = static_cast<std::ptrdiff_t>(c) + kc;
                    if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(rows) || cc >= static_cast<std::ptrdiff_t>(cols))
                        continue;
                    acc += kernel[static_cast<std::size_t>((kr + half) * static_cast<std::ptrdiff_t>(ksize) + kc + half)] *
                           img[static_cast<std::size_t>(rr) * cols + static_cast<std::size_t>(cc)];
                }
            out[r * cols + c] = acc;
        }
    return out;
}

/// Rotation by `degrees` about the image centre with bilinear resampling;
/// source positions outside the frame read as 0.
inline std::vector<double> rotate(std::span<const double> img, std::size_t rows, std::size_t cols, double degrees) {
    std::vector<double> out(rows * cols, 0.0);
    double rad = degrees * std::numbers::pi / 180.0;
    double cs = std::cos(rad), sn = std::sin(rad);
    double cy = (static_cast<double>(rows) - 1) / 2, cx = (static_cast<double>(cols) - 1) / 2;
    auto at = [&](std::ptrdiff_t r, std::ptrdiff_t c) -> double {
        if (r < 0 || c < 0 || r >= static_cast<std::ptrdiff_t>(rows) || c >= static_cast<std::ptrdiff_t>(cols)) return 0.0;
        return img[static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c)];
    };
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            double dy = static_cast<double>(r) - cy, dx = static_cast<double>(c) - cx;
            // Inverse map: output pixel pulls from the source rotated by -angle.
            double sy = cy + cs * dy - sn * dx;
            double sx = cx + sn * dy + cs * dx;
            double fy = std::floor(sy), fx = std::floor(sx);
            double ty = sy - fy, tx = sx - fx;
            auto r0 = static_cast<std::ptrdiff_t>(fy), c0 = static_cast<std::ptrdiff_t>(fx);
            double v = (1 - ty) * ((1 - tx) * at(r0, c0) + (tx ? tx * at(r0, c0 + 1) : 0.0));
            if (ty) v += ty * ((1 - tx) * at(r0 + 1, c0) + (tx ? tx * at(r0 + 1, c0 + 1) : 0.0));
            out[r * cols + c] = v;
        }
    return out;
}

/// Applies one transform to every image with a per-image random stream
/// derived from (seed, transform, image index). Labels are untouched and
/// pixels are clamped to [0, 255].
inline Dataset augment(const Dataset& raw, Transform kind, const ImageTransformConfig& cfg) {
    cfg.validate();
    if (raw.image_rows * raw.image_cols != raw.features || raw.features == 0)
        throw DataError("augmentation needs image-shaped inputs");
    if (kind == Transform::Rotation && raw.image_rows != raw.image_cols)
        throw DataError("rotation needs square images");
    Dataset out = raw;
    const std::size_t rows = raw.image_rows, cols = raw.image_cols;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        Engine rng = make_engine(cfg.seed, {static_cast<std::uint64_t>(Stream::Augment), static_cast<std::uint64_t>(kind), i});
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        auto img = out.row(i);
        std::vector<double> result;
        switch (kind) {
            case Transform::Rotation: {
                double angle = -cfg.max_angle_degrees + 2 * cfg.max_angle_degrees * u01(rng);
                result = rotate(img, rows, cols, angle);
                break;
            }
            case Transform::Blur: {
                if (u01(rng) >= cfg.blur_probability) continue;
                double sigma = cfg.sigma_min + (cfg.sigma_max - cfg.sigma_min) * u01(rng);
                result = convolve(img, rows, cols, gaussian_kernel(cfg.kernel_size, sigma), cfg.kernel_size);
                break;
            }
            case Transform::Inversion: {
                if (u01(rng) >= cfg.invert_probability) continue;
                result.assign(img.begin(), img.end());
                for (auto& v : result) v = 255.0 - v;
                break;
            }
        }
        for (std::size_t p = 0; p < img.size(); ++p) img[p] = std::clamp(result[p], 0.0, 255.0);
    }
    return out;
}

}  // namespace fnbg
