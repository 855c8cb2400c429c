#include <gtest/gtest.h>
#include <zlib.h>

#include <fstream>
#include <sstream>

#include "fnbg/data.hpp"

namespace fs = std::filesystem;

using namespace fnbg;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("fnbg_data_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void put_be32(std::vector<unsigned char>& b, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

// 3 images of 2x2 pixels, built byte by byte.
std::pair<std::vector<unsigned char>, std::vector<unsigned char>> idx_fixture() {
    std::vector<unsigned char> img, lab;
    put_be32(img, 2051);
    put_be32(img, 3);
    put_be32(img, 2);
    put_be32(img, 2);
    for (unsigned char v : {0, 255, 10, 20, 30, 40, 50, 60, 7, 8, 9, 200}) img.push_back(v);
    put_be32(lab, 2049);
    put_be32(lab, 3);
    for (unsigned char v : {5, 0, 9}) lab.push_back(v);
    return {img, lab};
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& b) {
    std::ofstream os(p, std::ios::binary);
    os.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

void write_gz(const fs::path& p, const std::vector<unsigned char>& b) {
    gzFile f = gzopen(p.string().c_str(), "wb");
    gzwrite(f, b.data(), static_cast<unsigned>(b.size()));
    gzclose(f);
}

Dataset image_set(std::size_t n, std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> px(0, 255);
    Dataset d;
    d.features = rows * cols;
    d.image_rows = rows;
    d.image_cols = cols;
    for (std::size_t i = 0; i < n * rows * cols; ++i) d.inputs.push_back(px(rng));
    for (std::size_t i = 0; i < n; ++i) d.labels.push_back(static_cast<int>(i % 10));
    return d;
}

}  // namespace

TEST(Xor, DefaultSizesAndBalancedLabels) {
    auto [train, test] = simulate_noisy_xor({});
    EXPECT_EQ(train.size(), 5000u);
    EXPECT_EQ(test.size(), 1200u);
    EXPECT_EQ(std::count(train.labels.begin(), train.labels.end(), 1), 2500);
    for (std::size_t i = 0; i < train.size(); ++i) {
        double cx = std::round(train.inputs[2 * i]), cy = std::round(train.inputs[2 * i + 1]);
        EXPECT_LE(std::abs(train.inputs[2 * i] - cx), 0.4);
        EXPECT_LE(std::abs(train.inputs[2 * i + 1] - cy), 0.4);
        EXPECT_EQ(train.labels[i], static_cast<int>(cx) ^ static_cast<int>(cy));
    }
}

TEST(Xor, ZeroWidthGivesExactCornersAndSeedsAreReproducible) {
    XorSimConfig c;
    c.train_size = 40;
    c.test_size = 8;
    c.noise_width = 0;
    auto [train, test] = simulate_noisy_xor(c);
    for (double v : train.inputs) EXPECT_TRUE(v == 0.0 || v == 1.0);
    c.noise_width = 0.3;
    c.seed = 5;
    EXPECT_EQ(simulate_noisy_xor(c).first.inputs, simulate_noisy_xor(c).first.inputs);
    auto other = c;
    other.seed = 6;
    EXPECT_NE(simulate_noisy_xor(c).first.inputs, simulate_noisy_xor(other).first.inputs);
}

TEST(Xor, InvalidConfigIsRejected) {
    XorSimConfig c;
    c.train_size = 10;
    EXPECT_THROW(simulate_noisy_xor(c), ConfigError);
    c.train_size = 8;
    c.noise_width = 0.5;
    EXPECT_THROW(simulate_noisy_xor(c), ConfigError);
}

TEST(Csv, RoundTripIsExact) {
    auto [train, _] = simulate_noisy_xor({.train_size = 20, .test_size = 4, .noise_width = 0.4, .seed = 2});
    std::stringstream ss;
    write_csv(ss, train);
    EXPECT_EQ(ss.str().substr(0, 12), "x1,x2,label\n");
    auto back = read_csv(ss);
    EXPECT_EQ(back.inputs, train.inputs);
    EXPECT_EQ(back.labels, train.labels);
}

TEST(Csv, MalformedInputIsDataError) {
    std::stringstream bad("x1,label\n0.5\n");
    EXPECT_THROW(read_csv(bad), DataError);
    std::stringstream text("x1,label\nabc,1\n");
    EXPECT_THROW(read_csv(text), DataError);
}

TEST(Idx, ReadsPlainAndGzipFixture) {
    auto dir = scratch("idx");
    auto [img, lab] = idx_fixture();
    write_bytes(dir / "i.idx", img);
    write_bytes(dir / "l.idx", lab);
    write_gz(dir / "i.idx.gz", img);
    write_gz(dir / "l.idx.gz", lab);
    for (auto [i, l] : {std::pair{"i.idx", "l.idx"}, std::pair{"i.idx.gz", "l.idx.gz"}}) {
        auto d = load_idx(dir / i, dir / l);
        EXPECT_EQ(d.size(), 3u);
        EXPECT_EQ(d.features, 4u);
        EXPECT_EQ(d.image_rows, 2u);
        EXPECT_EQ(d.labels, (std::vector<int>{5, 0, 9}));
        EXPECT_EQ(d.inputs[1], 255.0);
        EXPECT_EQ(d.inputs[11], 200.0);
    }
}

TEST(Idx, CorruptFilesAreDataErrors) {
    auto dir = scratch("idx_bad");
    auto [img, lab] = idx_fixture();
    auto bad_magic = img;
    bad_magic[3] = 0x04;
    write_bytes(dir / "magic.idx", bad_magic);
    write_bytes(dir / "l.idx", lab);
    EXPECT_THROW(load_idx(dir / "magic.idx", dir / "l.idx"), DataError);
    auto truncated = img;
    truncated.pop_back();
    write_bytes(dir / "short.idx", truncated);
    EXPECT_THROW(load_idx(dir / "short.idx", dir / "l.idx"), DataError);
    auto count = lab;
    count[7] = 4;
    count.push_back(1);
    write_bytes(dir / "i.idx", img);
    write_bytes(dir / "count.idx", count);
    EXPECT_THROW(load_idx(dir / "i.idx", dir / "count.idx"), DataError);
    EXPECT_THROW(load_idx(dir / "missing.idx", dir / "l.idx"), IoError);
}

TEST(Idx, WriteThenReadRoundTrips) {
    auto dir = scratch("idx_rt");
    auto d = image_set(5, 4, 3, 1);
    write_idx(dir / "a.gz", dir / "b.gz", d);
    auto back = load_idx(dir / "a.gz", dir / "b.gz");
    EXPECT_EQ(back.inputs, d.inputs);
    EXPECT_EQ(back.labels, d.labels);
    EXPECT_EQ(back.image_cols, 3u);
}

TEST(Standardize, UsesTrainingStatisticsForTest) {
    Dataset d;
    d.features = 2;
    d.inputs = {0, 2, 4, 6};
    d.labels = {0, 1};
    auto [s, stats] = standardize(d);
    EXPECT_DOUBLE_EQ(stats.mean, 3.0);
    EXPECT_DOUBLE_EQ(stats.std, std::sqrt(5.0));
    double sum = 0, ss = 0;
    for (double v : s.inputs) sum += v, ss += v * v;
    EXPECT_NEAR(sum, 0, 1e-12);
    EXPECT_NEAR(ss / 4, 1, 1e-12);
    Dataset t = d;
    t.inputs = {3, 3, 3, 3};
    for (double v : standardize(t, stats).first.inputs) EXPECT_DOUBLE_EQ(v, 0.0);
    EXPECT_THROW(standardize(t), DataError);
}

TEST(Augment, InversionTwiceIsIdentity) {
    auto d = image_set(20, 6, 6, 3);
    ImageTransformConfig c;
    c.invert_probability = 1.0;
    auto once = augment(d, Transform::Inversion, c);
    for (std::size_t i = 0; i < d.inputs.size(); ++i) EXPECT_EQ(once.inputs[i], 255 - d.inputs[i]);
    EXPECT_EQ(augment(once, Transform::Inversion, c).inputs, d.inputs);
}

TEST(Augment, InversionProbabilityIsPerImage) {
    auto d = image_set(400, 2, 2, 3);
    auto out = augment(d, Transform::Inversion, {});
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < d.size(); ++i) flipped += out.inputs[i * 4] != d.inputs[i * 4];
    EXPECT_NEAR(static_cast<double>(flipped), 200.0, 40.0);
    EXPECT_EQ(out.labels, d.labels);
}

TEST(Augment, ZeroAngleRotationIsIdentity) {
    auto d = image_set(5, 7, 7, 4);
    ImageTransformConfig c;
    c.max_angle_degrees = 0;
    EXPECT_EQ(augment(d, Transform::Rotation, c).inputs, d.inputs);
}

TEST(Augment, QuarterTurnMovesPixelsAroundTheCentre) {
    std::vector<double> img(9, 0.0);
    img[1] = 100;  // top middle
    auto r = rotate(img, 3, 3, 90);
    double moved = 0;
    for (std::size_t p : {3u, 5u}) moved += r[p];
    EXPECT_NEAR(moved, 100.0, 1e-9);
    EXPECT_NEAR(r[1], 0.0, 1e-9);
    EXPECT_THROW(augment(image_set(1, 2, 3, 0), Transform::Rotation, {}), DataError);
}

TEST(Augment, BlurKernelIsNormalizedAndPreservesConstantInterior) {
    auto k = gaussian_kernel(9, 1.2);
    double s = 0;
    for (double v : k) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
    std::vector<double> flat(28 * 28, 50.0);
    auto out = convolve(flat, 28, 28, k, 9);
    EXPECT_NEAR(out[14 * 28 + 14], 50.0, 1e-9);
    EXPECT_LT(out[0], 50.0);  // zero padding darkens the corner
}

TEST(Augment, CountPreservedAndDeterministic) {
    auto d = image_set(30, 8, 8, 5);
    for (auto t : {Transform::Rotation, Transform::Blur, Transform::Inversion}) {
        auto a = augment(d, t, {});
        EXPECT_EQ(a.size(), d.size());
        EXPECT_EQ(a.inputs, augment(d, t, {}).inputs);
        for (double v : a.inputs) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 255.0);
        }
    }
}

TEST(Augment, InvalidConfigIsRejected) {
    auto d = image_set(2, 4, 4, 0);
    ImageTransformConfig c;
    c.kernel_size = 8;
    EXPECT_THROW(augment(d, Transform::Blur, c), ConfigError);
    EXPECT_THROW(parse_transform("shear"), ConfigError);
}
