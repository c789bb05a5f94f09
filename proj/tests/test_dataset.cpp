#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "doctest.h"
#include "oracles.hpp"
#include "rnet/dataset.hpp"
#include "rnet/errors.hpp"

using namespace rnet;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& header, std::vector<std::uint8_t> raster) {
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), raster.begin(), raster.end());
    return out;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

LabeledDataset counted(std::vector<std::size_t> per_class) {
    LabeledDataset ds;
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        ds.class_names.push_back("c" + std::to_string(c));
        for (std::size_t i = 0; i < per_class[c]; ++i) {
            // distinct content so samples can be told apart
            ds.images.push_back(Tensor::filled({3, 1, 1}, static_cast<double>(ds.images.size())));
            ds.labels.push_back(c);
        }
    }
    return ds;
}

}  // namespace

TEST_CASE("decode P6 and P5") {
    const Tensor red = decode_image(bytes_of("P6\n1 1\n255\n", {255, 0, 0}));
    CHECK(red == Tensor({3, 1, 1}, {1.0, 0.0, 0.0}));
    const Tensor gray = decode_image(bytes_of("P5 2 1 255\n", {128, 128}));
    CHECK(gray.shape() == Shape{3, 1, 2});
    for (double v : gray.data()) CHECK(v == 128.0 / 255.0);
    const Tensor commented = decode_image(bytes_of("P6\n# made by hand\n2 # width\n1\n255\n", {0, 51, 255, 10, 20, 30}));
    CHECK(commented.at(1, 0, 0) == 51.0 / 255.0);
    CHECK(commented.at(2, 0, 1) == 30.0 / 255.0);
}

TEST_CASE("decode errors") {
    CHECK_THROWS_AS(decode_image(bytes_of("P6\n2 2\n255\n", {1, 2, 3, 4, 5, 6, 7, 8, 9})), DataError);
    CHECK_THROWS_AS(decode_image(bytes_of("P3\n1 1\n255\n", {1, 2, 3})), DataError);
    CHECK_THROWS_AS(decode_image(bytes_of("P6\n1 1\n65535\n", {1, 2, 3, 4, 5, 6})), DataError);
    CHECK_THROWS_AS(decode_image(bytes_of("P6\n1 1\n", {})), DataError);
    CHECK_THROWS_AS(decode_image(bytes_of("P6\n0 1\n255\n", {})), DataError);
    CHECK_THROWS_AS(decode_image({}), DataError);
}

TEST_CASE("encode then decode reproduces known pixels") {
    Rng rng(1);
    for (int t = 0; t < 20; ++t) {
        Tensor img({3, 1 + rng.below(7), 1 + rng.below(7)});
        for (double& v : img.data()) v = static_cast<double>(rng.below(256)) / 255.0;
        CHECK(decode_image(encode_ppm(img)) == img);
    }
}

TEST_CASE("resize examples") {
    Rng rng(2);
    const Tensor img = oracle::random_tensor(rng, {3, 5, 7}, 0, 1);
    const Tensor same = resize_bilinear(img, 5, 7);
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(same[i] - img[i]) <= 1e-12);

    const Tensor flat = resize_bilinear(Tensor::filled({3, 4, 4}, 0.3), 9, 2);
    for (double v : flat.data()) CHECK(std::abs(v - 0.3) <= 1e-12);

    const Tensor ramp = resize_bilinear(Tensor({1, 1, 2}, {0.0, 1.0}), 1, 3);
    CHECK(ramp == Tensor({1, 1, 3}, {0.0, 0.5, 1.0}));
    CHECK_THROWS_AS(resize_bilinear(img, 0, 3), DomainError);
}

TEST_CASE("resize stays within the input value range") {
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
        const Tensor img = oracle::random_tensor(rng, {3, 1 + rng.below(9), 1 + rng.below(9)}, 0, 1);
        const Tensor out = resize_bilinear(img, 1 + rng.below(12), 1 + rng.below(12));
        const auto [lo, hi] = std::minmax_element(img.data().begin(), img.data().end());
        for (double v : out.data()) {
            CHECK(v >= *lo - 1e-12);
            CHECK(v <= *hi + 1e-12);
        }
    }
}

TEST_CASE("load_dataset reads a class tree deterministically") {
    TempDir dir("rnet_test_tree");
    const auto& names = default_class_names();
    std::vector<std::uint8_t> shared;
    for (std::size_t c = 0; c < names.size(); ++c) {
        fs::create_directories(dir.path / names[c]);
        for (int i = 0; i < 2; ++i) {
            Tensor img = Tensor::filled({3, 4, 6}, static_cast<double>(c * 2 + i) / 255.0);
            auto bytes = encode_ppm(img);
            if (c == 1 && i == 0) shared = bytes;
            write_bytes(dir.path / names[c] / ("img" + std::to_string(i) + ".ppm"), bytes);
        }
    }
    // duplicate content in another class is loaded, not deduplicated
    write_bytes(dir.path / names[2] / "dup.ppm", shared);

    const LabeledDataset a = load_dataset(dir.path, 8, 8);
    CHECK(a.size() == 13);
    CHECK(a.class_count() == 6);
    std::vector<std::string> sorted = names;
    std::sort(sorted.begin(), sorted.end());
    CHECK(a.class_names == sorted);
    for (const auto& img : a.images) CHECK(img.shape() == Shape{3, 8, 8});
    const LabeledDataset b = load_dataset(dir.path, 8, 8);
    CHECK(a.images == b.images);
    CHECK(a.labels == b.labels);
}

TEST_CASE("load_dataset names the corrupt file") {
    TempDir dir("rnet_test_corrupt");
    fs::create_directories(dir.path / "glass");
    write_bytes(dir.path / "glass" / "a.ppm", encode_ppm(Tensor::filled({3, 2, 2}, 0.5)));
    write_bytes(dir.path / "glass" / "broken.ppm", bytes_of("P6\n4 4\n255\n", {1, 2, 3}));
    try {
        load_dataset(dir.path, 4, 4);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("broken.ppm") != std::string::npos);
    }
    fs::create_directories(dir.path / "metal");
    CHECK_THROWS_AS(load_dataset(dir.path / "glass", 4, 4), DataError);
    CHECK_THROWS_AS(load_dataset(dir.path / "missing", 4, 4), DataError);
}

TEST_CASE("write_dataset_tree then load_dataset round-trips") {
    TempDir dir("rnet_test_roundtrip");
    SynthConfig cfg;
    cfg.classes = 3;
    cfg.per_class = 3;
    cfg.image_size = 16;
    const LabeledDataset ds = synthesize_dataset(cfg);
    write_dataset_tree(ds, dir.path);
    const LabeledDataset back = load_dataset(dir.path, 16, 16);
    CHECK(back.size() == ds.size());
    CHECK(back.class_counts() == ds.class_counts());
    // classes come back in sorted-name order, samples in file order within each
    for (std::size_t i = 0; i < back.size(); ++i) {
        const std::string& name = back.class_names[back.labels[i]];
        std::size_t rank = 0;
        for (std::size_t j = 0; j < i; ++j) rank += back.labels[j] == back.labels[i];
        std::size_t seen = 0;
        for (std::size_t j = 0; j < ds.size(); ++j) {
            if (ds.class_names[ds.labels[j]] != name) continue;
            if (seen++ == rank) CHECK(back.images[i] == decode_image(encode_ppm(ds.images[j])));
        }
    }
}

TEST_CASE("split examples") {
    const SplitPair four = split_half(counted({4}), 1);
    CHECK(four.train.size() == 2);
    CHECK(four.test.size() == 2);
    const SplitPair five = split_half(counted({5}), 1);
    CHECK(five.train.size() == 3);
    CHECK(five.test.size() == 2);
    CHECK_THROWS_AS(split_half(counted({4, 1}), 1), DataError);

    const LabeledDataset ds = counted({12, 10});
    const SplitPair a = split_half(ds, 5), b = split_half(ds, 5), c = split_half(ds, 6);
    CHECK(a.train_indices == b.train_indices);
    CHECK(a.test_indices == b.test_indices);
    CHECK(std::set(a.train_indices.begin(), a.train_indices.end()) !=
          std::set(c.train_indices.begin(), c.train_indices.end()));
}

TEST_CASE("split invariants over many seeds") {
    const LabeledDataset ds = counted({7, 2, 10, 5, 3, 8});
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const SplitPair s = split_half(ds, seed);
        std::vector<std::size_t> all = s.train_indices;
        all.insert(all.end(), s.test_indices.begin(), s.test_indices.end());
        std::sort(all.begin(), all.end());
        std::vector<std::size_t> expect(ds.size());
        for (std::size_t i = 0; i < expect.size(); ++i) expect[i] = i;
        CHECK(all == expect);
        const auto tc = s.train.class_counts(), ec = s.test.class_counts();
        for (std::size_t c = 0; c < ds.class_count(); ++c) {
            CHECK(tc[c] - ec[c] <= 1);
            CHECK(tc[c] >= ec[c]);
        }
        for (std::size_t i = 0; i < s.train.size(); ++i) CHECK(s.train.images[i] == ds.images[s.train_indices[i]]);
    }
}

TEST_CASE("synthetic generator") {
    SynthConfig cfg;
    cfg.per_class = 50;
    cfg.image_size = 32;
    const LabeledDataset ds = synthesize_dataset(cfg);
    CHECK(ds.size() == 300);
    CHECK(ds.class_counts() == std::vector<std::size_t>(6, 50));
    CHECK(ds.class_names == default_class_names());
    for (const auto& img : ds.images) {
        CHECK(img.shape() == Shape{3, 32, 32});
        for (double v : img.data()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    CHECK(synthesize_dataset(cfg).images == ds.images);
    cfg.seed = 1;
    CHECK_FALSE(synthesize_dataset(cfg).images == ds.images);

    SynthConfig clean{6, 2, 32, 0.0, 4};
    const LabeledDataset c = synthesize_dataset(clean);
    for (std::size_t k = 0; k < 6; ++k) {
        const Tensor& a = c.images[2 * k];
        const Tensor& b = c.images[2 * k + 1];
        REQUIRE(c.labels[2 * k] == k);
        CHECK_FALSE(a == b);
        for (const Tensor* img : {&a, &b}) {
            std::set<double> palette(img->data().begin(), img->data().end());
            CHECK(palette == std::set<double>{0.2, 1.0});
        }
    }
    CHECK_THROWS_AS(synthesize_dataset({6, 1, 32, 0.1, 0}), DomainError);
}
