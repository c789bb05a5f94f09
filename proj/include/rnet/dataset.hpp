#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rnet/tensor.hpp"

namespace rnet {

/// Class names in the order of the recyclables corpus this toolkit targets.
const std::vector<std::string>& default_class_names();

struct LabeledDataset {
    std::vector<Tensor> images;  // each 3 x H x W, values in [0, 1]
    std::vector<std::size_t> labels;
    std::vector<std::string> class_names;
    std::string provenance;

    std::size_t size() const noexcept { return images.size(); }
    std::size_t class_count() const noexcept { return class_names.size(); }
    std::vector<std::size_t> class_counts() const;
    /// Throws DataError unless non-empty, same-shaped, and labels < class_count.
    void check() const;
};

/// Binary PPM (P6) or PGM (P5, replicated to 3 channels), maxval 255.
Tensor decode_image(std::span<const std::uint8_t> bytes);

/// Binary P6 of a 3 x H x W tensor; values are clamped to [0,1] and rounded to 1/255.
std::vector<std::uint8_t> encode_ppm(const Tensor& image);

/// Corner-aligned bilinear resampling.
Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w);

/// root/<class>/<image>. Classes and files are taken in sorted-name order.
LabeledDataset load_dataset(const std::filesystem::path& root, std::size_t target_h, std::size_t target_w);

/// Writes root/<class>/<class>_NNNN.ppm for every sample.
void write_dataset_tree(const LabeledDataset& ds, const std::filesystem::path& root);

struct SplitPair {
    LabeledDataset train;
    LabeledDataset test;
    std::uint64_t seed = 0;
    std::vector<std::size_t> train_indices;  // into the source dataset
    std::vector<std::size_t> test_indices;
};

/// Stratified half split: each class is shuffled with the seed and its first
/// ceil(n_c / 2) samples go to train.
SplitPair split_half(const LabeledDataset& ds, std::uint64_t seed);

struct SynthConfig {
    std::size_t classes = 6;
    std::size_t per_class = 50;
    std::size_t image_size = 64;
    double noise_level = 0.1;
    std::uint64_t seed = 0;
};

/// Per-class parametric shapes (filled circle, square, cross, horizontal
/// stripes, vertical stripes, diagonal stripes) at random position and scale,
/// dark ink on a white background, plus uniform noise.
LabeledDataset synthesize_dataset(const SynthConfig& config);

}  // namespace rnet
