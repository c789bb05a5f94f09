#include "rnet/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "rnet/errors.hpp"
#include "rnet/rng.hpp"

namespace rnet {

namespace fs = std::filesystem;

const std::vector<std::string>& default_class_names() {
    static const std::vector<std::string> names{"glass", "paper", "cardboard", "plastic", "metal", "trash"};
    return names;
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
    std::vector<std::size_t> counts(class_count(), 0);
    for (auto l : labels) {
        if (l < counts.size()) ++counts[l];
    }
    return counts;
}

void LabeledDataset::check() const {
    if (images.empty()) throw DataError("dataset is empty");
    if (images.size() != labels.size()) throw DataError("image and label counts differ");
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].shape() != images[0].shape()) {
            throw DataError("sample " + std::to_string(i) + " has shape " + shape_string(images[i].shape()) +
                            ", expected " + shape_string(images[0].shape()));
        }
        if (labels[i] >= class_count()) {
            throw DataError("sample " + std::to_string(i) + " has label " + std::to_string(labels[i]) +
                            " but only " + std::to_string(class_count()) + " classes exist");
        }
    }
}

namespace {

class HeaderReader {
public:
    explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t number(const char* field) {
        skip_space_and_comments();
        std::size_t v = 0;
        std::size_t digits = 0;
        while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
            v = v * 10 + (bytes_[pos_] - '0');
            if (v > (1u << 24)) throw DataError(std::string("netpbm ") + field + " is too large");
            ++pos_;
            ++digits;
        }
        if (digits == 0) throw DataError(std::string("netpbm header: missing ") + field);
        return v;
    }

    // Exactly one whitespace byte separates maxval from the raster.
    std::size_t raster_start() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
            throw DataError("netpbm header: expected whitespace before raster");
        }
        return pos_ + 1;
    }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
            } else {
                break;
            }
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 2;
};

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Tensor decode_image(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw DataError("unsupported image format (expected binary P5 or P6)");
    }
    const bool color = bytes[1] == '6';
    HeaderReader header(bytes);
    const std::size_t w = header.number("width");
    const std::size_t h = header.number("height");
    const std::size_t maxval = header.number("maxval");
    if (w == 0 || h == 0) throw DataError("netpbm image has zero extent");
    if (maxval != 255) throw DataError("netpbm maxval " + std::to_string(maxval) + " unsupported (need 255)");
    const std::size_t start = header.raster_start();
    const std::size_t channels = color ? 3 : 1;
    const std::size_t need = w * h * channels;
    if (bytes.size() < start || bytes.size() - start < need) {
        throw DataError("netpbm raster truncated: need " + std::to_string(need) + " bytes, have " +
                        std::to_string(bytes.size() > start ? bytes.size() - start : 0));
    }
    Tensor out({3, h, w});
    const auto* px = bytes.data() + start;
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            for (std::size_t c = 0; c < 3; ++c) {
                const std::size_t src = (i * w + j) * channels + (color ? c : 0);
                out.at(c, i, j) = px[src] / 255.0;
            }
        }
    }
    return out;
}

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw DomainError("encode_ppm needs a 3xHxW tensor, got " + shape_string(image.shape()));
    }
    const std::size_t h = image.dim(1), w = image.dim(2);
    const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + 3 * h * w);
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = std::clamp(image.at(c, i, j), 0.0, 1.0);
                out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
            }
        }
    }
    return out;
}

Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w) {
    if (image.rank() != 3) throw DomainError("resize needs a CxHxW tensor");
    if (out_h == 0 || out_w == 0) throw DomainError("resize target must be non-empty");
    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    auto grid = [](std::size_t out, std::size_t in, std::size_t idx) {
        if (out == 1) return 0.0;
        return static_cast<double>(idx) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
    };
    Tensor out({c, out_h, out_w});
    for (std::size_t i = 0; i < out_h; ++i) {
        const double y = grid(out_h, h, i);
        const std::size_t y0 = std::min(static_cast<std::size_t>(y), h - 1);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double fy = y - static_cast<double>(y0);
        for (std::size_t j = 0; j < out_w; ++j) {
            const double x = grid(out_w, w, j);
            const std::size_t x0 = std::min(static_cast<std::size_t>(x), w - 1);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double fx = x - static_cast<double>(x0);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double top = (1.0 - fx) * image.at(ch, y0, x0) + fx * image.at(ch, y0, x1);
                const double bottom = (1.0 - fx) * image.at(ch, y1, x0) + fx * image.at(ch, y1, x1);
                out.at(ch, i, j) = (1.0 - fy) * top + fy * bottom;
            }
        }
    }
    return out;
}

LabeledDataset load_dataset(const fs::path& root, std::size_t target_h, std::size_t target_w) {
    if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " is not a directory");
    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) class_dirs.push_back(entry.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) throw DataError("dataset root " + root.string() + " has no class directories");

    LabeledDataset ds;
    ds.provenance = "dir:" + root.filename().string();
    for (std::size_t label = 0; label < class_dirs.size(); ++label) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(class_dirs[label])) {
            if (entry.is_regular_file()) files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw DataError("class directory " + class_dirs[label].string() + " is empty");
        ds.class_names.push_back(class_dirs[label].filename().string());
        for (const auto& file : files) {
            try {
                const auto bytes = read_file(file);
                ds.images.push_back(resize_bilinear(decode_image(bytes), target_h, target_w));
            } catch (const DataError& e) {
                throw DataError(file.string() + ": " + e.what());
            }
            ds.labels.push_back(label);
        }
    }
    return ds;
}

void write_dataset_tree(const LabeledDataset& ds, const fs::path& root) {
    ds.check();
    std::vector<std::size_t> seen(ds.class_count(), 0);
    for (const auto& name : ds.class_names) fs::create_directories(root / name);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto label = ds.labels[i];
        char file[32];
        std::snprintf(file, sizeof file, "_%04zu.ppm", seen[label]++);
        const auto path = root / ds.class_names[label] / (ds.class_names[label] + file);
        std::ofstream out(path, std::ios::binary);
        const auto bytes = encode_ppm(ds.images[i]);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("cannot write " + path.string());
    }
}

SplitPair split_half(const LabeledDataset& ds, std::uint64_t seed) {
    ds.check();
    std::vector<std::vector<std::size_t>> by_class(ds.class_count());
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);

    SplitPair split;
    split.seed = seed;
    Rng rng(seed);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& members = by_class[c];
        if (members.size() < 2) {
            throw DataError("class '" + ds.class_names[c] + "' has " + std::to_string(members.size()) +
                            " samples; a half split needs at least 2");
        }
        rng.shuffle(std::span(members));
        const std::size_t n_train = (members.size() + 1) / 2;
        split.train_indices.insert(split.train_indices.end(), members.begin(), members.begin() + n_train);
        split.test_indices.insert(split.test_indices.end(), members.begin() + n_train, members.end());
    }
    auto take = [&](const std::vector<std::size_t>& idx, const char* tag) {
        LabeledDataset part;
        part.class_names = ds.class_names;
        part.provenance = ds.provenance + "|" + tag + ":seed=" + std::to_string(seed);
        for (auto i : idx) {
            part.images.push_back(ds.images[i]);
            part.labels.push_back(ds.labels[i]);
        }
        return part;
    };
    split.train = take(split.train_indices, "train");
    split.test = take(split.test_indices, "test");
    return split;
}

namespace {

bool stripe_on(double offset, double period) {
    return static_cast<long>(std::floor(offset / period)) % 2 == 0;
}

bool pattern_hit(std::size_t pattern, double dx, double dy, double r) {
    const double period = std::max(2.0, r / 3.0);
    const bool in_box = std::abs(dx) <= r && std::abs(dy) <= r;
    switch (pattern) {
        case 0: return dx * dx + dy * dy <= r * r;
        case 1: return std::abs(dx) <= 0.85 * r && std::abs(dy) <= 0.85 * r;
        case 2:
            return (std::abs(dx) <= r / 4 && std::abs(dy) <= r) || (std::abs(dy) <= r / 4 && std::abs(dx) <= r);
        case 3: return in_box && stripe_on(dy + r, period);
        case 4: return in_box && stripe_on(dx + r, period);
        default: return in_box && stripe_on(dx + dy + 2 * r, period);
    }
}

}  // namespace

LabeledDataset synthesize_dataset(const SynthConfig& config) {
    if (config.classes < 2 || config.classes > 6) {
        throw DomainError("synthetic generator supports 2..6 classes, got " + std::to_string(config.classes));
    }
    if (config.per_class < 2) throw DomainError("synthetic generator needs per_class >= 2");
    if (config.image_size < 8) throw DomainError("synthetic images must be at least 8x8");
    if (config.noise_level < 0.0) throw DomainError("noise level must be non-negative");

    constexpr double kInk = 0.2;
    const auto s = static_cast<double>(config.image_size);
    const std::size_t n = config.image_size;

    LabeledDataset ds;
    ds.class_names.assign(default_class_names().begin(),
                          default_class_names().begin() + static_cast<std::ptrdiff_t>(config.classes));
    ds.provenance = "synthetic:seed=" + std::to_string(config.seed);
    Rng rng(config.seed);
    for (std::size_t c = 0; c < config.classes; ++c) {
        for (std::size_t k = 0; k < config.per_class; ++k) {
            const double cx = rng.uniform(0.35 * s, 0.65 * s);
            const double cy = rng.uniform(0.35 * s, 0.65 * s);
            const double r = rng.uniform(0.2 * s, 0.3 * s);
            Tensor img({3, n, n});
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    const double dx = static_cast<double>(j) + 0.5 - cx;
                    const double dy = static_cast<double>(i) + 0.5 - cy;
                    const double base = pattern_hit(c, dx, dy, r) ? kInk : 1.0;
                    for (std::size_t ch = 0; ch < 3; ++ch) {
                        const double noise =
                            config.noise_level > 0.0 ? rng.uniform(-config.noise_level, config.noise_level) : 0.0;
                        img.at(ch, i, j) = std::clamp(base + noise, 0.0, 1.0);
                    }
                }
            }
            ds.images.push_back(std::move(img));
            ds.labels.push_back(c);
        }
    }
    return ds;
}

}  // namespace rnet
