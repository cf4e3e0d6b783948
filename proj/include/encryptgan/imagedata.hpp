#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "encryptgan/tensor.hpp"

namespace egan {

using Rng = std::mt19937_64;

struct Size2 {
    int height = 0;
    int width = 0;
    bool operator==(const Size2&) const = default;
};

// 3-channel image, batch of one, values in [-1, 1].
class Image {
public:
    Image() = default;
    // Throws ShapeError unless pixels is {1,3,h,w}; ArgumentError if any value
    // falls outside [-1, 1] or is not finite.
    explicit Image(Tensor pixels);
    static Image filled(Size2 size, float value);

    const Tensor& pixels() const { return pixels_; }
    Size2 size() const { return {pixels_.shape().h, pixels_.shape().w}; }
    int height() const { return pixels_.shape().h; }
    int width() const { return pixels_.shape().w; }
    bool empty() const { return pixels_.empty(); }

    bool operator==(const Image& other) const = default;

private:
    Tensor pixels_;
};

// Clamps into [-1, 1]; for raw network or arithmetic output.
Image image_from_unclamped(Tensor pixels);

// Spatial extents must be positive multiples of 4 (two generator halvings)
// and at least `minimum` on each side.
void require_network_size(Size2 size, const char* what, int minimum = 4);

struct Placement {
    int top = 0;
    int left = 0;
    int height = 0;
    int width = 0;
    bool operator==(const Placement&) const = default;
};

void require_inside(const Placement& p, Size2 host, const char* what);

struct CompositeImage {
    Image image;
    Placement placement;
    std::string message_id;
};

Image load_image(const std::filesystem::path& path, Size2 target);
// 8-bit lossless PNG; v -> round((v + 1) * 127.5), so 0.0 maps to 128.
void save_image(const Image& img, const std::filesystem::path& path);

// Raw 8-bit RGB raster I/O shared by figures and the dataset generator.
struct Raster {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> rgb;  // row-major, interleaved
};
Raster read_png(const std::filesystem::path& path);
void write_png(const Raster& raster, const std::filesystem::path& path);
Raster to_raster(const Image& img);
Image from_raster(const Raster& raster, Size2 target);

CompositeImage paste_message(const Image& cover, const Image& message, const Placement& placement,
                             std::string message_id = {});
Image crop_region(const Image& img, const Placement& placement);
Image add_gaussian_noise(const Image& img, double sigma, std::uint64_t seed);
Placement sample_placement(Size2 cover, Size2 message, Rng& rng);

enum class DomainLabel { X = 0, Y = 1, Message = 2 };

// Directory of 8-bit RGB PNGs, indexed in lexicographic filename order and
// cached after first decode.
class DomainDataset {
public:
    DomainDataset(std::filesystem::path root, DomainLabel label, Size2 image_size);

    std::size_t size() const { return files_.size(); }
    DomainLabel label() const { return label_; }
    Size2 image_size() const { return image_size_; }
    const std::filesystem::path& root() const { return root_; }
    const std::filesystem::path& file(std::size_t index) const { return files_.at(index); }
    std::string id(std::size_t index) const;

    const Image& at(std::size_t index) const;
    // Seeded permutation of all indices.
    std::vector<std::size_t> order(std::uint64_t seed) const;

private:
    std::filesystem::path root_;
    DomainLabel label_;
    Size2 image_size_;
    std::vector<std::filesystem::path> files_;
    mutable std::vector<Image> cache_;
};

}  // namespace egan
