#include "encryptgan/imagedata.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "encryptgan/autograd.hpp"
#include "encryptgan/errors.hpp"

namespace egan {

namespace fs = std::filesystem;

Image::Image(Tensor pixels) : pixels_(std::move(pixels)) {
    const Shape s = pixels_.shape();
    if (s.n != 1 || s.c != 3 || s.h <= 0 || s.w <= 0) throw ShapeError("image must be [1,3,h,w], got " + s.str());
    for (float v : pixels_.values()) {
        if (!std::isfinite(v) || v < -1.0f || v > 1.0f)
            throw ArgumentError("image value " + std::to_string(v) + " outside [-1, 1]");
    }
}

Image Image::filled(Size2 size, float value) { return Image(Tensor(Shape{1, 3, size.height, size.width}, value)); }

Image image_from_unclamped(Tensor pixels) {
    for (float& v : pixels.values()) v = std::isfinite(v) ? std::clamp(v, -1.0f, 1.0f) : 0.0f;
    return Image(std::move(pixels));
}

void require_network_size(Size2 size, const char* what, int minimum) {
    if (size.height < minimum || size.width < minimum || size.height % 4 != 0 || size.width % 4 != 0)
        throw ShapeError(std::string(what) + ": spatial size " + std::to_string(size.height) + "x" +
                         std::to_string(size.width) + " must be a multiple of 4 and at least " +
                         std::to_string(minimum));
}

void require_inside(const Placement& p, Size2 host, const char* what) {
    if (p.height <= 0 || p.width <= 0 || p.top < 0 || p.left < 0 || p.top + p.height > host.height ||
        p.left + p.width > host.width) {
        throw BoundsError(std::string(what) + ": placement (" + std::to_string(p.top) + "," + std::to_string(p.left) +
                          "," + std::to_string(p.height) + "," + std::to_string(p.width) + ") outside " +
                          std::to_string(host.height) + "x" + std::to_string(host.width));
    }
}

// ---------------------------------------------------------------------------
// PNG

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Raster read_png(const fs::path& path) {
    if (!fs::exists(path)) throw NotFoundError("no such file: " + path.string());
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw NotFoundError("cannot open: " + path.string());

    png_byte header[8] = {};
    if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
        throw FormatError("not a PNG file: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("libpng initialisation failed");
    }
    Raster raster;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("corrupt PNG: " + path.string());
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    const bool ok = depth == 8 && (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA);
    if (!ok) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("expected 8-bit RGB raster: " + path.string());
    }
    if (color == PNG_COLOR_TYPE_RGB_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    raster.width = static_cast<int>(png_get_image_width(png, info));
    raster.height = static_cast<int>(png_get_image_height(png, info));
    raster.rgb.resize(static_cast<std::size_t>(raster.width) * raster.height * 3);
    rows.resize(static_cast<std::size_t>(raster.height));
    for (int y = 0; y < raster.height; ++y) rows[y] = raster.rgb.data() + std::size_t(y) * raster.width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return raster;
}

void write_png(const Raster& raster, const fs::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw IoError("cannot write: " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialisation failed");
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(raster.height));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed writing PNG: " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, raster.width, raster.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < raster.height; ++y)
        rows[y] = const_cast<png_bytep>(raster.rgb.data() + std::size_t(y) * raster.width * 3);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Raster to_raster(const Image& img) {
    Raster r{img.height(), img.width(), {}};
    r.rgb.resize(std::size_t(r.height) * r.width * 3);
    const Tensor& t = img.pixels();
    for (int y = 0; y < r.height; ++y)
        for (int x = 0; x < r.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::round((double(t.at(0, c, y, x)) + 1.0) * 127.5);
                r.rgb[(std::size_t(y) * r.width + x) * 3 + c] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
            }
    return r;
}

Image from_raster(const Raster& raster, Size2 target) {
    if (target.height <= 0 || target.width <= 0) throw ArgumentError("target size must be positive");
    Tensor native(Shape{1, 3, raster.height, raster.width});
    for (int y = 0; y < raster.height; ++y)
        for (int x = 0; x < raster.width; ++x)
            for (int c = 0; c < 3; ++c)
                native.at(0, c, y, x) = raster.rgb[(std::size_t(y) * raster.width + x) * 3 + c];
    Tensor resized = raster.height == target.height && raster.width == target.width
                         ? std::move(native)
                         : ag::resize_bilinear(native, target.height, target.width);
    for (float& v : resized.values()) v = std::clamp(v / 127.5f - 1.0f, -1.0f, 1.0f);
    return Image(std::move(resized));
}

Image load_image(const fs::path& path, Size2 target) { return from_raster(read_png(path), target); }

void save_image(const Image& img, const fs::path& path) { write_png(to_raster(img), path); }

// ---------------------------------------------------------------------------
// Composition

CompositeImage paste_message(const Image& cover, const Image& message, const Placement& placement,
                             std::string message_id) {
    if (message.height() != placement.height || message.width() != placement.width)
        throw ShapeError("paste_message: message size does not match placement");
    require_inside(placement, cover.size(), "paste_message");
    Tensor out = cover.pixels();
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < placement.height; ++y)
            for (int x = 0; x < placement.width; ++x)
                out.at(0, c, placement.top + y, placement.left + x) = message.pixels().at(0, c, y, x);
    return CompositeImage{Image(std::move(out)), placement, std::move(message_id)};
}

Image crop_region(const Image& img, const Placement& placement) {
    require_inside(placement, img.size(), "crop_region");
    Tensor out(Shape{1, 3, placement.height, placement.width});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < placement.height; ++y)
            for (int x = 0; x < placement.width; ++x)
                out.at(0, c, y, x) = img.pixels().at(0, c, placement.top + y, placement.left + x);
    return Image(std::move(out));
}

Image add_gaussian_noise(const Image& img, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ArgumentError("noise sigma must be finite and >= 0");
    if (sigma == 0.0) return img;
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    Tensor out = img.pixels();
    for (float& v : out.values()) v = static_cast<float>(std::clamp(double(v) + noise(rng), -1.0, 1.0));
    return Image(std::move(out));
}

Placement sample_placement(Size2 cover, Size2 message, Rng& rng) {
    if (message.height <= 0 || message.width <= 0) throw ShapeError("sample_placement: empty message");
    if (message.height > cover.height || message.width > cover.width)
        throw ShapeError("sample_placement: message larger than cover");
    std::uniform_int_distribution<int> top(0, cover.height - message.height);
    std::uniform_int_distribution<int> left(0, cover.width - message.width);
    Placement p;
    p.top = top(rng);
    p.left = left(rng);
    p.height = message.height;
    p.width = message.width;
    return p;
}

// ---------------------------------------------------------------------------
// Datasets

DomainDataset::DomainDataset(fs::path root, DomainLabel label, Size2 image_size)
    : root_(std::move(root)), label_(label), image_size_(image_size) {
    if (!fs::is_directory(root_)) throw NotFoundError("dataset directory not found: " + root_.string());
    for (const auto& entry : fs::directory_iterator(root_)) {
        if (!entry.is_regular_file()) continue;
        auto ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (ext == ".png") files_.push_back(entry.path());
    }
    std::sort(files_.begin(), files_.end());
    cache_.resize(files_.size());
}

std::string DomainDataset::id(std::size_t index) const { return file(index).filename().string(); }

const Image& DomainDataset::at(std::size_t index) const {
    if (index >= files_.size()) throw BoundsError("dataset index out of range");
    if (cache_[index].empty()) cache_[index] = load_image(files_[index], image_size_);
    return cache_[index];
}

std::vector<std::size_t> DomainDataset::order(std::uint64_t seed) const {
    std::vector<std::size_t> idx(files_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    // Fisher-Yates with an explicit uniform draw keeps the permutation
    // independent of the standard library's shuffle implementation.
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(idx[i - 1], idx[pick(rng)]);
    }
    return idx;
}

}  // namespace egan
