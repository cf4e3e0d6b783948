#include "encryptgan/keys.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "json.hpp"

#include "encryptgan/errors.hpp"
#include "encryptgan/metrics.hpp"

namespace egan {

namespace fs = std::filesystem;
using nlohmann::json;

KeyPair generate_key_pair(const KeyGenerator& k, const Image& cover, const Image& disguise, std::string cover_ref,
                          std::string disguise_ref, std::string keygen_checkpoint) {
    if (cover.size() != disguise.size()) throw ShapeError("cover and disguise sizes differ");
    KeyPair pair;
    pair.private_key = keygen_forward(k, cover).key;
    pair.public_key = keygen_forward(k, disguise).key;
    pair.cover_ref = std::move(cover_ref);
    pair.disguise_ref = std::move(disguise_ref);
    pair.keygen_checkpoint = std::move(keygen_checkpoint);
    return pair;
}

namespace {

void require_same_size(const Image& a, const Image& b, const char* what) {
    if (a.size() != b.size()) throw ShapeError(std::string(what) + ": image and key sizes differ");
}

}  // namespace

Image encrypt(const Generator& f, const Image& composite, const Image& public_key) {
    require_same_size(composite, public_key, "encrypt");
    return generator_forward(f, composite, public_key);
}

Image encrypt(const Generator& f, const CompositeImage& composite, const Image& public_key) {
    return encrypt(f, composite.image, public_key);
}

Image decrypt(const Generator& g, const Image& encrypted, const Image& private_key) {
    require_same_size(encrypted, private_key, "decrypt");
    return generator_forward(g, encrypted, private_key);
}

SignatureBundle sign(const Generator& g, const Image& secret, const Image& private_key, std::string secret_ref) {
    require_same_size(secret, private_key, "sign");
    return {generator_forward(g, secret, private_key), std::move(secret_ref)};
}

double signature_psnr(const Generator& f, const SignatureBundle& bundle, const Image& public_key,
                      const Image& expected_secret) {
    require_same_size(bundle.signature_image, public_key, "verify");
    const Image recovered = generator_forward(f, bundle.signature_image, public_key);
    return metrics::psnr(recovered, expected_secret);
}

bool verify(const Generator& f, const SignatureBundle& bundle, const Image& public_key, const Image& expected_secret,
            double threshold_db) {
    return signature_psnr(f, bundle, public_key, expected_secret) >= threshold_db;
}

// ---------------------------------------------------------------------------
// 16-bit key rasters: v -> round((v + 1) * 32767.5)

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};

void write_png16(const Image& img, const fs::path& path) {
    std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "wb"));
    if (!file) throw IoError("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialisation failed");
    }
    const int h = img.height(), w = img.width();
    std::vector<png_byte> data(std::size_t(h) * w * 6);
    const Tensor& t = img.pixels();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::round((double(t.at(0, c, y, x)) + 1.0) * 32767.5);
                const auto q = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
                const std::size_t o = (std::size_t(y) * w + x) * 6 + std::size_t(c) * 2;
                data[o] = static_cast<png_byte>(q >> 8);
                data[o + 1] = static_cast<png_byte>(q & 0xff);
            }
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[y] = data.data() + std::size_t(y) * w * 6;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng write error: " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, w, h, 16, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png16(const fs::path& path) {
    if (!fs::exists(path)) throw NotFoundError("key file not found: " + path.string());
    std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "rb"));
    if (!file) throw NotFoundError("cannot open " + path.string());
    png_byte header[8] = {};
    if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
        throw FormatError("not a PNG file: " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("libpng initialisation failed");
    }
    std::vector<png_byte> data;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("corrupt PNG: " + path.string());
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    if (png_get_color_type(png, info) != PNG_COLOR_TYPE_RGB || png_get_bit_depth(png, info) != 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("key raster must be 16-bit RGB: " + path.string());
    }
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    data.resize(std::size_t(h) * w * 6);
    rows.resize(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[y] = data.data() + std::size_t(y) * w * 6;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor t(Shape{1, 3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const std::size_t o = (std::size_t(y) * w + x) * 6 + std::size_t(c) * 2;
                const int q = (int(data[o]) << 8) | int(data[o + 1]);
                t.at(0, c, y, x) = static_cast<float>(q / 32767.5 - 1.0);
            }
    return image_from_unclamped(std::move(t));
}

const char* role_name(KeyRole r) { return r == KeyRole::Public ? "public" : "private"; }

}  // namespace

fs::path key_metadata_path(const fs::path& png_path) {
    fs::path p = png_path;
    p.replace_extension(".json");
    return p;
}

void save_key(const KeyFile& key, const fs::path& png_path) {
    if (png_path.has_parent_path()) fs::create_directories(png_path.parent_path());
    write_png16(key.key, png_path);
    json meta{{"role", role_name(key.role)},
              {"source_ref", key.source_ref},
              {"keygen_checkpoint", key.keygen_checkpoint},
              {"height", key.key.height()},
              {"width", key.key.width()},
              {"encoding", "png16:round((v+1)*32767.5)"}};
    std::ofstream out(key_metadata_path(png_path));
    if (!out) throw IoError("cannot write key metadata for " + png_path.string());
    out << meta.dump(2) << '\n';
}

KeyFile load_key(const fs::path& png_path) {
    KeyFile k;
    k.key = read_png16(png_path);
    const fs::path meta_path = key_metadata_path(png_path);
    std::ifstream in(meta_path);
    if (!in) throw NotFoundError("key metadata not found: " + meta_path.string());
    try {
        json meta;
        in >> meta;
        const std::string role = meta.at("role").get<std::string>();
        if (role == "public") k.role = KeyRole::Public;
        else if (role == "private") k.role = KeyRole::Private;
        else throw FormatError("unknown key role '" + role + "' in " + meta_path.string());
        k.source_ref = meta.value("source_ref", "");
        k.keygen_checkpoint = meta.value("keygen_checkpoint", "");
        if (meta.at("height").get<int>() != k.key.height() || meta.at("width").get<int>() != k.key.width())
            throw FormatError("key metadata size disagrees with raster: " + meta_path.string());
    } catch (const json::exception& e) {
        throw FormatError("bad key metadata " + meta_path.string() + ": " + e.what());
    }
    return k;
}

void save_key_pair(const KeyPair& pair, const fs::path& dir) {
    save_key({pair.public_key, KeyRole::Public, pair.disguise_ref, pair.keygen_checkpoint}, dir / "public_key.png");
    save_key({pair.private_key, KeyRole::Private, pair.cover_ref, pair.keygen_checkpoint}, dir / "private_key.png");
}

KeyPair load_key_pair(const fs::path& dir) {
    const KeyFile pub = load_key(dir / "public_key.png");
    const KeyFile priv = load_key(dir / "private_key.png");
    if (pub.role != KeyRole::Public || priv.role != KeyRole::Private)
        throw FormatError("key roles do not match their file names in " + dir.string());
    if (pub.keygen_checkpoint != priv.keygen_checkpoint)
        throw FormatError("public and private keys come from different key generators");
    return {pub.key, priv.key, priv.source_ref, pub.source_ref, pub.keygen_checkpoint};
}

}  // namespace egan
