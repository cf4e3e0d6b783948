#include "encryptgan/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "encryptgan/errors.hpp"

namespace egan::synth {

namespace fs = std::filesystem;

namespace {

struct Rgb {
    double r, g, b;
};

class Canvas {
public:
    explicit Canvas(int size) : size_(size), px_(static_cast<std::size_t>(size) * size, Rgb{0, 0, 0}) {}

    int size() const { return size_; }

    // Paints with coverage alpha(u, v) in [0,1]; u, v are pixel-centre
    // coordinates normalised to [0, 1].
    template <class Alpha>
    void paint(const Rgb& color, Alpha alpha) {
        for (int y = 0; y < size_; ++y)
            for (int x = 0; x < size_; ++x) {
                const double u = (x + 0.5) / size_;
                const double v = (y + 0.5) / size_;
                const double a = std::clamp(alpha(u, v), 0.0, 1.0);
                if (a <= 0.0) continue;
                Rgb& p = px_[std::size_t(y) * size_ + x];
                p.r += (color.r - p.r) * a;
                p.g += (color.g - p.g) * a;
                p.b += (color.b - p.b) * a;
            }
    }

    template <class Shade>
    void fill(Shade shade) {
        for (int y = 0; y < size_; ++y)
            for (int x = 0; x < size_; ++x) px_[std::size_t(y) * size_ + x] = shade((x + 0.5) / size_, (y + 0.5) / size_);
    }

    Raster raster() const {
        Raster r{size_, size_, {}};
        r.rgb.resize(px_.size() * 3);
        for (std::size_t i = 0; i < px_.size(); ++i) {
            r.rgb[i * 3 + 0] = static_cast<std::uint8_t>(std::lround(std::clamp(px_[i].r, 0.0, 1.0) * 255.0));
            r.rgb[i * 3 + 1] = static_cast<std::uint8_t>(std::lround(std::clamp(px_[i].g, 0.0, 1.0) * 255.0));
            r.rgb[i * 3 + 2] = static_cast<std::uint8_t>(std::lround(std::clamp(px_[i].b, 0.0, 1.0) * 255.0));
        }
        return r;
    }

private:
    int size_;
    std::vector<Rgb> px_;
};

// Soft edge over roughly one pixel: 1 inside (d < 0), 0 outside.
double edge(double signed_dist, double softness) { return std::clamp(0.5 - signed_dist / softness, 0.0, 1.0); }

double ellipse_dist(double u, double v, double cx, double cy, double rx, double ry, double angle = 0.0) {
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double du = u - cx, dv = v - cy;
    const double a = (du * ca + dv * sa) / rx;
    const double b = (-du * sa + dv * ca) / ry;
    return (std::sqrt(a * a + b * b) - 1.0) * std::min(rx, ry);
}

double segment_dist(double u, double v, double ax, double ay, double bx, double by, double radius) {
    const double px = u - ax, py = v - ay, dx = bx - ax, dy = by - ay;
    const double t = std::clamp((px * dx + py * dy) / (dx * dx + dy * dy), 0.0, 1.0);
    return std::hypot(px - t * dx, py - t * dy) - radius;
}

Rgb hsv(double h, double s, double v) {
    h = std::fmod(h, 1.0) * 6.0;
    const int i = static_cast<int>(h);
    const double f = h - i;
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (i % 6) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

Rgb mix(const Rgb& a, const Rgb& b, double t) {
    return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

Raster face(int size, Rng& rng) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    Canvas canvas(size);
    const double soft = 1.5 / size;

    const Rgb bg_top = hsv(U(rng), 0.15 + 0.25 * U(rng), 0.45 + 0.4 * U(rng));
    const Rgb bg_bot = mix(bg_top, Rgb{0.1, 0.1, 0.12}, 0.3 + 0.3 * U(rng));
    canvas.fill([&](double, double v) { return mix(bg_top, bg_bot, v); });

    const double cx = 0.5 + 0.08 * (U(rng) - 0.5), cy = 0.55 + 0.08 * (U(rng) - 0.5);
    const double rx = 0.24 + 0.06 * U(rng), ry = 0.31 + 0.06 * U(rng);
    const Rgb hair = hsv(0.05 + 0.06 * U(rng), 0.5 + 0.4 * U(rng), 0.1 + 0.45 * U(rng));
    const Rgb skin = hsv(0.04 + 0.05 * U(rng), 0.3 + 0.35 * U(rng), 0.55 + 0.4 * U(rng));
    // shoulders, hair, face
    canvas.paint(mix(hair, bg_bot, 0.5), [&](double u, double v) {
        return edge(ellipse_dist(u, v, cx, 1.05, 0.42, 0.22), soft);
    });
    canvas.paint(hair, [&](double u, double v) {
        return edge(ellipse_dist(u, v, cx, cy - 0.06, rx * 1.18, ry * 1.08), soft);
    });
    canvas.paint(skin, [&](double u, double v) { return edge(ellipse_dist(u, v, cx, cy, rx, ry), soft); });

    const double eye_y = cy - 0.06 + 0.03 * (U(rng) - 0.5);
    const double eye_dx = 0.09 + 0.03 * U(rng);
    const double eye_r = 0.028 + 0.015 * U(rng);
    const Rgb eye = hsv(U(rng), 0.4 * U(rng), 0.1 + 0.2 * U(rng));
    for (double side : {-1.0, 1.0}) {
        canvas.paint(Rgb{0.95, 0.95, 0.95}, [&](double u, double v) {
            return edge(ellipse_dist(u, v, cx + side * eye_dx, eye_y, eye_r * 1.6, eye_r), soft);
        });
        canvas.paint(eye, [&](double u, double v) {
            return edge(ellipse_dist(u, v, cx + side * eye_dx, eye_y, eye_r * 0.8, eye_r * 0.8), soft);
        });
    }
    const Rgb lips = hsv(0.97 + 0.04 * U(rng), 0.5 + 0.3 * U(rng), 0.5 + 0.3 * U(rng));
    const double mouth_y = cy + 0.14 + 0.04 * (U(rng) - 0.5);
    const double mouth_w = 0.07 + 0.04 * U(rng);
    canvas.paint(lips, [&](double u, double v) {
        return edge(ellipse_dist(u, v, cx, mouth_y, mouth_w, 0.018 + 0.012 * U(rng)), soft);
    });
    return canvas.raster();
}

Raster flower(int size, Rng& rng) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    Canvas canvas(size);
    const double soft = 1.5 / size;

    const Rgb leaf_a = hsv(0.22 + 0.12 * U(rng), 0.5 + 0.4 * U(rng), 0.15 + 0.3 * U(rng));
    const Rgb leaf_b = hsv(0.25 + 0.1 * U(rng), 0.6 + 0.3 * U(rng), 0.3 + 0.3 * U(rng));
    const double fu = 4 + 6 * U(rng), fv = 4 + 6 * U(rng), ph = 6.28 * U(rng);
    canvas.fill([&](double u, double v) {
        return mix(leaf_a, leaf_b, 0.5 + 0.5 * std::sin(fu * u + ph) * std::cos(fv * v - ph));
    });

    const double cx = 0.5 + 0.12 * (U(rng) - 0.5), cy = 0.5 + 0.12 * (U(rng) - 0.5);
    const int petals = 5 + static_cast<int>(U(rng) * 4);
    const double petal_len = 0.17 + 0.08 * U(rng), petal_w = 0.07 + 0.04 * U(rng);
    const double rot = U(rng) * 6.2832;
    const Rgb petal = hsv(std::fmod(0.75 + 0.45 * U(rng), 1.0), 0.55 + 0.4 * U(rng), 0.75 + 0.25 * U(rng));
    const Rgb petal_tip = mix(petal, Rgb{1, 1, 1}, 0.35);
    for (int i = 0; i < petals; ++i) {
        const double a = rot + 2.0 * std::numbers::pi * i / petals;
        const double px = cx + std::cos(a) * petal_len, py = cy + std::sin(a) * petal_len;
        canvas.paint(petal, [&](double u, double v) {
            return edge(ellipse_dist(u, v, px, py, petal_len, petal_w, a), soft);
        });
        canvas.paint(petal_tip, [&](double u, double v) {
            return 0.6 * edge(ellipse_dist(u, v, cx + std::cos(a) * petal_len * 1.5, cy + std::sin(a) * petal_len * 1.5,
                                           petal_len * 0.4, petal_w * 0.6, a),
                              soft);
        });
    }
    const Rgb heart = hsv(0.1 + 0.06 * U(rng), 0.8, 0.5 + 0.4 * U(rng));
    const double heart_r = 0.05 + 0.04 * U(rng);
    canvas.paint(heart, [&](double u, double v) { return edge(ellipse_dist(u, v, cx, cy, heart_r, heart_r), soft); });
    return canvas.raster();
}

// Seven-segment layout: a b c d e f g.
constexpr std::array<std::array<bool, 7>, 10> kSegments{{
    {1, 1, 1, 1, 1, 1, 0},
    {0, 1, 1, 0, 0, 0, 0},
    {1, 1, 0, 1, 1, 0, 1},
    {1, 1, 1, 1, 0, 0, 1},
    {0, 1, 1, 0, 0, 1, 1},
    {1, 0, 1, 1, 0, 1, 1},
    {1, 0, 1, 1, 1, 1, 1},
    {1, 1, 1, 0, 0, 0, 0},
    {1, 1, 1, 1, 1, 1, 1},
    {1, 1, 1, 1, 0, 1, 1},
}};

Raster digit(int size, Rng& rng) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    Canvas canvas(size);
    const double soft = 1.5 / size;
    const double hue = U(rng);
    const Rgb bg = hsv(hue, 0.2 + 0.6 * U(rng), 0.25 + 0.7 * U(rng));
    const double lum = 0.3 * bg.r + 0.6 * bg.g + 0.1 * bg.b;
    const Rgb ink = hsv(std::fmod(hue + 0.3 + 0.4 * U(rng), 1.0), 0.2 + 0.6 * U(rng), lum > 0.5 ? 0.1 + 0.2 * U(rng) : 0.8 + 0.2 * U(rng));
    canvas.fill([&](double u, double v) { return mix(bg, Rgb{bg.r * 0.8, bg.g * 0.8, bg.b * 0.8}, u * v); });

    const int d = static_cast<int>(U(rng) * 10) % 10;
    const double cx = 0.5 + 0.1 * (U(rng) - 0.5), cy = 0.5 + 0.1 * (U(rng) - 0.5);
    const double hw = 0.17 + 0.05 * U(rng), hh = 0.3 + 0.05 * U(rng);
    const double slant = 0.1 * (U(rng) - 0.5);
    const double thick = 0.05 + 0.025 * U(rng);
    auto P = [&](double x, double y) { return std::array<double, 2>{cx + x * hw - y * hh * slant, cy + y * hh}; };
    const std::array<std::array<std::array<double, 2>, 2>, 7> segs{{
        {P(-1, -1), P(1, -1)},
        {P(1, -1), P(1, 0)},
        {P(1, 0), P(1, 1)},
        {P(-1, 1), P(1, 1)},
        {P(-1, 0), P(-1, 1)},
        {P(-1, -1), P(-1, 0)},
        {P(-1, 0), P(1, 0)},
    }};
    for (int s = 0; s < 7; ++s) {
        if (!kSegments[d][s]) continue;
        const auto& seg = segs[s];
        canvas.paint(ink, [&](double u, double v) {
            return edge(segment_dist(u, v, seg[0][0], seg[0][1], seg[1][0], seg[1][1], thick), soft);
        });
    }
    return canvas.raster();
}

}  // namespace

Raster render(Kind kind, int size, std::uint64_t seed) {
    if (size < 4) throw ArgumentError("synthetic raster size must be >= 4");
    Rng rng(seed);
    switch (kind) {
        case Kind::Face: return face(size, rng);
        case Kind::Flower: return flower(size, rng);
        case Kind::Digit: return digit(size, rng);
    }
    throw ArgumentError("unknown synthetic kind");
}

void write_dataset(const fs::path& root, int image_size, int message_size, DatasetCounts counts,
                   std::uint64_t seed) {
    if (counts.train < 1 || counts.test < 1) throw ArgumentError("dataset counts must be positive");
    struct Part {
        const char* dir;
        Kind kind;
        int size;
        std::uint64_t stream;
    };
    const Part parts[] = {{"x", Kind::Face, image_size, 1}, {"y", Kind::Flower, image_size, 2},
                          {"messages", Kind::Digit, message_size, 3}};
    for (const char* split : {"train", "test"}) {
        const int n = std::string_view(split) == "train" ? counts.train : counts.test;
        const std::uint64_t split_salt = std::string_view(split) == "train" ? 0 : 0x9e3779b97f4a7c15ULL;
        for (const Part& part : parts) {
            const fs::path dir = root / split / part.dir;
            fs::create_directories(dir);
            for (int i = 0; i < n; ++i) {
                const std::uint64_t s = seed * 1000003ULL + part.stream * 7919ULL + split_salt + std::uint64_t(i) * 104729ULL;
                char name[32];
                std::snprintf(name, sizeof name, "%04d.png", i);
                write_png(render(part.kind, part.size, s), dir / name);
            }
        }
    }
}

}  // namespace egan::synth
