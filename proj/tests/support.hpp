#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "encryptgan/autograd.hpp"
#include "encryptgan/imagedata.hpp"

namespace egan::test {

inline Image random_image(int h, int w, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(lo, hi);
    Tensor t({1, 3, h, w});
    for (float& v : t.values()) v = u(rng);
    return Image(std::move(t));
}

inline Tensor random_tensor(Shape s, std::uint64_t seed, float scale = 1.0f) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> n(0.0f, scale);
    Tensor t(s);
    for (float& v : t.values()) v = n(rng);
    return t;
}

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("egan_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

struct GradCheck {
    double max_rel = 0.0;
    int checked = 0;
};

// Central differences on `count` entries of `leaf`, compared against the
// analytic gradient. Relative error uses max(|a|, |n|, floor) as the scale.
inline GradCheck check_gradient(const ag::Var& leaf, const std::function<ag::Var()>& loss, int count,
                                std::uint64_t seed, double eps = 1e-3, double floor = 1e-2,
                                bool allow_kinks = false) {
    leaf->zero_grad();
    ag::backward(loss());
    const Tensor analytic = leaf->grad;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::int64_t> pick(0, leaf->value.numel() - 1);
    GradCheck out;
    for (int i = 0; i < count; ++i) {
        const auto idx = pick(rng);
        const float saved = leaf->value[idx];
        double up = 0.0, down = 0.0;
        {
            ag::NoGradGuard guard;
            leaf->value[idx] = saved + float(eps);
            up = ag::scalar(loss());
            leaf->value[idx] = saved - float(eps);
            down = ag::scalar(loss());
        }
        leaf->value[idx] = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double a = analytic.empty() ? 0.0 : analytic[idx];
        const double scale = std::max({std::abs(a), std::abs(numeric), floor});
        double rel = std::abs(a - numeric) / scale;
        if (allow_kinks && rel > 1e-2) {
            // A ReLU kink inside the step: the analytic value must sit between the one-sided slopes.
            double mid = 0.0;
            {
                ag::NoGradGuard guard;
                mid = ag::scalar(loss());
            }
            const double fwd = (up - mid) / eps, bwd = (mid - down) / eps;
            const double slack = 1e-2 * scale;
            if (a >= std::min(fwd, bwd) - slack && a <= std::max(fwd, bwd) + slack) rel = 0.0;
        }
        out.max_rel = std::max(out.max_rel, rel);
        ++out.checked;
    }
    return out;
}

}  // namespace egan::test
