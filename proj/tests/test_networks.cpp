#include "doctest.h"

#include "encryptgan/errors.hpp"
#include "encryptgan/networks.hpp"
#include "support.hpp"

using namespace egan;

namespace {

ag::Var leaf(Shape s, std::uint64_t seed, float scale = 1.0f) {
    return ag::parameter(test::random_tensor(s, seed, scale));
}

// Sum of relative errors over a handful of entries must stay under 1e-2.
void expect_grad(const ag::Var& x, const std::function<ag::Var()>& f, int count = 12, std::uint64_t seed = 1,
                 bool allow_kinks = false) {
    const auto r = test::check_gradient(x, f, count, seed, 1e-3, 1e-2, allow_kinks);
    CHECK(r.max_rel < 1e-2);
}

ArchConfig desk() { return ArchConfig{}; }

}  // namespace

TEST_CASE("autograd op gradients match central differences") {
    auto target = ag::constant(test::random_tensor({2, 3, 6, 6}, 99));
    SUBCASE("conv2d") {
        auto x = leaf({2, 3, 6, 6}, 1), w = leaf({4, 3, 3, 3}, 2, 0.3f), b = leaf({1, 4, 1, 1}, 3);
        auto f = [&] { return ag::mean_squared_to(ag::conv2d(x, w, b, 2, 1), 0.3f); };
        expect_grad(x, f);
        expect_grad(w, f);
        expect_grad(b, f);
    }
    SUBCASE("conv_transpose2d") {
        auto x = leaf({1, 4, 3, 3}, 4), w = leaf({4, 2, 3, 3}, 5, 0.3f), b = leaf({1, 2, 1, 1}, 6);
        auto f = [&] { return ag::mean_squared_to(ag::conv_transpose2d(x, w, b, 2, 1, 1), -0.2f); };
        CHECK(ag::conv_transpose2d(x, w, b, 2, 1, 1)->value.shape() == Shape{1, 2, 6, 6});
        expect_grad(x, f);
        expect_grad(w, f);
    }
    SUBCASE("instance_norm, reflection_pad, relu, tanh") {
        auto x = leaf({2, 3, 6, 6}, 7);
        auto f = [&] {
            return ag::mean_squared_to(ag::tanh(ag::relu(ag::reflection_pad(ag::instance_norm(x), 2))), 0.1f);
        };
        CHECK(ag::reflection_pad(x, 2)->value.shape() == Shape{2, 3, 10, 10});
        expect_grad(x, f);
    }
    SUBCASE("resize, crop, concat, add, leaky_relu") {
        auto x = leaf({2, 3, 6, 6}, 8), k = leaf({2, 3, 2, 2}, 9);
        auto f = [&] {
            auto r = ag::resize_bilinear(k, 6, 6);
            auto c = ag::concat_channels(ag::add(x, r), r);
            return ag::mean_squared_to(ag::crop(ag::leaky_relu(c, 0.2f), 0, 1, 6, 3), 0.3f);
        };
        expect_grad(x, f, 12, 1, true);
        expect_grad(k, f, 12, 1, true);
    }
    SUBCASE("linear and softmax cross-entropy") {
        auto x = leaf({3, 4, 2, 2}, 10), w = leaf({2, 16, 1, 1}, 11, 0.3f), b = leaf({1, 2, 1, 1}, 12);
        const std::vector<int> labels{0, 1, 1};
        auto f = [&] { return ag::softmax_cross_entropy(ag::linear(x, w, b), labels); };
        expect_grad(x, f);
        expect_grad(w, f);
        expect_grad(b, f);
    }
    SUBCASE("mean_abs_diff") {
        auto x = leaf({2, 3, 6, 6}, 13);
        expect_grad(x, [&] { return ag::mean_abs_diff(x, target); });
    }
}

TEST_CASE("bilinear resize oracle") {
    // 2x2 -> 3x3 corner-aligned: centre is the mean, edges the pairwise means.
    Tensor src({1, 1, 2, 2}, std::vector<float>{0, 1, 2, 3});
    const Tensor r = ag::resize_bilinear(src, 3, 3);
    const std::vector<float> expected{0, 0.5f, 1, 1, 1.5f, 2, 2, 2.5f, 3};
    for (int i = 0; i < 9; ++i) CHECK(r[i] == doctest::Approx(expected[i]));
    // 1x1 broadcasts.
    const Tensor b = ag::resize_bilinear(Tensor({1, 2, 1, 1}, std::vector<float>{0.25f, -0.5f}), 4, 4);
    CHECK(b.at(0, 0, 3, 2) == 0.25f);
    CHECK(b.at(0, 1, 0, 0) == -0.5f);
}

TEST_CASE("no-grad guard builds no graph") {
    auto x = ag::parameter(Tensor({1, 1, 2, 2}, 1.0f));
    {
        ag::NoGradGuard guard;
        CHECK_FALSE(ag::grad_enabled());
        auto y = ag::tanh(x);
        CHECK_FALSE(y->requires_grad);
        CHECK(y->parents.empty());
    }
    CHECK(ag::grad_enabled());
}

TEST_CASE("feature taps") {
    CHECK(FeatureTaps().layers() == std::vector<int>{3, 5, 6});
    CHECK(FeatureTaps().label() == "L3L5L6");
    CHECK_THROWS_AS(FeatureTaps(std::vector<int>{}), ConfigError);
    CHECK_THROWS_AS(FeatureTaps({0, 2}), ConfigError);
    CHECK_THROWS_AS(FeatureTaps({3, 3}), ConfigError);
    CHECK_THROWS_AS(FeatureTaps({5, 2}), ConfigError);
    CHECK_THROWS_AS(FeatureTaps({7}), ConfigError);
}

TEST_CASE("init_params determinism") {
    const auto a = init_params(desk(), 1);
    const auto b = init_params(desk(), 1);
    const auto c = init_params(desk(), 2);
    const auto pa = a.params(), pb = b.params(), pc = c.params();
    REQUIRE(pa.size() == pb.size());
    bool any_diff = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        CHECK(pa[i].var->value == pb[i].var->value);
        if (!(pa[i].var->value == pc[i].var->value)) any_diff = true;
    }
    CHECK(any_diff);
    CHECK(a.parameter_count() > 0);

    ArchConfig bad = desk();
    bad.image_size = {48, 48};
    CHECK_THROWS_AS(init_params(bad, 0), ConfigError);
    bad = desk();
    bad.residual_blocks = 0;
    CHECK_THROWS_AS(init_params(bad, 0), ConfigError);
}

TEST_CASE("forward shapes and ranges at desk size") {
    const auto nets = init_params(desk(), 3);
    const Image img = test::random_image(64, 64, 1);
    const Image key = test::random_image(64, 64, 2);

    const Image out = generator_forward(nets.F, img, key);
    CHECK(out.size() == Size2{64, 64});
    CHECK(out.pixels().min() >= -1.0f);
    CHECK(out.pixels().max() <= 1.0f);
    CHECK(generator_forward(nets.F, img, key) == out);

    // One key pixel moved by 0.5 changes the output.
    Tensor k2 = key.pixels();
    k2.at(0, 0, 10, 10) = k2.at(0, 0, 10, 10) > 0 ? k2.at(0, 0, 10, 10) - 0.5f : k2.at(0, 0, 10, 10) + 0.5f;
    const Image out2 = generator_forward(nets.F, img, Image(k2));
    float linf = 0.0f;
    for (std::int64_t i = 0; i < out.pixels().numel(); ++i)
        linf = std::max(linf, std::abs(out.pixels()[i] - out2.pixels()[i]));
    CHECK(linf > 0.0f);

    // A smaller key is resized to the image.
    CHECK(generator_forward(nets.G, img, test::random_image(8, 8, 3)).size() == Size2{64, 64});

    const Tensor scores = discriminator_forward(nets.Dx, img);
    CHECK(scores.shape() == Shape{1, 1, 4, 4});
    CHECK(discriminator_forward(nets.Dx, img) == scores);
    CHECK_FALSE(discriminator_forward(nets.Dx, test::random_image(64, 64, 9)) == scores);

    const KeyForward kf = keygen_forward(nets.K, img);
    CHECK(kf.key.size() == Size2{64, 64});
    int side = 32;
    for (const Tensor& a : kf.activations) {
        CHECK(a.shape().h == side);
        CHECK(a.shape().w == side);
        side /= 2;
    }
    KeyOutput raw = nets.K.forward(ag::constant(img.pixels()));
    CHECK(raw.raw_key->value.shape() == Shape{1, 3, 4, 4});
    CHECK(raw.logits->value.shape() == Shape{1, 2, 1, 1});
    // Corner-aligned upsampling keeps the raw corners.
    for (int c = 0; c < 3; ++c) {
        CHECK(kf.key.pixels().at(0, c, 0, 0) == raw.raw_key->value.at(0, c, 0, 0));
        CHECK(kf.key.pixels().at(0, c, 63, 63) == raw.raw_key->value.at(0, c, 3, 3));
    }
    CHECK(keygen_forward(nets.K, img).key == kf.key);

    const Image noisy = add_gaussian_noise(img, 0.012, 4);
    const Image k_noisy = keygen_forward(nets.K, noisy).key;
    double mse = 0.0;
    for (std::int64_t i = 0; i < k_noisy.pixels().numel(); ++i) {
        const double d = k_noisy.pixels()[i] - kf.key.pixels()[i];
        mse += d * d;
    }
    CHECK(mse > 0.0);
}

TEST_CASE("shape errors") {
    const auto nets = init_params(desk(), 3);
    const auto bad = ag::constant(Tensor({1, 4, 64, 64}));
    const auto img = ag::constant(Tensor({1, 3, 64, 64}));
    CHECK_THROWS_AS(nets.F.forward(bad, img), ShapeError);
    CHECK_THROWS_AS(nets.F.forward(img, bad), ShapeError);
    CHECK_THROWS_AS(nets.Dx.forward(bad), ShapeError);
    CHECK_THROWS_AS(nets.K.forward(ag::constant(Tensor({1, 3, 32, 32}))), ShapeError);
}

TEST_CASE("key module order switch") {
    ArchConfig a = desk();
    a.key_module_order = KeyModuleOrder::ConvNormRelu;
    const auto n1 = init_params(desk(), 5);
    const auto n2 = init_params(a, 5);
    const Image img = test::random_image(64, 64, 1);
    CHECK_FALSE(keygen_forward(n1.K, img).activations[0] == keygen_forward(n2.K, img).activations[0]);
}

TEST_CASE("network parameter gradients match central differences") {
    // 3x16x16 inputs for the generator and discriminator; K needs 64x64.
    ArchConfig arch = desk();
    arch.residual_blocks = 2;
    const auto nets = init_params(arch, 21);
    auto x = ag::constant(test::random_image(16, 16, 1).pixels());
    auto k = ag::constant(test::random_image(16, 16, 2).pixels());

    auto check_params = [](const std::vector<NamedParam>& params, const std::function<ag::Var()>& loss) {
        // 10 entries drawn across the network's tensors.
        std::mt19937_64 rng(5);
        // Instance norm followed by ReLU can push several activations across
        // zero within one step; one such entry in ten is tolerated.
        int off = 0;
        for (int i = 0; i < 10; ++i) {
            const auto& p = params[rng() % params.size()];
            INFO(p.name);
            const double rel = test::check_gradient(p.var, loss, 1, rng(), 1e-3, 1e-2, true).max_rel;
            CHECK(rel < 0.25);
            if (rel >= 1e-2) ++off;
        }
        CHECK(off <= 1);
    };
    check_params(nets.F.params(), [&] { return ag::mean_squared_to(nets.F.forward(x, k), 0.3f); });
    check_params(nets.Dx.params(), [&] { return ag::mean_squared_to(nets.Dx.forward(x), 0.5f); });
    auto big = ag::constant(test::random_image(64, 64, 4).pixels());
    check_params(nets.K.params(), [&] { return ag::mean_squared_to(nets.K.forward(big).key, 0.3f); });
}

TEST_CASE("key head layer sets the key grid") {
    ArchConfig arch = desk();
    const Image img = test::random_image(64, 64, 6);
    for (int layer = 1; layer <= 6; ++layer) {
        arch.key_head_layer = layer;
        const auto n = init_params(arch, 2);
        const int side = 64 >> layer;
        CHECK(n.K.forward(ag::constant(img.pixels())).raw_key->value.shape() == Shape{1, 3, side, side});
    }
    arch.key_head_layer = 0;
    CHECK_THROWS_AS(arch.validate(), ConfigError);
    arch.key_head_layer = 7;
    CHECK_THROWS_AS(arch.validate(), ConfigError);
}

TEST_CASE("a spatially constant key is invisible to the generator") {
    // Stem conv adds a per-channel constant that instance norm removes.
    ArchConfig arch = desk();
    arch.key_head_layer = 6;
    const auto flat = init_params(arch, 8);
    const Image x = test::random_image(64, 64, 1);
    const Image k1 = keygen_forward(flat.K, test::random_image(64, 64, 2)).key;
    const Image k2 = keygen_forward(flat.K, test::random_image(64, 64, 3)).key;
    REQUIRE_FALSE(k1 == k2);
    const Tensor a = generator_forward(flat.F, x, k1).pixels(), b = generator_forward(flat.F, x, k2).pixels();
    double worst = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) worst = std::max(worst, double(std::abs(a[i] - b[i])));
    CHECK(worst < 1e-4);

    const auto grid = init_params(desk(), 8);
    const Image g1 = keygen_forward(grid.K, test::random_image(64, 64, 2)).key;
    const Image g2 = keygen_forward(grid.K, test::random_image(64, 64, 3)).key;
    const Tensor c = generator_forward(grid.F, x, g1).pixels(), d = generator_forward(grid.F, x, g2).pixels();
    worst = 0.0;
    for (std::int64_t i = 0; i < c.numel(); ++i) worst = std::max(worst, double(std::abs(c[i] - d[i])));
    CHECK(worst > 1e-3);
}
