#include "encryptgan/networks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "encryptgan/errors.hpp"

namespace egan {

namespace {

constexpr float kInitStd = 0.02f;
constexpr float kLeakySlope = 0.2f;

ag::Var normal_param(Shape shape, Rng& rng) {
    std::normal_distribution<float> dist(0.0f, kInitStd);
    Tensor t(shape);
    for (float& v : t.values()) v = dist(rng);
    return ag::parameter(std::move(t));
}

ConvLayer make_conv(int cin, int cout, int k, int stride, int pad, Rng& rng) {
    ConvLayer l;
    l.weight = normal_param(Shape{cout, cin, k, k}, rng);
    l.bias = ag::parameter(Tensor(Shape{1, cout, 1, 1}, 0.0f));
    l.stride = stride;
    l.pad = pad;
    return l;
}

ConvLayer make_deconv(int cin, int cout, int k, int stride, int pad, int output_pad, Rng& rng) {
    ConvLayer l;
    l.weight = normal_param(Shape{cin, cout, k, k}, rng);
    l.bias = ag::parameter(Tensor(Shape{1, cout, 1, 1}, 0.0f));
    l.stride = stride;
    l.pad = pad;
    l.transposed = true;
    l.output_pad = output_pad;
    return l;
}

void push(std::vector<NamedParam>& out, const std::string& prefix, const ConvLayer& l) {
    out.push_back({prefix + ".weight", l.weight});
    out.push_back({prefix + ".bias", l.bias});
}

ag::Var norm_relu(const ag::Var& x) { return ag::relu(ag::instance_norm(x)); }

}  // namespace

// ---------------------------------------------------------------------------

FeatureTaps::FeatureTaps() : layers_{3, 5, 6} {}

FeatureTaps::FeatureTaps(std::vector<int> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ConfigError("feature taps must be non-empty");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i] < 1 || layers_[i] > 6) throw ConfigError("feature tap layer must be within 1..6");
        if (i > 0 && layers_[i] <= layers_[i - 1]) throw ConfigError("feature taps must be strictly increasing");
    }
}

std::string FeatureTaps::label() const {
    std::string s;
    for (int l : layers_) s += "L" + std::to_string(l);
    return s;
}

void ArchConfig::validate() const {
    if (image_size.height % 64 != 0 || image_size.width % 64 != 0 || image_size.height <= 0 ||
        image_size.width <= 0)
        throw ConfigError("image_size must be a positive multiple of 64 (six stride-2 key modules)");
    if (residual_blocks < 1) throw ConfigError("residual_blocks must be >= 1");
    if (base_channels < 1 || disc_channels < 1 || key_channels < 1) throw ConfigError("channel widths must be >= 1");
    if (key_head_layer < 1 || key_head_layer > 6) throw ConfigError("key_head_layer must be in 1..6");
}

ag::Var ConvLayer::operator()(const ag::Var& x) const {
    if (transposed) return ag::conv_transpose2d(x, weight, bias, stride, pad, output_pad);
    return ag::conv2d(x, weight, bias, stride, pad);
}

// ---------------------------------------------------------------------------

Generator::Generator(const ArchConfig& arch, Rng& rng, std::string tag) : tag_(std::move(tag)) {
    const int c = arch.base_channels;
    stem_ = make_conv(6, c, 7, 1, 0, rng);
    down1_ = make_conv(c, 2 * c, 3, 2, 1, rng);
    down2_ = make_conv(2 * c, 4 * c, 3, 2, 1, rng);
    blocks_.resize(static_cast<std::size_t>(arch.residual_blocks));
    for (auto& block : blocks_) {
        block[0] = make_conv(4 * c, 4 * c, 3, 1, 0, rng);
        block[1] = make_conv(4 * c, 4 * c, 3, 1, 0, rng);
    }
    up1_ = make_deconv(4 * c, 2 * c, 3, 2, 1, 1, rng);
    up2_ = make_deconv(2 * c, c, 3, 2, 1, 1, rng);
    head_ = make_conv(c, 3, 7, 1, 0, rng);
}

ag::Var Generator::forward(const ag::Var& image, const ag::Var& key, ActivationMap* record) const {
    const Shape is = image->value.shape();
    if (is.c != 3) throw ShapeError("generator expects a 3-channel image, got " + is.str());
    if (key->value.shape().c != 3) throw ShapeError("generator expects a 3-channel key");
    require_network_size({is.h, is.w}, "generator input");
    const ag::Var sized_key = ag::resize_bilinear(key, is.h, is.w);
    if (sized_key->value.shape().n != is.n) throw ShapeError("generator: key batch does not match image batch");

    auto keep = [record](const char* name, const ag::Var& v) {
        if (record) (*record)[name] = v->value;
    };
    ag::Var h = ag::concat_channels(image, sized_key);
    h = norm_relu(stem_(ag::reflection_pad(h, 3)));
    keep("enc1", h);
    h = norm_relu(down1_(h));
    keep("enc2", h);
    h = norm_relu(down2_(h));
    keep("enc3", h);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        ag::Var r = norm_relu(blocks_[i][0](ag::reflection_pad(h, 1)));
        r = ag::instance_norm(blocks_[i][1](ag::reflection_pad(r, 1)));
        h = ag::add(h, r);
        if (record) (*record)["R" + std::to_string(i + 1)] = h->value;
    }
    h = norm_relu(up1_(h));
    keep("dec1", h);
    h = norm_relu(up2_(h));
    keep("dec2", h);
    return ag::tanh(head_(ag::reflection_pad(h, 3)));
}

std::vector<NamedParam> Generator::params() const {
    std::vector<NamedParam> out;
    push(out, tag_ + ".stem", stem_);
    push(out, tag_ + ".down1", down1_);
    push(out, tag_ + ".down2", down2_);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        push(out, tag_ + ".res" + std::to_string(i + 1) + ".a", blocks_[i][0]);
        push(out, tag_ + ".res" + std::to_string(i + 1) + ".b", blocks_[i][1]);
    }
    push(out, tag_ + ".up1", up1_);
    push(out, tag_ + ".up2", up2_);
    push(out, tag_ + ".head", head_);
    return out;
}

// ---------------------------------------------------------------------------

Discriminator::Discriminator(const ArchConfig& arch, Rng& rng, std::string tag) : tag_(std::move(tag)) {
    const int c = arch.disc_channels;
    layers_[0] = make_conv(3, c, 4, 2, 1, rng);
    layers_[1] = make_conv(c, 2 * c, 4, 2, 1, rng);
    layers_[2] = make_conv(2 * c, 4 * c, 4, 2, 1, rng);
    layers_[3] = make_conv(4 * c, 8 * c, 4, 2, 1, rng);
    layers_[4] = make_conv(8 * c, 1, 3, 1, 1, rng);
}

ag::Var Discriminator::forward(const ag::Var& image) const {
    if (image->value.shape().c != 3) throw ShapeError("discriminator expects 3 channels, got " + image->value.shape().str());
    ag::Var h = ag::leaky_relu(layers_[0](image), kLeakySlope);
    for (int i = 1; i < 4; ++i) h = ag::leaky_relu(ag::instance_norm(layers_[i](h)), kLeakySlope);
    return layers_[4](h);
}

std::vector<NamedParam> Discriminator::params() const {
    std::vector<NamedParam> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) push(out, tag_ + ".conv" + std::to_string(i + 1), layers_[i]);
    return out;
}

// ---------------------------------------------------------------------------

KeyGenerator::KeyGenerator(const ArchConfig& arch, Rng& rng)
    : order_(arch.key_module_order), head_layer_(arch.key_head_layer) {
    const int c = arch.key_channels;
    const std::array<int, 7> widths{3, c, 2 * c, 4 * c, 8 * c, 8 * c, 8 * c};
    for (int i = 0; i < 6; ++i) modules_[i] = make_conv(widths[i], widths[i + 1], 4, 2, 1, rng);
    key_head_ = make_conv(widths[head_layer_], 3, 1, 1, 0, rng);
    // Fan-in scaled so keys spread across covers instead of sitting near tanh(0).
    const float gain = 1.0f / (kInitStd * std::sqrt(float(widths[head_layer_])));
    for (float& v : key_head_.weight->value.values()) v *= gain;
    const int cells = (arch.image_size.height / 64) * (arch.image_size.width / 64);
    fc_weight_ = normal_param(Shape{2, widths[6] * cells, 1, 1}, rng);
    fc_bias_ = ag::parameter(Tensor(Shape{1, 2, 1, 1}, 0.0f));
}

KeyOutput KeyGenerator::forward(const ag::Var& image) const {
    const Shape is = image->value.shape();
    if (is.c != 3) throw ShapeError("key generator expects 3 channels, got " + is.str());
    if (is.h % 64 != 0 || is.w % 64 != 0 || is.h == 0 || is.w == 0)
        throw ShapeError("key generator input must be a multiple of 64, got " + is.str());

    // Normalising a single spatial cell is degenerate (always zero), so the
    // norm is skipped once a module's output shrinks to 1x1.
    auto norm = [](const ag::Var& v) {
        return v->value.shape().plane() > 1 ? ag::instance_norm(v) : v;
    };
    KeyOutput out;
    ag::Var h = image;
    for (int i = 0; i < 6; ++i) {
        h = modules_[i](h);
        h = order_ == KeyModuleOrder::ConvReluNorm ? norm(ag::relu(h)) : ag::relu(norm(h));
        out.layers[i] = h;
    }
    out.raw_key = ag::tanh(key_head_(out.layers[head_layer_ - 1]));
    out.key = ag::resize_bilinear(out.raw_key, is.h, is.w);
    out.logits = ag::linear(h, fc_weight_, fc_bias_);
    return out;
}

std::vector<NamedParam> KeyGenerator::params() const {
    std::vector<NamedParam> out;
    for (int i = 0; i < 6; ++i) push(out, "K.L" + std::to_string(i + 1), modules_[i]);
    push(out, "K.key_head", key_head_);
    out.push_back({"K.fc.weight", fc_weight_});
    out.push_back({"K.fc.bias", fc_bias_});
    return out;
}

// ---------------------------------------------------------------------------

std::vector<NamedParam> Networks::params() const {
    std::vector<NamedParam> out;
    for (auto* group : {&F, &G}) {
        auto p = group->params();
        out.insert(out.end(), p.begin(), p.end());
    }
    for (auto* group : {&Dx, &Dy}) {
        auto p = group->params();
        out.insert(out.end(), p.begin(), p.end());
    }
    auto p = K.params();
    out.insert(out.end(), p.begin(), p.end());
    return out;
}

std::size_t Networks::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params()) n += static_cast<std::size_t>(p.var->value.numel());
    return n;
}

Networks Networks::clone() const {
    // Re-initialising with any seed gives the right structure; values are
    // then overwritten from this instance.
    Networks copy = init_params(arch, 0);
    auto src = params();
    auto dst = copy.params();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i].var->value = src[i].var->value;
        dst[i].var->requires_grad = src[i].var->requires_grad;
    }
    return copy;
}

Networks init_params(const ArchConfig& arch, std::uint64_t seed) {
    arch.validate();
    Rng rng(seed);
    Networks nets;
    nets.arch = arch;
    nets.F = Generator(arch, rng, "F");
    nets.G = Generator(arch, rng, "G");
    nets.Dx = Discriminator(arch, rng, "Dx");
    nets.Dy = Discriminator(arch, rng, "Dy");
    nets.K = KeyGenerator(arch, rng);
    return nets;
}

Image generator_forward(const Generator& net, const Image& image, const Image& key) {
    ag::NoGradGuard guard;
    ag::Var out = net.forward(ag::constant(image.pixels()), ag::constant(key.pixels()));
    if (out->value.shape().h != image.height() || out->value.shape().w != image.width())
        throw ShapeError("generator output size mismatch");
    return image_from_unclamped(out->value);
}

Tensor discriminator_forward(const Discriminator& net, const Image& image) {
    ag::NoGradGuard guard;
    return net.forward(ag::constant(image.pixels()))->value;
}

KeyForward keygen_forward(const KeyGenerator& net, const Image& image) {
    ag::NoGradGuard guard;
    KeyOutput out = net.forward(ag::constant(image.pixels()));
    KeyForward r;
    r.key = image_from_unclamped(out.key->value);
    for (int i = 0; i < 6; ++i) r.activations[i] = out.layers[i]->value;
    r.logits = {out.logits->value[0], out.logits->value[1]};
    return r;
}

void set_requires_grad(const std::vector<NamedParam>& params, bool on) {
    for (const auto& p : params) p.var->requires_grad = on;
}

void zero_grads(const std::vector<NamedParam>& params) {
    for (const auto& p : params) p.var->zero_grad();
}

}  // namespace egan
