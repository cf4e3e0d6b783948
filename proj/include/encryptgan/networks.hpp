#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "encryptgan/autograd.hpp"
#include "encryptgan/imagedata.hpp"

namespace egan {

enum class KeyModuleOrder {
    ConvReluNorm,  // literal reading, default
    ConvNormRelu,
};

// Ordered, strictly increasing subset of key-network layers {1..6}.
class FeatureTaps {
public:
    FeatureTaps();  // {3, 5, 6}
    explicit FeatureTaps(std::vector<int> layers);
    const std::vector<int>& layers() const { return layers_; }
    std::string label() const;  // "L3L5L6"
    bool operator==(const FeatureTaps&) const = default;

private:
    std::vector<int> layers_;
};

struct ArchConfig {
    Size2 image_size{64, 64};
    int residual_blocks = 6;
    int base_channels = 8;      // generator width after the stem
    int disc_channels = 16;     // first discriminator layer width
    int key_channels = 16;      // first key-network layer width
    FeatureTaps key_tap_layers{};
    KeyModuleOrder key_module_order = KeyModuleOrder::ConvReluNorm;
    // Module (1..6) feeding the 1x1 key head. At 64x64, L4 gives the 4x4 key
    // grid that L6 gives at 256x256; a 1x1 key is constant and instance norm
    // in the generator stem cancels it.
    int key_head_layer = 4;

    // Throws ConfigError on inconsistent values.
    void validate() const;
};

struct NamedParam {
    std::string name;
    ag::Var var;
};

// Conv weights plus the hyper-parameters needed to apply them.
struct ConvLayer {
    ag::Var weight;
    ag::Var bias;
    int stride = 1;
    int pad = 0;
    bool transposed = false;
    int output_pad = 0;

    ag::Var operator()(const ag::Var& x) const;
};

using ActivationMap = std::map<std::string, Tensor>;

// Encoder / residual bottleneck / decoder over image (+) key, 6 -> 3 channels.
class Generator {
public:
    Generator() = default;
    Generator(const ArchConfig& arch, Rng& rng, std::string tag);

    // key is resized (bilinear) to the image extent, then channel-concatenated.
    // When `record` is non-null, per-layer outputs are stored under
    // enc1..enc3, R1..Rn, dec1, dec2.
    ag::Var forward(const ag::Var& image, const ag::Var& key, ActivationMap* record = nullptr) const;
    std::vector<NamedParam> params() const;
    const std::string& tag() const { return tag_; }
    int residual_blocks() const { return static_cast<int>(blocks_.size()); }

private:
    std::string tag_;
    ConvLayer stem_, down1_, down2_, up1_, up2_, head_;
    std::vector<std::array<ConvLayer, 2>> blocks_;
};

// Four stride-2 4x4 layers followed by a 3x3 one-channel scoring layer.
class Discriminator {
public:
    Discriminator() = default;
    Discriminator(const ArchConfig& arch, Rng& rng, std::string tag);

    ag::Var forward(const ag::Var& image) const;
    std::vector<NamedParam> params() const;
    const std::string& tag() const { return tag_; }

private:
    std::string tag_;
    std::array<ConvLayer, 5> layers_;
};

struct KeyOutput {
    ag::Var raw_key;                 // {n, 3, h/2^l, w/2^l}, l = key_head_layer
    ag::Var key;                     // resized to the input extent
    std::array<ag::Var, 6> layers;   // L1..L6 activations
    ag::Var logits;                  // {n, 2, 1, 1}: X vs Y
};

// Six stride-2 4x4 convolution modules; a 1x1 tanh head turns one layer into the
// key image and a fully connected head classifies the source domain.
class KeyGenerator {
public:
    KeyGenerator() = default;
    KeyGenerator(const ArchConfig& arch, Rng& rng);

    KeyOutput forward(const ag::Var& image) const;
    std::vector<NamedParam> params() const;

private:
    KeyModuleOrder order_ = KeyModuleOrder::ConvReluNorm;
    int head_layer_ = 4;
    std::array<ConvLayer, 6> modules_;
    ConvLayer key_head_;
    ag::Var fc_weight_;
    ag::Var fc_bias_;
};

// All five networks of one model.
struct Networks {
    ArchConfig arch;
    Generator F;  // X -> Y, encryption
    Generator G;  // Y -> X, decryption
    Discriminator Dx;
    Discriminator Dy;
    KeyGenerator K;

    std::vector<NamedParam> params() const;
    std::size_t parameter_count() const;
    Networks clone() const;
};

Networks init_params(const ArchConfig& arch, std::uint64_t seed);

// Inference helpers over Images (no graph is recorded).
Image generator_forward(const Generator& net, const Image& image, const Image& key);
Tensor discriminator_forward(const Discriminator& net, const Image& image);
struct KeyForward {
    Image key;
    std::array<Tensor, 6> activations;
    std::array<float, 2> logits{};
};
KeyForward keygen_forward(const KeyGenerator& net, const Image& image);

void set_requires_grad(const std::vector<NamedParam>& params, bool on);
void zero_grads(const std::vector<NamedParam>& params);

}  // namespace egan
