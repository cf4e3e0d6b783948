#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "encryptgan/config.hpp"
#include "encryptgan/imagedata.hpp"
#include "encryptgan/losses.hpp"
#include "encryptgan/networks.hpp"

namespace egan {

struct AdamState {
    long t = 0;
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
    bool operator==(const AdamState&) const = default;
};

void adam_update(const std::vector<NamedParam>& params, AdamState& state, double lr, double beta1, double beta2,
                 double eps = 1e-8);

struct ModelState {
    Networks nets;
    AdamState opt_gen;   // F and G
    AdamState opt_disc;  // Dx and Dy
    AdamState opt_key;   // K
    long step = 0;

    ModelState clone() const;
};

ModelState init_model_state(const TrainConfig& cfg);

// One training example. Keys are derived inside the step from the current K.
struct TrainSample {
    Image cover;        // x_i, source of the private key
    Image wrong_cover;  // another domain-X image, source of the incorrect key
    Image disguise;     // y_j, source of the public key
    Image message_x;
    Placement placement_x;
    Image message_y;
    Placement placement_y;
    Image real_x;  // discriminator reference samples
    Image real_y;
};
using Batch = std::vector<TrainSample>;

bool sample_key_correctness(Rng& rng, double probability = 0.5);

struct StepOptions {
    std::optional<bool> force_key_correct;
    // Called after each optimizer update: "discriminator", "generator", "keygen".
    std::function<void(const char* phase, const ModelState&)> after_phase;
};

// Discriminator update, generator update on the branch drawn by
// sample_key_correctness, then key-network update. Throws NumericalError
// naming the first non-finite term.
losses::LossReport train_step(ModelState& state, const TrainConfig& cfg, const Batch& batch, Rng& rng,
                              StepOptions options = {});

// Seeded per-step randomness: step k always sees the same stream.
std::uint64_t step_seed(std::uint64_t seed, long step);

struct TrainingData {
    DomainDataset x;
    DomainDataset y;
    DomainDataset messages;

    static TrainingData open(const DataPaths& paths, const TrainConfig& cfg);
};

Batch sample_batch(const TrainingData& data, const TrainConfig& cfg, Rng& rng);

struct Checkpoint {
    static constexpr std::uint32_t kFormatVersion = 1;
    TrainConfig config;
    ModelState state;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Hex digest over all network parameters.
std::string parameter_digest(const Networks& nets);
// Digest over K only; identifies the key-generator version behind a key file.
std::string keygen_digest(const Networks& nets);

using StepCallback = std::function<void(const losses::LossReport&)>;

struct TrainOptions {
    std::optional<Checkpoint> resume;
    bool write_files = true;  // checkpoints + loss log under cfg.out_dir
    StepCallback on_step;
};

// Runs from the resume point (or a fresh init) up to cfg.total_steps.
Checkpoint train(const TrainConfig& cfg, TrainOptions options = {});

nlohmann::json to_json(const losses::LossReport& r);

}  // namespace egan
