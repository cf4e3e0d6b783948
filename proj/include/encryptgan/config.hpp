#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "encryptgan/losses.hpp"
#include "encryptgan/networks.hpp"

namespace egan {

struct DataPaths {
    std::filesystem::path x_dir;
    std::filesystem::path y_dir;
    std::filesystem::path message_dir;
};

struct TrainConfig {
    ArchConfig arch;
    Size2 message_size{32, 32};
    losses::LossWeights loss_weights;
    double learning_rate = 2e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    int batch_size = 1;
    long total_steps = 2000;
    double input_noise_sigma = 0.01;
    double key_correct_probability = 0.5;
    std::uint64_t seed = 0;
    DataPaths train_data;
    DataPaths test_data;
    long checkpoint_interval = 500;
    std::filesystem::path out_dir = "run";
    // K joins every step by default; a positive value trains K alone for
    // that many steps first and then freezes it.
    long keygen_pretrain_steps = 0;
    double keygen_learning_rate = 2e-4;
    // The 1x1 key head has no classification gradient; when set it is
    // optimised with F and G so the generator objective shapes the keys.
    bool key_head_with_generators = true;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Reads a JSON config file; missing keys keep their defaults.
TrainConfig load_train_config(const std::filesystem::path& path);

// Applies "a.b.c=value" overrides. Each value is parsed as JSON when possible
// (numbers, booleans, arrays) and as a string otherwise, then type-checked
// against the existing key. Unknown keys raise ConfigError.
void apply_overrides(nlohmann::json& j, const std::vector<std::string>& overrides);

}  // namespace egan
