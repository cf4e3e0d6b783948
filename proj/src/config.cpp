#include "encryptgan/config.hpp"

#include <cmath>
#include <fstream>

#include "encryptgan/errors.hpp"

namespace egan {

using nlohmann::json;

void TrainConfig::validate() const {
    arch.validate();
    loss_weights.validate();
    if (!(learning_rate > 0.0) || !(keygen_learning_rate > 0.0)) throw ConfigError("learning rates must be > 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw ConfigError("adam betas must lie in [0, 1)");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (total_steps < 0) throw ConfigError("total_steps must be >= 0");
    if (!(input_noise_sigma >= 0.0)) throw ConfigError("input_noise_sigma must be >= 0");
    if (!(key_correct_probability >= 0.0 && key_correct_probability <= 1.0))
        throw ConfigError("key_correct_probability must lie in [0, 1]");
    if (message_size.height < 1 || message_size.width < 1 || message_size.height > arch.image_size.height ||
        message_size.width > arch.image_size.width)
        throw ConfigError("message_size must be positive and fit inside image_size");
    if (checkpoint_interval < 0) throw ConfigError("checkpoint_interval must be >= 0");
    if (keygen_pretrain_steps < 0) throw ConfigError("keygen_pretrain_steps must be >= 0");
}

json to_json(const TrainConfig& c) {
    json j;
    j["arch"] = {
        {"image_size", {c.arch.image_size.height, c.arch.image_size.width}},
        {"residual_blocks", c.arch.residual_blocks},
        {"base_channels", c.arch.base_channels},
        {"disc_channels", c.arch.disc_channels},
        {"key_channels", c.arch.key_channels},
        {"key_tap_layers", c.arch.key_tap_layers.layers()},
        {"key_module_order",
         c.arch.key_module_order == KeyModuleOrder::ConvReluNorm ? "conv_relu_norm" : "conv_norm_relu"},
        {"key_head_layer", c.arch.key_head_layer},
    };
    j["message_size"] = {c.message_size.height, c.message_size.width};
    j["loss_weights"] = {{"cyc", c.loss_weights.cyc},
                         {"adv", c.loss_weights.adv},
                         {"key", c.loss_weights.key},
                         {"info", c.loss_weights.info}};
    j["learning_rate"] = c.learning_rate;
    j["adam_betas"] = {c.adam_beta1, c.adam_beta2};
    j["batch_size"] = c.batch_size;
    j["total_steps"] = c.total_steps;
    j["input_noise_sigma"] = c.input_noise_sigma;
    j["key_correct_probability"] = c.key_correct_probability;
    j["seed"] = c.seed;
    auto paths = [](const DataPaths& p) {
        return json{{"x", p.x_dir.string()}, {"y", p.y_dir.string()}, {"messages", p.message_dir.string()}};
    };
    j["train_data"] = paths(c.train_data);
    j["test_data"] = paths(c.test_data);
    j["checkpoint_interval"] = c.checkpoint_interval;
    j["out_dir"] = c.out_dir.string();
    j["keygen_pretrain_steps"] = c.keygen_pretrain_steps;
    j["keygen_learning_rate"] = c.keygen_learning_rate;
    j["key_head_with_generators"] = c.key_head_with_generators;
    return j;
}

namespace {

Size2 size_from(const json& j) {
    if (j.is_number_integer()) return {j.get<int>(), j.get<int>()};
    if (!j.is_array() || j.size() != 2) throw ConfigError("size must be an integer or [height, width]");
    return {j[0].get<int>(), j[1].get<int>()};
}

template <class T>
void take(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

DataPaths paths_from(const json& j) {
    DataPaths p;
    if (j.contains("x")) p.x_dir = j.at("x").get<std::string>();
    if (j.contains("y")) p.y_dir = j.at("y").get<std::string>();
    if (j.contains("messages")) p.message_dir = j.at("messages").get<std::string>();
    return p;
}

}  // namespace

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    try {
        if (j.contains("arch")) {
            const json& a = j.at("arch");
            if (a.contains("image_size")) c.arch.image_size = size_from(a.at("image_size"));
            take(a, "residual_blocks", c.arch.residual_blocks);
            take(a, "base_channels", c.arch.base_channels);
            take(a, "disc_channels", c.arch.disc_channels);
            take(a, "key_channels", c.arch.key_channels);
            take(a, "key_head_layer", c.arch.key_head_layer);
            if (a.contains("key_tap_layers")) c.arch.key_tap_layers = FeatureTaps(a.at("key_tap_layers").get<std::vector<int>>());
            if (a.contains("key_module_order")) {
                const auto order = a.at("key_module_order").get<std::string>();
                if (order == "conv_relu_norm") c.arch.key_module_order = KeyModuleOrder::ConvReluNorm;
                else if (order == "conv_norm_relu") c.arch.key_module_order = KeyModuleOrder::ConvNormRelu;
                else throw ConfigError("key_module_order must be conv_relu_norm or conv_norm_relu");
            }
        }
        if (j.contains("message_size")) c.message_size = size_from(j.at("message_size"));
        if (j.contains("loss_weights")) {
            const json& w = j.at("loss_weights");
            take(w, "cyc", c.loss_weights.cyc);
            take(w, "adv", c.loss_weights.adv);
            take(w, "key", c.loss_weights.key);
            take(w, "info", c.loss_weights.info);
        }
        take(j, "learning_rate", c.learning_rate);
        if (j.contains("adam_betas")) {
            const auto betas = j.at("adam_betas").get<std::vector<double>>();
            if (betas.size() != 2) throw ConfigError("adam_betas must have two entries");
            c.adam_beta1 = betas[0];
            c.adam_beta2 = betas[1];
        }
        take(j, "batch_size", c.batch_size);
        take(j, "total_steps", c.total_steps);
        take(j, "input_noise_sigma", c.input_noise_sigma);
        take(j, "key_correct_probability", c.key_correct_probability);
        take(j, "seed", c.seed);
        if (j.contains("train_data")) c.train_data = paths_from(j.at("train_data"));
        if (j.contains("test_data")) c.test_data = paths_from(j.at("test_data"));
        take(j, "checkpoint_interval", c.checkpoint_interval);
        if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
        take(j, "keygen_pretrain_steps", c.keygen_pretrain_steps);
        take(j, "keygen_learning_rate", c.keygen_learning_rate);
        take(j, "key_head_with_generators", c.key_head_with_generators);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("config not found: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    return train_config_from_json(j);
}

void apply_overrides(json& j, const std::vector<std::string>& overrides) {
    for (const auto& item : overrides) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("override must be key=value: " + item);
        const std::string key = item.substr(0, eq);
        const std::string text = item.substr(eq + 1);

        json* node = &j;
        std::size_t start = 0;
        while (true) {
            const auto dot = key.find('.', start);
            const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key: " + key);
            node = &(*node)[part];
            if (dot == std::string::npos) break;
            start = dot + 1;
        }

        json value;
        try {
            value = json::parse(text);
        } catch (const json::exception&) {
            value = text;
        }
        const bool numeric_ok = node->is_number() && value.is_number() &&
                                !(node->is_number_integer() && value.is_number_float());
        const bool same = node->type() == value.type() || numeric_ok ||
                          (node->is_number_unsigned() && value.is_number_integer() && value.get<long long>() >= 0);
        if (!same) throw ConfigError("override type mismatch for " + key + ": expected " + node->type_name());
        *node = value;
    }
}

}  // namespace egan
