#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "encryptgan/imagedata.hpp"
#include "encryptgan/networks.hpp"

// Pixel metrics map [-1, 1] images to [0, 1] (peak 1).
namespace egan::metrics {

inline constexpr double kPsnrCap = 100.0;

double mse(const Image& a, const Image& b);
double rmse(const Image& a, const Image& b);
double psnr_from_mse(double mse, double cap = kPsnrCap);
double psnr(const Image& a, const Image& b, double cap = kPsnrCap);

// Gaussian-window SSIM (11x11, sigma 1.5, k1 0.01, k2 0.03) over valid
// window positions, averaged over positions and channels.
double ssim(const Image& a, const Image& b);

// Feature extractor behind the perceptual and Frechet distances.
class FeatureBackend {
public:
    virtual ~FeatureBackend() = default;
    virtual std::string name() const = 0;
    // One {1, c, h, w} map per layer.
    virtual std::vector<Tensor> layers(const Image& img) const = 0;
    // Flat vector for distribution statistics.
    virtual std::vector<double> embedding(const Image& img) const = 0;
};

// Tapped key-network activations; inputs are resized to the network extent.
class KeyFeatureBackend final : public FeatureBackend {
public:
    KeyFeatureBackend(const KeyGenerator& k, Size2 network_size, FeatureTaps taps = {});
    std::string name() const override { return "keygen:" + taps_.label(); }
    std::vector<Tensor> layers(const Image& img) const override;
    std::vector<double> embedding(const Image& img) const override;  // spatial mean of L6

private:
    Image fit(const Image& img) const;
    KeyGenerator k_;
    Size2 size_;
    FeatureTaps taps_;
};

// Channel-unit-normalised features, squared L2 over channels, mean over
// positions, then mean over layers. Null backend raises ConfigError.
double perceptual_distance(const FeatureBackend* backend, const Image& a, const Image& b);

using FeatureSet = std::vector<std::vector<double>>;
double frechet_distance(const FeatureSet& a, const FeatureSet& b);

struct PairScore {
    double lpips = 0.0;
    double mse = 0.0;
};

// Message-region crops of ciphertext vs composite. Higher hides better.
PairScore encryption_score(const FeatureBackend* backend, const Image& encrypted, const CompositeImage& composite);

// The pieces of a trained model an evaluation needs. Tests substitute mocks.
struct Pipeline {
    std::function<Image(const Image&)> key;
    std::function<Image(const Image&, const Image&)> encrypt;  // (composite, public key)
    std::function<Image(const Image&, const Image&)> decrypt;  // (ciphertext, private key)
    std::shared_ptr<const FeatureBackend> backend;
};

Pipeline make_pipeline(const Networks& nets);

struct Trial {
    std::string id;
    Image cover;
    Image disguise;
    Image message;
    Placement placement;
    std::vector<Image> wrong_covers;  // sources of incorrect private keys

    CompositeImage composite() const;
};

struct TrialSource {
    const DomainDataset* x = nullptr;
    const DomainDataset* y = nullptr;
    const DomainDataset* messages = nullptr;
};

// Seeded trials over held-out data. Wrong covers exclude the true cover.
std::vector<Trial> make_trials(const TrialSource& data, int count, int wrong_keys, std::uint64_t seed);

// Mean over trials x wrong keys of the distance between the true message and
// the wrong-key decode crop. Higher is more secure.
PairScore security_score(const Pipeline& pipe, const std::vector<Trial>& trials, int n_wrong_keys);

struct ImageRecord {
    std::string id;
    std::string region;  // "message_region" or "whole"
    double mse = 0.0;
    double rmse = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
    double lpips = 0.0;
};

struct MetricsReport {
    std::vector<ImageRecord> records;
    // region -> metric -> mean over that region's records
    std::map<std::string, std::map<std::string, double>> aggregate;
    PairScore encryption;
    PairScore security;
    double frechet = 0.0;  // ciphertexts vs disguise images
    std::size_t trials = 0;
    std::size_t wrong_keys = 0;
    nlohmann::json config;
};

struct EvalOptions {
    int wrong_keys = 5;
    nlohmann::json config;  // copied into the report
};

MetricsReport evaluate(const Pipeline& pipe, const std::vector<Trial>& trials, const EvalOptions& options = {});

std::map<std::string, std::map<std::string, double>> aggregate_records(const std::vector<ImageRecord>& records);

nlohmann::json to_json(const MetricsReport& report);
void write_csv(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace egan::metrics
