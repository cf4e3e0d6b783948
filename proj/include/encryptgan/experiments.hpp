#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "encryptgan/config.hpp"
#include "encryptgan/metrics.hpp"
#include "encryptgan/networks.hpp"
#include "encryptgan/training.hpp"

// Scripted studies over a trained model. Each run writes
//   <out>/tables/*.csv  <out>/curves/*.csv  <out>/figures/*.png  <out>/spec.snapshot
namespace egan::experiments {

enum class ExperimentKind { Ablation, KeySensitivity, Robustness, PositionSweep, Activations, WrongKey };
const char* kind_name(ExperimentKind kind);

struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::KeySensitivity;
    nlohmann::json grid;
    std::string checkpoint_ref;
    std::filesystem::path out_dir = "experiment";
    std::uint64_t seed = 0;
};

// Frozen model plus provenance.
struct Model {
    Networks nets;
    TrainConfig config;
    std::string checkpoint_hash;
};

Model model_from(const Checkpoint& ckpt);
Model load_model(const std::filesystem::path& checkpoint);

void write_snapshot(const ExperimentSpec& spec, const Model& model, const std::filesystem::path& out_dir);

struct SpearmanResult {
    double rho = 0.0;
    double p_value = 1.0;  // two-sided, t approximation
    std::size_t n = 0;
};
// Average ranks for ties. Fewer than three points or a constant input yields rho 0, p 1.
SpearmanResult spearman(const std::vector<double>& x, const std::vector<double>& y);

// ---- ablation ---------------------------------------------------------------

std::vector<FeatureTaps> default_ablation_grid();  // L1L2L3, L3L4L5, L4L5L6, L6, L5L6, L3L5L6

struct AblationRow {
    FeatureTaps taps;
    bool ok = false;
    std::string error;
    std::map<std::string, double> message_region;  // aggregate metrics
    std::string checkpoint_hash;
};

struct AblationOptions {
    int trials = 50;
    int wrong_keys = 0;
    std::filesystem::path out_dir = "ablation";
    bool write_checkpoints = true;
};

// Trains one model per tap set (same seed and steps), evaluates each on the
// test split and writes tables/ablation.csv.
std::vector<AblationRow> run_ablation(const std::vector<FeatureTaps>& layer_sets, const TrainConfig& base,
                                      const AblationOptions& options);

// ---- noise sweeps -------------------------------------------------------------

enum class SensitivityMode { NoiseOnSource, NoiseOnKey };
const char* mode_name(SensitivityMode mode);

struct Curve {
    std::vector<double> sigmas;
    std::vector<std::vector<double>> psnr;  // [sigma][repeat], mean over trials
    std::vector<double> mean;               // per sigma
    SpearmanResult trend;                   // over every (sigma, repeat) point
};

struct SweepOptions {
    int repeats = 10;
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> out_dir;
};

inline const std::vector<double> kDefaultSigmas{0.0, 0.005, 0.01, 0.02, 0.05};

// Decrypts with a perturbed private key; message-region PSNR per sigma.
Curve run_key_sensitivity(const Model& model, const std::vector<metrics::Trial>& trials,
                          const std::vector<double>& sigmas, SensitivityMode mode, const SweepOptions& options);
// Noise on the ciphertext before decryption.
Curve run_robustness(const Model& model, const std::vector<metrics::Trial>& trials, const std::vector<double>& sigmas,
                     const SweepOptions& options);

// ---- placements -----------------------------------------------------------------

std::vector<Placement> grid_placements(Size2 image, Size2 message, int rows, int cols);

struct PositionRow {
    Placement placement;
    double psnr = 0.0;  // mean over trials
};
struct PositionSweep {
    std::vector<PositionRow> rows;
    double mean = 0.0;
    double stddev = 0.0;  // population
    double min = 0.0;
};

PositionSweep run_position_sweep(const Model& model, const std::vector<metrics::Trial>& trials,
                                 const std::vector<Placement>& grid,
                                 const std::optional<std::filesystem::path>& out_dir = {});

// ---- figures ----------------------------------------------------------------------

struct ActivationPanel {
    std::string name;      // "F.enc1", ..., "G.R6", ...
    Image heatmap;         // channel-mean |activation|, min-max normalised
    double message_energy = 0.0;  // mean inside the message region / mean overall
};
struct ActivationReport {
    std::vector<ActivationPanel> panels;
    Raster montage;
    // Mean message energy of G's last half of residual blocks over its first half.
    double late_to_early_ratio = 0.0;
};

ActivationReport visualize_activations(const Model& model, const metrics::Trial& sample,
                                       const std::optional<std::filesystem::path>& out_dir = {});

struct WrongKeyGallery {
    double true_key_psnr = 0.0;               // message crop
    std::vector<double> wrong_key_psnr;       // message crop, per wrong key
    double true_key_cover_psnr = 0.0;         // whole decode vs cover
    std::vector<double> wrong_key_cover_psnr;
    Raster montage;
};

WrongKeyGallery run_wrong_key_gallery(const Model& model, const metrics::Trial& sample, int n_keys,
                                      const std::optional<std::filesystem::path>& out_dir = {});

// Panels in a row-major grid with a 2-pixel border; each panel resized to `cell`.
Raster montage(const std::vector<Image>& panels, int columns, int cell);

}  // namespace egan::experiments
