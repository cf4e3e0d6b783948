#include "encryptgan/encryptgan.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <new>
#include <string>

#include "json.hpp"

#include "encryptgan/errors.hpp"
#include "encryptgan/experiments.hpp"
#include "encryptgan/keys.hpp"
#include "encryptgan/metrics.hpp"
#include "encryptgan/synth.hpp"
#include "encryptgan/training.hpp"

struct egan_model {
    egan::Checkpoint ckpt;
    std::string path;
};

struct egan_image {
    egan::Image img;
};

struct egan_keypair {
    egan::KeyPair pair;
};

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
namespace ex = egan::experiments;

thread_local std::string g_last_error;

egan_status fail(egan_status s, const std::string& msg) {
    g_last_error = msg;
    return s;
}

template <class F>
egan_status guarded(F&& f) {
    try {
        g_last_error.clear();
        return f();
    } catch (const egan::Error& e) {
        return fail(static_cast<egan_status>(static_cast<int>(e.kind())), e.what());
    } catch (const json::exception& e) {
        return fail(EGAN_ERR_CONFIG, std::string("json: ") + e.what());
    } catch (const fs::filesystem_error& e) {
        return fail(EGAN_ERR_IO, e.what());
    } catch (const std::bad_alloc&) {
        return fail(EGAN_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(EGAN_ERR_INTERNAL, e.what());
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void require(const void* p, const char* what) {
    if (!p) throw egan::ArgumentError(std::string(what) + " is null");
}

json parse_options(const char* text) {
    if (!text || !*text) return json::object();
    json j = json::parse(text);
    if (!j.is_object()) throw egan::ConfigError("options must be a JSON object");
    return j;
}

egan_image* wrap(egan::Image img) { return new egan_image{std::move(img)}; }

egan::Placement to_placement(const egan_placement& p) { return {p.top, p.left, p.height, p.width}; }

egan::DataPaths test_paths(const egan_model* model, const json& opts) {
    egan::DataPaths paths = model->ckpt.config.test_data;
    if (opts.contains("test_data")) {
        const json& t = opts.at("test_data");
        if (t.is_string()) {
            const fs::path root = t.get<std::string>();
            paths = {root / "x", root / "y", root / "messages"};
        } else {
            paths = {t.at("x").get<std::string>(), t.at("y").get<std::string>(), t.at("messages").get<std::string>()};
        }
    }
    return paths;
}

struct TrialSet {
    egan::TrainingData data;
    std::vector<egan::metrics::Trial> trials;
};

TrialSet load_trials(const egan_model* model, const json& opts, int default_count, int wrong_keys) {
    const auto paths = test_paths(model, opts);
    TrialSet t{egan::TrainingData::open(paths, model->ckpt.config), {}};
    t.trials = egan::metrics::make_trials({&t.data.x, &t.data.y, &t.data.messages},
                                          opts.value("trials", default_count), wrong_keys,
                                          opts.value("seed", std::uint64_t{0}));
    return t;
}

json curve_json(const ex::Curve& c) {
    return {{"sigmas", c.sigmas},
            {"mean_psnr", c.mean},
            {"psnr", c.psnr},
            {"spearman_rho", c.trend.rho},
            {"p_value", c.trend.p_value},
            {"points", c.trend.n}};
}

}  // namespace

extern "C" {

const char* egan_version(void) { return "1.0.0"; }
const char* egan_last_error(void) { return g_last_error.c_str(); }

const char* egan_status_name(egan_status status) {
    switch (status) {
        case EGAN_OK: return "ok";
        case EGAN_ERR_NOT_FOUND: return "not_found";
        case EGAN_ERR_FORMAT: return "format";
        case EGAN_ERR_SHAPE: return "shape";
        case EGAN_ERR_BOUNDS: return "bounds";
        case EGAN_ERR_ARGUMENT: return "argument";
        case EGAN_ERR_CONFIG: return "config";
        case EGAN_ERR_NUMERICAL: return "numerical";
        case EGAN_ERR_VERSION: return "version";
        case EGAN_ERR_IO: return "io";
        case EGAN_ERR_SIGNATURE_MISMATCH: return "signature_mismatch";
        case EGAN_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

void egan_string_free(char* s) { std::free(s); }

egan_status egan_config_resolve(const char* path, const char* const* overrides, size_t n_overrides, char** out_json) {
    return guarded([&] {
        require(out_json, "out_json");
        json j = egan::to_json(path && *path ? egan::load_train_config(path) : egan::TrainConfig{});
        std::vector<std::string> items;
        for (size_t i = 0; i < n_overrides; ++i) {
            require(overrides[i], "override");
            items.emplace_back(overrides[i]);
        }
        egan::apply_overrides(j, items);
        *out_json = dup_string(egan::to_json(egan::train_config_from_json(j)).dump(2));
        return EGAN_OK;
    });
}

egan_status egan_synth_dataset(const char* root, int image_size, int message_size, int train_count, int test_count,
                               uint64_t seed) {
    return guarded([&] {
        require(root, "root");
        if (train_count < 0 || test_count < 0) throw egan::ArgumentError("counts must be >= 0");
        egan::synth::write_dataset(root, image_size, message_size, {train_count, test_count}, seed);
        return EGAN_OK;
    });
}

egan_status egan_train(const char* config_json, const char* resume_path, egan_step_callback callback, void* user,
                       char** out_summary_json) {
    return guarded([&] {
        require(config_json, "config_json");
        const egan::TrainConfig cfg = egan::train_config_from_json(json::parse(config_json));
        egan::TrainOptions opts;
        if (resume_path && *resume_path) opts.resume = egan::load_checkpoint(resume_path);
        json last;
        opts.on_step = [&](const egan::losses::LossReport& r) {
            last = egan::to_json(r);
            if (callback) callback(last.dump().c_str(), user);
        };
        const egan::Checkpoint ckpt = egan::train(cfg, opts);
        if (out_summary_json) {
            json s{{"step", ckpt.state.step},
                   {"checkpoint", (cfg.out_dir / "final.ckpt").string()},
                   {"loss_log", (cfg.out_dir / "loss_log.jsonl").string()},
                   {"parameter_digest", egan::parameter_digest(ckpt.state.nets)},
                   {"last", last}};
            *out_summary_json = dup_string(s.dump());
        }
        return EGAN_OK;
    });
}

egan_status egan_model_load(const char* checkpoint_path, egan_model** out) {
    return guarded([&] {
        require(checkpoint_path, "checkpoint_path");
        require(out, "out");
        *out = new egan_model{egan::load_checkpoint(checkpoint_path), checkpoint_path};
        return EGAN_OK;
    });
}

void egan_model_free(egan_model* model) { delete model; }

egan_status egan_model_info(const egan_model* model, char** out_json) {
    return guarded([&] {
        require(model, "model");
        require(out_json, "out_json");
        json j{{"path", model->path},
               {"step", model->ckpt.state.step},
               {"format_version", egan::Checkpoint::kFormatVersion},
               {"parameter_digest", egan::parameter_digest(model->ckpt.state.nets)},
               {"keygen_digest", egan::keygen_digest(model->ckpt.state.nets)},
               {"parameters", model->ckpt.state.nets.parameter_count()},
               {"config", egan::to_json(model->ckpt.config)}};
        *out_json = dup_string(j.dump(2));
        return EGAN_OK;
    });
}

egan_status egan_model_image_size(const egan_model* model, int* height, int* width) {
    return guarded([&] {
        require(model, "model");
        if (height) *height = model->ckpt.config.arch.image_size.height;
        if (width) *width = model->ckpt.config.arch.image_size.width;
        return EGAN_OK;
    });
}

egan_status egan_image_load(const char* path, int height, int width, egan_image** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        const egan::Raster r = egan::read_png(path);
        const egan::Size2 size = (height > 0 && width > 0) ? egan::Size2{height, width} : egan::Size2{r.height, r.width};
        *out = wrap(egan::from_raster(r, size));
        return EGAN_OK;
    });
}

egan_status egan_image_save(const egan_image* image, const char* path) {
    return guarded([&] {
        require(image, "image");
        require(path, "path");
        const fs::path p = path;
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        egan::save_image(image->img, p);
        return EGAN_OK;
    });
}

void egan_image_free(egan_image* image) { delete image; }

egan_status egan_image_size(const egan_image* image, int* height, int* width) {
    return guarded([&] {
        require(image, "image");
        if (height) *height = image->img.height();
        if (width) *width = image->img.width();
        return EGAN_OK;
    });
}

egan_status egan_image_crop(const egan_image* image, const egan_placement* region, egan_image** out) {
    return guarded([&] {
        require(image, "image");
        require(region, "region");
        require(out, "out");
        *out = wrap(egan::crop_region(image->img, to_placement(*region)));
        return EGAN_OK;
    });
}

egan_status egan_image_psnr(const egan_image* a, const egan_image* b, double* out_db) {
    return guarded([&] {
        require(a, "a");
        require(b, "b");
        require(out_db, "out_db");
        *out_db = egan::metrics::psnr(a->img, b->img);
        return EGAN_OK;
    });
}

egan_status egan_image_ssim(const egan_image* a, const egan_image* b, double* out) {
    return guarded([&] {
        require(a, "a");
        require(b, "b");
        require(out, "out");
        *out = egan::metrics::ssim(a->img, b->img);
        return EGAN_OK;
    });
}

egan_status egan_paste_message(const egan_image* cover, const egan_image* message, const egan_placement* placement,
                               egan_image** out) {
    return guarded([&] {
        require(cover, "cover");
        require(message, "message");
        require(placement, "placement");
        require(out, "out");
        *out = wrap(egan::paste_message(cover->img, message->img, to_placement(*placement)).image);
        return EGAN_OK;
    });
}

egan_status egan_random_placement(int cover_height, int cover_width, int message_height, int message_width,
                                  uint64_t seed, egan_placement* out) {
    return guarded([&] {
        require(out, "out");
        egan::Rng rng(seed);
        const egan::Placement p =
            egan::sample_placement({cover_height, cover_width}, {message_height, message_width}, rng);
        *out = {p.top, p.left, p.height, p.width};
        return EGAN_OK;
    });
}

egan_status egan_keypair_generate(const egan_model* model, const egan_image* cover, const egan_image* disguise,
                                  const char* cover_ref, const char* disguise_ref, egan_keypair** out) {
    return guarded([&] {
        require(model, "model");
        require(cover, "cover");
        require(disguise, "disguise");
        require(out, "out");
        const auto& nets = model->ckpt.state.nets;
        *out = new egan_keypair{egan::generate_key_pair(nets.K, cover->img, disguise->img, cover_ref ? cover_ref : "",
                                                        disguise_ref ? disguise_ref : "", egan::keygen_digest(nets))};
        return EGAN_OK;
    });
}

void egan_keypair_free(egan_keypair* pair) { delete pair; }

egan_status egan_keypair_public(const egan_keypair* pair, egan_image** out) {
    return guarded([&] {
        require(pair, "pair");
        require(out, "out");
        *out = wrap(pair->pair.public_key);
        return EGAN_OK;
    });
}

egan_status egan_keypair_private(const egan_keypair* pair, egan_image** out) {
    return guarded([&] {
        require(pair, "pair");
        require(out, "out");
        *out = wrap(pair->pair.private_key);
        return EGAN_OK;
    });
}

egan_status egan_keypair_save(const egan_keypair* pair, const char* dir) {
    return guarded([&] {
        require(pair, "pair");
        require(dir, "dir");
        egan::save_key_pair(pair->pair, dir);
        return EGAN_OK;
    });
}

egan_status egan_keypair_load(const char* dir, egan_keypair** out) {
    return guarded([&] {
        require(dir, "dir");
        require(out, "out");
        *out = new egan_keypair{egan::load_key_pair(dir)};
        return EGAN_OK;
    });
}

egan_status egan_key_load(const char* path, egan_image** out, int* role_out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        egan::KeyFile k = egan::load_key(path);
        if (role_out) *role_out = k.role == egan::KeyRole::Public ? 0 : 1;
        *out = wrap(std::move(k.key));
        return EGAN_OK;
    });
}

egan_status egan_encrypt(const egan_model* model, const egan_image* composite, const egan_image* public_key,
                         egan_image** out) {
    return guarded([&] {
        require(model, "model");
        require(composite, "composite");
        require(public_key, "public_key");
        require(out, "out");
        *out = wrap(egan::encrypt(model->ckpt.state.nets.F, composite->img, public_key->img));
        return EGAN_OK;
    });
}

egan_status egan_decrypt(const egan_model* model, const egan_image* encrypted, const egan_image* private_key,
                         egan_image** out) {
    return guarded([&] {
        require(model, "model");
        require(encrypted, "encrypted");
        require(private_key, "private_key");
        require(out, "out");
        *out = wrap(egan::decrypt(model->ckpt.state.nets.G, encrypted->img, private_key->img));
        return EGAN_OK;
    });
}

egan_status egan_sign(const egan_model* model, const egan_image* secret, const egan_image* private_key,
                      egan_image** out) {
    return guarded([&] {
        require(model, "model");
        require(secret, "secret");
        require(private_key, "private_key");
        require(out, "out");
        *out = wrap(egan::sign(model->ckpt.state.nets.G, secret->img, private_key->img).signature_image);
        return EGAN_OK;
    });
}

egan_status egan_verify(const egan_model* model, const egan_image* signature, const egan_image* public_key,
                        const egan_image* expected_secret, double threshold_db, int* verified, double* psnr_out) {
    return guarded([&] {
        require(model, "model");
        require(signature, "signature");
        require(public_key, "public_key");
        require(expected_secret, "expected_secret");
        require(verified, "verified");
        const double p = egan::signature_psnr(model->ckpt.state.nets.F, {signature->img, {}}, public_key->img,
                                              expected_secret->img);
        *verified = p >= threshold_db ? 1 : 0;
        if (psnr_out) *psnr_out = p;
        return EGAN_OK;
    });
}

egan_status egan_evaluate(const egan_model* model, const char* options_json, const char* out_dir, char** out_json) {
    return guarded([&] {
        require(model, "model");
        const json opts = parse_options(options_json);
        const int wrong = opts.value("wrong_keys", 5);
        const TrialSet set = load_trials(model, opts, 50, wrong);
        egan::metrics::EvalOptions eopt;
        eopt.wrong_keys = wrong;
        eopt.config = egan::to_json(model->ckpt.config);
        eopt.config["checkpoint_hash"] = egan::parameter_digest(model->ckpt.state.nets);
        const auto report =
            egan::metrics::evaluate(egan::metrics::make_pipeline(model->ckpt.state.nets), set.trials, eopt);
        const json j = egan::metrics::to_json(report);
        if (out_dir && *out_dir) {
            const fs::path dir = out_dir;
            fs::create_directories(dir);
            std::ofstream(dir / "report.json") << j.dump(2) << '\n';
            egan::metrics::write_csv(report, dir / "records.csv");
        }
        if (out_json) *out_json = dup_string(j.dump());
        return EGAN_OK;
    });
}

egan_status egan_experiment(const egan_model* model, const char* kind, const char* options_json, const char* out_dir,
                            char** out_json) {
    return guarded([&] {
        require(model, "model");
        require(kind, "kind");
        const json opts = parse_options(options_json);
        const std::string k = kind;
        const std::optional<fs::path> out =
            out_dir && *out_dir ? std::optional<fs::path>(fs::path(out_dir)) : std::nullopt;
        const ex::Model m{model->ckpt.state.nets, model->ckpt.config, egan::parameter_digest(model->ckpt.state.nets)};
        ex::ExperimentSpec spec;
        spec.grid = opts;
        spec.checkpoint_ref = model->path;
        spec.seed = opts.value("seed", std::uint64_t{0});
        json result;

        if (k == "key_sensitivity" || k == "robustness") {
            spec.kind = k == "robustness" ? ex::ExperimentKind::Robustness : ex::ExperimentKind::KeySensitivity;
            const TrialSet set = load_trials(model, opts, 20, 0);
            ex::SweepOptions sopt;
            sopt.repeats = opts.value("repeats", 10);
            sopt.seed = spec.seed;
            sopt.out_dir = out;
            const auto sigmas = opts.value("sigmas", ex::kDefaultSigmas);
            if (spec.kind == ex::ExperimentKind::Robustness) {
                result["robustness"] = curve_json(ex::run_robustness(m, set.trials, sigmas, sopt));
            } else {
                const std::string mode = opts.value("mode", std::string("both"));
                if (mode != "both" && mode != "noise_on_source" && mode != "noise_on_key")
                    throw egan::ArgumentError("mode must be noise_on_source, noise_on_key or both");
                for (auto sm : {ex::SensitivityMode::NoiseOnSource, ex::SensitivityMode::NoiseOnKey}) {
                    if (mode != "both" && mode != ex::mode_name(sm)) continue;
                    result[ex::mode_name(sm)] = curve_json(ex::run_key_sensitivity(m, set.trials, sigmas, sm, sopt));
                }
            }
        } else if (k == "position_sweep") {
            spec.kind = ex::ExperimentKind::PositionSweep;
            const TrialSet set = load_trials(model, opts, 20, 0);
            const auto grid = ex::grid_placements(m.config.arch.image_size, m.config.message_size,
                                                  opts.value("rows", 3), opts.value("cols", 3));
            const auto sweep = ex::run_position_sweep(m, set.trials, grid, out);
            json rows = json::array();
            for (const auto& r : sweep.rows)
                rows.push_back({{"top", r.placement.top}, {"left", r.placement.left}, {"psnr", r.psnr}});
            result = {{"rows", rows}, {"mean", sweep.mean}, {"std", sweep.stddev}, {"min", sweep.min}};
        } else if (k == "activations") {
            spec.kind = ex::ExperimentKind::Activations;
            const TrialSet set = load_trials(model, opts, opts.value("sample", 0) + 1, 0);
            const auto rep = ex::visualize_activations(m, set.trials.back(), out);
            json panels = json::array();
            for (const auto& p : rep.panels) panels.push_back({{"panel", p.name}, {"message_energy", p.message_energy}});
            result = {{"panels", panels}, {"late_to_early_ratio", rep.late_to_early_ratio}};
        } else if (k == "wrong_key") {
            spec.kind = ex::ExperimentKind::WrongKey;
            const int n_keys = opts.value("n_keys", 5);
            if (n_keys < 1) throw egan::ArgumentError("n_keys must be >= 1");
            const TrialSet set = load_trials(model, opts, opts.value("sample", 0) + 1, n_keys);
            const auto g = ex::run_wrong_key_gallery(m, set.trials.back(), n_keys, out);
            result = {{"true_key_psnr", g.true_key_psnr},
                      {"wrong_key_psnr", g.wrong_key_psnr},
                      {"true_key_cover_psnr", g.true_key_cover_psnr},
                      {"wrong_key_cover_psnr", g.wrong_key_cover_psnr}};
        } else {
            throw egan::ArgumentError("unknown experiment kind: " + k);
        }
        if (out) ex::write_snapshot(spec, m, *out);
        result["experiment"] = ex::kind_name(spec.kind);
        result["checkpoint_hash"] = m.checkpoint_hash;
        if (out_json) *out_json = dup_string(result.dump());
        return EGAN_OK;
    });
}

egan_status egan_ablate(const char* config_json, const char* options_json, const char* out_dir, char** out_json) {
    return guarded([&] {
        require(config_json, "config_json");
        const egan::TrainConfig base = egan::train_config_from_json(json::parse(config_json));
        const json opts = parse_options(options_json);
        std::vector<egan::FeatureTaps> grid;
        if (opts.contains("layer_sets")) {
            for (const auto& set : opts.at("layer_sets")) grid.emplace_back(set.get<std::vector<int>>());
        } else {
            grid = ex::default_ablation_grid();
        }
        ex::AblationOptions aopt;
        aopt.trials = opts.value("trials", 50);
        aopt.out_dir = out_dir && *out_dir ? fs::path(out_dir) : base.out_dir / "ablation";
        const auto rows = ex::run_ablation(grid, base, aopt);

        ex::ExperimentSpec spec;
        spec.kind = ex::ExperimentKind::Ablation;
        spec.grid = opts;
        spec.seed = base.seed;
        ex::write_snapshot(spec, {egan::Networks{}, base, ""}, aopt.out_dir);

        json out = json::array();
        for (const auto& r : rows)
            out.push_back({{"layers", r.taps.label()},
                           {"ok", r.ok},
                           {"error", r.error},
                           {"message_region", r.message_region},
                           {"checkpoint_hash", r.checkpoint_hash}});
        if (out_json) *out_json = dup_string(json{{"rows", out}}.dump());
        return EGAN_OK;
    });
}

}  // extern "C"
