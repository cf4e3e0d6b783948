#include "encryptgan/experiments.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "encryptgan/errors.hpp"
#include "encryptgan/keys.hpp"

namespace egan::experiments {

namespace fs = std::filesystem;
using nlohmann::json;
using metrics::Trial;

const char* kind_name(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::Ablation: return "ablation";
        case ExperimentKind::KeySensitivity: return "key_sensitivity";
        case ExperimentKind::Robustness: return "robustness";
        case ExperimentKind::PositionSweep: return "position_sweep";
        case ExperimentKind::Activations: return "activations";
        case ExperimentKind::WrongKey: return "wrong_key";
    }
    return "unknown";
}

const char* mode_name(SensitivityMode mode) {
    return mode == SensitivityMode::NoiseOnSource ? "noise_on_source" : "noise_on_key";
}

Model model_from(const Checkpoint& ckpt) {
    return {ckpt.state.nets.clone(), ckpt.config, parameter_digest(ckpt.state.nets)};
}

Model load_model(const fs::path& checkpoint) { return model_from(load_checkpoint(checkpoint)); }

void write_snapshot(const ExperimentSpec& spec, const Model& model, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    json j{{"experiment", kind_name(spec.kind)},
           {"grid", spec.grid},
           {"checkpoint", spec.checkpoint_ref},
           {"checkpoint_hash", model.checkpoint_hash},
           {"seed", spec.seed},
           {"config", to_json(model.config)}};
    std::ofstream out(out_dir / "spec.snapshot");
    if (!out) throw IoError("cannot write " + (out_dir / "spec.snapshot").string());
    out << j.dump(2) << '\n';
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = (double(i) + double(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

std::ofstream open_csv(const fs::path& path) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << std::setprecision(10);
    return out;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return step_seed(a, static_cast<long>(b)); }

double message_psnr(const Image& decoded, const Trial& t) {
    return metrics::psnr(crop_region(decoded, t.placement), t.message);
}

Image heat_image(const Tensor& plane, int h, int w) {
    float lo = plane.min(), hi = plane.max();
    Tensor t(Shape{1, 3, h, w});
    const float span = hi - lo;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const float v = span > 0.0f ? (plane.at(0, 0, y, x) - lo) / span : 0.0f;
                t.at(0, c, y, x) = 2.0f * v - 1.0f;
            }
    return Image(std::move(t));
}

}  // namespace

SpearmanResult spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ShapeError("spearman: sample sizes differ");
    SpearmanResult r;
    r.n = x.size();
    if (r.n < 3) return r;
    const auto rx = ranks(x), ry = ranks(y);
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / double(r.n);
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / double(r.n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < r.n; ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return r;
    r.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    if (std::abs(r.rho) >= 1.0) {
        r.p_value = 0.0;
        return r;
    }
    const double df = double(r.n) - 2.0;
    const double t = r.rho * std::sqrt(df / (1.0 - r.rho * r.rho));
    const boost::math::students_t dist(df);
    r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    return r;
}

// ---------------------------------------------------------------------------

std::vector<FeatureTaps> default_ablation_grid() {
    return {FeatureTaps({1, 2, 3}), FeatureTaps({3, 4, 5}), FeatureTaps({4, 5, 6}),
            FeatureTaps({6}),       FeatureTaps({5, 6}),    FeatureTaps({3, 5, 6})};
}

std::vector<AblationRow> run_ablation(const std::vector<FeatureTaps>& layer_sets, const TrainConfig& base,
                                      const AblationOptions& options) {
    if (layer_sets.empty()) throw ArgumentError("ablation grid is empty");
    std::vector<AblationRow> rows;
    for (const FeatureTaps& taps : layer_sets) {
        AblationRow row;
        row.taps = taps;
        try {
            TrainConfig cfg = base;
            cfg.arch.key_tap_layers = taps;
            cfg.out_dir = options.out_dir / "runs" / taps.label();
            TrainOptions topt;
            topt.write_files = options.write_checkpoints;
            const Checkpoint ckpt = train(cfg, topt);
            const TrainingData test = TrainingData::open(cfg.test_data, cfg);
            const auto trials =
                metrics::make_trials({&test.x, &test.y, &test.messages}, options.trials, options.wrong_keys, cfg.seed);
            metrics::EvalOptions eopt;
            eopt.wrong_keys = options.wrong_keys;
            const auto report = metrics::evaluate(metrics::make_pipeline(ckpt.state.nets), trials, eopt);
            row.message_region = report.aggregate.at("message_region");
            row.checkpoint_hash = parameter_digest(ckpt.state.nets);
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }

    auto out = open_csv(options.out_dir / "tables" / "ablation.csv");
    out << "layers,default,status,mse,rmse,psnr,ssim,lpips,checkpoint\n";
    for (const auto& r : rows) {
        out << r.taps.label() << ',' << (r.taps == FeatureTaps() ? "yes" : "no") << ','
            << (r.ok ? "ok" : "failed");
        for (const char* m : {"mse", "rmse", "psnr", "ssim", "lpips"}) {
            out << ',';
            if (r.ok) out << r.message_region.at(m);
        }
        out << ',' << r.checkpoint_hash << '\n';
    }
    return rows;
}

// ---------------------------------------------------------------------------

namespace {

Curve finish_curve(Curve curve, const std::string& name, const Model& model,
                   const std::optional<fs::path>& out_dir) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < curve.sigmas.size(); ++i) {
        const auto& reps = curve.psnr[i];
        curve.mean.push_back(std::accumulate(reps.begin(), reps.end(), 0.0) / double(reps.size()));
        for (double v : reps) {
            xs.push_back(curve.sigmas[i]);
            ys.push_back(v);
        }
    }
    curve.trend = spearman(xs, ys);
    if (out_dir) {
        auto c = open_csv(*out_dir / "curves" / (name + ".csv"));
        c << "sigma,mean_psnr,min_psnr,max_psnr,repeats\n";
        for (std::size_t i = 0; i < curve.sigmas.size(); ++i) {
            const auto [lo, hi] = std::minmax_element(curve.psnr[i].begin(), curve.psnr[i].end());
            c << curve.sigmas[i] << ',' << curve.mean[i] << ',' << *lo << ',' << *hi << ',' << curve.psnr[i].size()
              << '\n';
        }
        auto t = open_csv(*out_dir / "tables" / (name + "_trend.csv"));
        t << "experiment,spearman_rho,p_value,points,checkpoint\n";
        t << name << ',' << curve.trend.rho << ',' << curve.trend.p_value << ',' << curve.trend.n << ','
          << model.checkpoint_hash << '\n';
    }
    return curve;
}

void check_sweep(const std::vector<Trial>& trials, const std::vector<double>& sigmas, const SweepOptions& options) {
    if (trials.empty()) throw ConfigError("sweep needs at least one trial");
    if (sigmas.empty()) throw ArgumentError("sigma grid is empty");
    for (double s : sigmas)
        if (!(s >= 0.0)) throw ArgumentError("sigma values must be >= 0");
    if (options.repeats < 1) throw ArgumentError("repeats must be >= 1");
}

}  // namespace

Curve run_key_sensitivity(const Model& model, const std::vector<Trial>& trials, const std::vector<double>& sigmas,
                          SensitivityMode mode, const SweepOptions& options) {
    check_sweep(trials, sigmas, options);
    const Networks& n = model.nets;
    struct Prepared {
        Image priv;
        Image enc;
    };
    std::vector<Prepared> prep;
    for (const Trial& t : trials) {
        const KeyPair keys = generate_key_pair(n.K, t.cover, t.disguise);
        prep.push_back({keys.private_key, encrypt(n.F, t.composite(), keys.public_key)});
    }
    Curve curve;
    curve.sigmas = sigmas;
    std::vector<Image> diff_maps;
    for (double sigma : sigmas) {
        std::vector<double> per_repeat;
        for (int r = 0; r < options.repeats; ++r) {
            double sum = 0.0;
            for (std::size_t j = 0; j < trials.size(); ++j) {
                // Common random numbers: the same noise draw is rescaled across sigmas.
                const std::uint64_t seed = mix(options.seed, std::uint64_t(r) * trials.size() + j);
                Image key;
                if (mode == SensitivityMode::NoiseOnKey) {
                    key = add_gaussian_noise(prep[j].priv, sigma, seed);
                } else {
                    key = keygen_forward(n.K, add_gaussian_noise(trials[j].cover, sigma, seed)).key;
                }
                if (r == 0 && j == 0 && options.out_dir) {
                    Tensor d = key.pixels();
                    for (std::int64_t i = 0; i < d.numel(); ++i) d[i] = std::abs(d[i] - prep[j].priv.pixels()[i]);
                    diff_maps.push_back(image_from_unclamped(d));
                }
                sum += message_psnr(decrypt(n.G, prep[j].enc, key), trials[j]);
            }
            per_repeat.push_back(sum / double(trials.size()));
        }
        curve.psnr.push_back(std::move(per_repeat));
    }
    const std::string name = std::string("key_sensitivity_") + mode_name(mode);
    if (options.out_dir && !diff_maps.empty()) {
        // Shared scale so maps are comparable across sigmas.
        float peak = 0.0f;
        for (const auto& d : diff_maps) peak = std::max(peak, d.pixels().max());
        std::vector<Image> panels;
        for (const auto& d : diff_maps) {
            Tensor t = d.pixels();
            for (float& v : t.values()) v = peak > 0.0f ? 2.0f * v / peak - 1.0f : -1.0f;
            panels.push_back(Image(std::move(t)));
        }
        fs::create_directories(*options.out_dir / "figures");
        write_png(montage(panels, static_cast<int>(panels.size()), 64),
                  *options.out_dir / "figures" / (name + "_difference_maps.png"));
    }
    return finish_curve(std::move(curve), name, model, options.out_dir);
}

Curve run_robustness(const Model& model, const std::vector<Trial>& trials, const std::vector<double>& sigmas,
                     const SweepOptions& options) {
    check_sweep(trials, sigmas, options);
    const Networks& n = model.nets;
    std::vector<std::pair<Image, Image>> prep;  // (private key, ciphertext)
    for (const Trial& t : trials) {
        const KeyPair keys = generate_key_pair(n.K, t.cover, t.disguise);
        prep.emplace_back(keys.private_key, encrypt(n.F, t.composite(), keys.public_key));
    }
    Curve curve;
    curve.sigmas = sigmas;
    for (double sigma : sigmas) {
        std::vector<double> per_repeat;
        for (int r = 0; r < options.repeats; ++r) {
            double sum = 0.0;
            for (std::size_t j = 0; j < trials.size(); ++j) {
                const std::uint64_t seed = mix(options.seed, std::uint64_t(r) * trials.size() + j);
                const Image noisy = add_gaussian_noise(prep[j].second, sigma, seed);
                sum += message_psnr(decrypt(n.G, noisy, prep[j].first), trials[j]);
            }
            per_repeat.push_back(sum / double(trials.size()));
        }
        curve.psnr.push_back(std::move(per_repeat));
    }
    return finish_curve(std::move(curve), "robustness", model, options.out_dir);
}

// ---------------------------------------------------------------------------

std::vector<Placement> grid_placements(Size2 image, Size2 message, int rows, int cols) {
    if (rows < 1 || cols < 1) throw ArgumentError("placement grid needs at least one row and column");
    if (message.height > image.height || message.width > image.width)
        throw BoundsError("message larger than image");
    std::vector<Placement> out;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const int top = rows == 1 ? (image.height - message.height) / 2
                                      : r * (image.height - message.height) / (rows - 1);
            const int left = cols == 1 ? (image.width - message.width) / 2
                                       : c * (image.width - message.width) / (cols - 1);
            out.push_back({top, left, message.height, message.width});
        }
    return out;
}

PositionSweep run_position_sweep(const Model& model, const std::vector<Trial>& trials,
                                 const std::vector<Placement>& grid, const std::optional<fs::path>& out_dir) {
    if (grid.empty()) throw ArgumentError("placement grid is empty");
    if (trials.empty()) throw ConfigError("position sweep needs at least one trial");
    const Networks& n = model.nets;
    for (const Placement& p : grid) require_inside(p, n.arch.image_size, "position sweep");
    PositionSweep sweep;
    for (const Placement& p : grid) {
        double sum = 0.0;
        for (const Trial& t : trials) {
            Trial moved = t;
            moved.placement = p;
            const KeyPair keys = generate_key_pair(n.K, t.cover, t.disguise);
            const Image enc = encrypt(n.F, moved.composite(), keys.public_key);
            sum += message_psnr(decrypt(n.G, enc, keys.private_key), moved);
        }
        sweep.rows.push_back({p, sum / double(trials.size())});
    }
    double s = 0.0, s2 = 0.0;
    sweep.min = sweep.rows.front().psnr;
    for (const auto& r : sweep.rows) {
        s += r.psnr;
        s2 += r.psnr * r.psnr;
        sweep.min = std::min(sweep.min, r.psnr);
    }
    const double k = double(sweep.rows.size());
    sweep.mean = s / k;
    sweep.stddev = std::sqrt(std::max(0.0, s2 / k - sweep.mean * sweep.mean));
    if (out_dir) {
        auto out = open_csv(*out_dir / "tables" / "position_sweep.csv");
        out << "top,left,height,width,mean_psnr,checkpoint\n";
        for (const auto& r : sweep.rows)
            out << r.placement.top << ',' << r.placement.left << ',' << r.placement.height << ','
                << r.placement.width << ',' << r.psnr << ',' << model.checkpoint_hash << '\n';
        out << "summary,mean=" << sweep.mean << ",std=" << sweep.stddev << ",min=" << sweep.min << ",,\n";
    }
    return sweep;
}

// ---------------------------------------------------------------------------

Raster montage(const std::vector<Image>& panels, int columns, int cell) {
    if (panels.empty() || columns < 1 || cell < 1) throw ArgumentError("montage needs panels, columns and a cell size");
    constexpr int kBorder = 2;
    const int rows = (static_cast<int>(panels.size()) + columns - 1) / columns;
    Raster r;
    r.width = columns * (cell + kBorder) + kBorder;
    r.height = rows * (cell + kBorder) + kBorder;
    r.rgb.assign(std::size_t(r.width) * r.height * 3, 255);
    for (std::size_t i = 0; i < panels.size(); ++i) {
        const Tensor t = ag::resize_bilinear(panels[i].pixels(), cell, cell);
        const int oy = kBorder + static_cast<int>(i) / columns * (cell + kBorder);
        const int ox = kBorder + static_cast<int>(i) % columns * (cell + kBorder);
        for (int y = 0; y < cell; ++y)
            for (int x = 0; x < cell; ++x)
                for (int c = 0; c < 3; ++c) {
                    const double v = std::round((std::clamp(double(t.at(0, c, y, x)), -1.0, 1.0) + 1.0) * 127.5);
                    r.rgb[(std::size_t(oy + y) * r.width + ox + x) * 3 + c] = static_cast<std::uint8_t>(v);
                }
    }
    return r;
}

ActivationReport visualize_activations(const Model& model, const Trial& sample, const std::optional<fs::path>& out_dir) {
    const Networks& n = model.nets;
    const KeyPair keys = generate_key_pair(n.K, sample.cover, sample.disguise);
    const CompositeImage comp = sample.composite();
    ActivationMap f_acts, g_acts;
    Image enc;
    {
        ag::NoGradGuard guard;
        const ag::Var e = n.F.forward(ag::constant(comp.image.pixels()), ag::constant(keys.public_key.pixels()), &f_acts);
        enc = image_from_unclamped(e->value);
        n.G.forward(ag::constant(enc.pixels()), ag::constant(keys.private_key.pixels()), &g_acts);
    }
    std::vector<std::string> order{"enc1", "enc2", "enc3"};
    for (int i = 1; i <= n.G.residual_blocks(); ++i) order.push_back("R" + std::to_string(i));
    order.push_back("dec1");
    order.push_back("dec2");

    const Size2 full = n.arch.image_size;
    ActivationReport report;
    for (const auto& [net, acts] : {std::pair<const char*, ActivationMap*>{"F", &f_acts}, {"G", &g_acts}}) {
        for (const auto& layer : order) {
            const Tensor& a = acts->at(layer);
            const Shape s = a.shape();
            Tensor plane(Shape{1, 1, s.h, s.w}, 0.0f);
            for (int c = 0; c < s.c; ++c)
                for (int y = 0; y < s.h; ++y)
                    for (int x = 0; x < s.w; ++x) plane.at(0, 0, y, x) += std::abs(a.at(0, c, y, x)) / float(s.c);
            // Message region mapped to this layer's resolution.
            const int y0 = sample.placement.top * s.h / full.height;
            const int x0 = sample.placement.left * s.w / full.width;
            const int y1 = std::max(y0 + 1, (sample.placement.top + sample.placement.height) * s.h / full.height);
            const int x1 = std::max(x0 + 1, (sample.placement.left + sample.placement.width) * s.w / full.width);
            double inside = 0.0, all = 0.0;
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    all += plane.at(0, 0, y, x);
                    if (y >= y0 && y < y1 && x >= x0 && x < x1) inside += plane.at(0, 0, y, x);
                }
            const double in_mean = inside / double((y1 - y0) * (x1 - x0));
            const double all_mean = all / double(s.h * s.w);
            report.panels.push_back({std::string(net) + "." + layer, heat_image(plane, s.h, s.w),
                                     all_mean > 0.0 ? in_mean / all_mean : 0.0});
        }
    }
    const int blocks = n.G.residual_blocks();
    double early = 0.0, late = 0.0;
    int ne = 0, nl = 0;
    for (int i = 1; i <= blocks; ++i) {
        const std::string name = "G.R" + std::to_string(i);
        const auto it = std::find_if(report.panels.begin(), report.panels.end(),
                                     [&name](const ActivationPanel& p) { return p.name == name; });
        if (i <= blocks / 2) {
            early += it->message_energy;
            ++ne;
        } else {
            late += it->message_energy;
            ++nl;
        }
    }
    report.late_to_early_ratio = (ne > 0 && nl > 0 && early > 0.0) ? (late / nl) / (early / ne) : 0.0;

    std::vector<Image> images;
    for (const auto& p : report.panels) images.push_back(p.heatmap);
    report.montage = montage(images, static_cast<int>(order.size()), 48);
    if (out_dir) {
        fs::create_directories(*out_dir / "figures");
        write_png(report.montage, *out_dir / "figures" / "activations.png");
        auto out = open_csv(*out_dir / "tables" / "activations.csv");
        out << "panel,message_energy,checkpoint\n";
        for (const auto& p : report.panels) out << p.name << ',' << p.message_energy << ',' << model.checkpoint_hash << '\n';
        out << "late_to_early_ratio," << report.late_to_early_ratio << ",\n";
    }
    return report;
}

WrongKeyGallery run_wrong_key_gallery(const Model& model, const Trial& sample, int n_keys,
                                      const std::optional<fs::path>& out_dir) {
    if (n_keys < 1) throw ArgumentError("wrong-key gallery needs at least one wrong key");
    if (sample.wrong_covers.size() < std::size_t(n_keys))
        throw ArgumentError("sample carries " + std::to_string(sample.wrong_covers.size()) + " wrong covers, " +
                            std::to_string(n_keys) + " requested");
    const Networks& n = model.nets;
    const KeyPair keys = generate_key_pair(n.K, sample.cover, sample.disguise);
    const CompositeImage comp = sample.composite();
    const Image enc = encrypt(n.F, comp, keys.public_key);
    const Image dec = decrypt(n.G, enc, keys.private_key);
    WrongKeyGallery g;
    g.true_key_psnr = message_psnr(dec, sample);
    g.true_key_cover_psnr = metrics::psnr(dec, sample.cover);
    std::vector<Image> panels{comp.image, enc, dec};
    for (int k = 0; k < n_keys; ++k) {
        const Image wrong = decrypt(n.G, enc, keygen_forward(n.K, sample.wrong_covers[k]).key);
        g.wrong_key_psnr.push_back(message_psnr(wrong, sample));
        g.wrong_key_cover_psnr.push_back(metrics::psnr(wrong, sample.cover));
        panels.push_back(wrong);
    }
    g.montage = montage(panels, static_cast<int>(panels.size()), 64);
    if (out_dir) {
        fs::create_directories(*out_dir / "figures");
        write_png(g.montage, *out_dir / "figures" / "wrong_keys.png");
        auto out = open_csv(*out_dir / "tables" / "wrong_keys.csv");
        out << "key,message_psnr,cover_psnr,checkpoint\n";
        out << "true," << g.true_key_psnr << ',' << g.true_key_cover_psnr << ',' << model.checkpoint_hash << '\n';
        for (int k = 0; k < n_keys; ++k)
            out << "wrong_" << k << ',' << g.wrong_key_psnr[k] << ',' << g.wrong_key_cover_psnr[k] << ','
                << model.checkpoint_hash << '\n';
    }
    return g;
}

}  // namespace egan::experiments
