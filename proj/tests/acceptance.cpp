// End-to-end acceptance run on a desk-scale model: synthesize data, train,
// then check A0..A9. Prints one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"

#include "encryptgan/experiments.hpp"
#include "encryptgan/keys.hpp"
#include "encryptgan/synth.hpp"

using namespace egan;
using namespace egan::experiments;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kA0MaxSeconds = 300.0;
constexpr double kA1MinPsnr = 14.0;
constexpr double kA1MinSsim = 0.70;
constexpr int kA1MinTrials = 50;
constexpr double kA2MinGapDb = 4.0;
constexpr double kA2MinSecurityRatio = 2.0;
constexpr int kA2Samples = 20;
constexpr int kA2WrongKeys = 5;
constexpr double kA3MinEncryptionRatio = 5.0;
constexpr double kA4MaxP = 0.05;
constexpr int kSweepRepeats = 10;
constexpr int kSweepTrials = 20;
constexpr double kA5MaxLossDb = 3.0;
constexpr double kA6MaxStdDb = 2.0;
constexpr double kA8MaxDriftDb = 0.5;
constexpr double kA9ThresholdDb = 14.0;
constexpr int kA9Secrets = 10;
constexpr int kA9ForeignKeys = 5;

struct Outcome {
    std::string id;
    bool pass = false;
    std::string detail;
};

std::vector<Outcome> outcomes;

void report(const std::string& id, bool pass, const std::string& detail) {
    outcomes.push_back({id, pass, detail});
    std::printf("%s %s  %s\n", id.c_str(), pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void log(const std::string& s) {
    std::cerr << "[acceptance] " << s << std::endl;
}

DataPaths split(const fs::path& root, const char* name) {
    return {root / name / "x", root / name / "y", root / name / "messages"};
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

// ---------------------------------------------------------------------------

void a0(const std::string& unit_tests) {
    if (unit_tests.empty()) {
        report("A0", false, "unit test binary not given (--unit-tests)");
        return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    // Training-dynamics cases are slow and are not oracles.
    const std::string cmd = "\"" + unit_tests + "\" -tce=\"branch fraction*,objective decreases*\" > \"" +
                            (fs::temp_directory_path() / "egan_a0.log").string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    const double secs = seconds_since(t0);
    report("A0", rc == 0 && secs <= kA0MaxSeconds,
           fmt("unit oracles exit=%d runtime=%.1fs (limit %.0fs)", rc, secs, kA0MaxSeconds));
}

void a1_a3(const Model& m, const std::vector<metrics::Trial>& trials) {
    const auto pipe = metrics::make_pipeline(m.nets);
    metrics::EvalOptions eo;
    eo.wrong_keys = kA2WrongKeys;
    const auto r = metrics::evaluate(pipe, trials, eo);
    const auto& msg = r.aggregate.at("message_region");
    const double psnr = msg.at("psnr"), ssim = msg.at("ssim"), rec_mse = msg.at("mse");
    report("A1", int(trials.size()) >= kA1MinTrials && psnr >= kA1MinPsnr && ssim >= kA1MinSsim,
           fmt("trials=%zu message PSNR %.2f dB (>= %.1f), SSIM %.3f (>= %.2f)", trials.size(), psnr, kA1MinPsnr,
               ssim, kA1MinSsim));

    // Wrong-key decodes over the first kA2Samples trials.
    std::vector<double> right, wrong;
    for (int i = 0; i < kA2Samples && i < int(trials.size()); ++i) {
        const auto& t = trials[i];
        const Image pub = pipe.key(t.disguise);
        const Image enc = pipe.encrypt(t.composite().image, pub);
        right.push_back(metrics::psnr(crop_region(pipe.decrypt(enc, pipe.key(t.cover)), t.placement), t.message));
        for (const Image& wc : t.wrong_covers)
            wrong.push_back(metrics::psnr(crop_region(pipe.decrypt(enc, pipe.key(wc)), t.placement), t.message));
    }
    const double gap = mean(right) - mean(wrong);
    const double sec_ratio = r.security.mse / std::max(rec_mse, 1e-12);
    report("A2", gap >= kA2MinGapDb && sec_ratio >= kA2MinSecurityRatio && right.size() >= std::size_t(kA2Samples),
           fmt("correct %.2f dB vs wrong %.2f dB (gap %.2f, need >= %.1f) over %zu x %d; security MSE %.4f = %.2fx "
               "reconstruction %.4f (need >= %.1fx)",
               mean(right), mean(wrong), gap, kA2MinGapDb, right.size(), kA2WrongKeys, r.security.mse, sec_ratio,
               rec_mse, kA2MinSecurityRatio));

    const double enc_ratio = r.encryption.mse / std::max(rec_mse, 1e-12);
    report("A3", enc_ratio >= kA3MinEncryptionRatio,
           fmt("encryption MSE %.4f = %.2fx reconstruction %.4f (need >= %.1fx)", r.encryption.mse, enc_ratio, rec_mse,
               kA3MinEncryptionRatio));
}

void a4_a5(const Model& m, const std::vector<metrics::Trial>& trials, const fs::path& out) {
    SweepOptions opt;
    opt.repeats = kSweepRepeats;
    opt.seed = 11;
    opt.out_dir = out;
    bool ok = true;
    std::string detail;
    for (auto mode : {SensitivityMode::NoiseOnSource, SensitivityMode::NoiseOnKey}) {
        const Curve c = run_key_sensitivity(m, trials, kDefaultSigmas, mode, opt);
        ok = ok && c.trend.rho < 0.0 && c.trend.p_value < kA4MaxP;
        detail += fmt("%s rho %.3f p %.2g [%.2f..%.2f dB]; ", mode_name(mode), c.trend.rho, c.trend.p_value,
                      c.mean.front(), c.mean.back());
    }
    report("A4", ok, detail + fmt("need rho < 0, p < %.2f", kA4MaxP));

    const Curve rob = run_robustness(m, trials, kDefaultSigmas, opt);
    const double loss = rob.mean[0] - rob.mean[1];
    report("A5", rob.trend.rho < 0.0 && rob.trend.p_value < kA4MaxP && loss < kA5MaxLossDb,
           fmt("rho %.3f p %.2g; sigma 0.005 loses %.2f dB vs clean %.2f dB (need < %.1f)", rob.trend.rho,
               rob.trend.p_value, loss, rob.mean[0], kA5MaxLossDb));
}

void a6(const Model& m, const std::vector<metrics::Trial>& trials, const fs::path& out) {
    const auto grid = grid_placements(m.config.arch.image_size, m.config.message_size, 3, 3);
    const auto sweep = run_position_sweep(m, trials, grid, out);
    report("A6", sweep.stddev <= kA6MaxStdDb,
           fmt("3x3 grid PSNR std %.2f dB (mean %.2f, min %.2f; need <= %.1f)", sweep.stddev, sweep.mean, sweep.min,
               kA6MaxStdDb));
}

void a7(const TrainConfig& base, long steps, const fs::path& out) {
    TrainConfig cfg = base;
    cfg.total_steps = steps;
    AblationOptions opt;
    opt.trials = kA1MinTrials;
    opt.out_dir = out;
    const std::vector<FeatureTaps> sets{FeatureTaps({1, 2, 3}), FeatureTaps({6}), FeatureTaps({3, 5, 6})};
    const auto rows = run_ablation(sets, cfg, opt);
    bool all_ok = rows.size() == 3 && fs::exists(out / "tables" / "ablation.csv");
    std::string detail;
    for (const auto& r : rows) {
        all_ok = all_ok && r.ok;
        detail += r.ok ? fmt("%s mse %.4f; ", r.taps.label().c_str(), r.message_region.at("mse"))
                       : fmt("%s failed (%s); ", r.taps.label().c_str(), r.error.c_str());
    }
    const bool order = all_ok && rows[0].message_region.at("mse") > rows[2].message_region.at("mse");
    report("A7", all_ok && order, detail + fmt("%ld steps each; need L1L2L3 mse > L3L5L6 mse", steps));
}

void a8(const TrainConfig& base, const Model& m, const std::vector<metrics::Trial>& trials, const fs::path& out) {
    TrainConfig cfg = base;
    cfg.total_steps = 30;
    cfg.checkpoint_interval = 15;
    cfg.out_dir = out / "run_a";
    const Checkpoint a = train(cfg);
    cfg.out_dir = out / "run_b";
    const Checkpoint b = train(cfg);
    const bool logs = read_lines(out / "run_a" / "loss_log.jsonl") == read_lines(out / "run_b" / "loss_log.jsonl") &&
                      read_lines(out / "run_a" / "loss_log.jsonl").size() == 30;

    TrainOptions resume;
    resume.resume = load_checkpoint(out / "run_a" / "checkpoints" / "step_0000015.ckpt");
    cfg.out_dir = out / "run_c";
    const Checkpoint c = train(cfg, resume);
    const bool resumed = parameter_digest(c.state.nets) == parameter_digest(a.state.nets) &&
                         c.state.opt_gen == a.state.opt_gen && c.state.opt_disc == a.state.opt_disc &&
                         c.state.opt_key == a.state.opt_key;
    const Checkpoint reloaded = load_checkpoint(out / "run_a" / "final.ckpt");
    const bool round_trip = parameter_digest(reloaded.state.nets) == parameter_digest(a.state.nets) &&
                            parameter_digest(b.state.nets) == parameter_digest(a.state.nets);

    // Encrypt, save the ciphertext and keys, reload, decrypt.
    double drift = 0.0;
    const auto& n = m.nets;
    for (int i = 0; i < 5 && i < int(trials.size()); ++i) {
        const auto& t = trials[i];
        const KeyPair keys = generate_key_pair(n.K, t.cover, t.disguise);
        const Image enc = encrypt(n.F, t.composite().image, keys.public_key);
        const double direct = metrics::psnr(crop_region(decrypt(n.G, enc, keys.private_key), t.placement), t.message);
        const fs::path dir = out / "files" / std::to_string(i);
        save_image(enc, dir / "encrypted.png");
        save_key_pair(keys, dir / "keys");
        const KeyPair loaded = load_key_pair(dir / "keys");
        const Image dec = decrypt(n.G, load_image(dir / "encrypted.png", enc.size()), loaded.private_key);
        drift = std::max(drift, std::abs(direct - metrics::psnr(crop_region(dec, t.placement), t.message)));
    }
    report("A8", logs && resumed && round_trip && drift <= kA8MaxDriftDb,
           fmt("identical logs %s, resume bit-exact %s, save/load bit-exact %s, file round trip drift %.3f dB "
               "(need <= %.1f)",
               logs ? "yes" : "no", resumed ? "yes" : "no", round_trip ? "yes" : "no", drift, kA8MaxDriftDb));
}

void a9(const Model& m, const std::vector<metrics::Trial>& trials) {
    const auto& n = m.nets;
    int own_ok = 0, foreign_rejected = 0, foreign_total = 0;
    double own_min = 1e9, foreign_max = -1e9;
    for (int i = 0; i < kA9Secrets && i < int(trials.size()); ++i) {
        const auto& t = trials[i];
        // The secret lives in the disguise domain: sign maps it with G, verify maps back with F.
        const CompositeImage secret = paste_message(t.disguise, t.message, t.placement);
        const KeyPair keys = generate_key_pair(n.K, t.cover, t.disguise);
        const auto sig = sign(n.G, secret.image, keys.private_key);
        const double own = signature_psnr(n.F, sig, keys.public_key, secret.image);
        own_min = std::min(own_min, own);
        if (verify(n.F, sig, keys.public_key, secret.image, kA9ThresholdDb)) ++own_ok;
        for (int k = 0; k < kA9ForeignKeys && k < int(t.wrong_covers.size()); ++k) {
            const Image foreign = keygen_forward(n.K, t.wrong_covers[k]).key;
            const auto forged = sign(n.G, secret.image, foreign);
            foreign_max = std::max(foreign_max, signature_psnr(n.F, forged, keys.public_key, secret.image));
            if (!verify(n.F, forged, keys.public_key, secret.image, kA9ThresholdDb)) ++foreign_rejected;
            ++foreign_total;
        }
    }
    report("A9", own_ok == kA9Secrets && foreign_rejected == foreign_total && foreign_total > 0,
           fmt("own signatures verified %d/%d (min %.2f dB), foreign rejected %d/%d (max %.2f dB) at %.0f dB",
               own_ok, kA9Secrets, own_min, foreign_rejected, foreign_total, foreign_max, kA9ThresholdDb));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance run"};
    std::string work = (fs::temp_directory_path() / "egan_acceptance").string();
    std::string unit_tests;
    long steps = 6000, ablation_steps = 2000;
    int train_count = 200, test_count = 60;
    std::uint64_t seed = 7;
    bool reuse = false;
    std::string only;
    app.add_option("--work", work, "scratch directory");
    app.add_option("--unit-tests", unit_tests, "unit test binary for A0");
    app.add_option("--steps", steps, "desk model training steps");
    app.add_option("--ablation-steps", ablation_steps, "training steps per ablation row");
    app.add_option("--train", train_count);
    app.add_option("--test", test_count);
    app.add_option("--seed", seed);
    app.add_flag("--reuse", reuse, "reuse an existing desk checkpoint in --work");
    app.add_option("--only", only, "comma-separated criteria to run, e.g. A1,A8");
    CLI11_PARSE(app, argc, argv);

    auto wanted = [&](const char* id) { return only.empty() || ("," + only + ",").find(std::string(",") + id + ",") != std::string::npos; };
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const fs::path root(work);
        fs::create_directories(root);
        if (wanted("A0")) a0(unit_tests);

        const fs::path data = root / "data";
        if (!fs::exists(data / "test" / "messages")) {
            log("writing dataset");
            synth::write_dataset(data, 64, 32, {train_count, test_count}, seed);
        }
        TrainConfig cfg;
        cfg.seed = seed;
        cfg.total_steps = steps;
        cfg.train_data = split(data, "train");
        cfg.test_data = split(data, "test");
        cfg.out_dir = root / "desk";

        const fs::path final_ckpt = cfg.out_dir / "final.ckpt";
        Model model;
        if (reuse && fs::exists(final_ckpt)) {
            model = load_model(final_ckpt);
            log("reusing " + final_ckpt.string() + " at step " + std::to_string(model.config.total_steps));
        } else if (!only.empty() && !wanted("A1") && !wanted("A2") && !wanted("A3") && !wanted("A4") &&
                   !wanted("A5") && !wanted("A6") && !wanted("A8") && !wanted("A9")) {
            // nothing needs the desk model
        } else {
            log("training desk model for " + std::to_string(steps) + " steps");
            TrainOptions topt;
            topt.on_step = [&](const losses::LossReport& r) {
                if (r.step % 500 == 0) log(fmt("step %ld total %.3f (%.0fs)", r.step, r.total, seconds_since(t0)));
            };
            model = model_from(train(cfg, topt));
        }

        if (!model.checkpoint_hash.empty()) {
            const auto test = TrainingData::open(cfg.test_data, cfg);
            const auto trials =
                metrics::make_trials({&test.x, &test.y, &test.messages}, kA1MinTrials, kA2WrongKeys, seed + 1);
            const std::vector<metrics::Trial> sweep(trials.begin(), trials.begin() + kSweepTrials);
            if (wanted("A1") || wanted("A2") || wanted("A3")) a1_a3(model, trials);
            if (wanted("A4") || wanted("A5")) a4_a5(model, sweep, root / "experiments");
            if (wanted("A6")) a6(model, sweep, root / "experiments");
            if (wanted("A8")) a8(cfg, model, trials, root / "a8");
            if (wanted("A9")) a9(model, trials);
        }
        if (wanted("A7")) {
            log("ablation: 3 runs of " + std::to_string(ablation_steps) + " steps");
            TrainConfig acfg = cfg;
            acfg.out_dir = root / "ablation";
            a7(acfg, ablation_steps, root / "ablation");
        }
    } catch (const std::exception& e) {
        std::printf("acceptance aborted: %s\n", e.what());
        return 2;
    }

    int failed = 0;
    for (const auto& o : outcomes) failed += o.pass ? 0 : 1;
    std::printf("acceptance run complete: %zu criteria, %d passed, %d failed (%.0fs)\n", outcomes.size(),
                int(outcomes.size()) - failed, failed, seconds_since(t0));
    return failed == 0 ? 0 : 1;
}
