// encryptgan command-line front end. Every subcommand is a thin wrapper over
// the C API; see README.md for the exit-code table.

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "encryptgan/encryptgan.h"

namespace {

using nlohmann::json;

constexpr int kUsageExit = 64;

struct Failure {
    egan_status status;
    std::string message;
};

bool g_json = false;

void check(egan_status s) {
    if (s != EGAN_OK) throw Failure{s, egan_last_error()};
}

[[noreturn]] void usage(const std::string& msg) { throw Failure{EGAN_ERR_ARGUMENT, msg}; }

struct ImageDel {
    void operator()(egan_image* p) const { egan_image_free(p); }
};
struct ModelDel {
    void operator()(egan_model* p) const { egan_model_free(p); }
};
struct PairDel {
    void operator()(egan_keypair* p) const { egan_keypair_free(p); }
};
using ImagePtr = std::unique_ptr<egan_image, ImageDel>;
using ModelPtr = std::unique_ptr<egan_model, ModelDel>;
using PairPtr = std::unique_ptr<egan_keypair, PairDel>;

std::string take(char* s) {
    std::string out = s ? s : "";
    egan_string_free(s);
    return out;
}

ModelPtr load_model(const std::string& path) {
    egan_model* m = nullptr;
    check(egan_model_load(path.c_str(), &m));
    return ModelPtr(m);
}

json model_info(const egan_model* m) {
    char* s = nullptr;
    check(egan_model_info(m, &s));
    return json::parse(take(s));
}

ImagePtr load_image(const std::string& path, int h, int w) {
    egan_image* img = nullptr;
    check(egan_image_load(path.c_str(), h, w, &img));
    return ImagePtr(img);
}

ImagePtr load_key(const std::string& path, int expected_role, const char* what) {
    egan_image* img = nullptr;
    int role = -1;
    check(egan_key_load(path.c_str(), &img, &role));
    ImagePtr out(img);
    if (role != expected_role) usage(std::string(what) + " file holds a " + (role == 0 ? "public" : "private") + " key");
    return out;
}

void save(const egan_image* img, const std::string& path) { check(egan_image_save(img, path.c_str())); }

egan_placement parse_placement(const std::string& text, int mh, int mw) {
    egan_placement p{0, 0, mh, mw};
    char comma = 0;
    std::istringstream in(text);
    if (!(in >> p.top >> comma >> p.left) || comma != ',' || !in.eof()) usage("placement must be TOP,LEFT: " + text);
    return p;
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            usage("not a number list: " + text);
        }
    }
    if (out.empty()) usage("empty list: " + text);
    return out;
}

// "1,2,3;6;3,5,6"
json parse_layer_sets(const std::string& text) {
    json sets = json::array();
    std::stringstream in(text);
    std::string group;
    while (std::getline(in, group, ';')) {
        json set = json::array();
        for (double v : parse_list(group)) set.push_back(static_cast<int>(v));
        sets.push_back(set);
    }
    return sets;
}

void emit(const json& record, const std::string& human) {
    if (g_json) std::cout << record.dump() << '\n';
    else std::cout << human << '\n';
}

struct Common {
    std::string config;
    std::string data;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* sub, Common& c, bool with_config) {
    if (with_config) {
        sub->add_option("--config", c.config, "JSON config file");
        sub->add_option("--set", c.overrides, "dotted override, e.g. loss_weights.cyc=5 (repeatable)");
        sub->add_option("--data", c.data, "dataset root with train/ and test/ (as written by synth)")
            ;
    }
    sub->add_option("--seed", c.seed, "random seed");
    sub->add_option("--out", c.out, "output path");
}

std::string resolve_config(const Common& c, std::vector<std::string> extra) {
    std::vector<std::string> all = c.overrides;
    all.insert(all.end(), extra.begin(), extra.end());
    if (!c.data.empty()) {
        for (const char* split : {"train", "test"})
            for (const char* dom : {"x", "y", "messages"})
                all.push_back(std::string(split) + "_data." + dom + "=" +
                              json(c.data + "/" + split + "/" + dom).dump());
    }
    if (c.seed) all.push_back("seed=" + std::to_string(*c.seed));
    if (!c.out.empty()) all.push_back("out_dir=" + json(c.out).dump());
    std::vector<const char*> ptrs;
    for (const auto& s : all) ptrs.push_back(s.c_str());
    char* out = nullptr;
    check(egan_config_resolve(c.config.empty() ? nullptr : c.config.c_str(), ptrs.data(), ptrs.size(), &out));
    return take(out);
}

void step_printer(const char* record, void*) {
    const json r = json::parse(record);
    const long step = r.value("step", 0L);
    if (g_json) std::cout << record << '\n';
    else if (step % 50 == 0) std::cout << "step " << step << " total " << r.value("total", 0.0) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"encryptgan: image steganography with key-image pairs"};
    app.require_subcommand(1);
    app.add_flag("--json", g_json, "machine-readable output");

    Common c;

    // synth
    auto* synth = app.add_subcommand("synth", "write a procedural two-domain dataset");
    int image_size = 64, message_size = 32, n_train = 200, n_test = 60;
    synth->add_option("--image-size", image_size);
    synth->add_option("--message-size", message_size);
    synth->add_option("--train", n_train);
    synth->add_option("--test", n_test);
    add_common(synth, c, false);

    // train
    auto* train = app.add_subcommand("train", "train a model");
    std::optional<long> total_steps;
    std::string resume;
    train->add_option("--total-steps", total_steps);
    train->add_option("--resume", resume, "checkpoint to resume from");
    add_common(train, c, true);

    std::string checkpoint;
    auto needs_model = [&](CLI::App* sub) {
        sub->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    };

    // keygen
    auto* keygen = app.add_subcommand("keygen", "derive a public/private key pair");
    std::string cover, disguise;
    needs_model(keygen);
    keygen->add_option("--cover", cover, "domain-X image (private key source)")->required();
    keygen->add_option("--disguise", disguise, "domain-Y image (public key source)")->required();
    add_common(keygen, c, false);

    // encrypt
    auto* enc = app.add_subcommand("encrypt", "paste a message into a cover and encrypt it");
    std::string message, public_key, placement;
    bool random_placement = false;
    needs_model(enc);
    enc->add_option("--cover", cover)->required();
    enc->add_option("--message", message)->required();
    enc->add_option("--public-key", public_key)->required();
    auto* place_opt = enc->add_option("--placement", placement, "TOP,LEFT of the message");
    auto* rand_opt = enc->add_flag("--random-placement", random_placement);
    place_opt->excludes(rand_opt);
    add_common(enc, c, false);

    // decrypt
    auto* dec = app.add_subcommand("decrypt", "decrypt a ciphertext with a private key");
    std::string encrypted, private_key, crop_out;
    needs_model(dec);
    dec->add_option("--encrypted", encrypted)->required();
    dec->add_option("--private-key", private_key)->required();
    dec->add_option("--placement", placement, "TOP,LEFT of the message region to crop");
    dec->add_option("--message", message, "reference message for a crop PSNR");
    dec->add_option("--crop-out", crop_out, "write the message crop here");
    add_common(dec, c, false);

    // sign / verify
    auto* sign = app.add_subcommand("sign", "sign a shared secret with a private key");
    std::string secret, signature;
    needs_model(sign);
    sign->add_option("--secret", secret)->required();
    sign->add_option("--private-key", private_key)->required();
    add_common(sign, c, false);

    auto* verify = app.add_subcommand("verify", "check a signature against a public key and secret");
    double threshold = 14.0;
    needs_model(verify);
    verify->add_option("--signature", signature)->required();
    verify->add_option("--public-key", public_key)->required();
    verify->add_option("--secret", secret)->required();
    verify->add_option("--threshold", threshold, "PSNR threshold in dB");
    add_common(verify, c, false);

    // eval and experiments
    std::string test_data;
    int trials = -1, wrong_keys = 5, repeats = 10, rows = 3, cols = 3, sample = 0, n_keys = 5;
    std::string sigmas, mode = "both", layers = "1,2,3;3,4,5;4,5,6;6;5,6;3,5,6";
    auto data_opts = [&](CLI::App* sub) {
        sub->add_option("--test-data", test_data, "directory with x/ y/ messages/");
        sub->add_option("--trials", trials);
    };
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on held-out data");
    needs_model(eval);
    data_opts(eval);
    eval->add_option("--wrong-keys", wrong_keys);
    add_common(eval, c, false);

    auto* ablate = app.add_subcommand("ablate", "retrain per key-matching tap set and compare");
    ablate->add_option("--layers", layers, "tap sets, e.g. 1,2,3;6;3,5,6");
    ablate->add_option("--trials", trials);
    ablate->add_option("--total-steps", total_steps);
    add_common(ablate, c, true);

    auto* sens = app.add_subcommand("sensitivity", "message PSNR under private-key noise");
    needs_model(sens);
    data_opts(sens);
    sens->add_option("--mode", mode)->check(CLI::IsMember({"both", "noise_on_source", "noise_on_key"}));
    sens->add_option("--sigmas", sigmas, "comma separated");
    sens->add_option("--repeats", repeats);
    add_common(sens, c, false);

    auto* robust = app.add_subcommand("robustness", "message PSNR under ciphertext noise");
    needs_model(robust);
    data_opts(robust);
    robust->add_option("--sigmas", sigmas, "comma separated");
    robust->add_option("--repeats", repeats);
    add_common(robust, c, false);

    auto* positions = app.add_subcommand("positions", "message PSNR over a placement grid");
    needs_model(positions);
    data_opts(positions);
    positions->add_option("--rows", rows);
    positions->add_option("--cols", cols);
    add_common(positions, c, false);

    auto* acts = app.add_subcommand("activations", "per-layer generator activation montage");
    needs_model(acts);
    data_opts(acts);
    acts->add_option("--sample", sample);
    add_common(acts, c, false);

    auto* wrong = app.add_subcommand("wrongkeys", "decrypt one ciphertext under wrong keys");
    needs_model(wrong);
    data_opts(wrong);
    wrong->add_option("--n-keys", n_keys);
    wrong->add_option("--sample", sample);
    add_common(wrong, c, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error code=" << kUsageExit << " kind=usage message=" << json(e.what()).dump() << '\n';
        return kUsageExit;
    }

    auto out_or = [&](const std::string& fallback) { return c.out.empty() ? fallback : c.out; };
    const std::uint64_t seed = c.seed.value_or(0);

    try {
        if (*synth) {
            check(egan_synth_dataset(out_or("data").c_str(), image_size, message_size, n_train, n_test, seed));
            emit({{"dataset", out_or("data")}, {"train", n_train}, {"test", n_test}},
                 "wrote dataset to " + out_or("data"));
        } else if (*train) {
            std::vector<std::string> extra;
            if (total_steps) extra.push_back("total_steps=" + std::to_string(*total_steps));
            const std::string cfg = resolve_config(c, extra);
            char* summary = nullptr;
            check(egan_train(cfg.c_str(), resume.empty() ? nullptr : resume.c_str(), step_printer, nullptr, &summary));
            const json s = json::parse(take(summary));
            emit(s, "trained to step " + std::to_string(s.at("step").get<long>()) + "; checkpoint " +
                        s.at("checkpoint").get<std::string>());
        } else if (*keygen) {
            auto model = load_model(checkpoint);
            int h = 0, w = 0;
            check(egan_model_image_size(model.get(), &h, &w));
            auto cv = load_image(cover, h, w);
            auto dg = load_image(disguise, h, w);
            egan_keypair* kp = nullptr;
            check(egan_keypair_generate(model.get(), cv.get(), dg.get(), cover.c_str(), disguise.c_str(), &kp));
            PairPtr pair(kp);
            check(egan_keypair_save(pair.get(), out_or("keys").c_str()));
            emit({{"public_key", out_or("keys") + "/public_key.png"}, {"private_key", out_or("keys") + "/private_key.png"}},
                 "wrote key pair to " + out_or("keys"));
        } else if (*enc) {
            auto model = load_model(checkpoint);
            const json info = model_info(model.get());
            const auto size = info.at("config").at("arch").at("image_size");
            const auto msize = info.at("config").at("message_size");
            const int h = size[0], w = size[1], mh = msize[0], mw = msize[1];
            egan_placement p{};
            if (random_placement || placement.empty()) check(egan_random_placement(h, w, mh, mw, seed, &p));
            else p = parse_placement(placement, mh, mw);
            auto cv = load_image(cover, h, w);
            auto msg = load_image(message, mh, mw);
            auto pub = load_key(public_key, 0, "--public-key");
            egan_image* composite = nullptr;
            check(egan_paste_message(cv.get(), msg.get(), &p, &composite));
            ImagePtr comp(composite);
            egan_image* cipher = nullptr;
            check(egan_encrypt(model.get(), comp.get(), pub.get(), &cipher));
            ImagePtr ct(cipher);
            save(ct.get(), out_or("encrypted.png"));
            emit({{"encrypted", out_or("encrypted.png")}, {"placement", {p.top, p.left, p.height, p.width}}},
                 "wrote " + out_or("encrypted.png") + " (message at " + std::to_string(p.top) + "," +
                     std::to_string(p.left) + ")");
        } else if (*dec) {
            auto model = load_model(checkpoint);
            const json info = model_info(model.get());
            const int mh = info.at("config").at("message_size")[0], mw = info.at("config").at("message_size")[1];
            auto ct = load_image(encrypted, -1, -1);
            auto priv = load_key(private_key, 1, "--private-key");
            egan_image* out = nullptr;
            check(egan_decrypt(model.get(), ct.get(), priv.get(), &out));
            ImagePtr rec(out);
            save(rec.get(), out_or("decrypted.png"));
            json record{{"decrypted", out_or("decrypted.png")}};
            std::string human = "wrote " + out_or("decrypted.png");
            if (!placement.empty()) {
                const egan_placement p = parse_placement(placement, mh, mw);
                egan_image* cropped = nullptr;
                check(egan_image_crop(rec.get(), &p, &cropped));
                ImagePtr crop(cropped);
                if (!crop_out.empty()) {
                    save(crop.get(), crop_out);
                    record["crop"] = crop_out;
                }
                if (!message.empty()) {
                    auto ref = load_image(message, mh, mw);
                    double psnr = 0.0, ssim = 0.0;
                    check(egan_image_psnr(crop.get(), ref.get(), &psnr));
                    check(egan_image_ssim(crop.get(), ref.get(), &ssim));
                    record["crop_psnr"] = psnr;
                    record["crop_ssim"] = ssim;
                    human += "; crop PSNR " + std::to_string(psnr) + " dB";
                }
            } else if (!message.empty() || !crop_out.empty()) {
                usage("--message and --crop-out need --placement");
            }
            emit(record, human);
        } else if (*sign) {
            auto model = load_model(checkpoint);
            int h = 0, w = 0;
            check(egan_model_image_size(model.get(), &h, &w));
            auto s = load_image(secret, h, w);
            auto priv = load_key(private_key, 1, "--private-key");
            egan_image* sig = nullptr;
            check(egan_sign(model.get(), s.get(), priv.get(), &sig));
            ImagePtr signature_img(sig);
            save(signature_img.get(), out_or("signature.png"));
            emit({{"signature", out_or("signature.png")}}, "wrote " + out_or("signature.png"));
        } else if (*verify) {
            auto model = load_model(checkpoint);
            int h = 0, w = 0;
            check(egan_model_image_size(model.get(), &h, &w));
            auto sig = load_image(signature, h, w);
            auto s = load_image(secret, h, w);
            auto pub = load_key(public_key, 0, "--public-key");
            int ok = 0;
            double psnr = 0.0;
            check(egan_verify(model.get(), sig.get(), pub.get(), s.get(), threshold, &ok, &psnr));
            emit({{"verified", ok == 1}, {"psnr", psnr}, {"threshold", threshold}},
                 std::string(ok ? "signature verified" : "signature mismatch") + " (PSNR " + std::to_string(psnr) +
                     " dB, threshold " + std::to_string(threshold) + ")");
            if (!ok) return EGAN_ERR_SIGNATURE_MISMATCH;
        } else if (*ablate) {
            std::vector<std::string> extra;
            if (total_steps) extra.push_back("total_steps=" + std::to_string(*total_steps));
            const std::string cfg = resolve_config(c, extra);
            json opts{{"layer_sets", parse_layer_sets(layers)}};
            if (trials > 0) opts["trials"] = trials;
            char* out = nullptr;
            check(egan_ablate(cfg.c_str(), opts.dump().c_str(), out_or("ablation").c_str(), &out));
            const json r = json::parse(take(out));
            std::ostringstream human;
            for (const auto& row : r.at("rows")) {
                human << row.at("layers").get<std::string>() << ": ";
                if (row.at("ok").get<bool>()) human << "message MSE " << row.at("message_region").at("mse").get<double>();
                else human << "failed (" << row.at("error").get<std::string>() << ")";
                human << '\n';
            }
            emit(r, human.str());
        } else {
            auto model = load_model(checkpoint);
            json opts{{"seed", seed}};
            if (!test_data.empty()) opts["test_data"] = test_data;
            if (trials > 0) opts["trials"] = trials;
            char* out = nullptr;
            std::string kind;
            if (*eval) {
                opts["wrong_keys"] = wrong_keys;
                check(egan_evaluate(model.get(), opts.dump().c_str(), out_or("eval").c_str(), &out));
                const json r = json::parse(take(out));
                const auto& m = r.at("aggregate").at("message_region");
                std::ostringstream human;
                human << "message region: PSNR " << m.at("psnr").get<double>() << " dB, SSIM "
                      << m.at("ssim").get<double>() << ", MSE " << m.at("mse").get<double>() << "\nencryption MSE "
                      << r.at("encryption").at("mse").get<double>() << ", security MSE "
                      << r.at("security").at("mse").get<double>() << "\nreport in " << out_or("eval");
                json brief = r;
                brief.erase("records");
                emit(brief, human.str());
                return 0;
            }
            if (*sens) {
                kind = "key_sensitivity";
                opts["mode"] = mode;
                opts["repeats"] = repeats;
                if (!sigmas.empty()) opts["sigmas"] = parse_list(sigmas);
            } else if (*robust) {
                kind = "robustness";
                opts["repeats"] = repeats;
                if (!sigmas.empty()) opts["sigmas"] = parse_list(sigmas);
            } else if (*positions) {
                kind = "position_sweep";
                opts["rows"] = rows;
                opts["cols"] = cols;
            } else if (*acts) {
                kind = "activations";
                opts["sample"] = sample;
            } else if (*wrong) {
                kind = "wrong_key";
                opts["n_keys"] = n_keys;
                opts["sample"] = sample;
            }
            check(egan_experiment(model.get(), kind.c_str(), opts.dump().c_str(), out_or(kind).c_str(), &out));
            const json r = json::parse(take(out));
            emit(r, r.dump(2) + "\noutputs in " + out_or(kind));
        }
    } catch (const Failure& f) {
        std::cerr << "error code=" << static_cast<int>(f.status) << " kind=" << egan_status_name(f.status)
                  << " message=" << json(f.message).dump() << '\n';
        return static_cast<int>(f.status);
    } catch (const json::exception& e) {
        std::cerr << "error code=" << EGAN_ERR_INTERNAL << " kind=internal message=" << json(e.what()).dump() << '\n';
        return EGAN_ERR_INTERNAL;
    }
    return 0;
}
