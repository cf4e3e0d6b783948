// Exercises the shared library through its C interface only, and checks the
// CLI against the same calls.

#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "json.hpp"

#include "encryptgan/encryptgan.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Str {
    char* p = nullptr;
    ~Str() { egan_string_free(p); }
    json parse() const { return json::parse(p); }
};

struct ImageDeleter {
    void operator()(egan_image* i) const { egan_image_free(i); }
};
using ImagePtr = std::unique_ptr<egan_image, ImageDeleter>;

ImagePtr load(const fs::path& p, int h = 0, int w = 0) {
    egan_image* img = nullptr;
    REQUIRE(egan_image_load(p.string().c_str(), h, w, &img) == EGAN_OK);
    return ImagePtr(img);
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("egan_capi_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// A two-step model shared by the tests.
struct Fixture {
    fs::path root = scratch("fixture");
    fs::path ckpt;
    egan_model* model = nullptr;

    Fixture() {
        REQUIRE(egan_synth_dataset((root / "data").string().c_str(), 64, 32, 6, 4, 3) == EGAN_OK);
        const std::string d = (root / "data").string();
        const std::string overrides[] = {
            "total_steps=2",
            "checkpoint_interval=0",
            "arch.base_channels=4",
            "arch.residual_blocks=1",
            "train_data.x=\"" + d + "/train/x\"",
            "train_data.y=\"" + d + "/train/y\"",
            "train_data.messages=\"" + d + "/train/messages\"",
            "test_data.x=\"" + d + "/test/x\"",
            "test_data.y=\"" + d + "/test/y\"",
            "test_data.messages=\"" + d + "/test/messages\"",
            "out_dir=\"" + (root / "run").string() + "\"",
        };
        std::vector<const char*> ptrs;
        for (const auto& s : overrides) ptrs.push_back(s.c_str());
        Str cfg, summary;
        REQUIRE(egan_config_resolve(nullptr, ptrs.data(), ptrs.size(), &cfg.p) == EGAN_OK);
        int calls = 0;
        auto cb = [](const char*, void* user) { ++*static_cast<int*>(user); };
        REQUIRE(egan_train(cfg.p, nullptr, cb, &calls, &summary.p) == EGAN_OK);
        CHECK(calls == 2);
        ckpt = summary.parse().at("checkpoint").get<std::string>();
        REQUIRE(egan_model_load(ckpt.string().c_str(), &model) == EGAN_OK);
    }
    ~Fixture() { egan_model_free(model); }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

int run_cli(const std::string& args, std::string* out = nullptr) {
    const char* cli = std::getenv("ENCRYPTGAN_CLI");
    REQUIRE_MESSAGE(cli != nullptr, "ENCRYPTGAN_CLI not set");
    const fs::path log = fs::temp_directory_path() / "egan_capi_cli.log";
    const int rc = std::system(("\"" + std::string(cli) + "\" " + args + " > \"" + log.string() + "\" 2>&1").c_str());
    if (out) {
        std::ifstream in(log);
        std::stringstream s;
        s << in.rdbuf();
        *out = s.str();
    }
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("status names and errors") {
    CHECK(std::string(egan_status_name(EGAN_OK)) == "ok");
    CHECK(std::string(egan_status_name(EGAN_ERR_SIGNATURE_MISMATCH)) == "signature_mismatch");
    CHECK(std::string(egan_version()).size() > 0);

    egan_model* m = nullptr;
    CHECK(egan_model_load("/definitely/not/here.ckpt", &m) == EGAN_ERR_NOT_FOUND);
    CHECK(m == nullptr);
    CHECK(std::string(egan_last_error()).find("not/here") != std::string::npos);
    CHECK(egan_model_load(nullptr, &m) == EGAN_ERR_ARGUMENT);
    CHECK(egan_encrypt(nullptr, nullptr, nullptr, nullptr) == EGAN_ERR_ARGUMENT);
}

TEST_CASE("config resolution") {
    Str doc;
    REQUIRE(egan_config_resolve(nullptr, nullptr, 0, &doc.p) == EGAN_OK);
    const json j = doc.parse();
    CHECK(j.at("loss_weights").at("cyc") == 10.0);
    CHECK(j.at("key_correct_probability") == 0.5);

    const char* bad[] = {"loss_weights.cyc=-1"};
    Str none;
    CHECK(egan_config_resolve(nullptr, bad, 1, &none.p) == EGAN_ERR_CONFIG);
    const char* unknown[] = {"no_such_key=1"};
    CHECK(egan_config_resolve(nullptr, unknown, 1, &none.p) == EGAN_ERR_CONFIG);
    CHECK(egan_config_resolve("/nope.json", nullptr, 0, &none.p) == EGAN_ERR_NOT_FOUND);
}

TEST_CASE("model info") {
    auto& f = fixture();
    Str info;
    REQUIRE(egan_model_info(f.model, &info.p) == EGAN_OK);
    const json j = info.parse();
    CHECK(j.at("step") == 2);
    CHECK(j.at("format_version") == 1);
    CHECK(j.at("parameter_digest").get<std::string>().size() == 16);
    int h = 0, w = 0;
    REQUIRE(egan_model_image_size(f.model, &h, &w) == EGAN_OK);
    CHECK(h == 64);
    CHECK(w == 64);
}

TEST_CASE("protocol through the C interface") {
    auto& f = fixture();
    const fs::path data = f.root / "data" / "test";
    auto cover = load(data / "x" / "0000.png", 64, 64);
    auto disguise = load(data / "y" / "0000.png", 64, 64);
    auto other = load(data / "x" / "0001.png", 64, 64);
    auto message = load(data / "messages" / "0000.png", 32, 32);

    egan_keypair* pair = nullptr;
    REQUIRE(egan_keypair_generate(f.model, cover.get(), disguise.get(), "c", "d", &pair) == EGAN_OK);
    egan_image *pub_raw = nullptr, *priv_raw = nullptr;
    REQUIRE(egan_keypair_public(pair, &pub_raw) == EGAN_OK);
    REQUIRE(egan_keypair_private(pair, &priv_raw) == EGAN_OK);
    ImagePtr pub(pub_raw), priv(priv_raw);

    const fs::path keys = scratch("keys");
    REQUIRE(egan_keypair_save(pair, keys.string().c_str()) == EGAN_OK);
    egan_keypair_free(pair);
    egan_image* k = nullptr;
    int role = -1;
    REQUIRE(egan_key_load((keys / "private_key.png").string().c_str(), &k, &role) == EGAN_OK);
    CHECK(role == 1);
    egan_image_free(k);
    REQUIRE(egan_key_load((keys / "public_key.png").string().c_str(), &k, &role) == EGAN_OK);
    CHECK(role == 0);
    egan_image_free(k);

    const egan_placement at{8, 24, 32, 32};
    egan_image* raw = nullptr;
    REQUIRE(egan_paste_message(cover.get(), message.get(), &at, &raw) == EGAN_OK);
    ImagePtr composite(raw);
    const egan_placement outside{40, 40, 32, 32};
    CHECK(egan_paste_message(cover.get(), message.get(), &outside, &raw) == EGAN_ERR_BOUNDS);

    REQUIRE(egan_encrypt(f.model, composite.get(), pub.get(), &raw) == EGAN_OK);
    ImagePtr enc(raw);
    REQUIRE(egan_decrypt(f.model, enc.get(), priv.get(), &raw) == EGAN_OK);
    ImagePtr dec(raw);
    REQUIRE(egan_image_crop(dec.get(), &at, &raw) == EGAN_OK);
    ImagePtr crop(raw);
    double psnr = 0.0;
    REQUIRE(egan_image_psnr(crop.get(), message.get(), &psnr) == EGAN_OK);
    CHECK(psnr > 0.0);
    CHECK(egan_image_psnr(crop.get(), cover.get(), &psnr) == EGAN_ERR_SHAPE);

    egan_placement p{};
    REQUIRE(egan_random_placement(64, 64, 32, 32, 5, &p) == EGAN_OK);
    CHECK((p.top >= 0 && p.top <= 32 && p.left >= 0 && p.left <= 32));
    CHECK(egan_random_placement(16, 16, 32, 32, 5, &p) == EGAN_ERR_SHAPE);

    // Signatures: verify with the threshold at 0 always passes, at 101 never.
    REQUIRE(egan_sign(f.model, disguise.get(), priv.get(), &raw) == EGAN_OK);
    ImagePtr sig(raw);
    int ok = -1;
    REQUIRE(egan_verify(f.model, sig.get(), pub.get(), disguise.get(), 0.0, &ok, &psnr) == EGAN_OK);
    CHECK(ok == 1);
    REQUIRE(egan_verify(f.model, sig.get(), pub.get(), disguise.get(), 101.0, &ok, nullptr) == EGAN_OK);
    CHECK(ok == 0);
    (void)other;
}

TEST_CASE("evaluate and experiments") {
    auto& f = fixture();
    Str report;
    const fs::path out = scratch("eval");
    REQUIRE(egan_evaluate(f.model, R"({"trials": 3, "wrong_keys": 1})", out.string().c_str(), &report.p) == EGAN_OK);
    const json r = report.parse();
    CHECK(r.at("counts").at("trials") == 3);
    CHECK(fs::exists(out / "report.json"));
    CHECK(fs::exists(out / "records.csv"));

    Str res;
    const fs::path ex = scratch("experiment");
    REQUIRE(egan_experiment(f.model, "position_sweep", R"({"trials": 2, "rows": 2, "cols": 2})",
                            ex.string().c_str(), &res.p) == EGAN_OK);
    CHECK(fs::exists(ex / "spec.snapshot"));
    CHECK(fs::exists(ex / "tables" / "position_sweep.csv"));
    Str none;
    CHECK(egan_experiment(f.model, "nonsense", nullptr, nullptr, &none.p) == EGAN_ERR_ARGUMENT);
    CHECK(egan_evaluate(f.model, "{not json", nullptr, &none.p) != EGAN_OK);
}

TEST_CASE("CLI matches the library") {
    auto& f = fixture();
    const fs::path dir = scratch("cli");
    const fs::path data = f.root / "data" / "test";
    const std::string ck = " --checkpoint \"" + f.ckpt.string() + "\"";
    std::string out;

    CHECK(run_cli("--bogus-flag") == 64);
    CHECK(run_cli("train --set no_such_key=1 --out \"" + (dir / "r").string() + "\"") == EGAN_ERR_CONFIG);
    CHECK(run_cli("decrypt" + ck + " --encrypted /nope.png --private-key /nope.png", &out) == EGAN_ERR_NOT_FOUND);
    CHECK(out.rfind("error code=1 kind=not_found", 0) == 0);

    // train with zero steps still writes a checkpoint
    CHECK(run_cli("train --data \"" + (f.root / "data").string() + "\" --total-steps 0 --set arch.base_channels=4 --out \"" +
                  (dir / "zero").string() + "\"") == 0);
    CHECK(fs::exists(dir / "zero" / "final.ckpt"));

    const std::string cover = (data / "x" / "0000.png").string(), disguise = (data / "y" / "0000.png").string();
    const std::string message = (data / "messages" / "0000.png").string();
    REQUIRE(run_cli("keygen" + ck + " --cover \"" + cover + "\" --disguise \"" + disguise + "\" --out \"" +
                    (dir / "keys").string() + "\"") == 0);
    REQUIRE(run_cli("encrypt" + ck + " --cover \"" + cover + "\" --message \"" + message + "\" --public-key \"" +
                    (dir / "keys" / "public_key.png").string() + "\" --placement 8,24 --out \"" +
                    (dir / "enc.png").string() + "\"") == 0);
    REQUIRE(run_cli("--json decrypt" + ck + " --encrypted \"" + (dir / "enc.png").string() + "\" --private-key \"" +
                        (dir / "keys" / "private_key.png").string() + "\" --placement 8,24 --message \"" + message +
                        "\" --out \"" + (dir / "dec.png").string() + "\"",
                    &out) == 0);
    const double cli_psnr = json::parse(out).at("crop_psnr").get<double>();

    // Same chain through the C interface.
    egan_image *pub = nullptr, *priv = nullptr, *raw = nullptr;
    REQUIRE(egan_key_load((dir / "keys" / "public_key.png").string().c_str(), &pub, nullptr) == EGAN_OK);
    REQUIRE(egan_key_load((dir / "keys" / "private_key.png").string().c_str(), &priv, nullptr) == EGAN_OK);
    ImagePtr pub_p(pub), priv_p(priv);
    auto enc = load(dir / "enc.png", 64, 64);
    REQUIRE(egan_decrypt(f.model, enc.get(), priv, &raw) == EGAN_OK);
    ImagePtr dec(raw);
    REQUIRE(egan_image_save(dec.get(), (dir / "dec_lib.png").string().c_str()) == EGAN_OK);
    auto a = load(dir / "dec.png"), b = load(dir / "dec_lib.png");
    double same = 0.0;
    REQUIRE(egan_image_psnr(a.get(), b.get(), &same) == EGAN_OK);
    CHECK(same == 100.0);

    const egan_placement at{8, 24, 32, 32};
    REQUIRE(egan_image_crop(dec.get(), &at, &raw) == EGAN_OK);
    ImagePtr crop(raw);
    auto msg = load(message, 32, 32);
    double lib_psnr = 0.0;
    REQUIRE(egan_image_psnr(crop.get(), msg.get(), &lib_psnr) == EGAN_OK);
    CHECK(cli_psnr == doctest::Approx(lib_psnr).epsilon(1e-9));

    // A signature checked against someone else's public key fails with the mismatch code.
    const std::string other = (data / "y" / "0001.png").string();
    REQUIRE(run_cli("keygen" + ck + " --cover \"" + (data / "x" / "0001.png").string() + "\" --disguise \"" + other +
                    "\" --out \"" + (dir / "keys2").string() + "\"") == 0);
    REQUIRE(run_cli("sign" + ck + " --secret \"" + disguise + "\" --private-key \"" +
                    (dir / "keys" / "private_key.png").string() + "\" --out \"" + (dir / "sig.png").string() + "\"") == 0);
    CHECK(run_cli("verify" + ck + " --signature \"" + (dir / "sig.png").string() + "\" --public-key \"" +
                  (dir / "keys2" / "public_key.png").string() + "\" --secret \"" + other + "\" --threshold 30") ==
          EGAN_ERR_SIGNATURE_MISMATCH);
    // A private key where a public key is expected is refused.
    CHECK(run_cli("verify" + ck + " --signature \"" + (dir / "sig.png").string() + "\" --public-key \"" +
                  (dir / "keys" / "private_key.png").string() + "\" --secret \"" + disguise + "\"") == EGAN_ERR_ARGUMENT);
}
