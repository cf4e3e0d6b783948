#include "encryptgan/training.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "encryptgan/errors.hpp"

namespace egan {

namespace fs = std::filesystem;
using losses::LossReport;

// ---------------------------------------------------------------------------
// Optimiser

void adam_update(const std::vector<NamedParam>& params, AdamState& state, double lr, double beta1, double beta2,
                 double eps) {
    state.t += 1;
    const double c1 = 1.0 - std::pow(beta1, double(state.t));
    const double c2 = 1.0 - std::pow(beta2, double(state.t));
    for (const auto& p : params) {
        const Tensor& g = p.var->grad;
        if (g.empty()) continue;
        Tensor& m = state.m[p.name];
        Tensor& v = state.v[p.name];
        if (m.empty()) m = Tensor(g.shape(), 0.0f);
        if (v.empty()) v = Tensor(g.shape(), 0.0f);
        float* w = p.var->value.data();
        const std::int64_t n = g.numel();
        for (std::int64_t i = 0; i < n; ++i) {
            m[i] = static_cast<float>(beta1 * m[i] + (1.0 - beta1) * g[i]);
            v[i] = static_cast<float>(beta2 * v[i] + (1.0 - beta2) * double(g[i]) * g[i]);
            const double mh = m[i] / c1;
            const double vh = v[i] / c2;
            w[i] = static_cast<float>(w[i] - lr * mh / (std::sqrt(vh) + eps));
        }
    }
}

ModelState ModelState::clone() const {
    ModelState c;
    c.nets = nets.clone();
    c.opt_gen = opt_gen;
    c.opt_disc = opt_disc;
    c.opt_key = opt_key;
    c.step = step;
    return c;
}

ModelState init_model_state(const TrainConfig& cfg) {
    cfg.validate();
    ModelState s;
    s.nets = init_params(cfg.arch, cfg.seed);
    return s;
}

// ---------------------------------------------------------------------------
// Sampling

bool sample_key_correctness(Rng& rng, double probability) {
    if (!(probability >= 0.0 && probability <= 1.0)) throw ArgumentError("key-correct probability outside [0, 1]");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return u(rng) < probability;
}

std::uint64_t step_seed(std::uint64_t seed, long step) {
    // splitmix64 finaliser over (seed, step)
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(step) + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

TrainingData TrainingData::open(const DataPaths& paths, const TrainConfig& cfg) {
    TrainingData d{DomainDataset(paths.x_dir, DomainLabel::X, cfg.arch.image_size),
                   DomainDataset(paths.y_dir, DomainLabel::Y, cfg.arch.image_size),
                   DomainDataset(paths.message_dir, DomainLabel::Message, cfg.message_size)};
    if (d.x.size() < 2) throw ConfigError("domain X needs at least two images (incorrect-key sampling)");
    if (d.y.size() < 1 || d.messages.size() < 1) throw ConfigError("domain Y and message sets must be non-empty");
    return d;
}

Batch sample_batch(const TrainingData& data, const TrainConfig& cfg, Rng& rng) {
    Batch batch;
    auto pick = [&rng](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
    for (int b = 0; b < cfg.batch_size; ++b) {
        TrainSample s;
        const std::size_t cover = pick(data.x.size());
        std::size_t wrong = pick(data.x.size() - 1);
        if (wrong >= cover) ++wrong;
        s.cover = data.x.at(cover);
        s.wrong_cover = data.x.at(wrong);
        s.disguise = data.y.at(pick(data.y.size()));
        s.message_x = data.messages.at(pick(data.messages.size()));
        s.message_y = data.messages.at(pick(data.messages.size()));
        s.placement_x = sample_placement(cfg.arch.image_size, cfg.message_size, rng);
        s.placement_y = sample_placement(cfg.arch.image_size, cfg.message_size, rng);
        s.real_x = data.x.at(pick(data.x.size()));
        s.real_y = data.y.at(pick(data.y.size()));
        batch.push_back(std::move(s));
    }
    return batch;
}

// ---------------------------------------------------------------------------
// One step

namespace {

std::vector<NamedParam> concat(std::vector<NamedParam> a, const std::vector<NamedParam>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

Tensor noisy(const Tensor& t, double sigma, Rng& rng) {
    Tensor out = t;
    if (sigma <= 0.0) return out;
    std::normal_distribution<double> n(0.0, sigma);
    for (float& v : out.values()) v = static_cast<float>(std::clamp(double(v) + n(rng), -1.0, 1.0));
    return out;
}

void check_finite(const char* term, double v) {
    if (!std::isfinite(v)) throw NumericalError(term, std::string("non-finite loss term: ") + term);
}

struct Forward {
    ag::Var xc, yc;       // clean composites (targets)
    ag::Var enc, dec;     // x side: F(xc, pub), G(enc, key)
    ag::Var trans, rec_y; // y side: G(yc, priv), F(trans, pub)
    Placement px, py;
    ag::Var real_x, real_y;
};

}  // namespace

LossReport train_step(ModelState& state, const TrainConfig& cfg, const Batch& batch, Rng& rng, StepOptions options) {
    if (batch.empty()) throw ArgumentError("train_step: empty batch");
    Networks& nets = state.nets;
    std::vector<NamedParam> key_head;
    for (const auto& p : nets.K.params())
        if (p.name.rfind("K.key_head", 0) == 0) key_head.push_back(p);
    auto gen_params = concat(nets.F.params(), nets.G.params());
    if (cfg.key_head_with_generators && cfg.keygen_pretrain_steps == 0) gen_params = concat(std::move(gen_params), key_head);
    const auto disc_params = concat(nets.Dx.params(), nets.Dy.params());
    const auto key_params = nets.K.params();
    const bool pretraining = state.step < cfg.keygen_pretrain_steps;
    const bool train_keygen = cfg.keygen_pretrain_steps == 0 || pretraining;
    const double inv_batch = 1.0 / double(batch.size());

    LossReport report;
    report.step = state.step + 1;

    if (!pretraining) {
        const bool correct = options.force_key_correct.value_or(sample_key_correctness(rng, cfg.key_correct_probability));
        report.key_correct = correct;

        set_requires_grad(key_params, false);
        set_requires_grad(disc_params, false);
        set_requires_grad(gen_params, true);

        std::vector<Forward> fwd;
        for (const TrainSample& s : batch) {
            Forward f;
            // Only the key head (when enabled) keeps a graph here.
            const ag::Var priv = nets.K.forward(ag::constant(s.cover.pixels())).key;
            const ag::Var pub = nets.K.forward(ag::constant(s.disguise.pixels())).key;
            const ag::Var wrong = nets.K.forward(ag::constant(s.wrong_cover.pixels())).key;
            const CompositeImage cx = paste_message(s.cover, s.message_x, s.placement_x);
            const CompositeImage cy = paste_message(s.disguise, s.message_y, s.placement_y);
            f.xc = ag::constant(cx.image.pixels());
            f.yc = ag::constant(cy.image.pixels());
            f.px = s.placement_x;
            f.py = s.placement_y;
            f.real_x = ag::constant(s.real_x.pixels());
            f.real_y = ag::constant(s.real_y.pixels());
            const ag::Var xin = ag::constant(noisy(cx.image.pixels(), cfg.input_noise_sigma, rng));
            const ag::Var yin = ag::constant(noisy(cy.image.pixels(), cfg.input_noise_sigma, rng));
            f.enc = nets.F.forward(xin, pub);
            f.dec = nets.G.forward(f.enc, correct ? priv : wrong);
            f.trans = nets.G.forward(yin, priv);
            f.rec_y = nets.F.forward(f.trans, pub);
            fwd.push_back(std::move(f));
        }

        // (1) discriminators on detached fakes
        set_requires_grad(gen_params, false);
        set_requires_grad(disc_params, true);
        double loss_dx = 0.0, loss_dy = 0.0;
        for (const Forward& f : fwd) {
            const ag::Var rx = nets.Dx.forward(f.real_x);
            const ag::Var ry = nets.Dy.forward(f.real_y);
            const ag::Var terms[] = {
                losses::lsgan_discriminator_loss(rx, nets.Dx.forward(ag::constant(f.dec->value))),
                losses::lsgan_discriminator_loss(rx, nets.Dx.forward(ag::constant(f.trans->value))),
                losses::lsgan_discriminator_loss(ry, nets.Dy.forward(ag::constant(f.enc->value))),
                losses::lsgan_discriminator_loss(ry, nets.Dy.forward(ag::constant(f.rec_y->value))),
            };
            const double half = 0.5 * inv_batch;
            const double w[] = {half, half, half, half};
            const ag::Var d_loss = ag::weighted_sum(terms, w);
            loss_dx += half * (ag::scalar(terms[0]) + ag::scalar(terms[1]));
            loss_dy += half * (ag::scalar(terms[2]) + ag::scalar(terms[3]));
            ag::backward(d_loss);
        }
        check_finite("discriminator_x", loss_dx);
        check_finite("discriminator_y", loss_dy);
        adam_update(disc_params, state.opt_disc, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2);
        zero_grads(disc_params);
        set_requires_grad(disc_params, false);
        if (options.after_phase) options.after_phase("discriminator", state);
        report.aux["discriminator_x"] = loss_dx;
        report.aux["discriminator_y"] = loss_dy;

        // (2) generators against the updated discriminators
        set_requires_grad(gen_params, true);
        const FeatureTaps& taps = cfg.arch.key_tap_layers;
        double sum_cyc = 0.0, sum_adv = 0.0, sum_key = 0.0, sum_info = 0.0, sum_total = 0.0;
        for (const Forward& f : fwd) {
            const ag::Var adv_terms[] = {
                losses::lsgan_generator_loss(nets.Dy.forward(f.enc)),
                losses::lsgan_generator_loss(nets.Dx.forward(f.dec)),
                losses::lsgan_generator_loss(nets.Dx.forward(f.trans)),
                losses::lsgan_generator_loss(nets.Dy.forward(f.rec_y)),
            };
            const double ones[] = {1.0, 1.0, 1.0, 1.0};
            const ag::Var adv = ag::weighted_sum(adv_terms, ones);

            losses::LayerActivations orig_x, orig_y;
            {
                ag::NoGradGuard guard;
                orig_x = losses::tapped(nets.K.forward(f.xc));
                orig_y = losses::tapped(nets.K.forward(f.yc));
            }
            const auto rec_y_acts = losses::tapped(nets.K.forward(f.rec_y));
            ag::Var cyc, key, info;
            if (correct) {
                const auto rec_x_acts = losses::tapped(nets.K.forward(f.dec));
                cyc = losses::cycle_loss(f.xc, f.dec, f.yc, f.rec_y);
                key = losses::key_matching_loss(taps, orig_x, rec_x_acts, orig_y, rec_y_acts);
                info = losses::information_loss(f.dec, f.xc, f.px, f.rec_y, f.yc, f.py);
            } else {
                // The wrong-key decode is held only to the adversarial term;
                // the disguise-side cycle still supplies key and info terms.
                key = losses::key_matching_term(taps, orig_y, rec_y_acts);
                info = losses::information_term(f.rec_y, f.yc, f.py);
            }
            const ag::Var total = losses::total_generator_objective(cyc, adv, key, info, cfg.loss_weights, correct);
            if (correct) sum_cyc += ag::scalar(cyc) * inv_batch;
            sum_adv += ag::scalar(adv) * inv_batch;
            sum_key += ag::scalar(key) * inv_batch;
            sum_info += ag::scalar(info) * inv_batch;
            sum_total += ag::scalar(total) * inv_batch;
            const ag::Var scaled_terms[] = {total};
            const double scale[] = {inv_batch};
            ag::backward(ag::weighted_sum(scaled_terms, scale));
        }
        if (correct) check_finite("cycle", sum_cyc);
        check_finite("adversarial", sum_adv);
        check_finite("key_matching", sum_key);
        check_finite("information", sum_info);
        adam_update(gen_params, state.opt_gen, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2);
        zero_grads(gen_params);
        zero_grads(key_params);
        set_requires_grad(gen_params, false);
        if (options.after_phase) options.after_phase("generator", state);

        losses::LossComponents comp;
        if (correct) comp.cyc = sum_cyc;
        comp.adv = sum_adv;
        comp.key = sum_key;
        comp.info = sum_info;
        LossReport g = losses::total_generator_objective(comp, cfg.loss_weights, correct);
        report.terms = g.terms;
        report.total = g.total;
        check_finite("total", report.total);
    }

    // (3) key network as a domain classifier
    if (train_keygen) {
        set_requires_grad(key_params, true);
        double ce = 0.0;
        for (const TrainSample& s : batch) {
            const ag::Var both = ag::constant(stack(std::vector<Tensor>{s.cover.pixels(), s.disguise.pixels()}));
            const DomainLabel labels[] = {DomainLabel::X, DomainLabel::Y};
            const ag::Var loss = losses::keygen_classification_loss(nets.K.forward(both).logits, labels);
            ce += ag::scalar(loss) * inv_batch;
            const ag::Var terms[] = {loss};
            const double w[] = {inv_batch};
            ag::backward(ag::weighted_sum(terms, w));
        }
        check_finite("keygen_classification", ce);
        adam_update(key_params, state.opt_key, cfg.keygen_learning_rate, cfg.adam_beta1, cfg.adam_beta2);
        zero_grads(key_params);
        set_requires_grad(key_params, false);
        if (options.after_phase) options.after_phase("keygen", state);
        report.aux["keygen_classification"] = ce;
    }

    state.step += 1;
    return report;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout (little-endian):
//   "EGANCKPT" | u32 version | i64 step | u32 n, config JSON (n bytes)
//   u64 t_gen | u64 t_disc | u64 t_key
//   u32 tensor count | per tensor: u32 name len, name, 4 x i32 shape, f32 data
//   u64 FNV-1a over every preceding byte

namespace {

constexpr char kMagic[8] = {'E', 'G', 'A', 'N', 'C', 'K', 'P', 'T'};

class Fnv {
public:
    void update(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
    }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}
    void raw(const void* data, std::size_t n) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        hash_.update(data, n);
    }
    template <class T>
    void pod(const T& v) { raw(&v, sizeof v); }
    void str(const std::string& s) {
        pod(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void tensor(const std::string& name, const Tensor& t) {
        str(name);
        const Shape s = t.shape();
        const std::int32_t dims[4] = {s.n, s.c, s.h, s.w};
        raw(dims, sizeof dims);
        raw(t.data(), sizeof(float) * static_cast<std::size_t>(t.numel()));
    }
    std::uint64_t digest() const { return hash_.value(); }

private:
    std::ostream& out_;
    Fnv hash_;
};

class Reader {
public:
    Reader(const std::vector<char>& buf, const fs::path& path) : buf_(buf), path_(path) {}
    void raw(void* data, std::size_t n) {
        if (pos_ + n > buf_.size()) throw FormatError("truncated checkpoint: " + path_.string());
        std::memcpy(data, buf_.data() + pos_, n);
        pos_ += n;
    }
    template <class T>
    T pod() {
        T v{};
        raw(&v, sizeof v);
        return v;
    }
    std::string str() {
        const auto n = pod<std::uint32_t>();
        if (n > buf_.size()) throw FormatError("corrupt checkpoint string length: " + path_.string());
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
    std::pair<std::string, Tensor> tensor() {
        std::string name = str();
        std::int32_t dims[4];
        raw(dims, sizeof dims);
        for (auto d : dims)
            if (d < 0) throw FormatError("corrupt tensor shape in " + path_.string());
        Shape s{dims[0], dims[1], dims[2], dims[3]};
        if (static_cast<std::size_t>(s.numel()) * sizeof(float) > buf_.size())
            throw FormatError("corrupt tensor extent in " + path_.string());
        Tensor t(s);
        raw(t.data(), sizeof(float) * static_cast<std::size_t>(s.numel()));
        return {std::move(name), std::move(t)};
    }
    std::size_t pos() const { return pos_; }

private:
    const std::vector<char>& buf_;
    const fs::path& path_;
    std::size_t pos_ = 0;
};

std::string hex64(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

std::string digest_of(const std::vector<NamedParam>& params) {
    Fnv h;
    for (const auto& p : params) {
        h.update(p.name.data(), p.name.size());
        h.update(p.var->value.data(), sizeof(float) * static_cast<std::size_t>(p.var->value.numel()));
    }
    return hex64(h.value());
}

}  // namespace

std::string parameter_digest(const Networks& nets) { return digest_of(nets.params()); }
std::string keygen_digest(const Networks& nets) { return digest_of(nets.K.params()); }

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    const fs::path tmp = path.string() + ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint: " + path.string());
        Writer w(out);
        w.raw(kMagic, sizeof kMagic);
        w.pod(Checkpoint::kFormatVersion);
        w.pod(static_cast<std::int64_t>(ckpt.state.step));
        w.str(to_json(ckpt.config).dump());
        w.pod(static_cast<std::uint64_t>(ckpt.state.opt_gen.t));
        w.pod(static_cast<std::uint64_t>(ckpt.state.opt_disc.t));
        w.pod(static_cast<std::uint64_t>(ckpt.state.opt_key.t));

        std::vector<std::pair<std::string, const Tensor*>> tensors;
        for (const auto& p : ckpt.state.nets.params()) tensors.emplace_back(p.name, &p.var->value);
        auto add_opt = [&tensors](const char* group, const AdamState& s) {
            for (const auto& [name, t] : s.m) tensors.emplace_back(std::string("adam.") + group + ".m." + name, &t);
            for (const auto& [name, t] : s.v) tensors.emplace_back(std::string("adam.") + group + ".v." + name, &t);
        };
        add_opt("gen", ckpt.state.opt_gen);
        add_opt("disc", ckpt.state.opt_disc);
        add_opt("key", ckpt.state.opt_key);
        w.pod(static_cast<std::uint32_t>(tensors.size()));
        for (const auto& [name, t] : tensors) w.tensor(name, *t);
        const std::uint64_t digest = w.digest();
        out.write(reinterpret_cast<const char*>(&digest), sizeof digest);
        if (!out) throw IoError("failed writing checkpoint: " + path.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot finalise checkpoint " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& path) {
    if (!fs::exists(path)) throw NotFoundError("checkpoint not found: " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open checkpoint: " + path.string());
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < sizeof kMagic + 4 + 8) throw FormatError("truncated checkpoint: " + path.string());
    if (std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) throw FormatError("not a checkpoint: " + path.string());
    std::uint32_t version = 0;
    std::memcpy(&version, buf.data() + sizeof kMagic, sizeof version);
    if (version != Checkpoint::kFormatVersion)
        throw VersionError("checkpoint format version " + std::to_string(version) + ", expected " +
                           std::to_string(Checkpoint::kFormatVersion));
    if (buf.size() < 8 + sizeof(std::uint64_t)) throw FormatError("truncated checkpoint: " + path.string());
    Fnv h;
    h.update(buf.data(), buf.size() - 8);
    std::uint64_t stored = 0;
    std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
    if (stored != h.value()) throw FormatError("checkpoint checksum mismatch (truncated or corrupt): " + path.string());

    Reader r(buf, path);
    char magic[8];
    r.raw(magic, sizeof magic);
    r.pod<std::uint32_t>();
    Checkpoint ckpt;
    ckpt.state.step = r.pod<std::int64_t>();
    try {
        ckpt.config = train_config_from_json(nlohmann::json::parse(r.str()));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint config unreadable: ") + e.what());
    }
    ckpt.state.opt_gen.t = static_cast<long>(r.pod<std::uint64_t>());
    ckpt.state.opt_disc.t = static_cast<long>(r.pod<std::uint64_t>());
    ckpt.state.opt_key.t = static_cast<long>(r.pod<std::uint64_t>());

    ckpt.state.nets = init_params(ckpt.config.arch, 0);
    std::map<std::string, ag::Var> by_name;
    for (const auto& p : ckpt.state.nets.params()) by_name[p.name] = p.var;
    const auto count = r.pod<std::uint32_t>();
    std::size_t loaded = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        auto [name, t] = r.tensor();
        if (name.rfind("adam.", 0) == 0) {
            const auto dot1 = name.find('.', 5);
            const std::string group = name.substr(5, dot1 - 5);
            const char slot = name[dot1 + 1];
            const std::string param = name.substr(dot1 + 3);
            AdamState* s = group == "gen" ? &ckpt.state.opt_gen
                           : group == "disc" ? &ckpt.state.opt_disc
                           : group == "key" ? &ckpt.state.opt_key
                                            : nullptr;
            if (!s || (slot != 'm' && slot != 'v')) throw FormatError("unknown optimizer entry " + name);
            (slot == 'm' ? s->m : s->v)[param] = std::move(t);
            continue;
        }
        auto it = by_name.find(name);
        if (it == by_name.end()) throw FormatError("unexpected parameter " + name + " in " + path.string());
        if (it->second->value.shape() != t.shape())
            throw FormatError("shape mismatch for " + name + " in " + path.string());
        it->second->value = std::move(t);
        ++loaded;
    }
    if (loaded != by_name.size()) throw FormatError("checkpoint is missing parameters: " + path.string());
    for (const auto& [name, var] : by_name) var->requires_grad = false;
    return ckpt;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const LossReport& r) {
    nlohmann::json j;
    j["step"] = r.step;
    j["key_correct"] = r.key_correct;
    for (const auto& [k, v] : r.terms) j[k] = v;
    for (const auto& [k, v] : r.aux) j[k] = v;
    j["total"] = r.total;
    return j;
}

Checkpoint train(const TrainConfig& cfg, TrainOptions options) {
    cfg.validate();
    Checkpoint ckpt;
    ckpt.config = cfg;
    if (options.resume) {
        ckpt.state = std::move(options.resume->state);
        if (ckpt.state.nets.arch.image_size != cfg.arch.image_size)
            throw ConfigError("resume checkpoint architecture differs from config");
    } else {
        ckpt.state = init_model_state(cfg);
    }
    set_requires_grad(ckpt.state.nets.params(), false);

    const fs::path log_path = cfg.out_dir / "loss_log.jsonl";
    std::ofstream log;
    if (options.write_files) {
        fs::create_directories(cfg.out_dir / "checkpoints");
        log.open(log_path, options.resume ? std::ios::app : std::ios::trunc);
        if (!log) throw IoError("cannot open loss log: " + log_path.string());
    }
    if (ckpt.state.step >= cfg.total_steps) {
        if (options.write_files) save_checkpoint(ckpt, cfg.out_dir / "final.ckpt");
        return ckpt;
    }

    const TrainingData data = TrainingData::open(cfg.train_data, cfg);
    while (ckpt.state.step < cfg.total_steps) {
        Rng rng(step_seed(cfg.seed, ckpt.state.step));
        const Batch batch = sample_batch(data, cfg, rng);
        const LossReport report = train_step(ckpt.state, cfg, batch, rng);
        if (options.write_files) {
            log << to_json(report).dump() << '\n';
            log.flush();
            if (cfg.checkpoint_interval > 0 && ckpt.state.step % cfg.checkpoint_interval == 0) {
                std::ostringstream name;
                name << "step_" << std::setw(7) << std::setfill('0') << ckpt.state.step << ".ckpt";
                save_checkpoint(ckpt, cfg.out_dir / "checkpoints" / name.str());
            }
        }
        if (options.on_step) options.on_step(report);
    }
    if (options.write_files) save_checkpoint(ckpt, cfg.out_dir / "final.ckpt");
    return ckpt;
}

}  // namespace egan
