#include "encryptgan/metrics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "encryptgan/errors.hpp"
#include "encryptgan/keys.hpp"

namespace egan::metrics {

using nlohmann::json;

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (a.pixels().shape() != b.pixels().shape())
        throw ShapeError(std::string(what) + ": shapes differ " + a.pixels().shape().str() + " vs " +
                         b.pixels().shape().str());
}

std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> g(static_cast<std::size_t>(size));
    const double c = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        g[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
        sum += g[i];
    }
    for (double& v : g) v /= sum;
    return g;
}

// Separable valid-mode filter of one plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::vector<double>& g) {
    const int k = static_cast<int>(g.size());
    const int oh = h - k + 1, ow = w - k + 1;
    std::vector<double> tmp(std::size_t(h) * ow, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < k; ++i) s += g[i] * src[std::size_t(y) * w + x + i];
            tmp[std::size_t(y) * ow + x] = s;
        }
    std::vector<double> out(std::size_t(oh) * ow, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < k; ++i) s += g[i] * tmp[std::size_t(y + i) * ow + x];
            out[std::size_t(y) * ow + x] = s;
        }
    return out;
}

}  // namespace

double mse(const Image& a, const Image& b) {
    require_same_shape(a, b, "mse");
    const auto va = a.pixels().values();
    const auto vb = b.pixels().values();
    double s = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) {
        const double d = (double(va[i]) - double(vb[i])) * 0.5;
        s += d * d;
    }
    return s / double(va.size());
}

double rmse(const Image& a, const Image& b) { return std::sqrt(mse(a, b)); }

double psnr_from_mse(double m, double cap) {
    if (m <= 0.0) return cap;
    return std::min(cap, 10.0 * std::log10(1.0 / m));
}

double psnr(const Image& a, const Image& b, double cap) { return psnr_from_mse(mse(a, b), cap); }

double ssim(const Image& a, const Image& b) {
    require_same_shape(a, b, "ssim");
    constexpr int kWindow = 11;
    const int h = a.height(), w = a.width();
    if (h < kWindow || w < kWindow) throw ArgumentError("ssim needs images of at least 11x11");
    static const std::vector<double> g = gaussian_window(kWindow, 1.5);
    const double c1 = (0.01 * 1.0) * (0.01 * 1.0);
    const double c2 = (0.03 * 1.0) * (0.03 * 1.0);
    const std::size_t plane = std::size_t(h) * w;
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        std::vector<double> pa(plane), pb(plane), aa(plane), bb(plane), ab(plane);
        for (std::size_t i = 0; i < plane; ++i) {
            pa[i] = (a.pixels()[c * plane + i] + 1.0) * 0.5;
            pb[i] = (b.pixels()[c * plane + i] + 1.0) * 0.5;
            aa[i] = pa[i] * pa[i];
            bb[i] = pb[i] * pb[i];
            ab[i] = pa[i] * pb[i];
        }
        const auto ma = filter_valid(pa, h, w, g), mb = filter_valid(pb, h, w, g);
        const auto saa = filter_valid(aa, h, w, g), sbb = filter_valid(bb, h, w, g), sab = filter_valid(ab, h, w, g);
        double sum = 0.0;
        for (std::size_t i = 0; i < ma.size(); ++i) {
            const double va = saa[i] - ma[i] * ma[i];
            const double vb = sbb[i] - mb[i] * mb[i];
            const double cov = sab[i] - ma[i] * mb[i];
            sum += ((2 * ma[i] * mb[i] + c1) * (2 * cov + c2)) /
                   ((ma[i] * ma[i] + mb[i] * mb[i] + c1) * (va + vb + c2));
        }
        total += sum / double(ma.size());
    }
    return total / 3.0;
}

// ---------------------------------------------------------------------------

KeyFeatureBackend::KeyFeatureBackend(const KeyGenerator& k, Size2 network_size, FeatureTaps taps)
    : k_(k), size_(network_size), taps_(std::move(taps)) {}

Image KeyFeatureBackend::fit(const Image& img) const {
    if (img.size() == size_) return img;
    ag::NoGradGuard guard;
    return image_from_unclamped(ag::resize_bilinear(img.pixels(), size_.height, size_.width));
}

std::vector<Tensor> KeyFeatureBackend::layers(const Image& img) const {
    const KeyForward f = keygen_forward(k_, fit(img));
    std::vector<Tensor> out;
    for (int layer : taps_.layers()) out.push_back(f.activations[layer - 1]);
    return out;
}

std::vector<double> KeyFeatureBackend::embedding(const Image& img) const {
    const KeyForward f = keygen_forward(k_, fit(img));
    const Tensor& l6 = f.activations[5];
    const Shape s = l6.shape();
    std::vector<double> v(static_cast<std::size_t>(s.c), 0.0);
    for (int c = 0; c < s.c; ++c) {
        double sum = 0.0;
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) sum += l6.at(0, c, y, x);
        v[c] = sum / double(s.plane());
    }
    return v;
}

double perceptual_distance(const FeatureBackend* backend, const Image& a, const Image& b) {
    if (!backend) throw ConfigError("perceptual distance backend unavailable");
    require_same_shape(a, b, "perceptual_distance");
    const auto fa = backend->layers(a);
    const auto fb = backend->layers(b);
    if (fa.empty() || fa.size() != fb.size()) throw ConfigError("backend returned no comparable layers");
    double total = 0.0;
    for (std::size_t l = 0; l < fa.size(); ++l) {
        const Shape s = fa[l].shape();
        double layer_sum = 0.0;
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) {
                double na = 0.0, nb = 0.0;
                for (int c = 0; c < s.c; ++c) {
                    na += double(fa[l].at(0, c, y, x)) * fa[l].at(0, c, y, x);
                    nb += double(fb[l].at(0, c, y, x)) * fb[l].at(0, c, y, x);
                }
                na = std::sqrt(na) + 1e-10;
                nb = std::sqrt(nb) + 1e-10;
                double d = 0.0;
                for (int c = 0; c < s.c; ++c) {
                    const double diff = fa[l].at(0, c, y, x) / na - fb[l].at(0, c, y, x) / nb;
                    d += diff * diff;
                }
                layer_sum += d;
            }
        total += layer_sum / double(s.plane());
    }
    return total / double(fa.size());
}

double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
    if (a.size() < 2 || b.size() < 2) throw ArgumentError("frechet distance needs at least two vectors per set");
    const std::size_t dim = a.front().size();
    if (dim == 0) throw ShapeError("frechet distance on empty vectors");
    auto moments = [dim](const FeatureSet& s, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(s.size()), static_cast<Eigen::Index>(dim));
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i].size() != dim) throw ShapeError("frechet distance: feature dimensions differ");
            for (std::size_t j = 0; j < dim; ++j) m(Eigen::Index(i), Eigen::Index(j)) = s[i][j];
        }
        mu = m.colwise().mean().transpose();
        const Eigen::MatrixXd centered = m.rowwise() - mu.transpose();
        cov = (centered.transpose() * centered) / double(s.size() - 1);
    };
    Eigen::VectorXd mu_a, mu_b;
    Eigen::MatrixXd cov_a, cov_b;
    moments(a, mu_a, cov_a);
    moments(b, mu_b, cov_b);

    // Tr((Ca Cb)^1/2) = Tr((Ca^1/2 Cb Ca^1/2)^1/2), both factors symmetric PSD.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(cov_a);
    if (ea.info() != Eigen::Success) throw NumericalError("frechet", "covariance eigendecomposition failed");
    const Eigen::VectorXd la = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd sqrt_a = ea.eigenvectors() * la.asDiagonal() * ea.eigenvectors().transpose();
    Eigen::MatrixXd inner = sqrt_a * cov_b * sqrt_a;
    inner = 0.5 * (inner + inner.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ei(inner, Eigen::EigenvaluesOnly);
    if (ei.info() != Eigen::Success) throw NumericalError("frechet", "matrix square root did not converge");
    const double tr_sqrt = ei.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double d = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
    if (!std::isfinite(d)) throw NumericalError("frechet", "non-finite Frechet distance");
    return std::max(d, 0.0);
}

PairScore encryption_score(const FeatureBackend* backend, const Image& encrypted, const CompositeImage& composite) {
    require_inside(composite.placement, encrypted.size(), "encryption_score");
    const Image e = crop_region(encrypted, composite.placement);
    const Image c = crop_region(composite.image, composite.placement);
    return {perceptual_distance(backend, e, c), mse(e, c)};
}

// ---------------------------------------------------------------------------

Pipeline make_pipeline(const Networks& nets) {
    Pipeline p;
    const KeyGenerator k = nets.K;
    const Generator f = nets.F;
    const Generator g = nets.G;
    p.key = [k](const Image& img) { return keygen_forward(k, img).key; };
    p.encrypt = [f](const Image& composite, const Image& pub) { return egan::encrypt(f, composite, pub); };
    p.decrypt = [g](const Image& enc, const Image& priv) { return egan::decrypt(g, enc, priv); };
    p.backend = std::make_shared<KeyFeatureBackend>(nets.K, nets.arch.image_size, nets.arch.key_tap_layers);
    return p;
}

CompositeImage Trial::composite() const { return paste_message(cover, message, placement, id); }

std::vector<Trial> make_trials(const TrialSource& data, int count, int wrong_keys, std::uint64_t seed) {
    if (!data.x || !data.y || !data.messages) throw ConfigError("trial source incomplete");
    if (data.x->size() == 0 || data.y->size() == 0 || data.messages->size() == 0)
        throw ConfigError("evaluation set is empty");
    if (count < 1) throw ArgumentError("trial count must be >= 1");
    if (wrong_keys < 0) throw ArgumentError("wrong key count must be >= 0");
    if (wrong_keys > 0 && data.x->size() < 2) throw ConfigError("wrong keys need at least two cover images");
    Rng rng(seed);
    const auto order = data.x->order(seed);
    auto pick = [&rng](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
    std::vector<Trial> trials;
    for (int i = 0; i < count; ++i) {
        Trial t;
        const std::size_t ci = order[std::size_t(i) % order.size()];
        const std::size_t mi = pick(data.messages->size());
        t.cover = data.x->at(ci);
        t.disguise = data.y->at(pick(data.y->size()));
        t.message = data.messages->at(mi);
        t.placement = sample_placement(t.cover.size(), t.message.size(), rng);
        std::ostringstream id;
        id << std::setw(3) << std::setfill('0') << i << ':' << data.x->id(ci) << '+' << data.messages->id(mi);
        t.id = id.str();
        for (int k = 0; k < wrong_keys; ++k) {
            std::size_t wi = pick(data.x->size() - 1);
            if (wi >= ci) ++wi;
            t.wrong_covers.push_back(data.x->at(wi));
        }
        trials.push_back(std::move(t));
    }
    return trials;
}

PairScore security_score(const Pipeline& pipe, const std::vector<Trial>& trials, int n_wrong_keys) {
    if (n_wrong_keys < 1) throw ArgumentError("security score needs at least one wrong key");
    if (trials.empty()) throw ConfigError("security score on an empty trial set");
    PairScore s;
    std::size_t n = 0;
    for (const Trial& t : trials) {
        if (t.wrong_covers.size() < std::size_t(n_wrong_keys))
            throw ArgumentError("trial " + t.id + " carries fewer wrong keys than requested");
        const Image enc = pipe.encrypt(t.composite().image, pipe.key(t.disguise));
        for (int k = 0; k < n_wrong_keys; ++k) {
            const Image dec = pipe.decrypt(enc, pipe.key(t.wrong_covers[k]));
            const Image crop = crop_region(dec, t.placement);
            s.lpips += perceptual_distance(pipe.backend.get(), crop, t.message);
            s.mse += mse(crop, t.message);
            ++n;
        }
    }
    s.lpips /= double(n);
    s.mse /= double(n);
    return s;
}

std::map<std::string, std::map<std::string, double>> aggregate_records(const std::vector<ImageRecord>& records) {
    std::map<std::string, std::map<std::string, double>> agg;
    std::map<std::string, std::size_t> counts;
    for (const auto& r : records) {
        auto& m = agg[r.region];
        m["mse"] += r.mse;
        m["rmse"] += r.rmse;
        m["psnr"] += r.psnr;
        m["ssim"] += r.ssim;
        m["lpips"] += r.lpips;
        ++counts[r.region];
    }
    for (auto& [region, m] : agg)
        for (auto& [name, v] : m) v /= double(counts[region]);
    return agg;
}

namespace {

ImageRecord record(const std::string& id, const char* region, const Image& a, const Image& b,
                   const FeatureBackend* backend) {
    ImageRecord r;
    r.id = id;
    r.region = region;
    r.mse = mse(a, b);
    r.rmse = std::sqrt(r.mse);
    r.psnr = psnr_from_mse(r.mse);
    r.ssim = ssim(a, b);
    r.lpips = perceptual_distance(backend, a, b);
    return r;
}

}  // namespace

MetricsReport evaluate(const Pipeline& pipe, const std::vector<Trial>& trials, const EvalOptions& options) {
    if (trials.empty()) throw ConfigError("evaluation set is empty");
    MetricsReport report;
    report.trials = trials.size();
    report.wrong_keys = static_cast<std::size_t>(std::max(options.wrong_keys, 0));
    report.config = options.config;
    FeatureSet enc_features, disguise_features;
    for (const Trial& t : trials) {
        const CompositeImage comp = t.composite();
        const Image pub = pipe.key(t.disguise);
        const Image priv = pipe.key(t.cover);
        const Image enc = pipe.encrypt(comp.image, pub);
        const Image dec = pipe.decrypt(enc, priv);
        report.records.push_back(
            record(t.id, "message_region", crop_region(dec, t.placement), t.message, pipe.backend.get()));
        report.records.push_back(record(t.id, "whole", dec, comp.image, pipe.backend.get()));
        const PairScore e = encryption_score(pipe.backend.get(), enc, comp);
        report.encryption.lpips += e.lpips / double(trials.size());
        report.encryption.mse += e.mse / double(trials.size());
        enc_features.push_back(pipe.backend->embedding(enc));
        disguise_features.push_back(pipe.backend->embedding(t.disguise));
    }
    report.aggregate = aggregate_records(report.records);
    if (options.wrong_keys > 0) report.security = security_score(pipe, trials, options.wrong_keys);
    report.frechet = trials.size() >= 2 ? frechet_distance(enc_features, disguise_features) : 0.0;
    return report;
}

json to_json(const MetricsReport& r) {
    json rows = json::array();
    for (const auto& rec : r.records)
        rows.push_back({{"id", rec.id},
                        {"region", rec.region},
                        {"mse", rec.mse},
                        {"rmse", rec.rmse},
                        {"psnr", rec.psnr},
                        {"ssim", rec.ssim},
                        {"lpips", rec.lpips}});
    return {{"records", rows},
            {"aggregate", r.aggregate},
            {"encryption", {{"lpips", r.encryption.lpips}, {"mse", r.encryption.mse}}},
            {"security", {{"lpips", r.security.lpips}, {"mse", r.security.mse}}},
            {"frechet", r.frechet},
            {"counts", {{"trials", r.trials}, {"wrong_keys", r.wrong_keys}}},
            {"config", r.config}};
}

void write_csv(const MetricsReport& r, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << std::setprecision(10);
    out << "id,region,mse,rmse,psnr,ssim,lpips\n";
    for (const auto& rec : r.records)
        out << rec.id << ',' << rec.region << ',' << rec.mse << ',' << rec.rmse << ',' << rec.psnr << ',' << rec.ssim
            << ',' << rec.lpips << '\n';
    for (const auto& [region, m] : r.aggregate)
        out << "mean," << region << ',' << m.at("mse") << ',' << m.at("rmse") << ',' << m.at("psnr") << ','
            << m.at("ssim") << ',' << m.at("lpips") << '\n';
}

}  // namespace egan::metrics
