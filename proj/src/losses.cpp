#include "encryptgan/losses.hpp"

#include <cmath>
#include <vector>

#include "encryptgan/errors.hpp"

namespace egan::losses {

void LossWeights::validate() const {
    const double all[] = {cyc, adv, key, info};
    bool any = false;
    for (double w : all) {
        if (!std::isfinite(w) || w < 0.0) throw ConfigError("loss weights must be finite and >= 0");
        any = any || w > 0.0;
    }
    if (!any) throw ConfigError("at least one loss weight must be positive");
}

LayerActivations tapped(const KeyOutput& out) {
    LayerActivations acts;
    for (int i = 0; i < 6; ++i) acts[i + 1] = out.layers[i];
    return acts;
}

ag::Var cycle_loss(const ag::Var& x, const ag::Var& x_rec, const ag::Var& y, const ag::Var& y_rec) {
    const ag::Var terms[] = {ag::mean_abs_diff(x_rec, x), ag::mean_abs_diff(y_rec, y)};
    const double ones[] = {1.0, 1.0};
    return ag::weighted_sum(terms, ones);
}

ag::Var lsgan_discriminator_loss(const ag::Var& scores_real, const ag::Var& scores_fake) {
    const ag::Var terms[] = {ag::mean_squared_to(scores_real, 1.0f), ag::mean_squared_to(scores_fake, 0.0f)};
    const double ones[] = {1.0, 1.0};
    return ag::weighted_sum(terms, ones);
}

ag::Var lsgan_generator_loss(const ag::Var& scores_fake) { return ag::mean_squared_to(scores_fake, 1.0f); }

ag::Var key_matching_term(const FeatureTaps& taps, const LayerActivations& orig, const LayerActivations& rec) {
    std::vector<ag::Var> terms;
    for (int layer : taps.layers()) {
        auto o = orig.find(layer);
        auto r = rec.find(layer);
        if (o == orig.end() || r == rec.end() || !o->second || !r->second)
            throw ArgumentError("key_matching_loss: missing activations for tap L" + std::to_string(layer));
        terms.push_back(ag::mean_abs_diff(r->second, o->second));
    }
    const std::vector<double> ones(terms.size(), 1.0);
    return ag::weighted_sum(terms, ones);
}

ag::Var key_matching_loss(const FeatureTaps& taps, const LayerActivations& orig_x, const LayerActivations& rec_x,
                          const LayerActivations& orig_y, const LayerActivations& rec_y) {
    const ag::Var terms[] = {key_matching_term(taps, orig_x, rec_x), key_matching_term(taps, orig_y, rec_y)};
    const double ones[] = {1.0, 1.0};
    return ag::weighted_sum(terms, ones);
}

ag::Var information_term(const ag::Var& recovered, const ag::Var& composite, const Placement& placement) {
    const Shape rs = recovered->value.shape();
    if (rs != composite->value.shape()) throw ShapeError("information_loss: recovered/composite shape mismatch");
    require_inside(placement, {rs.h, rs.w}, "information_loss");
    return ag::mean_abs_diff(ag::crop(recovered, placement.top, placement.left, placement.height, placement.width),
                             ag::crop(composite, placement.top, placement.left, placement.height, placement.width));
}

ag::Var information_loss(const ag::Var& recovered_x, const ag::Var& composite_x, const Placement& placement_x,
                         const ag::Var& recovered_y, const ag::Var& composite_y, const Placement& placement_y) {
    const ag::Var terms[] = {information_term(recovered_x, composite_x, placement_x),
                             information_term(recovered_y, composite_y, placement_y)};
    const double ones[] = {1.0, 1.0};
    return ag::weighted_sum(terms, ones);
}

double information_loss(const Image& recovered_x, const CompositeImage& composite_x, const Image& recovered_y,
                        const CompositeImage& composite_y) {
    ag::NoGradGuard guard;
    return ag::scalar(information_loss(ag::constant(recovered_x.pixels()), ag::constant(composite_x.image.pixels()),
                                       composite_x.placement, ag::constant(recovered_y.pixels()),
                                       ag::constant(composite_y.image.pixels()), composite_y.placement));
}

double security_loss(bool key_correct, double cyc, double adv_gen, const LossWeights& weights) {
    return key_correct ? weights.cyc * cyc + weights.adv * adv_gen : weights.adv * adv_gen;
}

ag::Var keygen_classification_loss(const ag::Var& logits, std::span<const DomainLabel> labels) {
    if (logits->value.shape().sample() != 2) throw ShapeError("keygen_classification_loss: expects 2 logits per sample");
    std::vector<int> ids;
    for (DomainLabel l : labels) {
        if (l != DomainLabel::X && l != DomainLabel::Y)
            throw ArgumentError("keygen_classification_loss: label must be X or Y");
        ids.push_back(static_cast<int>(l));
    }
    return ag::softmax_cross_entropy(logits, ids);
}

LossReport total_generator_objective(const LossComponents& c, const LossWeights& weights, bool key_correct) {
    LossReport r;
    r.key_correct = key_correct;
    if (key_correct) {
        const double cyc = c.cyc.value_or(0.0);
        r.terms["cycle"] = cyc;
    }
    r.terms["adversarial"] = c.adv;
    r.terms["key_matching"] = c.key;
    r.terms["information"] = c.info;
    r.total = security_loss(key_correct, c.cyc.value_or(0.0), c.adv, weights) + weights.key * c.key +
              weights.info * c.info;
    return r;
}

ag::Var total_generator_objective(const ag::Var& cyc, const ag::Var& adv, const ag::Var& key, const ag::Var& info,
                                  const LossWeights& weights, bool key_correct) {
    std::vector<ag::Var> terms;
    std::vector<double> w;
    if (key_correct) {
        if (!cyc) throw ArgumentError("correct-key objective requires a cycle term");
        terms.push_back(cyc);
        w.push_back(weights.cyc);
    }
    terms.push_back(adv);
    w.push_back(weights.adv);
    terms.push_back(key);
    w.push_back(weights.key);
    terms.push_back(info);
    w.push_back(weights.info);
    return ag::weighted_sum(terms, w);
}

}  // namespace egan::losses
