#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>

#include "encryptgan/autograd.hpp"
#include "encryptgan/imagedata.hpp"
#include "encryptgan/networks.hpp"

// Training objectives. Every L1 term is a per-element mean so weights do not
// depend on resolution.
namespace egan::losses {

struct LossWeights {
    double cyc = 10.0;
    double adv = 1.0;
    double key = 1.0;
    double info = 10.0;

    // Throws ConfigError unless all finite, >= 0, and at least one positive.
    void validate() const;
};

// Key-network activations by layer index (1..6).
using LayerActivations = std::map<int, ag::Var>;
LayerActivations tapped(const KeyOutput& out);

ag::Var cycle_loss(const ag::Var& x, const ag::Var& x_rec, const ag::Var& y, const ag::Var& y_rec);

// mean (real - 1)^2 + mean fake^2
ag::Var lsgan_discriminator_loss(const ag::Var& scores_real, const ag::Var& scores_fake);
// mean (fake - 1)^2
ag::Var lsgan_generator_loss(const ag::Var& scores_fake);

// One side of the key-matching objective: sum over taps of mean |rec - orig|.
ag::Var key_matching_term(const FeatureTaps& taps, const LayerActivations& orig, const LayerActivations& rec);
ag::Var key_matching_loss(const FeatureTaps& taps, const LayerActivations& orig_x, const LayerActivations& rec_x,
                          const LayerActivations& orig_y, const LayerActivations& rec_y);

// One side of the information objective: mean |crop(recovered) - crop(composite)|
// at the composite's placement.
ag::Var information_term(const ag::Var& recovered, const ag::Var& composite, const Placement& placement);
ag::Var information_loss(const ag::Var& recovered_x, const ag::Var& composite_x, const Placement& placement_x,
                         const ag::Var& recovered_y, const ag::Var& composite_y, const Placement& placement_y);
double information_loss(const Image& recovered_x, const CompositeImage& composite_x, const Image& recovered_y,
                        const CompositeImage& composite_y);

// Correct key: w_cyc * cyc + w_adv * adv; incorrect key: w_adv * adv.
double security_loss(bool key_correct, double cyc, double adv_gen, const LossWeights& weights = {1, 1, 1, 1});

// Mean softmax cross-entropy over {X, Y} logits. Message labels are rejected.
ag::Var keygen_classification_loss(const ag::Var& logits, std::span<const DomainLabel> labels);

struct LossComponents {
    std::optional<double> cyc;  // absent on the incorrect-key branch
    double adv = 0.0;
    double key = 0.0;
    double info = 0.0;
};

struct LossReport {
    long step = 0;
    bool key_correct = true;
    std::map<std::string, double> terms;  // generator terms entering `total`
    std::map<std::string, double> aux;    // discriminator and key-network losses
    double total = 0.0;
};

// Security branch + w_key * key + w_info * info, with every active term logged.
LossReport total_generator_objective(const LossComponents& components, const LossWeights& weights, bool key_correct);

// The same composition over graph nodes; the cycle node may be null on the
// incorrect branch.
ag::Var total_generator_objective(const ag::Var& cyc, const ag::Var& adv, const ag::Var& key, const ag::Var& info,
                                  const LossWeights& weights, bool key_correct);

}  // namespace egan::losses
