#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "encryptgan/tensor.hpp"

// Minimal reverse-mode differentiation over NCHW float tensors. Every op
// returns a fresh node; nodes hold their parents so the graph lives exactly
// as long as the loss that references it.
namespace egan::ag {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // empty until something flows into it
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& grad_buffer();
    void accumulate(const Tensor& g);
    void zero_grad() { grad = Tensor(); }
};

// While alive, ops build no graph (inference, frozen fakes, evaluation).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};
bool grad_enabled();

Var constant(Tensor value);
Var parameter(Tensor value);

// Seeds d(root)/d(root) = 1 and propagates to every reachable leaf.
void backward(const Var& root);

// ---- layers -------------------------------------------------------------
// weight {cout, cin, k, k}; bias {1, cout, 1, 1}; zero padding.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
// weight {cin, cout, k, k}; output extent (in-1)*stride - 2*pad + k + output_pad.
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad, int output_pad);
Var reflection_pad(const Var& x, int pad);
// Per-sample, per-channel normalization without affine terms.
Var instance_norm(const Var& x, float eps = 1e-5f);
Var relu(const Var& x);
Var leaky_relu(const Var& x, float slope);
Var tanh(const Var& x);
// weight {out, in, 1, 1} over the flattened per-sample features.
Var linear(const Var& x, const Var& weight, const Var& bias);

// ---- structure ----------------------------------------------------------
Var add(const Var& a, const Var& b);
Var concat_channels(const Var& a, const Var& b);
// Corner-aligned bilinear resampling; a 1x1 source broadcasts.
Var resize_bilinear(const Var& x, int height, int width);
Var crop(const Var& x, int top, int left, int height, int width);

// ---- reductions to a {1,1,1,1} scalar -----------------------------------
Var mean_abs_diff(const Var& a, const Var& b);
Var mean_squared_to(const Var& a, float target);
// Two-way (or k-way) softmax cross-entropy, logits {n, k, 1, 1}.
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);
Var weighted_sum(std::span<const Var> terms, std::span<const double> weights);

float scalar(const Var& v);

// Plain tensor helpers reused outside the graph.
Tensor resize_bilinear(const Tensor& x, int height, int width);

}  // namespace egan::ag
