#include "encryptgan/autograd.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "encryptgan/errors.hpp"

namespace egan::ag {

namespace {

thread_local bool g_grad_enabled = true;

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) needs = needs || (p && p->requires_grad);
    }
    if (needs) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward_fn = std::move(fn);
    }
    return node;
}

bool wants(const Var& v) { return v && v->requires_grad; }

int conv_extent(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

// col is {C*k*k, oh*ow} for an input plane stack {C, h, w}.
void im2col(const float* x, int channels, int h, int w, int k, int stride, int pad, int oh, int ow, float* col) {
    for (int c = 0; c < channels; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                float* dst = col + ((std::int64_t(c) * k + ky) * k + kx) * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    float* row = dst + std::int64_t(oy) * ow;
                    if (iy < 0 || iy >= h) {
                        std::fill(row, row + ow, 0.0f);
                        continue;
                    }
                    const float* src = x + (std::int64_t(c) * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        row[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: accumulates into x.
void col2im(const float* col, int channels, int h, int w, int k, int stride, int pad, int oh, int ow, float* x) {
    for (int c = 0; c < channels; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const float* src = col + ((std::int64_t(c) * k + ky) * k + kx) * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    float* dst = x + (std::int64_t(c) * h + iy) * w;
                    const float* row = src + std::int64_t(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst[ix] += row[ox];
                    }
                }
            }
        }
    }
}

void require_scalar_shape(const Tensor& t, const char* what) {
    if (t.numel() != 1) throw ShapeError(std::string(what) + ": expected scalar, got " + t.shape().str());
}

Tensor scalar_tensor(double v) { return Tensor(Shape{1, 1, 1, 1}, static_cast<float>(v)); }

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor& Node::grad_buffer() {
    if (grad.empty() && value.numel() > 0) grad = Tensor(value.shape(), 0.0f);
    return grad;
}

void Node::accumulate(const Tensor& g) {
    Tensor& buf = grad_buffer();
    const std::int64_t n = buf.numel();
    float* dst = buf.data();
    const float* src = g.data();
    for (std::int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

Var constant(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return node;
}

Var parameter(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    return node;
}

void backward(const Var& root) {
    require_scalar_shape(root->value, "backward");
    if (!root->requires_grad) return;

    // Iterative post-order DFS; reversed it is a valid topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->grad_buffer()[0] += 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
    // Interior grads are not needed after the sweep; leaves keep theirs.
    for (Node* node : order) {
        if (node->backward_fn) node->grad = Tensor();
    }
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
    const Shape xs = x->value.shape();
    const Shape ws = weight->value.shape();
    if (ws.h != ws.w) throw ShapeError("conv2d: non-square kernel " + ws.str());
    if (xs.c != ws.c) throw ShapeError("conv2d: input channels " + xs.str() + " vs weight " + ws.str());
    const int k = ws.h;
    const int oh = conv_extent(xs.h, k, stride, pad);
    const int ow = conv_extent(xs.w, k, stride, pad);
    if (oh <= 0 || ow <= 0 || xs.h + 2 * pad < k || xs.w + 2 * pad < k)
        throw ShapeError("conv2d: input " + xs.str() + " too small for kernel " + std::to_string(k));
    const int cout = ws.n;
    const int kdim = xs.c * k * k;
    const int spatial = oh * ow;

    Tensor out(Shape{xs.n, cout, oh, ow});
    const bool keep_cols = g_grad_enabled && (wants(x) || wants(weight) || wants(bias));
    auto cols = std::make_shared<std::vector<float>>(
        static_cast<std::size_t>(kdim) * spatial * (keep_cols ? xs.n : 1));

    for (int n = 0; n < xs.n; ++n) {
        float* col = cols->data() + (keep_cols ? std::int64_t(n) * kdim * spatial : 0);
        im2col(x->value.data() + n * xs.sample(), xs.c, xs.h, xs.w, k, stride, pad, oh, ow, col);
        float* y = out.data() + std::int64_t(n) * cout * spatial;
        for (int c = 0; c < cout; ++c) std::fill(y + std::int64_t(c) * spatial, y + std::int64_t(c + 1) * spatial, bias->value[c]);
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, cout, spatial, kdim, 1.0f, weight->value.data(), kdim,
                    col, spatial, 1.0f, y, spatial);
    }

    return make_node(std::move(out), {x, weight, bias}, [=](Node& self) {
        const float* dy_all = self.grad.data();
        std::vector<float> dcol;
        if (wants(x)) dcol.resize(static_cast<std::size_t>(kdim) * spatial);
        for (int n = 0; n < xs.n; ++n) {
            const float* dy = dy_all + std::int64_t(n) * cout * spatial;
            const float* col = cols->data() + std::int64_t(n) * kdim * spatial;
            if (wants(weight))
                cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, cout, kdim, spatial, 1.0f, dy, spatial, col,
                            spatial, 1.0f, weight->grad_buffer().data(), kdim);
            if (wants(bias)) {
                float* db = bias->grad_buffer().data();
                for (int c = 0; c < cout; ++c) {
                    double s = 0.0;
                    for (int i = 0; i < spatial; ++i) s += dy[std::int64_t(c) * spatial + i];
                    db[c] += static_cast<float>(s);
                }
            }
            if (wants(x)) {
                cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, kdim, spatial, cout, 1.0f, weight->value.data(),
                            kdim, dy, spatial, 0.0f, dcol.data(), spatial);
                col2im(dcol.data(), xs.c, xs.h, xs.w, k, stride, pad, oh, ow,
                       x->grad_buffer().data() + n * xs.sample());
            }
        }
    });
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad, int output_pad) {
    const Shape xs = x->value.shape();
    const Shape ws = weight->value.shape();
    if (ws.h != ws.w) throw ShapeError("conv_transpose2d: non-square kernel " + ws.str());
    if (xs.c != ws.n) throw ShapeError("conv_transpose2d: input " + xs.str() + " vs weight " + ws.str());
    const int k = ws.h;
    const int cout = ws.c;
    const int oh = (xs.h - 1) * stride - 2 * pad + k + output_pad;
    const int ow = (xs.w - 1) * stride - 2 * pad + k + output_pad;
    if (oh <= 0 || ow <= 0) throw ShapeError("conv_transpose2d: empty output");
    const int kdim = cout * k * k;
    const int spatial = xs.h * xs.w;

    Tensor out(Shape{xs.n, cout, oh, ow});
    std::vector<float> col(static_cast<std::size_t>(kdim) * spatial);
    for (int n = 0; n < xs.n; ++n) {
        cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, kdim, spatial, xs.c, 1.0f, weight->value.data(), kdim,
                    x->value.data() + n * xs.sample(), spatial, 0.0f, col.data(), spatial);
        float* y = out.data() + std::int64_t(n) * cout * oh * ow;
        col2im(col.data(), cout, oh, ow, k, stride, pad, xs.h, xs.w, y);
        for (int c = 0; c < cout; ++c) {
            float* plane = y + std::int64_t(c) * oh * ow;
            const float b = bias->value[c];
            for (int i = 0; i < oh * ow; ++i) plane[i] += b;
        }
    }

    return make_node(std::move(out), {x, weight, bias}, [=](Node& self) {
        std::vector<float> dcol(static_cast<std::size_t>(kdim) * spatial);
        for (int n = 0; n < xs.n; ++n) {
            const float* dy = self.grad.data() + std::int64_t(n) * cout * oh * ow;
            im2col(dy, cout, oh, ow, k, stride, pad, xs.h, xs.w, dcol.data());
            const float* xn = x->value.data() + n * xs.sample();
            if (wants(weight))
                cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, xs.c, kdim, spatial, 1.0f, xn, spatial,
                            dcol.data(), spatial, 1.0f, weight->grad_buffer().data(), kdim);
            if (wants(x))
                cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, xs.c, spatial, kdim, 1.0f,
                            weight->value.data(), kdim, dcol.data(), spatial, 1.0f,
                            x->grad_buffer().data() + n * xs.sample(), spatial);
            if (wants(bias)) {
                float* db = bias->grad_buffer().data();
                for (int c = 0; c < cout; ++c) {
                    double s = 0.0;
                    for (int i = 0; i < oh * ow; ++i) s += dy[std::int64_t(c) * oh * ow + i];
                    db[c] += static_cast<float>(s);
                }
            }
        }
    });
}

Var reflection_pad(const Var& x, int pad) {
    const Shape xs = x->value.shape();
    if (pad < 0 || pad >= xs.h || pad >= xs.w) throw ShapeError("reflection_pad: pad must be below spatial extent");
    const int oh = xs.h + 2 * pad;
    const int ow = xs.w + 2 * pad;
    auto reflect = [](int i, int extent) {
        if (i < 0) return -i;
        if (i >= extent) return 2 * (extent - 1) - i;
        return i;
    };
    Tensor out(Shape{xs.n, xs.c, oh, ow});
    const int planes = xs.n * xs.c;
    for (int p = 0; p < planes; ++p) {
        const float* src = x->value.data() + std::int64_t(p) * xs.h * xs.w;
        float* dst = out.data() + std::int64_t(p) * oh * ow;
        for (int y = 0; y < oh; ++y) {
            const int sy = reflect(y - pad, xs.h);
            for (int xx = 0; xx < ow; ++xx) dst[y * ow + xx] = src[sy * xs.w + reflect(xx - pad, xs.w)];
        }
    }
    return make_node(std::move(out), {x}, [=](Node& self) {
        Tensor& gx = x->grad_buffer();
        for (int p = 0; p < planes; ++p) {
            const float* dy = self.grad.data() + std::int64_t(p) * oh * ow;
            float* dx = gx.data() + std::int64_t(p) * xs.h * xs.w;
            for (int y = 0; y < oh; ++y) {
                const int sy = reflect(y - pad, xs.h);
                for (int xx = 0; xx < ow; ++xx) dx[sy * xs.w + reflect(xx - pad, xs.w)] += dy[y * ow + xx];
            }
        }
    });
}

Var instance_norm(const Var& x, float eps) {
    const Shape xs = x->value.shape();
    const int planes = xs.n * xs.c;
    const std::int64_t area = xs.plane();
    Tensor out(xs);
    auto inv_std = std::make_shared<std::vector<float>>(static_cast<std::size_t>(planes));
    for (int p = 0; p < planes; ++p) {
        const float* src = x->value.data() + p * area;
        double mean = 0.0;
        for (std::int64_t i = 0; i < area; ++i) mean += src[i];
        mean /= double(area);
        double var = 0.0;
        for (std::int64_t i = 0; i < area; ++i) var += (src[i] - mean) * (src[i] - mean);
        var /= double(area);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[p] = static_cast<float>(is);
        float* dst = out.data() + p * area;
        for (std::int64_t i = 0; i < area; ++i) dst[i] = static_cast<float>((src[i] - mean) * is);
    }
    auto node = make_node(std::move(out), {x}, nullptr);
    if (node->requires_grad) {
        Node* raw = node.get();
        node->backward_fn = [=](Node& self) {
            Tensor& gx = x->grad_buffer();
            for (int p = 0; p < planes; ++p) {
                const float* dy = self.grad.data() + p * area;
                const float* y = raw->value.data() + p * area;
                double mdy = 0.0, mdyy = 0.0;
                for (std::int64_t i = 0; i < area; ++i) {
                    mdy += dy[i];
                    mdyy += double(dy[i]) * y[i];
                }
                mdy /= double(area);
                mdyy /= double(area);
                float* dx = gx.data() + p * area;
                const double is = (*inv_std)[p];
                for (std::int64_t i = 0; i < area; ++i) dx[i] += static_cast<float>(is * (dy[i] - mdy - y[i] * mdyy));
            }
        };
    }
    return node;
}

Var relu(const Var& x) { return leaky_relu(x, 0.0f); }

Var leaky_relu(const Var& x, float slope) {
    Tensor out(x->value.shape());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        const float v = x->value[i];
        out[i] = v > 0.0f ? v : slope * v;
    }
    return make_node(std::move(out), {x}, [=](Node& self) {
        float* dx = x->grad_buffer().data();
        for (std::int64_t i = 0; i < n; ++i) dx[i] += x->value[i] > 0.0f ? self.grad[i] : slope * self.grad[i];
    });
}

Var tanh(const Var& x) {
    Tensor out(x->value.shape());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = std::tanh(x->value[i]);
    auto node = make_node(std::move(out), {x}, nullptr);
    if (node->requires_grad) {
        Node* raw = node.get();
        node->backward_fn = [=](Node& self) {
            float* dx = x->grad_buffer().data();
            for (std::int64_t i = 0; i < n; ++i) {
                const float y = raw->value[i];
                dx[i] += self.grad[i] * (1.0f - y * y);
            }
        };
    }
    return node;
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
    const Shape xs = x->value.shape();
    const Shape ws = weight->value.shape();
    const int features = static_cast<int>(xs.sample());
    if (ws.c * ws.h * ws.w != features) throw ShapeError("linear: features " + xs.str() + " vs weight " + ws.str());
    const int outs = ws.n;
    Tensor out(Shape{xs.n, outs, 1, 1});
    for (int n = 0; n < xs.n; ++n)
        for (int o = 0; o < outs; ++o) out[n * outs + o] = bias->value[o];
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, xs.n, outs, features, 1.0f, x->value.data(), features,
                weight->value.data(), features, 1.0f, out.data(), outs);
    return make_node(std::move(out), {x, weight, bias}, [=](Node& self) {
        if (wants(weight))
            cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, outs, features, xs.n, 1.0f, self.grad.data(), outs,
                        x->value.data(), features, 1.0f, weight->grad_buffer().data(), features);
        if (wants(x))
            cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, xs.n, features, outs, 1.0f, self.grad.data(), outs,
                        weight->value.data(), features, 1.0f, x->grad_buffer().data(), features);
        if (wants(bias)) {
            float* db = bias->grad_buffer().data();
            for (int n = 0; n < xs.n; ++n)
                for (int o = 0; o < outs; ++o) db[o] += self.grad[n * outs + o];
        }
    });
}

Var add(const Var& a, const Var& b) {
    if (a->value.shape() != b->value.shape())
        throw ShapeError("add: " + a->value.shape().str() + " vs " + b->value.shape().str());
    Tensor out(a->value.shape());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = a->value[i] + b->value[i];
    return make_node(std::move(out), {a, b}, [=](Node& self) {
        if (wants(a)) a->accumulate(self.grad);
        if (wants(b)) b->accumulate(self.grad);
    });
}

Var concat_channels(const Var& a, const Var& b) {
    const Shape as = a->value.shape();
    const Shape bs = b->value.shape();
    if (as.n != bs.n || as.h != bs.h || as.w != bs.w)
        throw ShapeError("concat_channels: " + as.str() + " vs " + bs.str());
    Tensor out(Shape{as.n, as.c + bs.c, as.h, as.w});
    for (int n = 0; n < as.n; ++n) {
        float* dst = out.data() + n * out.shape().sample();
        std::memcpy(dst, a->value.data() + n * as.sample(), sizeof(float) * as.sample());
        std::memcpy(dst + as.sample(), b->value.data() + n * bs.sample(), sizeof(float) * bs.sample());
    }
    return make_node(std::move(out), {a, b}, [=](Node& self) {
        for (int n = 0; n < as.n; ++n) {
            const float* src = self.grad.data() + n * (as.sample() + bs.sample());
            if (wants(a)) {
                float* da = a->grad_buffer().data() + n * as.sample();
                for (std::int64_t i = 0; i < as.sample(); ++i) da[i] += src[i];
            }
            if (wants(b)) {
                float* db = b->grad_buffer().data() + n * bs.sample();
                for (std::int64_t i = 0; i < bs.sample(); ++i) db[i] += src[as.sample() + i];
            }
        }
    });
}

namespace {

struct Tap {
    int lo, hi;
    float frac;
};

// Corner-aligned source coordinate for each destination index.
std::vector<Tap> bilinear_taps(int src, int dst) {
    std::vector<Tap> taps(static_cast<std::size_t>(dst));
    for (int i = 0; i < dst; ++i) {
        const double pos = (src == 1 || dst == 1) ? 0.0 : double(i) * (src - 1) / double(dst - 1);
        int lo = static_cast<int>(std::floor(pos));
        lo = std::clamp(lo, 0, src - 1);
        const int hi = std::min(lo + 1, src - 1);
        taps[i] = Tap{lo, hi, static_cast<float>(pos - lo)};
    }
    return taps;
}

}  // namespace

Tensor resize_bilinear(const Tensor& x, int height, int width) {
    const Shape xs = x.shape();
    if (height <= 0 || width <= 0) throw ShapeError("resize_bilinear: non-positive target");
    if (xs.h == height && xs.w == width) return x;
    const auto ty = bilinear_taps(xs.h, height);
    const auto tx = bilinear_taps(xs.w, width);
    Tensor out(Shape{xs.n, xs.c, height, width});
    const int planes = xs.n * xs.c;
    for (int p = 0; p < planes; ++p) {
        const float* src = x.data() + std::int64_t(p) * xs.h * xs.w;
        float* dst = out.data() + std::int64_t(p) * height * width;
        for (int y = 0; y < height; ++y) {
            const Tap& a = ty[y];
            for (int xx = 0; xx < width; ++xx) {
                const Tap& b = tx[xx];
                const float tl = src[a.lo * xs.w + b.lo], bl = src[a.hi * xs.w + b.lo];
                const float top = tl + (src[a.lo * xs.w + b.hi] - tl) * b.frac;
                const float bot = bl + (src[a.hi * xs.w + b.hi] - bl) * b.frac;
                dst[y * width + xx] = top + (bot - top) * a.frac;
            }
        }
    }
    return out;
}

Var resize_bilinear(const Var& x, int height, int width) {
    const Shape xs = x->value.shape();
    if (xs.h == height && xs.w == width) return x;
    Tensor out = resize_bilinear(x->value, height, width);
    return make_node(std::move(out), {x}, [=](Node& self) {
        const auto ty = bilinear_taps(xs.h, height);
        const auto tx = bilinear_taps(xs.w, width);
        Tensor& gx = x->grad_buffer();
        const int planes = xs.n * xs.c;
        for (int p = 0; p < planes; ++p) {
            const float* dy = self.grad.data() + std::int64_t(p) * height * width;
            float* dx = gx.data() + std::int64_t(p) * xs.h * xs.w;
            for (int y = 0; y < height; ++y) {
                const Tap& a = ty[y];
                for (int xx = 0; xx < width; ++xx) {
                    const Tap& b = tx[xx];
                    const float g = dy[y * width + xx];
                    dx[a.lo * xs.w + b.lo] += g * (1 - a.frac) * (1 - b.frac);
                    dx[a.lo * xs.w + b.hi] += g * (1 - a.frac) * b.frac;
                    dx[a.hi * xs.w + b.lo] += g * a.frac * (1 - b.frac);
                    dx[a.hi * xs.w + b.hi] += g * a.frac * b.frac;
                }
            }
        }
    });
}

Var crop(const Var& x, int top, int left, int height, int width) {
    const Shape xs = x->value.shape();
    if (top < 0 || left < 0 || height <= 0 || width <= 0 || top + height > xs.h || left + width > xs.w)
        throw BoundsError("crop: rectangle outside " + xs.str());
    Tensor out(Shape{xs.n, xs.c, height, width});
    const int planes = xs.n * xs.c;
    for (int p = 0; p < planes; ++p)
        for (int y = 0; y < height; ++y)
            std::memcpy(out.data() + (std::int64_t(p) * height + y) * width,
                        x->value.data() + (std::int64_t(p) * xs.h + top + y) * xs.w + left, sizeof(float) * width);
    return make_node(std::move(out), {x}, [=](Node& self) {
        Tensor& gx = x->grad_buffer();
        for (int p = 0; p < planes; ++p)
            for (int y = 0; y < height; ++y) {
                const float* src = self.grad.data() + (std::int64_t(p) * height + y) * width;
                float* dst = gx.data() + (std::int64_t(p) * xs.h + top + y) * xs.w + left;
                for (int xx = 0; xx < width; ++xx) dst[xx] += src[xx];
            }
    });
}

Var mean_abs_diff(const Var& a, const Var& b) {
    if (a->value.shape() != b->value.shape())
        throw ShapeError("mean_abs_diff: " + a->value.shape().str() + " vs " + b->value.shape().str());
    const std::int64_t n = a->value.numel();
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += std::fabs(double(a->value[i]) - b->value[i]);
    return make_node(scalar_tensor(s / double(n)), {a, b}, [=](Node& self) {
        const float g = self.grad[0] / float(n);
        auto sign = [](float d) { return d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f); };
        if (wants(a)) {
            float* da = a->grad_buffer().data();
            for (std::int64_t i = 0; i < n; ++i) da[i] += g * sign(a->value[i] - b->value[i]);
        }
        if (wants(b)) {
            float* db = b->grad_buffer().data();
            for (std::int64_t i = 0; i < n; ++i) db[i] -= g * sign(a->value[i] - b->value[i]);
        }
    });
}

Var mean_squared_to(const Var& a, float target) {
    const std::int64_t n = a->value.numel();
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = double(a->value[i]) - target;
        s += d * d;
    }
    return make_node(scalar_tensor(s / double(n)), {a}, [=](Node& self) {
        const float g = 2.0f * self.grad[0] / float(n);
        float* da = a->grad_buffer().data();
        for (std::int64_t i = 0; i < n; ++i) da[i] += g * (a->value[i] - target);
    });
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
    const Shape ls = logits->value.shape();
    const int classes = static_cast<int>(ls.sample());
    if (static_cast<int>(labels.size()) != ls.n) throw ShapeError("softmax_cross_entropy: one label per sample");
    auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(ls.n) * classes);
    double total = 0.0;
    for (int n = 0; n < ls.n; ++n) {
        if (labels[n] < 0 || labels[n] >= classes) throw ArgumentError("softmax_cross_entropy: label out of range");
        const float* z = logits->value.data() + n * classes;
        const double zmax = *std::max_element(z, z + classes);
        double sum = 0.0;
        for (int k = 0; k < classes; ++k) sum += std::exp(z[k] - zmax);
        const double lse = zmax + std::log(sum);
        total += lse - z[labels[n]];
        for (int k = 0; k < classes; ++k) (*probs)[n * classes + k] = std::exp(z[k] - lse);
    }
    std::vector<int> owned(labels.begin(), labels.end());
    return make_node(scalar_tensor(total / ls.n), {logits}, [=](Node& self) {
        float* dz = logits->grad_buffer().data();
        const double g = self.grad[0] / double(ls.n);
        for (int n = 0; n < ls.n; ++n)
            for (int k = 0; k < classes; ++k)
                dz[n * classes + k] +=
                    static_cast<float>(g * ((*probs)[n * classes + k] - (k == owned[n] ? 1.0 : 0.0)));
    });
}

Var weighted_sum(std::span<const Var> terms, std::span<const double> weights) {
    if (terms.size() != weights.size()) throw ArgumentError("weighted_sum: term/weight count mismatch");
    double s = 0.0;
    std::vector<Var> parents;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        require_scalar_shape(terms[i]->value, "weighted_sum");
        s += weights[i] * terms[i]->value[0];
        parents.push_back(terms[i]);
    }
    std::vector<double> w(weights.begin(), weights.end());
    return make_node(scalar_tensor(s), parents, [parents, w](Node& self) {
        for (std::size_t i = 0; i < parents.size(); ++i)
            if (wants(parents[i])) parents[i]->grad_buffer()[0] += static_cast<float>(w[i] * self.grad[0]);
    });
}

float scalar(const Var& v) {
    require_scalar_shape(v->value, "scalar");
    return v->value[0];
}

}  // namespace egan::ag
