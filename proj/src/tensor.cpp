#include "encryptgan/tensor.hpp"

#include <algorithm>
#include <cstring>

#include "encryptgan/errors.hpp"

namespace egan {

std::string Shape::str() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + "]";
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape) {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0)
        throw ShapeError("negative tensor extent " + shape.str());
    data_.assign(static_cast<std::size_t>(shape.numel()), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(shape), data_(std::move(values)) {
    if (static_cast<std::int64_t>(data_.size()) != shape.numel())
        throw ShapeError("value count " + std::to_string(data_.size()) + " does not match " + shape.str());
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
    if (shape.numel() != numel()) throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
    return Tensor(shape, data_);
}

Tensor Tensor::sample(int index) const {
    if (index < 0 || index >= shape_.n) throw BoundsError("sample index out of range");
    Shape s{1, shape_.c, shape_.h, shape_.w};
    Tensor out(s);
    std::memcpy(out.data(), data() + index * shape_.sample(), sizeof(float) * s.numel());
    return out;
}

float Tensor::min() const { return data_.empty() ? 0.0f : *std::min_element(data_.begin(), data_.end()); }
float Tensor::max() const { return data_.empty() ? 0.0f : *std::max_element(data_.begin(), data_.end()); }

Tensor stack(std::span<const Tensor> samples) {
    if (samples.empty()) throw ArgumentError("stack of zero tensors");
    Shape first = samples.front().shape();
    Shape out_shape{0, first.c, first.h, first.w};
    for (const auto& s : samples) {
        if (s.shape().c != first.c || s.shape().h != first.h || s.shape().w != first.w)
            throw ShapeError("stack: mismatched sample shapes " + first.str() + " vs " + s.shape().str());
        out_shape.n += s.shape().n;
    }
    Tensor out(out_shape);
    float* dst = out.data();
    for (const auto& s : samples) {
        std::memcpy(dst, s.data(), sizeof(float) * s.numel());
        dst += s.numel();
    }
    return out;
}

const char* error_kind_name(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::NotFound: return "NotFound";
        case ErrorKind::Format: return "FormatError";
        case ErrorKind::Shape: return "ShapeError";
        case ErrorKind::Bounds: return "BoundsError";
        case ErrorKind::Argument: return "ArgumentError";
        case ErrorKind::Config: return "ConfigError";
        case ErrorKind::Numerical: return "NumericalError";
        case ErrorKind::Version: return "VersionError";
        case ErrorKind::Io: return "IoError";
    }
    return "Error";
}

}  // namespace egan
