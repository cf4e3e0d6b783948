#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace egan {

// NCHW extent. Scalars are {1,1,1,1}; fully connected weights reuse the
// layout as {out, in, 1, 1}.
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::int64_t numel() const { return std::int64_t(n) * c * h * w; }
    std::int64_t plane() const { return std::int64_t(h) * w; }
    std::int64_t sample() const { return std::int64_t(c) * h * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> values);

    const Shape& shape() const { return shape_; }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::span<float> values() { return data_; }
    std::span<const float> values() const { return data_; }

    float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    float& at(int n, int c, int y, int x) {
        return data_[static_cast<std::size_t>(((std::int64_t(n) * shape_.c + c) * shape_.h + y) * shape_.w + x)];
    }
    float at(int n, int c, int y, int x) const {
        return data_[static_cast<std::size_t>(((std::int64_t(n) * shape_.c + c) * shape_.h + y) * shape_.w + x)];
    }

    void fill(float v);
    // Reinterpret with a shape of equal element count.
    Tensor reshaped(Shape shape) const;
    // Copy of sample `index` as a batch of one.
    Tensor sample(int index) const;

    float min() const;
    float max() const;

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_{};
    std::vector<float> data_;
};

// Stack single-sample tensors along N.
Tensor stack(std::span<const Tensor> samples);

}  // namespace egan
