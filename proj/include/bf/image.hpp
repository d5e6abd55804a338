#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bf {

struct Shape {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;

  std::size_t size() const {
    return std::size_t{height} * width * channels;
  }
  std::size_t index(std::uint32_t row, std::uint32_t col, std::uint32_t ch) const {
    return (std::size_t{row} * width + col) * channels + ch;
  }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

// Unconstrained real tensor in image layout (row-major, channel-last).
// Used for gradients and pre-clip iterates.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }
  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

private:
  Shape shape_;
  std::vector<float> data_;
};

// Image with every element in [0,1]. Immutable once built.
class Image {
public:
  Image() = default;
  // Throws ValidationError if any element lies outside [0,1] or is NaN.
  Image(Shape shape, std::vector<float> data);

  static Image filled(Shape shape, float value);
  // Clips every element into [0,1] instead of rejecting.
  static Image clipped(Shape shape, std::vector<float> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::span<const float> data() const { return data_; }
  float operator[](std::size_t i) const { return data_[i]; }
  float at(std::uint32_t row, std::uint32_t col, std::uint32_t ch) const {
    return data_[shape_.index(row, col, ch)];
  }

  Tensor to_tensor() const { return Tensor(shape_, data_); }
  std::vector<float> to_vector() const { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

private:
  Shape shape_;
  std::vector<float> data_;
};

void require_same_shape(const Shape& a, const Shape& b, const char* what);

// Max elementwise |a-b|, accumulated in double.
double linf_distance(std::span<const float> a, std::span<const float> b);
double linf_distance(const Image& a, const Image& b);

// Euclidean norm of a-b over the flattened tensor, accumulated in double.
double l2_distance(std::span<const float> a, std::span<const float> b);
double l2_distance(const Image& a, const Image& b);

// Clamp x into [center-eps, center+eps], then into [0,1]. Out-of-range
// inputs are clipped, never rejected.
Image project_ball_and_range(const Tensor& x, const Image& center, double eps);
Image project_ball_and_range(const Image& x, const Image& center, double eps);

// In-place form used by the iterative solvers.
void project_ball_and_range_inplace(std::span<float> x, std::span<const float> center,
                                    double eps);

} // namespace bf
