#include "bf/image.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "bf/error.hpp"

namespace bf {

std::string Shape::str() const {
  return fmt::format("{}x{}x{}", height, width, channels);
}

Tensor::Tensor(Shape shape) : shape_(shape), data_(shape.size(), 0.0f) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw ValidationError(fmt::format("tensor data length {} does not match shape {}",
                                      data_.size(), shape_.str()));
  }
}

Image::Image(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  if (shape_.channels != 1 && shape_.channels != 3) {
    throw ValidationError(fmt::format("image must have 1 or 3 channels, got {}", shape_.channels));
  }
  if (data_.size() != shape_.size()) {
    throw ValidationError(fmt::format("image data length {} does not match shape {}",
                                      data_.size(), shape_.str()));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    // negated test also rejects NaN
    if (!(data_[i] >= 0.0f && data_[i] <= 1.0f)) {
      throw ValidationError(fmt::format("image element {} = {} outside [0,1]", i, data_[i]));
    }
  }
}

Image Image::filled(Shape shape, float value) {
  return Image(shape, std::vector<float>(shape.size(), value));
}

Image Image::clipped(Shape shape, std::vector<float> data) {
  for (auto& v : data) {
    v = std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f);
  }
  return Image(shape, std::move(data));
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw ValidationError(fmt::format("{}: shape mismatch {} vs {}", what, a.str(), b.str()));
  }
}

double linf_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw ValidationError(fmt::format("linf_distance: length mismatch {} vs {}", a.size(), b.size()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(double{a[i]} - double{b[i]}));
  }
  return m;
}

double linf_distance(const Image& a, const Image& b) {
  require_same_shape(a.shape(), b.shape(), "linf_distance");
  return linf_distance(a.data(), b.data());
}

double l2_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw ValidationError(fmt::format("l2_distance: length mismatch {} vs {}", a.size(), b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double{a[i]} - double{b[i]};
    s += d * d;
  }
  return std::sqrt(s);
}

double l2_distance(const Image& a, const Image& b) {
  require_same_shape(a.shape(), b.shape(), "l2_distance");
  return l2_distance(a.data(), b.data());
}

namespace {

float project_element(float x, float c, double eps) {
  double v = std::isnan(x) ? double{c} : double{x};
  v = std::clamp(v, double{c} - eps, double{c} + eps);
  v = std::clamp(v, 0.0, 1.0);
  float r = static_cast<float>(v);
  // float rounding may land a hair outside the ball; step back inside
  while (double{r} - double{c} > eps) r = std::nextafter(r, c);
  while (double{c} - double{r} > eps) r = std::nextafter(r, c);
  return r;
}

void check_eps(double eps) {
  if (!(eps >= 0.0)) {
    throw ValidationError(fmt::format("projection radius must be >= 0, got {}", eps));
  }
}

} // namespace

void project_ball_and_range_inplace(std::span<float> x, std::span<const float> center, double eps) {
  check_eps(eps);
  if (x.size() != center.size()) {
    throw ValidationError("project_ball_and_range: length mismatch");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = project_element(x[i], center[i], eps);
  }
}

Image project_ball_and_range(const Tensor& x, const Image& center, double eps) {
  require_same_shape(x.shape(), center.shape(), "project_ball_and_range");
  std::vector<float> out(x.data().begin(), x.data().end());
  project_ball_and_range_inplace(out, center.data(), eps);
  return Image(center.shape(), std::move(out));
}

Image project_ball_and_range(const Image& x, const Image& center, double eps) {
  return project_ball_and_range(x.to_tensor(), center, eps);
}

} // namespace bf
