#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pann {

// Row-major 2-D grid.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t height, std::size_t width, T fill = T{})
      : height_(height), width_(width), data_(height * width, fill) {}

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t y, std::size_t x) { return data_[y * width_ + x]; }
  const T& operator()(std::size_t y, std::size_t x) const {
    return data_[y * width_ + x];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  template <typename U>
  bool same_shape(const Grid<U>& other) const noexcept {
    return height_ == other.height() && width_ == other.width();
  }

  bool operator==(const Grid&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<T> data_;
};

// Per-pixel class vectors stored pixel-major: value(p, k) lives at p*K + k.
// Used for logits, probabilities and gradients with respect to logits.
class ClassMap {
 public:
  ClassMap() = default;
  ClassMap(std::size_t height, std::size_t width, std::size_t classes,
           double fill = 0.0)
      : height_(height),
        width_(width),
        classes_(classes),
        data_(height * width * classes, fill) {}

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t classes() const noexcept { return classes_; }
  std::size_t pixels() const noexcept { return height_ * width_; }

  std::span<double> pixel(std::size_t p) noexcept {
    return {data_.data() + p * classes_, classes_};
  }
  std::span<const double> pixel(std::size_t p) const noexcept {
    return {data_.data() + p * classes_, classes_};
  }
  double& at(std::size_t p, std::size_t k) { return data_[p * classes_ + k]; }
  double at(std::size_t p, std::size_t k) const {
    return data_[p * classes_ + k];
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool same_shape(const ClassMap& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_ && classes_ == o.classes_;
  }

  ClassMap& operator+=(const ClassMap& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  bool operator==(const ClassMap&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t classes_ = 0;
  std::vector<double> data_;
};

}  // namespace pann
