#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mono3d {

/// Channel-planar dense array. Storage is a row-major (channels x height*width)
/// matrix, so a single channel is one contiguous row and a 2-D convolution
/// reduces to a plain matrix product against an im2col buffer.
template <typename Scalar>
class Planar {
 public:
  using Matrix =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Planar() = default;
  Planar(int channels, int height, int width)
      : channels_(channels), height_(height), width_(width),
        data_(Matrix::Zero(channels, Eigen::Index(height) * width)) {
    if (channels < 0 || height < 0 || width < 0)
      throw std::invalid_argument("Planar: negative dimension");
  }
  Planar(int channels, int height, int width, Matrix data)
      : channels_(channels), height_(height), width_(width),
        data_(std::move(data)) {
    if (data_.rows() != channels || data_.cols() != Eigen::Index(height) * width)
      throw std::invalid_argument("Planar: matrix does not match shape");
  }

  static Planar Zero(int c, int h, int w) { return Planar(c, h, w); }
  static Planar Constant(int c, int h, int w, Scalar v) {
    Planar p(c, h, w);
    p.data_.setConstant(v);
    return p;
  }
  static Planar Scalar1(Scalar v) { return Constant(1, 1, 1, v); }

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  Eigen::Index pixels() const { return Eigen::Index(height_) * width_; }
  Eigen::Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Scalar& operator()(int c, int y, int x) {
    return data_(c, Eigen::Index(y) * width_ + x);
  }
  Scalar operator()(int c, int y, int x) const {
    return data_(c, Eigen::Index(y) * width_ + x);
  }

  Matrix& matrix() { return data_; }
  const Matrix& matrix() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Scalar* channel_data(int c) { return data_.data() + c * pixels(); }
  const Scalar* channel_data(int c) const { return data_.data() + c * pixels(); }

  bool same_shape(const Planar& o) const {
    return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
  }
  bool same_spatial(const Planar& o) const {
    return height_ == o.height_ && width_ == o.width_;
  }

  template <typename Other>
  Planar<Other> cast() const {
    return Planar<Other>(channels_, height_, width_, data_.template cast<Other>());
  }

  std::string shape_string() const {
    return std::to_string(channels_) + "x" + std::to_string(height_) + "x" +
           std::to_string(width_);
  }

  friend bool operator==(const Planar& a, const Planar& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  Matrix data_;
};

template <typename Scalar>
void require_same_shape(const Planar<Scalar>& a, const Planar<Scalar>& b,
                        const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                a.shape_string() + " vs " + b.shape_string() + ")");
}

}  // namespace mono3d
