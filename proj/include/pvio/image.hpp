#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "pvio/geometry.hpp"

namespace pvio {

struct IntensitySample {
  double value = 0;
  double gx = 0;  // d(value)/dx in intensity units per pixel
  double gy = 0;
};

/// Scalar intensity field over pixel coordinates with analytic gradients.
class IntensityField {
 public:
  virtual ~IntensityField() = default;
  virtual IntensitySample sample(double x, double y) const = 0;
  virtual bool in_domain(double x, double y) const = 0;
};

/// Raster image with bilinear interpolation; gradients are the analytic
/// derivatives of the bilinear surface. Domain is [0, w-1] x [0, h-1].
class RasterImage final : public IntensityField {
 public:
  RasterImage(int width, int height)
      : width_(width), height_(height), data_(static_cast<size_t>(width) * height, 0.0) {}

  int width() const { return width_; }
  int height() const { return height_; }

  double& at(int x, int y) { return data_[static_cast<size_t>(y) * width_ + x]; }
  double at(int x, int y) const { return data_[static_cast<size_t>(y) * width_ + x]; }

  bool in_domain(double x, double y) const override {
    return x >= 0 && y >= 0 && x <= width_ - 1 && y <= height_ - 1;
  }

  IntensitySample sample(double x, double y) const override {
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    x0 = std::clamp(x0, 0, width_ - 2);
    y0 = std::clamp(y0, 0, height_ - 2);
    const double fx = x - x0;
    const double fy = y - y0;
    const double v00 = at(x0, y0), v10 = at(x0 + 1, y0);
    const double v01 = at(x0, y0 + 1), v11 = at(x0 + 1, y0 + 1);
    IntensitySample s;
    s.value = (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 + (1 - fx) * fy * v01 +
              fx * fy * v11;
    s.gx = (1 - fy) * (v10 - v00) + fy * (v11 - v01);
    s.gy = (1 - fx) * (v01 - v00) + fx * (v11 - v10);
    return s;
  }

 private:
  int width_, height_;
  std::vector<double> data_;
};

/// Catmull-Rom bicubic view over a raster: interpolates the samples with a
/// C1 surface whose reconstruction error is two orders below bilinear on
/// smooth textures. Domain shrinks by one pixel per side for the 4x4 stencil.
class BicubicImage final : public IntensityField {
 public:
  explicit BicubicImage(RasterImage raster) : raster_(std::move(raster)) {}

  bool in_domain(double x, double y) const override {
    return x >= 1 && y >= 1 && x <= raster_.width() - 2 && y <= raster_.height() - 2;
  }

  IntensitySample sample(double x, double y) const override {
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    x0 = std::clamp(x0, 1, raster_.width() - 3);
    y0 = std::clamp(y0, 1, raster_.height() - 3);
    const double fx = x - x0;
    const double fy = y - y0;

    double col[4], dcol[4];
    for (int j = 0; j < 4; ++j) {
      const int yy = y0 - 1 + j;
      interp(raster_.at(x0 - 1, yy), raster_.at(x0, yy), raster_.at(x0 + 1, yy),
             raster_.at(x0 + 2, yy), fx, &col[j], &dcol[j]);
    }
    IntensitySample s;
    double unused;
    interp(col[0], col[1], col[2], col[3], fy, &s.value, &s.gy);
    interp(dcol[0], dcol[1], dcol[2], dcol[3], fy, &s.gx, &unused);
    return s;
  }

 private:
  static void interp(double pm, double p0, double p1, double p2, double t, double* v,
                     double* dv) {
    const double a = -pm + 3 * p0 - 3 * p1 + p2;
    const double b = 2 * pm - 5 * p0 + 4 * p1 - p2;
    const double c = -pm + p1;
    *v = 0.5 * (((a * t + b) * t + c) * t) + p0;
    *dv = 0.5 * ((3 * a * t + 2 * b) * t + c);
  }

  RasterImage raster_;
};

/// Smooth product-of-sines field over pixel coordinates. C-infinity, so
/// finite-difference probes of image-dependent Jacobians are meaningful.
class SinusoidField final : public IntensityField {
 public:
  struct Term {
    double amplitude, wx, wy, px, py;
  };

  SinusoidField(std::vector<Term> terms, double offset = 128.0)
      : terms_(std::move(terms)), offset_(offset) {}

  bool in_domain(double, double) const override { return true; }

  IntensitySample sample(double x, double y) const override {
    IntensitySample s;
    s.value = offset_;
    for (const Term& t : terms_) {
      const double sx = std::sin(t.wx * x + t.px);
      const double sy = std::sin(t.wy * y + t.py);
      s.value += t.amplitude * sx * sy;
      s.gx += t.amplitude * t.wx * std::cos(t.wx * x + t.px) * sy;
      s.gy += t.amplitude * t.wy * sx * std::cos(t.wy * y + t.py);
    }
    return s;
  }

 private:
  std::vector<Term> terms_;
  double offset_;
};

/// Affine remap of another field: value' = gain * value + offset.
class ScaledField final : public IntensityField {
 public:
  ScaledField(std::shared_ptr<const IntensityField> base, double gain, double offset)
      : base_(std::move(base)), gain_(gain), offset_(offset) {}

  bool in_domain(double x, double y) const override { return base_->in_domain(x, y); }

  IntensitySample sample(double x, double y) const override {
    IntensitySample s = base_->sample(x, y);
    s.value = gain_ * s.value + offset_;
    s.gx *= gain_;
    s.gy *= gain_;
    return s;
  }

 private:
  std::shared_ptr<const IntensityField> base_;
  double gain_, offset_;
};

}  // namespace pvio
