#include "spikesplit/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "spikesplit/error.hpp"

namespace spikesplit {

namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct Geometry {
  std::size_t channels, height, width;  // image the kernel slides over
  std::size_t kh, kw, sh, sw, ph, pw;
  std::size_t grid_h, grid_w;  // number of kernel positions
};

// Unfolds kernel windows into rows (c, ki, kj) by columns (gh, gw).
void im2col(const Real* src, const Geometry& g, Real* dst) {
  const std::size_t grid = g.grid_h * g.grid_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const Real* plane = src + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        Real* row = dst + ((c * g.kh + ki) * g.kw + kj) * grid;
        for (std::size_t oh = 0; oh < g.grid_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.sh + ki) - static_cast<std::ptrdiff_t>(g.ph);
          Real* out = row + oh * g.grid_w;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(out, out + g.grid_w, 0.0);
            continue;
          }
          const Real* in_row = plane + static_cast<std::size_t>(ih) * g.width;
          for (std::size_t ow = 0; ow < g.grid_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.sw + kj) - static_cast<std::ptrdiff_t>(g.pw);
            out[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.width)) ? 0.0 : in_row[iw];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters (accumulates) columns back onto the image.
void col2im(const Real* cols, const Geometry& g, Real* dst) {
  const std::size_t grid = g.grid_h * g.grid_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    Real* plane = dst + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const Real* row = cols + ((c * g.kh + ki) * g.kw + kj) * grid;
        for (std::size_t oh = 0; oh < g.grid_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.sh + ki) - static_cast<std::ptrdiff_t>(g.ph);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) continue;
          Real* out_row = plane + static_cast<std::size_t>(ih) * g.width;
          const Real* in = row + oh * g.grid_w;
          for (std::size_t ow = 0; ow < g.grid_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.sw + kj) - static_cast<std::ptrdiff_t>(g.pw);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.width)) out_row[iw] += in[ow];
          }
        }
      }
    }
  }
}

std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t s, std::size_t p, const char* axis) {
  if (in + 2 * p < k) {
    throw ShapeError(std::string("kernel does not fit along ") + axis + ": in=" + std::to_string(in) +
                     " pad=" + std::to_string(p) + " kernel=" + std::to_string(k));
  }
  return (in + 2 * p - k) / s + 1;
}

void init_uniform(Tensor& t, Rng& rng, Real bound) {
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
}

void check_channels(const Shape5& s, std::size_t expected, const char* what) {
  if (s.c != expected) {
    throw ShapeError(std::string(what) + ": input has " + std::to_string(s.c) + " channels, expected " +
                     std::to_string(expected));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// ConvSpec

void ConvSpec::validate() const {
  if (in_channels == 0 || out_channels == 0) throw ShapeError("convolution with zero channels");
  if (kh == 0 || kw == 0 || sh == 0 || sw == 0) throw ShapeError("convolution with zero kernel or stride");
  if (depthwise && out_channels != in_channels) {
    throw ShapeError("depthwise convolution requires out_channels == in_channels");
  }
}

Shape3 ConvSpec::output_shape(const Shape3& in) const {
  validate();
  if (in.c != in_channels) {
    throw ShapeError("convolution expects " + std::to_string(in_channels) + " input channels, got " +
                     std::to_string(in.c));
  }
  return {out_channels, conv_out_dim(in.h, kh, sh, ph, "height"), conv_out_dim(in.w, kw, sw, pw, "width")};
}

std::uint64_t ConvSpec::macs(const Shape3& in) const {
  const Shape3 out = output_shape(in);
  return static_cast<std::uint64_t>(in_channels / groups()) * kh * kw * out_channels * out.h * out.w;
}

std::vector<std::size_t> ConvSpec::weight_dims() const {
  return {out_channels, in_channels / groups(), kh, kw};
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(const std::string& prefix, ConvSpec spec)
    : spec_(spec), weight_(prefix + ".weight", Tensor(spec.weight_dims())) {
  spec_.validate();
  if (spec_.bias) bias_.emplace(prefix + ".bias", Tensor({spec_.out_channels}));
}

void Conv2d::init(Rng& rng) {
  const Real fan_in = static_cast<Real>(spec_.in_channels / spec_.groups() * spec_.kh * spec_.kw);
  init_uniform(weight_.value, rng, std::sqrt(6.0 / fan_in));
  if (bias_) init_uniform(bias_->value, rng, 1.0 / std::sqrt(fan_in));
}

Tensor Conv2d::forward(const Tensor& x) const {
  const Shape5 s = x.shape5();
  check_channels(s, spec_.in_channels, "conv_forward");
  const Shape3 out3 = spec_.output_shape(s.feature());
  Tensor y = Tensor::of({s.t, s.b, out3.c, out3.h, out3.w});

  const std::size_t n_samples = s.t * s.b;
  const std::size_t in_size = s.c * s.h * s.w;
  const std::size_t grid = out3.h * out3.w;
  const std::size_t out_size = out3.c * grid;
  const Real* w = weight_.value.data();

  if (spec_.depthwise) {
    for (std::size_t n = 0; n < n_samples; ++n) {
      const Real* in = x.data() + n * in_size;
      Real* out = y.data() + n * out_size;
      for (std::size_t c = 0; c < s.c; ++c) {
        const Real* plane = in + c * s.h * s.w;
        const Real* kern = w + c * spec_.kh * spec_.kw;
        Real* oplane = out + c * grid;
        for (std::size_t oh = 0; oh < out3.h; ++oh) {
          for (std::size_t ow = 0; ow < out3.w; ++ow) {
            Real acc = 0;
            for (std::size_t ki = 0; ki < spec_.kh; ++ki) {
              const auto ih = static_cast<std::ptrdiff_t>(oh * spec_.sh + ki) - static_cast<std::ptrdiff_t>(spec_.ph);
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(s.h)) continue;
              for (std::size_t kj = 0; kj < spec_.kw; ++kj) {
                const auto iw = static_cast<std::ptrdiff_t>(ow * spec_.sw + kj) - static_cast<std::ptrdiff_t>(spec_.pw);
                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(s.w)) continue;
                acc += kern[ki * spec_.kw + kj] * plane[static_cast<std::size_t>(ih) * s.w + static_cast<std::size_t>(iw)];
              }
            }
            oplane[oh * out3.w + ow] = acc;
          }
        }
      }
    }
  } else {
    const std::size_t k = spec_.in_channels * spec_.kh * spec_.kw;
    const bool pointwise = spec_.kh == 1 && spec_.kw == 1 && spec_.sh == 1 && spec_.sw == 1 &&
                           spec_.ph == 0 && spec_.pw == 0;
    const Geometry g{s.c, s.h, s.w, spec_.kh, spec_.kw, spec_.sh, spec_.sw, spec_.ph, spec_.pw, out3.h, out3.w};
    std::vector<Real> cols(pointwise ? 0 : k * grid);
    ConstMapMat wm(w, static_cast<Eigen::Index>(spec_.out_channels), static_cast<Eigen::Index>(k));
    for (std::size_t n = 0; n < n_samples; ++n) {
      const Real* in = x.data() + n * in_size;
      const Real* src = in;
      if (!pointwise) {
        im2col(in, g, cols.data());
        src = cols.data();
      }
      MapMat out(y.data() + n * out_size, static_cast<Eigen::Index>(out3.c), static_cast<Eigen::Index>(grid));
      out.noalias() = wm * ConstMapMat(src, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(grid));
    }
  }

  if (bias_) {
    for (std::size_t n = 0; n < n_samples; ++n) {
      for (std::size_t c = 0; c < out3.c; ++c) {
        Real* p = y.data() + n * out_size + c * grid;
        const Real b = bias_->value[c];
        for (std::size_t i = 0; i < grid; ++i) p[i] += b;
      }
    }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& grad_out) {
  const Shape5 s = x.shape5();
  const Shape3 out3 = spec_.output_shape(s.feature());
  if (grad_out.shape5() != Shape5{s.t, s.b, out3.c, out3.h, out3.w}) {
    throw ShapeError("conv backward: gradient shape " + to_string(grad_out.shape5()) + " does not match output");
  }
  Tensor dx = Tensor::of(s);
  const std::size_t n_samples = s.t * s.b;
  const std::size_t in_size = s.c * s.h * s.w;
  const std::size_t grid = out3.h * out3.w;
  const std::size_t out_size = out3.c * grid;
  const Real* w = weight_.value.data();
  Real* dw = weight_.grad.data();

  if (spec_.depthwise) {
    for (std::size_t n = 0; n < n_samples; ++n) {
      const Real* in = x.data() + n * in_size;
      Real* din = dx.data() + n * in_size;
      const Real* gout = grad_out.data() + n * out_size;
      for (std::size_t c = 0; c < s.c; ++c) {
        const Real* plane = in + c * s.h * s.w;
        Real* dplane = din + c * s.h * s.w;
        const Real* kern = w + c * spec_.kh * spec_.kw;
        Real* dkern = dw + c * spec_.kh * spec_.kw;
        const Real* gplane = gout + c * grid;
        for (std::size_t oh = 0; oh < out3.h; ++oh) {
          for (std::size_t ow = 0; ow < out3.w; ++ow) {
            const Real g = gplane[oh * out3.w + ow];
            if (g == 0.0) continue;
            for (std::size_t ki = 0; ki < spec_.kh; ++ki) {
              const auto ih = static_cast<std::ptrdiff_t>(oh * spec_.sh + ki) - static_cast<std::ptrdiff_t>(spec_.ph);
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(s.h)) continue;
              for (std::size_t kj = 0; kj < spec_.kw; ++kj) {
                const auto iw = static_cast<std::ptrdiff_t>(ow * spec_.sw + kj) - static_cast<std::ptrdiff_t>(spec_.pw);
                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(s.w)) continue;
                const std::size_t idx = static_cast<std::size_t>(ih) * s.w + static_cast<std::size_t>(iw);
                dkern[ki * spec_.kw + kj] += g * plane[idx];
                dplane[idx] += g * kern[ki * spec_.kw + kj];
              }
            }
          }
        }
      }
    }
  } else {
    const std::size_t k = spec_.in_channels * spec_.kh * spec_.kw;
    const Geometry g{s.c, s.h, s.w, spec_.kh, spec_.kw, spec_.sh, spec_.sw, spec_.ph, spec_.pw, out3.h, out3.w};
    std::vector<Real> cols(k * grid);
    std::vector<Real> dcols(k * grid);
    const auto rows_o = static_cast<Eigen::Index>(spec_.out_channels);
    const auto rows_k = static_cast<Eigen::Index>(k);
    const auto cols_g = static_cast<Eigen::Index>(grid);
    ConstMapMat wm(w, rows_o, rows_k);
    MapMat dwm(dw, rows_o, rows_k);
    for (std::size_t n = 0; n < n_samples; ++n) {
      im2col(x.data() + n * in_size, g, cols.data());
      ConstMapMat gm(grad_out.data() + n * out_size, rows_o, cols_g);
      dwm.noalias() += gm * ConstMapMat(cols.data(), rows_k, cols_g).transpose();
      MapMat(dcols.data(), rows_k, cols_g).noalias() = wm.transpose() * gm;
      col2im(dcols.data(), g, dx.data() + n * in_size);
    }
  }

  if (bias_) {
    for (std::size_t n = 0; n < n_samples; ++n) {
      for (std::size_t c = 0; c < out3.c; ++c) {
        const Real* p = grad_out.data() + n * out_size + c * grid;
        Real acc = 0;
        for (std::size_t i = 0; i < grid; ++i) acc += p[i];
        bias_->grad[c] += acc;
      }
    }
  }
  return dx;
}

void Conv2d::collect(std::vector<Param*>& out) {
  out.push_back(&weight_);
  if (bias_) out.push_back(&*bias_);
}

Tensor conv_forward(const Tensor& x, const Conv2d& conv) { return conv.forward(x); }

// ---------------------------------------------------------------------------
// ConvTranspose2d

Shape3 DeconvSpec::output_shape(const Shape3& in) const {
  if (in.c != in_channels) {
    throw ShapeError("transposed convolution expects " + std::to_string(in_channels) + " channels, got " +
                     std::to_string(in.c));
  }
  const std::size_t full_h = (in.h - 1) * sh + kh;
  const std::size_t full_w = (in.w - 1) * sw + kw;
  if (crop_top + crop_bottom >= full_h || crop_left + crop_right >= full_w) {
    throw ShapeError("transposed convolution crop removes the whole output");
  }
  return {out_channels, full_h - crop_top - crop_bottom, full_w - crop_left - crop_right};
}

ConvTranspose2d::ConvTranspose2d(const std::string& prefix, DeconvSpec spec)
    : spec_(spec), weight_(prefix + ".weight", Tensor(spec.weight_dims())) {}

void ConvTranspose2d::init(Rng& rng) {
  const Real fan_in = static_cast<Real>(spec_.in_channels * spec_.kh * spec_.kw);
  init_uniform(weight_.value, rng, std::sqrt(6.0 / fan_in));
}

Tensor ConvTranspose2d::forward(const Tensor& x) const {
  const Shape5 s = x.shape5();
  const Shape3 out3 = spec_.output_shape(s.feature());
  Tensor y = Tensor::of({s.t, s.b, out3.c, out3.h, out3.w});
  const std::size_t n_samples = s.t * s.b;
  const std::size_t in_size = s.c * s.h * s.w;
  const std::size_t out_size = out3.numel();
  const std::size_t k = spec_.out_channels * spec_.kh * spec_.kw;
  const std::size_t grid = s.h * s.w;
  const Geometry g{out3.c, out3.h, out3.w, spec_.kh, spec_.kw, spec_.sh, spec_.sw,
                   spec_.crop_top, spec_.crop_left, s.h, s.w};
  std::vector<Real> cols(k * grid);
  ConstMapMat wm(weight_.value.data(), static_cast<Eigen::Index>(spec_.in_channels), static_cast<Eigen::Index>(k));
  for (std::size_t n = 0; n < n_samples; ++n) {
    ConstMapMat xm(x.data() + n * in_size, static_cast<Eigen::Index>(s.c), static_cast<Eigen::Index>(grid));
    MapMat(cols.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(grid)).noalias() = wm.transpose() * xm;
    col2im(cols.data(), g, y.data() + n * out_size);
  }
  return y;
}

Tensor ConvTranspose2d::backward(const Tensor& x, const Tensor& grad_out) {
  const Shape5 s = x.shape5();
  const Shape3 out3 = spec_.output_shape(s.feature());
  if (grad_out.shape5() != Shape5{s.t, s.b, out3.c, out3.h, out3.w}) {
    throw ShapeError("deconv backward: gradient shape does not match output");
  }
  Tensor dx = Tensor::of(s);
  const std::size_t n_samples = s.t * s.b;
  const std::size_t in_size = s.c * s.h * s.w;
  const std::size_t out_size = out3.numel();
  const std::size_t k = spec_.out_channels * spec_.kh * spec_.kw;
  const std::size_t grid = s.h * s.w;
  const Geometry g{out3.c, out3.h, out3.w, spec_.kh, spec_.kw, spec_.sh, spec_.sw,
                   spec_.crop_top, spec_.crop_left, s.h, s.w};
  std::vector<Real> dcols(k * grid);
  const auto rows_c = static_cast<Eigen::Index>(spec_.in_channels);
  const auto rows_k = static_cast<Eigen::Index>(k);
  const auto cols_g = static_cast<Eigen::Index>(grid);
  ConstMapMat wm(weight_.value.data(), rows_c, rows_k);
  MapMat dwm(weight_.grad.data(), rows_c, rows_k);
  for (std::size_t n = 0; n < n_samples; ++n) {
    im2col(grad_out.data() + n * out_size, g, dcols.data());
    ConstMapMat dc(dcols.data(), rows_k, cols_g);
    MapMat(dx.data() + n * in_size, rows_c, cols_g).noalias() = wm * dc;
    dwm.noalias() += ConstMapMat(x.data() + n * in_size, rows_c, cols_g) * dc.transpose();
  }
  return dx;
}

void ConvTranspose2d::collect(std::vector<Param*>& out) { out.push_back(&weight_); }

// ---------------------------------------------------------------------------
// TdBN

TdBN::TdBN(const std::string& prefix, std::size_t channels, Real alpha, Real v_th)
    : channels_(channels),
      alpha_(alpha),
      v_th_(v_th),
      lambda_(prefix + ".lambda", Tensor({channels}, 1.0)),
      beta_(prefix + ".beta", Tensor({channels}, 0.0)),
      running_mean_(prefix + ".running_mean", Tensor({channels}, 0.0), false),
      running_var_(prefix + ".running_var", Tensor({channels}, 1.0), false) {}

void TdBN::init_identity_stats() {
  running_mean_.value.fill(0.0);
  running_var_.value.fill(1.0);
  stats_ready_ = true;
}

void TdBN::set_epsilon(Real eps) {
  if (!(eps > 0.0)) throw ValueError("tdBN epsilon must be positive");
  epsilon_ = eps;
}

Tensor TdBN::infer(const Tensor& x) const {
  if (!stats_ready_) throw StateError("tdBN eval mode requires running statistics");
  const Shape5 s = x.shape5();
  check_channels(s, channels_, "tdbn_forward");
  Tensor y(x.dims());
  const std::size_t plane = s.h * s.w;
  for (std::size_t n = 0; n < s.t * s.b; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const Real scale = lambda_.value[c] * alpha_ * v_th_ / std::sqrt(running_var_.value[c] + epsilon_);
      const Real mean = running_mean_.value[c];
      const Real shift = beta_.value[c];
      const std::size_t off = (n * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) y[off + i] = scale * (x[off + i] - mean) + shift;
    }
  }
  return y;
}

Tensor TdBN::forward_train(const Tensor& x, TdbnCache& cache) {
  const Shape5 s = x.shape5();
  check_channels(s, channels_, "tdbn_forward");
  if (!stats_ready_) init_identity_stats();
  const std::size_t plane = s.h * s.w;
  const std::size_t count = s.t * s.b * plane;
  Tensor y(x.dims());
  cache.x_hat = Tensor(x.dims());
  cache.inv_std.assign(s.c, 0.0);
  for (std::size_t c = 0; c < s.c; ++c) {
    Real sum = 0;
    for (std::size_t n = 0; n < s.t * s.b; ++n) {
      const std::size_t off = (n * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) sum += x[off + i];
    }
    const Real mean = sum / static_cast<Real>(count);
    Real sq = 0;
    for (std::size_t n = 0; n < s.t * s.b; ++n) {
      const std::size_t off = (n * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const Real d = x[off + i] - mean;
        sq += d * d;
      }
    }
    const Real var = sq / static_cast<Real>(count);
    const Real inv_std = 1.0 / std::sqrt(var + epsilon_);
    cache.inv_std[c] = inv_std;
    const Real scale = lambda_.value[c] * alpha_ * v_th_;
    for (std::size_t n = 0; n < s.t * s.b; ++n) {
      const std::size_t off = (n * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const Real xh = (x[off + i] - mean) * inv_std;
        cache.x_hat[off + i] = xh;
        y[off + i] = scale * xh + beta_.value[c];
      }
    }
    const Real unbiased = count > 1 ? var * static_cast<Real>(count) / static_cast<Real>(count - 1) : var;
    running_mean_.value[c] = (1 - momentum_) * running_mean_.value[c] + momentum_ * mean;
    running_var_.value[c] = (1 - momentum_) * running_var_.value[c] + momentum_ * unbiased;
  }
  return y;
}

Tensor TdBN::backward(const TdbnCache& cache, const Tensor& grad_out) {
  if (cache.x_hat.dims() != grad_out.dims()) throw StateError("tdBN backward without a matching forward pass");
  const Shape5 s = grad_out.shape5();
  const std::size_t plane = s.h * s.w;
  const auto count = static_cast<Real>(s.t * s.b * plane);
  Tensor dx(grad_out.dims());
  for (std::size_t c = 0; c < s.c; ++c) {
    Real sum_g = 0;
    Real sum_gx = 0;
    for (std::size_t n = 0; n < s.t * s.b; ++n) {
      const std::size_t off = (n * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_g += grad_out[off + i];
        sum_gx += grad_out[off + i] * cache.x_hat[off + i];
      }
    }
    beta_.grad[c] += sum_g;
    lambda_.grad[c] += sum_gx * alpha_ * v_th_;
    const Real k = lambda_.value[c] * alpha_ * v_th_ * cache.inv_std[c];
    const Real mean_g = sum_g / count;
    const Real mean_gx = sum_gx / count;
    for (std::size_t n = 0; n < s.t * s.b; ++n) {
      const std::size_t off = (n * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        dx[off + i] = k * (grad_out[off + i] - mean_g - cache.x_hat[off + i] * mean_gx);
      }
    }
  }
  return dx;
}

void TdBN::collect(std::vector<Param*>& out) {
  out.push_back(&lambda_);
  out.push_back(&beta_);
  out.push_back(&running_mean_);
  out.push_back(&running_var_);
}

// ---------------------------------------------------------------------------
// LIF with recorded traces

Tensor lif_forward_train(const Tensor& current, const LifParams& lif, const SurrogateParams& sg,
                         SpikeFn fn, LifCache& cache) {
  lif.validate();
  const Shape5 s = current.shape5();
  const std::size_t slice = s.b * s.c * s.h * s.w;
  Tensor out(current.dims());
  cache.v = Tensor(current.dims());
  cache.fired = Tensor(current.dims());
  for (std::size_t t = 0; t < s.t; ++t) {
    for (std::size_t i = 0; i < slice; ++i) {
      const std::size_t k = t * slice + i;
      const Real carry = t == 0 ? 0.0 : lif.tau_decay * cache.v[k - slice] * (1.0 - cache.fired[k - slice]);
      const Real v = carry + current[k];
      cache.v[k] = v;
      cache.fired[k] = v > lif.v_th ? 1.0 : 0.0;
      out[k] = spike_value(v, lif, sg, fn);
    }
  }
  return out;
}

Tensor lif_backward(const LifCache& cache, const Tensor& grad_spikes, const LifParams& lif,
                    const SurrogateParams& sg) {
  if (cache.v.dims() != grad_spikes.dims()) throw StateError("LIF backward without recorded membrane potentials");
  const Shape5 s = grad_spikes.shape5();
  const std::size_t slice = s.b * s.c * s.h * s.w;
  Tensor dx(grad_spikes.dims());
  std::vector<Real> carry(slice, 0.0);
  for (std::size_t t = s.t; t-- > 0;) {
    for (std::size_t i = 0; i < slice; ++i) {
      const std::size_t k = t * slice + i;
      // v_{t+1} depends on v_t through tau * (1 - fired_t).
      const Real gv = grad_spikes[k] * surrogate_grad(cache.v[k], lif, sg) + carry[i] * (1.0 - cache.fired[k]);
      dx[k] = gv;
      carry[i] = gv * lif.tau_decay;
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Head

Head::Head(const std::string& prefix, std::size_t in_channels, std::size_t classes)
    : in_channels_(in_channels),
      classes_(classes),
      weight_(prefix + ".weight", Tensor({classes, in_channels})),
      bias_(prefix + ".bias", Tensor({classes})) {}

void Head::init(Rng& rng) {
  const Real fan_in = static_cast<Real>(in_channels_);
  init_uniform(weight_.value, rng, std::sqrt(6.0 / fan_in));
  init_uniform(bias_.value, rng, 1.0 / std::sqrt(fan_in));
}

Tensor Head::forward_train(const Tensor& spikes, HeadCache& cache) const {
  const Shape5 s = spikes.shape5();
  check_channels(s, in_channels_, "avgpool_and_fc");
  cache.in_shape = s;
  cache.pooled = Tensor({s.t, s.b, s.c});
  const std::size_t plane = s.h * s.w;
  for (std::size_t n = 0; n < s.t * s.b; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const Real* p = spikes.data() + (n * s.c + c) * plane;
      Real acc = 0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      cache.pooled[n * s.c + c] = acc / static_cast<Real>(plane);
    }
  }
  Tensor logits({s.b, classes_});
  for (std::size_t t = 0; t < s.t; ++t) {
    for (std::size_t b = 0; b < s.b; ++b) {
      const Real* pooled = cache.pooled.data() + (t * s.b + b) * s.c;
      for (std::size_t k = 0; k < classes_; ++k) {
        const Real* wrow = weight_.value.data() + k * s.c;
        Real acc = bias_.value[k];
        for (std::size_t c = 0; c < s.c; ++c) acc += wrow[c] * pooled[c];
        logits[b * classes_ + k] += acc / static_cast<Real>(s.t);
      }
    }
  }
  return logits;
}

Tensor Head::infer(const Tensor& spikes) const {
  HeadCache scratch;
  return forward_train(spikes, scratch);
}

Tensor Head::backward(const HeadCache& cache, const Tensor& grad_logits) {
  const Shape5 s = cache.in_shape;
  if (grad_logits.dims() != std::vector<std::size_t>{s.b, classes_}) {
    throw StateError("head backward without a matching forward pass");
  }
  const Real inv_t = 1.0 / static_cast<Real>(s.t);
  const std::size_t plane = s.h * s.w;
  Tensor dx = Tensor::of(s);
  for (std::size_t b = 0; b < s.b; ++b) {
    for (std::size_t k = 0; k < classes_; ++k) bias_.grad[k] += grad_logits[b * classes_ + k];
  }
  for (std::size_t t = 0; t < s.t; ++t) {
    for (std::size_t b = 0; b < s.b; ++b) {
      const Real* pooled = cache.pooled.data() + (t * s.b + b) * s.c;
      for (std::size_t c = 0; c < s.c; ++c) {
        Real dpool = 0;
        for (std::size_t k = 0; k < classes_; ++k) {
          const Real g = grad_logits[b * classes_ + k] * inv_t;
          weight_.grad[k * s.c + c] += g * pooled[c];
          dpool += g * weight_.value[k * s.c + c];
        }
        Real* d = dx.data() + ((t * s.b + b) * s.c + c) * plane;
        const Real share = dpool / static_cast<Real>(plane);
        for (std::size_t i = 0; i < plane; ++i) d[i] = share;
      }
    }
  }
  return dx;
}

void Head::collect(std::vector<Param*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

Tensor avgpool_and_fc(const SpikeTensor& spikes, const Tensor& fc_weight, const Tensor& fc_bias) {
  const Shape5 s = spikes.shape();
  if (fc_weight.rank() != 2 || fc_weight.dim(1) != s.c) {
    throw ShapeError("fc weight " + dims_to_string(fc_weight.dims()) + " does not accept " + std::to_string(s.c) +
                     " channels");
  }
  if (fc_bias.rank() != 1 || fc_bias.dim(0) != fc_weight.dim(0)) {
    throw ShapeError("fc bias does not match fc weight rows");
  }
  Head head("fc", s.c, fc_weight.dim(0));
  head.weight().value = fc_weight;
  head.bias().value = fc_bias;
  return head.infer(spikes.unpack());
}

}  // namespace spikesplit
