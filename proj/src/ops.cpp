// Copyright (c) 2026 The QualNet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "qualnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "qualnet/errors.hpp"

namespace qualnet {

template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> samples) {
  if (samples.empty()) return {};
  const auto& first = samples.front();
  Tensor<T> out(static_cast<int>(samples.size()) * first.n, first.c, first.h, first.w);
  auto dst = out.data.begin();
  for (const auto& s : samples) {
    if (s.c != first.c || s.h != first.h || s.w != first.w) {
      throw ShapeError("stack: mismatched sample shapes " + s.shape_string() + " vs " +
                       first.shape_string());
    }
    dst = std::copy(s.data.begin(), s.data.end(), dst);
  }
  return out;
}

template Tensor<float> stack(std::span<const Tensor<float>>);
template Tensor<double> stack(std::span<const Tensor<double>>);

}  // namespace qualnet

namespace qualnet::ops {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRow = Eigen::Map<RowMatrix<T>>;
template <typename T>
using MapConstRow = Eigen::Map<const RowMatrix<T>>;

template <typename T>
void im2col(const Tensor<T>& in, int kernel, std::vector<T>& cols) {
  const int pad = kernel / 2;
  const std::size_t plane = in.plane();
  const std::size_t width = static_cast<std::size_t>(in.n) * plane;
  cols.assign(static_cast<std::size_t>(in.c) * kernel * kernel * width, T(0));
  if (kernel == 1) {
    for (int ni = 0; ni < in.n; ++ni) {
      for (int ci = 0; ci < in.c; ++ci) {
        const T* src = in.data.data() + (static_cast<std::size_t>(ni) * in.c + ci) * plane;
        std::copy(src, src + plane, cols.data() + ci * width + ni * plane);
      }
    }
    return;
  }
  for (int ci = 0; ci < in.c; ++ci) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        T* row = cols.data() + ((static_cast<std::size_t>(ci) * kernel + ky) * kernel + kx) * width;
        const int dy = ky - pad;
        const int dx = kx - pad;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(in.w, in.w - dx);
        for (int ni = 0; ni < in.n; ++ni) {
          const T* src = in.data.data() + (static_cast<std::size_t>(ni) * in.c + ci) * plane;
          T* dst = row + ni * plane;
          for (int y = 0; y < in.h; ++y) {
            const int sy = y + dy;
            if (sy < 0 || sy >= in.h) continue;
            const T* s = src + static_cast<std::size_t>(sy) * in.w + dx;
            T* d = dst + static_cast<std::size_t>(y) * in.w;
            for (int x = x0; x < x1; ++x) d[x] = s[x];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_accumulate(const std::vector<T>& dcols, int kernel, Tensor<T>& grad_in) {
  const int pad = kernel / 2;
  const std::size_t plane = grad_in.plane();
  const std::size_t width = static_cast<std::size_t>(grad_in.n) * plane;
  for (int ci = 0; ci < grad_in.c; ++ci) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const T* row =
            dcols.data() + ((static_cast<std::size_t>(ci) * kernel + ky) * kernel + kx) * width;
        const int dy = ky - pad;
        const int dx = kx - pad;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(grad_in.w, grad_in.w - dx);
        for (int ni = 0; ni < grad_in.n; ++ni) {
          T* dst = grad_in.data.data() + (static_cast<std::size_t>(ni) * grad_in.c + ci) * plane;
          const T* src = row + ni * plane;
          for (int y = 0; y < grad_in.h; ++y) {
            const int sy = y + dy;
            if (sy < 0 || sy >= grad_in.h) continue;
            T* d = dst + static_cast<std::size_t>(sy) * grad_in.w + dx;
            const T* s = src + static_cast<std::size_t>(y) * grad_in.w;
            for (int x = x0; x < x1; ++x) d[x] += s[x];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void conv2d_forward(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias,
                    int out_channels, int kernel, Tensor<T>& out, std::vector<T>& cols) {
  const int k2 = in.c * kernel * kernel;
  if (weight.size() != static_cast<std::size_t>(out_channels) * k2 ||
      bias.size() != static_cast<std::size_t>(out_channels)) {
    throw ShapeError("conv2d: weight does not match input channels " + std::to_string(in.c));
  }
  im2col(in, kernel, cols);
  const auto plane = static_cast<Eigen::Index>(in.plane());
  const auto width = static_cast<Eigen::Index>(in.n) * plane;
  MapConstRow<T> w(weight.data(), out_channels, k2);
  MapConstRow<T> x(cols.data(), k2, width);
  out = Tensor<T>(in.n, out_channels, in.h, in.w);
  if (in.n == 1) {
    MapRow<T> y(out.data.data(), out_channels, width);
    y.noalias() = w * x;
  } else {
    RowMatrix<T> y = w * x;
    for (int ni = 0; ni < in.n; ++ni) {
      for (int co = 0; co < out_channels; ++co) {
        std::copy_n(y.data() + co * width + ni * plane, plane,
                    out.data.data() + (static_cast<std::size_t>(ni) * out_channels + co) * plane);
      }
    }
  }
  for (int ni = 0; ni < in.n; ++ni) {
    for (int co = 0; co < out_channels; ++co) {
      T* p = out.data.data() + (static_cast<std::size_t>(ni) * out_channels + co) * plane;
      const T b = bias[co];
      for (Eigen::Index i = 0; i < plane; ++i) p[i] += b;
    }
  }
}

template <typename T>
void conv2d_backward(const Tensor<T>& grad_out, const std::vector<T>& cols, int in_channels,
                     int kernel, std::span<const T> weight, std::span<T> grad_weight,
                     std::span<T> grad_bias, Tensor<T>* grad_in) {
  const int out_channels = grad_out.c;
  const int k2 = in_channels * kernel * kernel;
  const auto plane = static_cast<Eigen::Index>(grad_out.plane());
  const auto width = static_cast<Eigen::Index>(grad_out.n) * plane;

  // Gradient laid out as (out_channels x n*h*w) to match the im2col columns.
  RowMatrix<T> g(out_channels, width);
  for (int ni = 0; ni < grad_out.n; ++ni) {
    for (int co = 0; co < out_channels; ++co) {
      std::copy_n(grad_out.data.data() + (static_cast<std::size_t>(ni) * out_channels + co) * plane,
                  plane, g.data() + co * width + ni * plane);
    }
  }
  MapConstRow<T> x(cols.data(), k2, width);
  MapRow<T> gw(grad_weight.data(), out_channels, k2);
  gw.noalias() += g * x.transpose();
  for (int co = 0; co < out_channels; ++co) grad_bias[co] += g.row(co).sum();

  if (grad_in != nullptr) {
    MapConstRow<T> w(weight.data(), out_channels, k2);
    std::vector<T> dcols(static_cast<std::size_t>(k2) * width);
    MapRow<T> dx(dcols.data(), k2, width);
    dx.noalias() = w.transpose() * g;
    *grad_in = Tensor<T>(grad_out.n, in_channels, grad_out.h, grad_out.w);
    col2im_accumulate(dcols, kernel, *grad_in);
  }
}

template <typename T>
void instance_norm_forward(const Tensor<T>& in, T epsilon, Tensor<T>& out,
                           std::vector<T>& inv_std) {
  out = Tensor<T>(in.n, in.c, in.h, in.w);
  inv_std.resize(static_cast<std::size_t>(in.n) * in.c);
  const std::size_t plane = in.plane();
  for (std::size_t p = 0; p < inv_std.size(); ++p) {
    const T* x = in.data.data() + p * plane;
    T* y = out.data.data() + p * plane;
    // Two-pass statistics in double keep the float path accurate on large planes.
    double mean = 0.0;
    for (std::size_t i = 0; i < plane; ++i) mean += x[i];
    mean /= static_cast<double>(plane);
    double var = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = x[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(plane);
    const double is = 1.0 / std::sqrt(var + static_cast<double>(epsilon));
    inv_std[p] = static_cast<T>(is);
    for (std::size_t i = 0; i < plane; ++i) y[i] = static_cast<T>((x[i] - mean) * is);
  }
}

template <typename T>
void instance_norm_backward(const Tensor<T>& grad_out, const Tensor<T>& normalized,
                            const std::vector<T>& inv_std, Tensor<T>& grad_in) {
  grad_in = Tensor<T>(grad_out.n, grad_out.c, grad_out.h, grad_out.w);
  const std::size_t plane = grad_out.plane();
  const double inv_count = 1.0 / static_cast<double>(plane);
  for (std::size_t p = 0; p < inv_std.size(); ++p) {
    const T* g = grad_out.data.data() + p * plane;
    const T* y = normalized.data.data() + p * plane;
    T* dx = grad_in.data.data() + p * plane;
    double sum_g = 0.0;
    double sum_gy = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      sum_g += g[i];
      sum_gy += static_cast<double>(g[i]) * y[i];
    }
    const double mean_g = sum_g * inv_count;
    const double mean_gy = sum_gy * inv_count;
    const double is = inv_std[p];
    for (std::size_t i = 0; i < plane; ++i) {
      dx[i] = static_cast<T>(is * (g[i] - mean_g - y[i] * mean_gy));
    }
  }
}

template <typename T>
void relu_inplace(Tensor<T>& x) {
  for (auto& v : x.data) v = v > T(0) ? v : T(0);
}

template <typename T>
void relu_backward_inplace(Tensor<T>& grad, const Tensor<T>& activation) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(activation.data[i] > T(0))) grad.data[i] = T(0);
  }
}

template <typename T>
void max_pool2_forward(const Tensor<T>& in, Tensor<T>& out, std::vector<std::uint32_t>& argmax) {
  if (in.h % 2 != 0 || in.w % 2 != 0) {
    throw ShapeError("max_pool2: odd spatial size " + in.shape_string());
  }
  out = Tensor<T>(in.n, in.c, in.h / 2, in.w / 2);
  argmax.resize(out.size());
  const std::size_t in_plane = in.plane();
  const std::size_t out_plane = out.plane();
  for (std::size_t p = 0; p < static_cast<std::size_t>(in.n) * in.c; ++p) {
    const T* x = in.data.data() + p * in_plane;
    for (int oy = 0; oy < out.h; ++oy) {
      for (int ox = 0; ox < out.w; ++ox) {
        std::uint32_t best = static_cast<std::uint32_t>((2 * oy) * in.w + 2 * ox);
        const std::uint32_t cand[3] = {best + 1, best + static_cast<std::uint32_t>(in.w),
                                       best + static_cast<std::uint32_t>(in.w) + 1};
        for (std::uint32_t c : cand) {
          if (x[c] > x[best]) best = c;
        }
        const std::size_t o = p * out_plane + static_cast<std::size_t>(oy) * out.w + ox;
        out.data[o] = x[best];
        argmax[o] = best;
      }
    }
  }
}

template <typename T>
void max_pool2_backward(const Tensor<T>& grad_out, const std::vector<std::uint32_t>& argmax,
                        Tensor<T>& grad_in) {
  grad_in = Tensor<T>(grad_out.n, grad_out.c, grad_out.h * 2, grad_out.w * 2);
  const std::size_t in_plane = grad_in.plane();
  const std::size_t out_plane = grad_out.plane();
  for (std::size_t p = 0; p < static_cast<std::size_t>(grad_out.n) * grad_out.c; ++p) {
    T* dx = grad_in.data.data() + p * in_plane;
    for (std::size_t i = 0; i < out_plane; ++i) {
      dx[argmax[p * out_plane + i]] += grad_out.data[p * out_plane + i];
    }
  }
}

template <typename T>
void avg_pool2_forward(const Tensor<T>& in, Tensor<T>& out) {
  if (in.h % 2 != 0 || in.w % 2 != 0) {
    throw ShapeError("avg_pool2: odd spatial size " + in.shape_string());
  }
  out = Tensor<T>(in.n, in.c, in.h / 2, in.w / 2);
  for (int ni = 0; ni < in.n; ++ni) {
    for (int ci = 0; ci < in.c; ++ci) {
      for (int oy = 0; oy < out.h; ++oy) {
        for (int ox = 0; ox < out.w; ++ox) {
          out.at(ni, ci, oy, ox) =
              (in.at(ni, ci, 2 * oy, 2 * ox) + in.at(ni, ci, 2 * oy, 2 * ox + 1) +
               in.at(ni, ci, 2 * oy + 1, 2 * ox) + in.at(ni, ci, 2 * oy + 1, 2 * ox + 1)) /
              T(4);
        }
      }
    }
  }
}

template <typename T>
void avg_pool2_backward(const Tensor<T>& grad_out, Tensor<T>& grad_in) {
  grad_in = Tensor<T>(grad_out.n, grad_out.c, grad_out.h * 2, grad_out.w * 2);
  for (int ni = 0; ni < grad_out.n; ++ni) {
    for (int ci = 0; ci < grad_out.c; ++ci) {
      for (int y = 0; y < grad_in.h; ++y) {
        for (int x = 0; x < grad_in.w; ++x) {
          grad_in.at(ni, ci, y, x) = grad_out.at(ni, ci, y / 2, x / 2) / T(4);
        }
      }
    }
  }
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& in) {
  Tensor<T> out(in.n, in.c, 1, 1);
  const std::size_t plane = in.plane();
  for (std::size_t p = 0; p < out.size(); ++p) {
    const T* x = in.data.data() + p * plane;
    double sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) sum += x[i];
    out.data[p] = static_cast<T>(sum / static_cast<double>(plane));
  }
  return out;
}

template <typename T>
void global_avg_pool_backward(const Tensor<T>& grad_out, Tensor<T>& grad_in) {
  const std::size_t plane = grad_in.plane();
  const T scale = T(1) / static_cast<T>(plane);
  for (std::size_t p = 0; p < grad_out.size(); ++p) {
    T* dx = grad_in.data.data() + p * plane;
    const T g = grad_out.data[p] * scale;
    for (std::size_t i = 0; i < plane; ++i) dx[i] = g;
  }
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) {
    throw ShapeError("concat: " + a.shape_string() + " vs " + b.shape_string());
  }
  Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
  auto dst = out.data.begin();
  for (int ni = 0; ni < a.n; ++ni) {
    dst = std::copy(a.sample(ni).begin(), a.sample(ni).end(), dst);
    dst = std::copy(b.sample(ni).begin(), b.sample(ni).end(), dst);
  }
  return out;
}

template <typename T>
void split_channels(const Tensor<T>& grad, Tensor<T>& grad_a, Tensor<T>& grad_b) {
  auto src = grad.data.begin();
  for (int ni = 0; ni < grad.n; ++ni) {
    auto a = grad_a.sample(ni);
    auto b = grad_b.sample(ni);
    std::copy(src, src + static_cast<std::ptrdiff_t>(a.size()), a.begin());
    src += static_cast<std::ptrdiff_t>(a.size());
    std::copy(src, src + static_cast<std::ptrdiff_t>(b.size()), b.begin());
    src += static_cast<std::ptrdiff_t>(b.size());
  }
}

template <typename T>
void linear_forward(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias,
                    int out_features, Tensor<T>& out) {
  const auto in_features = static_cast<Eigen::Index>(in.sample_size());
  if (weight.size() != static_cast<std::size_t>(out_features) * in_features) {
    throw ShapeError("linear: weight does not match " + std::to_string(in_features) +
                     " input features");
  }
  out = Tensor<T>(in.n, out_features, 1, 1);
  MapConstRow<T> w(weight.data(), out_features, in_features);
  MapConstRow<T> x(in.data.data(), in.n, in_features);
  MapRow<T> y(out.data.data(), in.n, out_features);
  y.noalias() = x * w.transpose();
  for (int ni = 0; ni < in.n; ++ni) {
    for (int o = 0; o < out_features; ++o) y(ni, o) += bias[o];
  }
}

template <typename T>
void linear_backward(const Tensor<T>& grad_out, const Tensor<T>& in, std::span<const T> weight,
                     std::span<T> grad_weight, std::span<T> grad_bias, Tensor<T>* grad_in) {
  const auto in_features = static_cast<Eigen::Index>(in.sample_size());
  const auto out_features = static_cast<Eigen::Index>(grad_out.c);
  MapConstRow<T> g(grad_out.data.data(), grad_out.n, out_features);
  MapConstRow<T> x(in.data.data(), in.n, in_features);
  MapRow<T> gw(grad_weight.data(), out_features, in_features);
  gw.noalias() += g.transpose() * x;
  for (Eigen::Index o = 0; o < out_features; ++o) grad_bias[o] += g.col(o).sum();
  if (grad_in != nullptr) {
    *grad_in = Tensor<T>(in.n, in.c, in.h, in.w);
    MapConstRow<T> w(weight.data(), out_features, in_features);
    MapRow<T> dx(grad_in->data.data(), in.n, in_features);
    dx.noalias() = g * w;
  }
}

template <typename T>
Tensor<T> hflip(const Tensor<T>& in) {
  Tensor<T> out(in.n, in.c, in.h, in.w);
  for (int ni = 0; ni < in.n; ++ni) {
    for (int ci = 0; ci < in.c; ++ci) {
      for (int y = 0; y < in.h; ++y) {
        for (int x = 0; x < in.w; ++x) out.at(ni, ci, y, x) = in.at(ni, ci, y, in.w - 1 - x);
      }
    }
  }
  return out;
}

#define QUALNET_INSTANTIATE_OPS(T)                                                              \
  template void conv2d_forward(const Tensor<T>&, std::span<const T>, std::span<const T>, int,  \
                               int, Tensor<T>&, std::vector<T>&);                               \
  template void conv2d_backward(const Tensor<T>&, const std::vector<T>&, int, int,              \
                                std::span<const T>, std::span<T>, std::span<T>, Tensor<T>*);    \
  template void instance_norm_forward(const Tensor<T>&, T, Tensor<T>&, std::vector<T>&);      \
  template void instance_norm_backward(const Tensor<T>&, const Tensor<T>&,                     \
                                       const std::vector<T>&, Tensor<T>&);                     \
  template void relu_inplace(Tensor<T>&);                                                       \
  template void relu_backward_inplace(Tensor<T>&, const Tensor<T>&);                           \
  template void max_pool2_forward(const Tensor<T>&, Tensor<T>&, std::vector<std::uint32_t>&);  \
  template void max_pool2_backward(const Tensor<T>&, const std::vector<std::uint32_t>&,        \
                                   Tensor<T>&);                                                 \
  template void avg_pool2_forward(const Tensor<T>&, Tensor<T>&);                               \
  template void avg_pool2_backward(const Tensor<T>&, Tensor<T>&);                              \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                        \
  template void global_avg_pool_backward(const Tensor<T>&, Tensor<T>&);                        \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                      \
  template void split_channels(const Tensor<T>&, Tensor<T>&, Tensor<T>&);                      \
  template void linear_forward(const Tensor<T>&, std::span<const T>, std::span<const T>, int,  \
                               Tensor<T>&);                                                     \
  template void linear_backward(const Tensor<T>&, const Tensor<T>&, std::span<const T>,        \
                                std::span<T>, std::span<T>, Tensor<T>*);                        \
  template Tensor<T> hflip(const Tensor<T>&);

QUALNET_INSTANTIATE_OPS(float)
QUALNET_INSTANTIATE_OPS(double)

#undef QUALNET_INSTANTIATE_OPS

}  // namespace qualnet::ops
