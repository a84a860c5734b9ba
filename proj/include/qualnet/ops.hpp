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

#pragma once

// Primitive layers with hand-written backward passes. Every function works on
// a whole NCHW batch; nothing here mixes statistics across samples.

#include <cstdint>
#include <span>
#include <vector>

#include "qualnet/tensor.hpp"

namespace qualnet::ops {

// Same-padded, stride-1 convolution. Weights are laid out
// [out_channels][in_channels][k][k]. `cols` receives the im2col matrix
// (in_channels*k*k rows, n*h*w columns) which the backward pass reuses.
template <typename T>
void conv2d_forward(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias,
                    int out_channels, int kernel, Tensor<T>& out, std::vector<T>& cols);

// Accumulates into grad_weight / grad_bias. grad_in may be null when the input
// gradient is not needed (first layer).
template <typename T>
void conv2d_backward(const Tensor<T>& grad_out, const std::vector<T>& cols, int in_channels,
                     int kernel, std::span<const T> weight, std::span<T> grad_weight,
                     std::span<T> grad_bias, Tensor<T>* grad_in);

// Non-affine instance normalization: (x - mean) / sqrt(var + eps) per sample
// and channel, biased variance. inv_std has one entry per (sample, channel).
template <typename T>
void instance_norm_forward(const Tensor<T>& in, T epsilon, Tensor<T>& out,
                           std::vector<T>& inv_std);

template <typename T>
void instance_norm_backward(const Tensor<T>& grad_out, const Tensor<T>& normalized,
                            const std::vector<T>& inv_std, Tensor<T>& grad_in);

template <typename T>
void relu_inplace(Tensor<T>& x);

// Zeroes gradient entries where the activation was clipped.
template <typename T>
void relu_backward_inplace(Tensor<T>& grad, const Tensor<T>& activation);

// 2x2 stride-2 max pooling. Input sides must be even.
template <typename T>
void max_pool2_forward(const Tensor<T>& in, Tensor<T>& out, std::vector<std::uint32_t>& argmax);

template <typename T>
void max_pool2_backward(const Tensor<T>& grad_out, const std::vector<std::uint32_t>& argmax,
                        Tensor<T>& grad_in);

template <typename T>
void avg_pool2_forward(const Tensor<T>& in, Tensor<T>& out);

template <typename T>
void avg_pool2_backward(const Tensor<T>& grad_out, Tensor<T>& grad_in);

// Spatial mean, n x c x 1 x 1.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& in);

template <typename T>
void global_avg_pool_backward(const Tensor<T>& grad_out, Tensor<T>& grad_in);

// Channel concatenation of two maps with equal n, h, w.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
void split_channels(const Tensor<T>& grad, Tensor<T>& grad_a, Tensor<T>& grad_b);

// Fully connected layer on flattened samples. Weight is [out][in].
template <typename T>
void linear_forward(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias,
                    int out_features, Tensor<T>& out);

template <typename T>
void linear_backward(const Tensor<T>& grad_out, const Tensor<T>& in, std::span<const T> weight,
                     std::span<T> grad_weight, std::span<T> grad_bias, Tensor<T>* grad_in);

// Left-right mirror of every sample.
template <typename T>
Tensor<T> hflip(const Tensor<T>& in);

}  // namespace qualnet::ops
