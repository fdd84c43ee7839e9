#pragma once

// Dense per-timestep kernels. Matrices are T x channels, row-major.
//
// Each kernel has a straightforward loop implementation (the *_reference
// functions) kept for tests and benchmarks; the production versions express
// the same arithmetic as a handful of GEMMs.

#include "mobiclr/common.hpp"

#include <span>

namespace mobiclr::kernels {

/// GELU, erf form.
double gelu(double x);
double gelu_grad(double x);
Mat gelu(const Mat& x);
/// grad_out .* gelu'(pre)
Mat gelu_backward(const Mat& pre, const Mat& grad_out);

/// Left zero-padding that keeps the output length equal to the input length.
inline int left_pad(int kernel_size, int dilation) { return dilation * (kernel_size - 1) / 2; }

/// out[t] = bias + sum_j x[t + j*dilation - left_pad] * taps[j]; out-of-range rows read as zero.
/// taps[j] is in_channels x out_channels, bias is 1 x out_channels.
Mat conv1d(const Mat& x, std::span<const Mat> taps, const Mat& bias, int dilation);
Mat conv1d_reference(const Mat& x, std::span<const Mat> taps, const Mat& bias, int dilation);

/// Accumulates into grad_taps / grad_bias and returns d(loss)/dx.
Mat conv1d_backward(const Mat& x, std::span<const Mat> taps, int dilation, const Mat& grad_out,
                    std::span<Mat> grad_taps, Mat& grad_bias);
Mat conv1d_backward_reference(const Mat& x, std::span<const Mat> taps, int dilation, const Mat& grad_out,
                              std::span<Mat> grad_taps, Mat& grad_bias);

/// Per-timestep affine map: x * weight + bias.
Mat linear(const Mat& x, const Mat& weight, const Mat& bias);
/// Accumulates parameter gradients and returns d(loss)/dx.
Mat linear_backward(const Mat& x, const Mat& weight, const Mat& grad_out, Mat& grad_weight, Mat& grad_bias);

}  // namespace mobiclr::kernels
