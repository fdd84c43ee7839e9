#include "mobiclr/kernels.hpp"

#include <cmath>
#include <numbers>

namespace mobiclr::kernels {

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
    const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
    return cdf + x * pdf;
}

Mat gelu(const Mat& x) { return x.unaryExpr([](double v) { return gelu(v); }); }

Mat gelu_backward(const Mat& pre, const Mat& grad_out) {
    return grad_out.cwiseProduct(pre.unaryExpr([](double v) { return gelu_grad(v); }));
}

namespace {

struct TapWindow {
    Eigen::Index out_begin;  // first output row touched
    Eigen::Index in_begin;   // matching input row
    Eigen::Index length;
};

// Output rows t with 0 <= t + offset < T.
TapWindow tap_window(Eigen::Index rows, Eigen::Index offset) {
    const Eigen::Index out_begin = std::max<Eigen::Index>(0, -offset);
    const Eigen::Index out_end = std::min<Eigen::Index>(rows, rows - offset);
    return {out_begin, out_begin + offset, std::max<Eigen::Index>(0, out_end - out_begin)};
}

void check_conv(const Mat& x, std::span<const Mat> taps, int dilation) {
    if (taps.empty()) throw ArgumentError("conv1d: no taps");
    if (dilation < 1) throw ArgumentError("conv1d: dilation must be positive");
    if (taps.front().rows() != x.cols())
        throw ArgumentError("conv1d: input has " + std::to_string(x.cols()) + " channels, expected " +
                            std::to_string(taps.front().rows()));
}

}  // namespace

Mat conv1d(const Mat& x, std::span<const Mat> taps, const Mat& bias, int dilation) {
    check_conv(x, taps, dilation);
    const int k = static_cast<int>(taps.size());
    const int pad = left_pad(k, dilation);
    Mat out = bias.replicate(x.rows(), 1);
    for (int j = 0; j < k; ++j) {
        const auto w = tap_window(x.rows(), static_cast<Eigen::Index>(j) * dilation - pad);
        if (w.length <= 0) continue;
        out.middleRows(w.out_begin, w.length).noalias() += x.middleRows(w.in_begin, w.length) * taps[j];
    }
    return out;
}

Mat conv1d_reference(const Mat& x, std::span<const Mat> taps, const Mat& bias, int dilation) {
    check_conv(x, taps, dilation);
    const int k = static_cast<int>(taps.size());
    const int pad = left_pad(k, dilation);
    const Eigen::Index T = x.rows();
    const Eigen::Index cin = x.cols();
    const Eigen::Index cout = taps.front().cols();
    Mat out(T, cout);
    for (Eigen::Index t = 0; t < T; ++t) {
        for (Eigen::Index o = 0; o < cout; ++o) {
            double acc = bias(0, o);
            for (int j = 0; j < k; ++j) {
                const Eigen::Index src = t + static_cast<Eigen::Index>(j) * dilation - pad;
                if (src < 0 || src >= T) continue;
                for (Eigen::Index i = 0; i < cin; ++i) acc += x(src, i) * taps[j](i, o);
            }
            out(t, o) = acc;
        }
    }
    return out;
}

Mat conv1d_backward(const Mat& x, std::span<const Mat> taps, int dilation, const Mat& grad_out,
                    std::span<Mat> grad_taps, Mat& grad_bias) {
    check_conv(x, taps, dilation);
    const int k = static_cast<int>(taps.size());
    const int pad = left_pad(k, dilation);
    Mat grad_x = Mat::Zero(x.rows(), x.cols());
    grad_bias += grad_out.colwise().sum();
    for (int j = 0; j < k; ++j) {
        const auto w = tap_window(x.rows(), static_cast<Eigen::Index>(j) * dilation - pad);
        if (w.length <= 0) continue;
        const auto g = grad_out.middleRows(w.out_begin, w.length);
        grad_taps[j].noalias() += x.middleRows(w.in_begin, w.length).transpose() * g;
        grad_x.middleRows(w.in_begin, w.length).noalias() += g * taps[j].transpose();
    }
    return grad_x;
}

Mat conv1d_backward_reference(const Mat& x, std::span<const Mat> taps, int dilation, const Mat& grad_out,
                              std::span<Mat> grad_taps, Mat& grad_bias) {
    check_conv(x, taps, dilation);
    const int k = static_cast<int>(taps.size());
    const int pad = left_pad(k, dilation);
    const Eigen::Index T = x.rows();
    Mat grad_x = Mat::Zero(T, x.cols());
    for (Eigen::Index t = 0; t < T; ++t) {
        for (Eigen::Index o = 0; o < grad_out.cols(); ++o) {
            const double g = grad_out(t, o);
            grad_bias(0, o) += g;
            for (int j = 0; j < k; ++j) {
                const Eigen::Index src = t + static_cast<Eigen::Index>(j) * dilation - pad;
                if (src < 0 || src >= T) continue;
                for (Eigen::Index i = 0; i < x.cols(); ++i) {
                    grad_taps[j](i, o) += x(src, i) * g;
                    grad_x(src, i) += taps[j](i, o) * g;
                }
            }
        }
    }
    return grad_x;
}

Mat linear(const Mat& x, const Mat& weight, const Mat& bias) {
    if (x.cols() != weight.rows())
        throw ArgumentError("linear: input has " + std::to_string(x.cols()) + " features, expected " +
                            std::to_string(weight.rows()));
    Mat out = bias.replicate(x.rows(), 1);
    out.noalias() += x * weight;
    return out;
}

Mat linear_backward(const Mat& x, const Mat& weight, const Mat& grad_out, Mat& grad_weight, Mat& grad_bias) {
    grad_weight.noalias() += x.transpose() * grad_out;
    grad_bias += grad_out.colwise().sum();
    return grad_out * weight.transpose();
}

}  // namespace mobiclr::kernels
