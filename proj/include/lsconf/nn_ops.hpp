#pragma once

#include "lsconf/autodiff.hpp"

namespace lsconf {

enum class Mode { train, eval };

/// 3x3 cross-correlation, stride 1, zero padding 1.
/// input [N,Cin,H,W], weight [Cout,Cin,3,3], bias [Cout] -> [N,Cout,H,W]
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// Running estimates used by batchnorm2d in eval mode.
struct RunningStats {
    NdArray mean;
    NdArray var;

    explicit RunningStats(std::size_t channels = 0);
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Per-channel batch normalization over (N,H,W). Train mode normalizes with
/// biased batch statistics and updates `stats` (unbiased variance); eval mode
/// uses `stats` and is read-only.
Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta, RunningStats& stats, Mode mode);
Tensor batchnorm2d_eval(const Tensor& input, const Tensor& gamma, const Tensor& beta, const RunningStats& stats);

/// 2x2 max pooling with stride 2. Ties route the gradient to the first element
/// of the window in row-major order.
Tensor maxpool2(const Tensor& input);

/// input [N,Din], weight [Dout,Din], bias [Dout] -> [N,Dout]
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

}  // namespace lsconf
