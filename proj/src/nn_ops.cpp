#include "lsconf/nn_ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "lsconf/errors.hpp"

namespace lsconf {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void expect_rank(const Tensor& t, std::size_t rank, const char* op, const char* what)
{
    if (t.shape().size() != rank)
        throw DimensionError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                             shape_to_string(t.shape()));
}

void expect_axis(std::size_t got, std::size_t want, const char* op, const char* axis)
{
    if (got != want)
        throw DimensionError(std::string(op) + ": axis " + axis + " is " + std::to_string(got) + ", expected " +
                             std::to_string(want));
}

// Columns per GEMM when batching several images of a conv layer together.
constexpr std::size_t kConvColumns = 1024;

struct ConvGeom {
    std::size_t n, cin, cout, h, w;
    std::size_t hw() const { return h * w; }
    std::size_t k() const { return cin * 9; }
    std::size_t chunk() const { return std::max<std::size_t>(1, kConvColumns / hw()); }
};

// Valid output-column range [lo, hi) for a horizontal kernel offset dx.
inline void valid_range(long dx, std::size_t w, std::size_t& lo, std::size_t& hi)
{
    lo = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
    hi = dx > 0 ? w - static_cast<std::size_t>(dx) : w;
}

// Fills col[K x (count*HW)] for images [first, first+count).
void im2col(const double* in, const ConvGeom& g, std::size_t first, std::size_t count, double* col)
{
    const std::size_t hw = g.hw();
    const std::size_t cols = count * hw;
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const long dx = kx - 1;
                std::size_t lo, hi;
                valid_range(dx, g.w, lo, hi);
                double* row = col + ((ci * 9) + ky * 3 + kx) * cols;
                for (std::size_t l = 0; l < count; ++l) {
                    const double* plane = in + ((first + l) * g.cin + ci) * hw;
                    double* dst = row + l * hw;
                    for (std::size_t y = 0; y < g.h; ++y) {
                        const long sy = static_cast<long>(y) + ky - 1;
                        double* drow = dst + y * g.w;
                        if (sy < 0 || sy >= static_cast<long>(g.h)) {
                            std::fill(drow, drow + g.w, 0.0);
                            continue;
                        }
                        const double* srow = plane + sy * g.w + dx;
                        std::fill(drow, drow + lo, 0.0);
                        std::copy(srow + lo, srow + hi, drow + lo);
                        std::fill(drow + hi, drow + g.w, 0.0);
                    }
                }
            }
        }
    }
}

// out[n][co][p] (+)= sum_k wmat[co][k] * col[k][n*HW+p], with col built from `in`.
void correlate(const double* in, const ConvGeom& g, const double* weights, double* out, bool accumulate)
{
    const std::size_t hw = g.hw();
    const std::size_t chunk = g.chunk();
    std::vector<double> col(g.k() * std::min(chunk, g.n) * hw);
    RowMat prod;
    CMapMat wmat(weights, g.cout, g.k());
    for (std::size_t first = 0; first < g.n; first += chunk) {
        const std::size_t count = std::min(chunk, g.n - first);
        im2col(in, g, first, count, col.data());
        prod.noalias() = wmat * CMapMat(col.data(), g.k(), count * hw);
        for (std::size_t l = 0; l < count; ++l)
            for (std::size_t co = 0; co < g.cout; ++co) {
                double* dst = out + ((first + l) * g.cout + co) * hw;
                const double* src = prod.data() + co * count * hw + l * hw;
                if (accumulate)
                    for (std::size_t p = 0; p < hw; ++p) dst[p] += src[p];
                else
                    std::copy_n(src, hw, dst);
            }
    }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias)
{
    expect_rank(input, 4, "conv2d", "input");
    expect_rank(weight, 4, "conv2d", "weight");
    expect_rank(bias, 1, "conv2d", "bias");
    const ConvGeom g{input.dim(0), input.dim(1), weight.dim(0), input.dim(2), input.dim(3)};
    expect_axis(weight.dim(1), g.cin, "conv2d", "weight[1] (input channels)");
    expect_axis(weight.dim(2), 3, "conv2d", "weight[2] (kernel height)");
    expect_axis(weight.dim(3), 3, "conv2d", "weight[3] (kernel width)");
    expect_axis(bias.dim(0), g.cout, "conv2d", "bias[0] (output channels)");

    NdArray out({g.n, g.cout, g.h, g.w});
    correlate(input.value().data(), g, weight.value().data(), out.data(), false);
    const std::size_t hw = g.hw();
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t co = 0; co < g.cout; ++co) {
            double* dst = out.data() + (i * g.cout + co) * hw;
            const double b = bias.value()[co];
            for (std::size_t p = 0; p < hw; ++p) dst[p] += b;
        }

    return record("conv2d", std::move(out), {input, weight, bias}, [g](detail::Node& n) {
        const auto& in = n.parents[0];
        const auto& wt = n.parents[1];
        const auto& bs = n.parents[2];
        const std::size_t hw = g.hw();
        if (bs->requires_grad) {
            NdArray& gb = bs->grad_buffer();
            for (std::size_t i = 0; i < g.n; ++i)
                for (std::size_t co = 0; co < g.cout; ++co) {
                    const double* src = n.grad.data() + (i * g.cout + co) * hw;
                    double s = 0.0;
                    for (std::size_t p = 0; p < hw; ++p) s += src[p];
                    gb[co] += s;
                }
        }
        if (wt->requires_grad) {
            const std::size_t chunk = g.chunk();
            std::vector<double> col(g.k() * std::min(chunk, g.n) * hw);
            RowMat gout;
            MapMat gw(wt->grad_buffer().data(), g.cout, g.k());
            for (std::size_t first = 0; first < g.n; first += chunk) {
                const std::size_t count = std::min(chunk, g.n - first);
                gout.resize(g.cout, count * hw);
                for (std::size_t l = 0; l < count; ++l)
                    for (std::size_t co = 0; co < g.cout; ++co)
                        std::copy_n(n.grad.data() + ((first + l) * g.cout + co) * hw, hw,
                                    gout.data() + co * count * hw + l * hw);
                im2col(in->value.data(), g, first, count, col.data());
                gw.noalias() += gout * CMapMat(col.data(), g.k(), count * hw).transpose();
            }
        }
        if (in->requires_grad) {
            // Input gradient is a correlation of the output gradient with the
            // spatially flipped, channel-transposed kernel.
            std::vector<double> flipped(g.cin * g.cout * 9);
            const double* w = wt->value.data();
            for (std::size_t co = 0; co < g.cout; ++co)
                for (std::size_t ci = 0; ci < g.cin; ++ci)
                    for (std::size_t t = 0; t < 9; ++t)
                        flipped[(ci * g.cout + co) * 9 + (8 - t)] = w[(co * g.cin + ci) * 9 + t];
            const ConvGeom back{g.n, g.cout, g.cin, g.h, g.w};
            correlate(n.grad.data(), back, flipped.data(), in->grad_buffer().data(), true);
        }
    });
}

RunningStats::RunningStats(std::size_t channels)
{
    if (channels > 0) {
        mean = NdArray({channels}, 0.0);
        var = NdArray({channels}, 1.0);
    }
}

Tensor batchnorm2d_eval(const Tensor& input, const Tensor& gamma, const Tensor& beta, const RunningStats& stats)
{
    expect_rank(input, 4, "batchnorm2d", "input");
    const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
    expect_axis(gamma.size(), c, "batchnorm2d", "gamma[0] (channels)");
    expect_axis(beta.size(), c, "batchnorm2d", "beta[0] (channels)");
    expect_axis(stats.mean.size(), c, "batchnorm2d", "running_mean[0] (channels)");
    const NdArray& x = input.value();

    NdArray out(input.shape());
    std::vector<double> a(c), b(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
        a[ch] = gamma.value()[ch] / std::sqrt(stats.var[ch] + kBatchNormEps);
        b[ch] = beta.value()[ch] - a[ch] * stats.mean[ch];
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (i * c + ch) * hw;
            for (std::size_t p = 0; p < hw; ++p) out[base + p] = a[ch] * x[base + p] + b[ch];
        }
    const NdArray rmean = stats.mean;
    const NdArray rvar = stats.var;
    return record("batchnorm2d", std::move(out), {input, gamma, beta},
                  [n, c, hw, rmean, rvar](detail::Node& node) {
                      const auto& in = node.parents[0];
                      const auto& gm = node.parents[1];
                      const auto& bt = node.parents[2];
                      for (std::size_t ch = 0; ch < c; ++ch) {
                          const double inv = 1.0 / std::sqrt(rvar[ch] + kBatchNormEps);
                          double sg = 0.0, sgx = 0.0;
                          for (std::size_t i = 0; i < n; ++i) {
                              const std::size_t base = (i * c + ch) * hw;
                              for (std::size_t p = 0; p < hw; ++p) {
                                  const double gy = node.grad[base + p];
                                  sg += gy;
                                  sgx += gy * (in->value[base + p] - rmean[ch]) * inv;
                                  if (in->requires_grad) in->grad_buffer()[base + p] += gy * gm->value[ch] * inv;
                              }
                          }
                          if (gm->requires_grad) gm->grad_buffer()[ch] += sgx;
                          if (bt->requires_grad) bt->grad_buffer()[ch] += sg;
                      }
                  });
}

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta, RunningStats& stats, Mode mode)
{
    if (mode == Mode::eval) return batchnorm2d_eval(input, gamma, beta, stats);
    expect_rank(input, 4, "batchnorm2d", "input");
    const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
    expect_axis(gamma.size(), c, "batchnorm2d", "gamma[0] (channels)");
    expect_axis(beta.size(), c, "batchnorm2d", "beta[0] (channels)");
    expect_axis(stats.mean.size(), c, "batchnorm2d", "running_mean[0] (channels)");
    const std::size_t m = n * hw;
    const NdArray& x = input.value();

    NdArray out(input.shape());
    if (m < 2)
        throw DegenerateBatchError("batchnorm2d: train mode needs at least 2 values per channel, got " +
                                   std::to_string(m));
    NdArray xhat(input.shape());
    std::vector<double> inv_std(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* px = x.data() + (i * c + ch) * hw;
            for (std::size_t p = 0; p < hw; ++p) s += px[p];
        }
        const double mu = s / static_cast<double>(m);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* px = x.data() + (i * c + ch) * hw;
            for (std::size_t p = 0; p < hw; ++p) ss += (px[p] - mu) * (px[p] - mu);
        }
        const double var = ss / static_cast<double>(m);
        inv_std[ch] = 1.0 / std::sqrt(var + kBatchNormEps);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t base = (i * c + ch) * hw;
            for (std::size_t p = 0; p < hw; ++p) {
                xhat[base + p] = (x[base + p] - mu) * inv_std[ch];
                out[base + p] = gamma.value()[ch] * xhat[base + p] + beta.value()[ch];
            }
        }
        stats.mean[ch] = (1.0 - kBatchNormMomentum) * stats.mean[ch] + kBatchNormMomentum * mu;
        stats.var[ch] = (1.0 - kBatchNormMomentum) * stats.var[ch] +
                        kBatchNormMomentum * ss / static_cast<double>(m - 1);
    }

    return record("batchnorm2d", std::move(out), {input, gamma, beta},
                  [n, c, hw, m, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& node) {
                      const auto& in = node.parents[0];
                      const auto& gm = node.parents[1];
                      const auto& bt = node.parents[2];
                      const double md = static_cast<double>(m);
                      for (std::size_t ch = 0; ch < c; ++ch) {
                          double sg = 0.0, sgx = 0.0;
                          for (std::size_t i = 0; i < n; ++i) {
                              const std::size_t base = (i * c + ch) * hw;
                              for (std::size_t p = 0; p < hw; ++p) {
                                  sg += node.grad[base + p];
                                  sgx += node.grad[base + p] * xhat[base + p];
                              }
                          }
                          if (gm->requires_grad) gm->grad_buffer()[ch] += sgx;
                          if (bt->requires_grad) bt->grad_buffer()[ch] += sg;
                          if (!in->requires_grad) continue;
                          NdArray& gx = in->grad_buffer();
                          const double k = gm->value[ch] * inv_std[ch] / md;
                          for (std::size_t i = 0; i < n; ++i) {
                              const std::size_t base = (i * c + ch) * hw;
                              for (std::size_t p = 0; p < hw; ++p)
                                  gx[base + p] += k * (md * node.grad[base + p] - sg - xhat[base + p] * sgx);
                          }
                      }
                  });
}

Tensor maxpool2(const Tensor& input)
{
    expect_rank(input, 4, "maxpool2", "input");
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (h % 2 != 0) throw DimensionError("maxpool2: axis 2 (height) is odd: " + std::to_string(h));
    if (w % 2 != 0) throw DimensionError("maxpool2: axis 3 (width) is odd: " + std::to_string(w));
    const std::size_t oh = h / 2, ow = w / 2;
    NdArray out({n, c, oh, ow});
    std::vector<std::size_t> argmax(out.size());
    const NdArray& x = input.value();
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        const std::size_t ibase = plane * h * w;
        const std::size_t obase = plane * oh * ow;
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xo = 0; xo < ow; ++xo) {
                const std::size_t cand[4] = {ibase + 2 * y * w + 2 * xo, ibase + 2 * y * w + 2 * xo + 1,
                                             ibase + (2 * y + 1) * w + 2 * xo, ibase + (2 * y + 1) * w + 2 * xo + 1};
                std::size_t best = cand[0];
                for (int k = 1; k < 4; ++k)
                    if (x[cand[k]] > x[best]) best = cand[k];
                out[obase + y * ow + xo] = x[best];
                argmax[obase + y * ow + xo] = best;
            }
    }
    return record("maxpool2", std::move(out), {input}, [argmax = std::move(argmax)](detail::Node& node) {
        const auto& in = node.parents[0];
        if (!in->requires_grad) return;
        NdArray& g = in->grad_buffer();
        for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += node.grad[i];
    });
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias)
{
    expect_rank(input, 2, "linear", "input");
    expect_rank(weight, 2, "linear", "weight");
    expect_rank(bias, 1, "linear", "bias");
    const std::size_t n = input.dim(0), din = input.dim(1), dout = weight.dim(0);
    expect_axis(weight.dim(1), din, "linear", "weight[1] (input features)");
    expect_axis(bias.dim(0), dout, "linear", "bias[0] (output features)");

    NdArray out({n, dout});
    MapMat o(out.data(), n, dout);
    o.noalias() = CMapMat(input.value().data(), n, din) * CMapMat(weight.value().data(), dout, din).transpose();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dout; ++j) o(i, j) += bias.value()[j];

    return record("linear", std::move(out), {input, weight, bias}, [n, din, dout](detail::Node& node) {
        const auto& in = node.parents[0];
        const auto& wt = node.parents[1];
        const auto& bs = node.parents[2];
        CMapMat g(node.grad.data(), n, dout);
        if (in->requires_grad)
            MapMat(in->grad_buffer().data(), n, din).noalias() += g * CMapMat(wt->value.data(), dout, din);
        if (wt->requires_grad)
            MapMat(wt->grad_buffer().data(), dout, din).noalias() +=
                g.transpose() * CMapMat(in->value.data(), n, din);
        if (bs->requires_grad) {
            NdArray& gb = bs->grad_buffer();
            for (std::size_t j = 0; j < dout; ++j) gb[j] += g.col(j).sum();
        }
    });
}

}  // namespace lsconf
