#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lsconf/ls_geometry.hpp"
#include "lsconf/texture_data.hpp"

namespace lsconf {

struct PlotPoint {
    std::string id;
    double x = 0.0, y = 0.0;
    std::optional<TextureClass> label;
};

/// LS-to-pixel map: px = origin_x + scale * x, py = origin_y - scale * y.
/// Written on the root element as data-ls-scale / data-ls-origin-x /
/// data-ls-origin-y so readers can invert it.
struct PlotTransform {
    double scale, origin_x, origin_y;

    double px(double x) const noexcept { return origin_x + scale * x; }
    double py(double y) const noexcept { return origin_y - scale * y; }
    double inv_x(double px) const noexcept { return (px - origin_x) / scale; }
    double inv_y(double py) const noexcept { return (origin_y - py) / scale; }
};

struct PlotOptions {
    double size_px = 640.0;
    double margin_px = 48.0;
    std::string title = "latent space";
};

/// Fits every cluster disc and point into the square canvas.
PlotTransform fit_transform(const ClusterConfig& cfg, std::span<const PlotPoint> train,
                            std::span<const PlotPoint> general, const PlotOptions& opt);

/// Self-contained SVG: cluster circles, train points (small, colored by class)
/// and generalization points (large). Throws UnsupportedPlotError unless the
/// latent space is 2-D.
std::string render_ls_svg(const ClusterConfig& cfg, std::span<const PlotPoint> train,
                          std::span<const PlotPoint> general = {}, const PlotOptions& opt = {});

}  // namespace lsconf
