#include "lsconf/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "lsconf/errors.hpp"

namespace lsconf {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string num(double v) { return fmt("%.6f", v); }

std::string escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

const char* class_color(const std::optional<TextureClass>& label)
{
    if (!label) return "#000000";
    return kPalette[static_cast<std::size_t>(*label) % std::size(kPalette)];
}

void emit_points(std::string& out, std::span<const PlotPoint> pts, const PlotTransform& t, const char* kind, double r)
{
    for (const auto& p : pts) {
        out += "  <circle class=\"point " + std::string(kind) + "\" data-id=\"" + escape(p.id) + "\"";
        if (p.label) out += " data-class=\"" + std::string(texture_class_name(*p.label)) + "\"";
        out += " data-x=\"" + fmt("%.17g", p.x) + "\" data-y=\"" + fmt("%.17g", p.y) + "\"";
        out += " cx=\"" + num(t.px(p.x)) + "\" cy=\"" + num(t.py(p.y)) + "\" r=\"" + num(r) + "\" fill=\"" +
               class_color(p.label) + "\"";
        if (std::string(kind) == "general") out += " stroke=\"#000000\" stroke-width=\"1\"";
        out += "/>\n";
    }
}

}  // namespace

PlotTransform fit_transform(const ClusterConfig& cfg, std::span<const PlotPoint> train,
                            std::span<const PlotPoint> general, const PlotOptions& opt)
{
    double extent = 0.0;
    for (std::size_t i = 0; i < cfg.n_c(); ++i) {
        const auto c = cfg.center(i);
        extent = std::max({extent, std::abs(c[0]) + cfg.r_c(i), std::abs(c[1]) + cfg.r_c(i)});
    }
    for (const auto* set : {&train, &general})
        for (const auto& p : *set) extent = std::max({extent, std::abs(p.x), std::abs(p.y)});
    extent = std::ceil(extent * 1.05 * 4.0) / 4.0;
    const double half = 0.5 * opt.size_px;
    return {(half - opt.margin_px) / extent, half, half};
}

std::string render_ls_svg(const ClusterConfig& cfg, std::span<const PlotPoint> train,
                          std::span<const PlotPoint> general, const PlotOptions& opt)
{
    if (cfg.n_d() != 2)
        throw UnsupportedPlotError("scatter plots need a 2-D latent space, got n_d = " + std::to_string(cfg.n_d()));
    for (const auto* set : {&train, &general})
        for (const auto& p : *set)
            if (!std::isfinite(p.x) || !std::isfinite(p.y))
                throw ContractError("plot point '" + p.id + "' has a non-finite coordinate");

    const PlotTransform t = fit_transform(cfg, train, general, opt);
    const double s = opt.size_px;
    const double extent = (0.5 * s - opt.margin_px) / t.scale;

    std::string out;
    out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(s) + "\" height=\"" + num(s) +
           "\" viewBox=\"0 0 " + num(s) + " " + num(s) + "\" data-ls-scale=\"" + fmt("%.17g", t.scale) +
           "\" data-ls-origin-x=\"" + fmt("%.17g", t.origin_x) + "\" data-ls-origin-y=\"" + fmt("%.17g", t.origin_y) +
           "\">\n";
    out += "  <title>" + escape(opt.title) + "</title>\n";
    out += "  <rect x=\"0\" y=\"0\" width=\"" + num(s) + "\" height=\"" + num(s) + "\" fill=\"#ffffff\"/>\n";

    // Axes with ticks every 0.5 LS units.
    const double lo = opt.margin_px, hi = s - opt.margin_px;
    out += "  <g class=\"axes\" stroke=\"#888888\" stroke-width=\"1\">\n";
    out += "    <line x1=\"" + num(lo) + "\" y1=\"" + num(t.origin_y) + "\" x2=\"" + num(hi) + "\" y2=\"" +
           num(t.origin_y) + "\"/>\n";
    out += "    <line x1=\"" + num(t.origin_x) + "\" y1=\"" + num(lo) + "\" x2=\"" + num(t.origin_x) + "\" y2=\"" +
           num(hi) + "\"/>\n";
    out += "  </g>\n";
    out += "  <g class=\"ticks\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#444444\">\n";
    for (double v = -std::floor(extent * 2.0) / 2.0; v <= extent + 1e-9; v += 0.5) {
        if (std::abs(v) < 1e-9) continue;
        out += "    <text x=\"" + num(t.px(v)) + "\" y=\"" + num(t.origin_y + 14.0) + "\" text-anchor=\"middle\">" +
               fmt("%.1f", v) + "</text>\n";
        out += "    <text x=\"" + num(t.origin_x - 6.0) + "\" y=\"" + num(t.py(v) + 3.0) + "\" text-anchor=\"end\">" +
               fmt("%.1f", v) + "</text>\n";
    }
    out += "  </g>\n";
    out += "  <text class=\"axis-label\" x=\"" + num(hi) + "\" y=\"" + num(t.origin_y - 6.0) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">z1</text>\n";
    out += "  <text class=\"axis-label\" x=\"" + num(t.origin_x + 6.0) + "\" y=\"" + num(lo + 12.0) +
           "\" font-family=\"sans-serif\" font-size=\"12\">z2</text>\n";

    for (std::size_t i = 0; i < cfg.n_c(); ++i) {
        const auto c = cfg.center(i);
        const auto label = i < kTextureClassCount ? std::optional(static_cast<TextureClass>(i)) : std::nullopt;
        out += "  <circle class=\"cluster\" data-cluster=\"" + std::to_string(i) + "\" cx=\"" + num(t.px(c[0])) +
               "\" cy=\"" + num(t.py(c[1])) + "\" r=\"" + num(t.scale * cfg.r_c(i)) + "\" fill=\"none\" stroke=\"" +
               class_color(label) + "\" stroke-width=\"2\" stroke-dasharray=\"6 3\"/>\n";
    }

    emit_points(out, train, t, "train", 2.0);
    emit_points(out, general, t, "general", 5.0);
    out += "</svg>\n";
    return out;
}

}  // namespace lsconf
