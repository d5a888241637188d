#include <gtest/gtest.h>

#include <random>
#include <regex>

#include "lsconf/errors.hpp"
#include "lsconf/svg_plot.hpp"

using namespace lsconf;

namespace {

ClusterConfig paper_config() { return make_cluster_config(5, 0.85, {0.34}, 0.79); }

std::size_t count(const std::string& s, const std::string& needle)
{
    std::size_t n = 0;
    for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
    return n;
}

double attr(const std::string& s, const std::string& name)
{
    std::smatch m;
    if (!std::regex_search(s, m, std::regex(" " + name + "=\"([^\"]+)\""))) throw std::runtime_error("no " + name);
    return std::stod(m[1]);
}

}  // namespace

TEST(SvgPlot, EmptyIndexDrawsOnlyClusters)
{
    const std::string svg = render_ls_svg(paper_config(), {});
    EXPECT_EQ(count(svg, "class=\"cluster\""), 5u);
    EXPECT_EQ(count(svg, "class=\"point"), 0u);
    EXPECT_EQ(svg.rfind("</svg>"), svg.size() - 7);
}

TEST(SvgPlot, ClusterCountFollowsConfig)
{
    for (std::size_t n : {2u, 3u, 7u}) {
        const auto cfg = make_cluster_config(n, 1.0, {0.2}, 0.79);
        EXPECT_EQ(count(render_ls_svg(cfg, {}), "class=\"cluster\""), n);
    }
}

TEST(SvgPlot, PixelCoordinatesInvertToLatent)
{
    const auto cfg = paper_config();
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-2.5, 2.5);
    std::vector<PlotPoint> train, general;
    for (int i = 0; i < 40; ++i) train.push_back({"t" + std::to_string(i), u(rng), u(rng), TextureClass::dots});
    for (int i = 0; i < 5; ++i) general.push_back({"g" + std::to_string(i), u(rng), u(rng), std::nullopt});
    const std::string svg = render_ls_svg(cfg, train, general);

    const double scale = attr(svg, "data-ls-scale"), ox = attr(svg, "data-ls-origin-x"),
                 oy = attr(svg, "data-ls-origin-y");
    const PlotTransform t{scale, ox, oy};

    const std::regex pt("<circle class=\"point (train|general)\" data-id=\"([^\"]+)\"[^>]*cx=\"([^\"]+)\" cy=\"([^\"]+)\"");
    std::size_t seen = 0;
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), pt); it != std::sregex_iterator(); ++it) {
        const std::string id = (*it)[2];
        const auto& src = id[0] == 't' ? train[std::stoul(id.substr(1))] : general[std::stoul(id.substr(1))];
        EXPECT_NEAR(t.inv_x(std::stod((*it)[3])), src.x, 1e-6);
        EXPECT_NEAR(t.inv_y(std::stod((*it)[4])), src.y, 1e-6);
        EXPECT_EQ((*it)[1] == "general", id[0] == 'g');
        ++seen;
    }
    EXPECT_EQ(seen, 45u);

    // Every point lands inside the canvas.
    for (const auto* set : {&train, &general})
        for (const auto& p : *set) {
            EXPECT_GT(t.px(p.x), 0.0);
            EXPECT_LT(t.px(p.x), 640.0);
            EXPECT_GT(t.py(p.y), 0.0);
            EXPECT_LT(t.py(p.y), 640.0);
        }
}

TEST(SvgPlot, ClustersDrawnAtCenters)
{
    const auto cfg = paper_config();
    const std::string svg = render_ls_svg(cfg, {});
    const PlotTransform t{attr(svg, "data-ls-scale"), attr(svg, "data-ls-origin-x"), attr(svg, "data-ls-origin-y")};
    const std::regex cl("data-cluster=\"(\\d)\" cx=\"([^\"]+)\" cy=\"([^\"]+)\" r=\"([^\"]+)\"");
    std::size_t n = 0;
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), cl); it != std::sregex_iterator(); ++it, ++n) {
        const std::size_t i = std::stoul((*it)[1]);
        EXPECT_NEAR(t.inv_x(std::stod((*it)[2])), cfg.center(i)[0], 1e-6);
        EXPECT_NEAR(t.inv_y(std::stod((*it)[3])), cfg.center(i)[1], 1e-6);
        EXPECT_NEAR(std::stod((*it)[4]) / t.scale, 0.34, 1e-6);
    }
    EXPECT_EQ(n, 5u);
}

TEST(SvgPlot, Rejections)
{
    const auto cfg4 = make_cluster_config(5, 0.85, {0.34}, 0.79, 0.0, 4);
    EXPECT_THROW(render_ls_svg(cfg4, {}), UnsupportedPlotError);
    std::vector<PlotPoint> bad{{"n", std::nan(""), 0.0, std::nullopt}};
    EXPECT_THROW(render_ls_svg(paper_config(), bad), ContractError);
}

TEST(SvgPlot, EscapesIds)
{
    std::vector<PlotPoint> p{{"a<b&\"c", 0.1, 0.2, std::nullopt}};
    const std::string svg = render_ls_svg(paper_config(), p);
    EXPECT_NE(svg.find("data-id=\"a&lt;b&amp;&quot;c\""), std::string::npos);
}
