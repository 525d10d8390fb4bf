#include <CLI11.hpp>

#include "peq/flat.hpp"
#include "peq/oracle.hpp"
#include "peq/scene.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_point(std::span<const double> p) {
    std::string s = "(";
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (i) s += ", ";
        s += fmt(p[i]);
    }
    return s + ")";
}

double rel_diff(double a, double b) {
    const double scale = std::max({1.0, std::fabs(a), std::fabs(b)});
    return std::fabs(a - b) / scale;
}

int context_truncation(const peq::QuantizationParams& p) { return std::max(p.k + 2, 3); }

int run_eval(const std::string& path) {
    const peq::Scene scene = peq::load_scene(path);
    const int trunc = context_truncation(scene.params);
    for (const auto& pt : scene.points) {
        peq::PointContext ctx(scene.connection, pt, trunc);
        const double q = peq::quantize(scene.params, ctx, scene.symbol, scene.density);
        std::printf("Q%s = %s\n", fmt_point(pt).c_str(), fmt(q).c_str());
    }
    return 0;
}

/// Draws a degree-two polynomial in the chart coordinates with small dyadic
/// coefficients, as a parseable source string.
std::string random_poly_source(std::mt19937_64& rng, const peq::Chart& chart) {
    std::uniform_int_distribution<int> dist(-4, 4);
    auto coeff = [&] { return dist(rng) / 8.0; };
    std::string s = "(" + fmt(coeff()) + ")";
    for (int a = 0; a < chart.dim; ++a)
        s += " + (" + fmt(coeff()) + ")*" + chart.coords[a];
    for (int a = 0; a < chart.dim; ++a)
        for (int b = a; b < chart.dim; ++b)
            s += " + (" + fmt(coeff()) + ")*" + chart.coords[a] + "*" + chart.coords[b];
    return s;
}

int run_invariance(const std::string& path, unsigned long long seed, int alphas, int extra_points,
                   double tolerance) {
    const peq::Scene scene = peq::load_scene(path);
    const peq::Chart& chart = scene.chart;
    const int trunc = context_truncation(scene.params);
    std::mt19937_64 rng(seed);

    std::vector<std::vector<double>> points = scene.points;
    if (extra_points > 0) {
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        points.clear();
        for (int n = 0; n < extra_points; ++n) {
            std::vector<double> pt(static_cast<std::size_t>(chart.dim));
            for (double& c : pt) c = dist(rng);
            points.push_back(std::move(pt));
        }
    }

    std::vector<double> reference;
    for (const auto& pt : points) {
        peq::PointContext ctx(scene.connection, pt, trunc);
        reference.push_back(peq::quantize(scene.params, ctx, scene.symbol, scene.density));
    }

    double worst = 0.0;
    int failures = 0;
    for (int trial = 0; trial < alphas; ++trial) {
        // Shift the connection projectively: Gamma'^k_{ij} = Gamma^k_{ij}
        // + alpha_i delta^k_j + alpha_j delta^k_i for a random one-form alpha.
        std::vector<std::string> alpha(static_cast<std::size_t>(chart.dim));
        for (auto& src : alpha) src = random_poly_source(rng, chart);

        peq::ChartConnection shifted(chart);
        for (int k = 0; k < chart.dim; ++k)
            for (int i = 0; i < chart.dim; ++i)
                for (int j = i; j < chart.dim; ++j) {
                    const peq::Expression* base = scene.connection.get(k, i, j);
                    std::string src = base ? "(" + peq::to_string(*base, chart) + ")" : "";
                    if (k == j) src += (src.empty() ? "" : " + ") + ("(" + alpha[i] + ")");
                    if (k == i) src += (src.empty() ? "" : " + ") + ("(" + alpha[j] + ")");
                    if (src.empty()) continue;
                    shifted.set(k, i, j, peq::parse(src, chart));
                }

        for (std::size_t n = 0; n < points.size(); ++n) {
            peq::PointContext ctx(shifted, points[n], trunc);
            const double q = peq::quantize(scene.params, ctx, scene.symbol, scene.density);
            const double d = rel_diff(reference[n], q);
            worst = std::max(worst, d);
            if (d > tolerance) {
                ++failures;
                std::printf("FAIL trial %d at %s: %s vs %s (relative deviation %s)\n", trial,
                            fmt_point(points[n]).c_str(), fmt(reference[n]).c_str(), fmt(q).c_str(),
                            fmt(d).c_str());
            }
        }
    }

    std::printf("%d projective shifts x %zu points, max relative deviation %s (tolerance %s)\n",
                alphas, points.size(), fmt(worst).c_str(), fmt(tolerance).c_str());
    return failures == 0 ? 0 : 1;
}

int run_flat_compare(const std::string& path, double tolerance) {
    const peq::Scene scene = peq::load_scene(path);
    if (!scene.connection.empty())
        throw peq::SceneError("flat-compare requires a scene with an empty connection");
    const int trunc = context_truncation(scene.params);

    double worst = 0.0;
    int failures = 0;
    for (const auto& pt : scene.points) {
        peq::PointContext ctx(scene.connection, pt, trunc);
        const double engine = peq::quantize(scene.params, ctx, scene.symbol, scene.density);
        const double direct = peq::flat_quantize(scene.params, scene.symbol, scene.density, pt);
        const double d = rel_diff(engine, direct);
        worst = std::max(worst, d);
        std::printf("Q%s: engine %s, direct %s\n", fmt_point(pt).c_str(), fmt(engine).c_str(),
                    fmt(direct).c_str());
        if (d > tolerance) {
            ++failures;
            std::printf("FAIL relative deviation %s exceeds %s\n", fmt(d).c_str(), fmt(tolerance).c_str());
        }
    }
    std::printf("flat comparison over %zu points, max relative deviation %s (tolerance %s)\n",
                scene.points.size(), fmt(worst).c_str(), fmt(tolerance).c_str());
    return failures == 0 ? 0 : 1;
}

int run_coeffs(int m, const std::string& lambda_text, const std::string& delta_text, int k, int stage,
               const std::string& side) {
    const peq::Rational lambda = peq::parse_rational(lambda_text);
    const peq::Rational delta = peq::parse_rational(delta_text);
    const peq::QuantizationParams params{m, k, lambda, lambda + delta};

    std::printf("coefficients for m=%d, k=%d, lambda=%s, delta=%s:\n", m, k,
                peq::to_string(lambda).c_str(), peq::to_string(delta).c_str());
    for (int l = 0; l <= k; ++l)
        std::printf("  C[%d,%d] = %s\n", k, l,
                    peq::to_string(peq::quantization_coefficient(params, l)).c_str());

    if (stage < 0) return 0;
    if (stage > 6) throw peq::SceneError("oracle comparison is supported through stage 6");

    int failures = 0;
    auto audit = [&](const char* name, const peq::OracleParams& p) {
        const peq::OracleReport report = peq::compare_with_engine(p, stage);
        const bool ok = report.tau_free_matches && report.closed_form_matches;
        std::printf("  stage %d %s side: %s%s%s\n", stage, name,
                    ok ? "recursion matches engine expansion" : "MISMATCH", ok ? "" : " — ",
                    ok ? "" : report.detail.c_str());
        if (!ok) ++failures;
    };
    if (side == "argument" || side == "both")
        audit("argument", peq::OracleParams::argument_side(m, lambda));
    if (side == "symbol" || side == "both")
        audit("symbol", peq::OracleParams::symbol_side(m, k, delta));
    return failures == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"projectively equivariant quantization on coordinate charts"};
    app.require_subcommand(1);

    std::string scene_path;
    unsigned long long seed = 0;
    int alphas = 3;
    int extra_points = 0;
    double tolerance = 1e-7;
    int m = 2;
    int k = 2;
    int stage = -1;
    std::string lambda_text = "1/2";
    std::string delta_text = "0";
    std::string side = "both";

    auto* eval = app.add_subcommand("eval", "evaluate the quantized operator on a scene");
    eval->add_option("--scene", scene_path, "scene JSON file")->required();

    auto* invariance =
        app.add_subcommand("invariance", "check invariance under random projective changes of connection");
    invariance->add_option("--scene", scene_path, "scene JSON file")->required();
    invariance->add_option("--seed", seed, "random seed");
    invariance->add_option("--alpha", alphas, "number of random projective shifts")->check(CLI::PositiveNumber);
    invariance->add_option("--points", extra_points,
                           "evaluate at this many random points instead of the scene's");
    invariance->add_option("--tolerance", tolerance, "relative tolerance");

    auto* flat = app.add_subcommand("flat-compare",
                                    "compare the engine against the direct evaluator on a flat scene");
    flat->add_option("--scene", scene_path, "scene JSON file")->required();
    double flat_tolerance = 1e-12;
    flat->add_option("--tolerance", flat_tolerance, "relative tolerance");

    auto* coeffs = app.add_subcommand("coeffs", "print the coefficient ladder and audit the recursion");
    coeffs->add_option("--m", m, "chart dimension")->check(CLI::Range(2, 7));
    coeffs->add_option("--k", k, "operator order")->check(CLI::Range(0, 12));
    coeffs->add_option("--lambda", lambda_text, "density weight (rational)");
    coeffs->add_option("--delta", delta_text, "weight shift mu - lambda (rational)");
    coeffs->add_option("--l", stage, "audit the recursion at this stage (0..6)");
    coeffs->add_option("--side", side, "which operator side to audit")
        ->check(CLI::IsMember({"argument", "symbol", "both"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*eval) return run_eval(scene_path);
        if (*invariance) return run_invariance(scene_path, seed, alphas, extra_points, tolerance);
        if (*flat) return run_flat_compare(scene_path, flat_tolerance);
        if (*coeffs) return run_coeffs(m, lambda_text, delta_text, k, stage, side);
    } catch (const peq::CriticalDelta& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
