#include "helpers.hpp"
#include "peq/flat.hpp"
#include "peq/quantization.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <string>
#include <vector>

using namespace peq;

namespace {

bool jets_match(const Jet& a, const Jet& b, double tol) {
    const int t = std::min(a.trunc(), b.trunc());
    Jet d = a.truncated_to(t) - b.truncated_to(t);
    for (std::size_t r = 0; r < d.layout().size(); ++r)
        if (std::fabs(d.raw(r)) > tol) return false;
    return true;
}

Chart make_chart(int m) {
    std::vector<std::string> names;
    for (int i = 0; i < m; ++i) names.push_back("x" + std::to_string(i + 1));
    return Chart(names);
}

ChartConnection random_connection(std::mt19937& rng, const Chart& chart, int deg = 2) {
    ChartConnection conn(chart);
    const int m = chart.dim;
    for (int k = 0; k < m; ++k)
        for (int i = 0; i < m; ++i)
            for (int j = i; j < m; ++j) {
                helpers::Poly p = helpers::random_poly(rng, m, deg);
                if (p.terms.empty()) continue;
                conn.set(k, i, j, parse(p.to_source(chart), chart));
            }
    return conn;
}

SymbolField random_symbol(std::mt19937& rng, const Chart& chart, int degree, const Rational& weight) {
    SymbolField s(chart.dim, degree, weight);
    auto layout = SymLayout::get(chart.dim, degree);
    for (std::size_t r = 0; r < layout->size(); ++r) {
        helpers::Poly p = helpers::random_poly(rng, chart.dim, 2);
        if (p.terms.empty()) continue;
        s.set_component(layout->tuple(r), parse(p.to_source(chart), chart));
    }
    return s;
}

DensityField random_density(std::mt19937& rng, const Chart& chart, const Rational& weight) {
    helpers::Poly p = helpers::random_poly(rng, chart.dim, 3);
    p.terms.emplace_back(std::vector<int>(static_cast<std::size_t>(chart.dim), 0), 1.0);
    return DensityField{weight, parse(p.to_source(chart), chart)};
}

} // namespace

TEST_CASE("gamma coefficients at pinned values") {
    CHECK(gamma_coeff(1, 2, Rational(0)) == Rational(1));
    CHECK(gamma_coeff(5, 2, Rational(0)) == Rational(7, 3));
    CHECK(gamma_coeff(3, 2, Rational(1, 6)) == Rational(3, 2));
    CHECK(gamma_coeff(3, 3, Rational(1, 2)) == Rational(1));
    // vanishing case: m=2, s=3, delta=5/3 makes m + s - (m+1) delta = 0
    CHECK(gamma_coeff(3, 2, Rational(5, 3)) == Rational(0));
}

TEST_CASE("critical weight shifts are exactly the positive integer resonances") {
    CHECK_FALSE(critical_info(2, Rational(0)).critical);
    CHECK_FALSE(critical_info(2, Rational(1, 3)).critical);
    CHECK_FALSE(critical_info(2, Rational(-2)).critical);
    CHECK_FALSE(critical_info(3, Rational(3, 4)).critical); // (m+1)d - m = 0

    CriticalInfo one = critical_info(2, Rational(1));
    REQUIRE(one.critical);
    CHECK(one.resonance == 1);
    REQUIRE(one.pairs.size() == 1);
    CHECK(one.pairs[0] == std::make_pair(1, 1));

    CriticalInfo i53 = critical_info(2, Rational(5, 3));
    REQUIRE(i53.critical);
    CHECK(i53.resonance == 3);
    REQUIRE(i53.pairs.size() == 2);
    CHECK(i53.pairs[0] == std::make_pair(2, 1));
    CHECK(i53.pairs[1] == std::make_pair(3, 3));

    CriticalInfo i2 = critical_info(2, Rational(2));
    REQUIRE(i2.critical);
    CHECK(i2.resonance == 4);
    REQUIRE(i2.pairs.size() == 2);
    CHECK(i2.pairs[0] == std::make_pair(3, 2));
    CHECK(i2.pairs[1] == std::make_pair(4, 4));

    CHECK(critical_info(3, Rational(1)).critical); // resonance 1

    // every named pair is an actual zero of its gamma
    for (const auto& [order, term] : i53.pairs)
        CHECK(gamma_coeff(2 * order - term, 2, Rational(5, 3)) == Rational(0));
    for (const auto& [order, term] : i2.pairs)
        CHECK(gamma_coeff(2 * order - term, 2, Rational(2)) == Rational(0));
}

TEST_CASE("coefficient recursion at pinned values") {
    QuantizationParams p1{3, 1, Rational(2, 5), Rational(2, 5)};
    CHECK(quantization_coefficient(p1, 0) == Rational(1));
    CHECK(quantization_coefficient(p1, 1) == Rational(2, 5)); // C_{1,1} = lambda at delta = 0

    QuantizationParams p2{2, 2, Rational(1, 2), Rational(1, 2)};
    // C_{2,1} = 2 (1/2 + 1/3) / gamma_3 = 2 (5/6) / (5/3) = 1
    CHECK(quantization_coefficient(p2, 1) == Rational(1));
    // C_{2,2} = (1/2 + 1/3)(1/2) / (gamma_3 gamma_2) = (5/12) / (20/9) = 3/16
    CHECK(quantization_coefficient(p2, 2) == Rational(3, 16));

    QuantizationParams critical{2, 2, Rational(0), Rational(5, 3)};
    CHECK_THROWS_AS(quantization_coefficient(critical, 1), CriticalDelta);
}

TEST_CASE("order-two corrections at pinned coefficients") {
    std::mt19937 rng(20260814u);
    Chart chart = make_chart(2);
    ChartConnection conn = random_connection(rng, chart);
    PointContext ctx(conn, helpers::random_point(rng, 2), 4);
    auto r = r_tensor(ctx);

    // argument side: operand degree 1, lambda = 1, m = 2 gives (-3 - 1)(2) = -8
    QuantizationParams p{2, 2, Rational(1), Rational(1)};
    SymTensor<Variance::Cov, Jet> T(2, 1, Jet(2, 4));
    T.at({0}) = eval_jet(parse("x1*x2", chart), ctx.point(), 4);
    T.at({1}) = eval_jet(parse("x1 - x2^2", chart), ctx.point(), 4);
    auto t1 = t1_apply(p, r, T);
    auto rT = sym_product(truncated(r, 3), truncated(T, 3));
    for (std::size_t q = 0; q < t1.layout().size(); ++q)
        CHECK(jets_match(t1.entry(q), rT.entry(q) * -8.0, 1e-12));

    // symbol side: operand degree 2, m = 2, k = 2, delta = 0 gives (5 - 0)(1) = 5
    QuantizationParams ps{2, 2, Rational(1, 2), Rational(1, 2)};
    SymTensor<Variance::Contra, Jet> S(2, 2, Jet(2, 4));
    S.at({0, 0}) = eval_jet(parse("1 + x1", chart), ctx.point(), 4);
    S.at({0, 1}) = eval_jet(parse("x2", chart), ctx.point(), 4);
    S.at({1, 1}) = eval_jet(parse("2 - x1*x1", chart), ctx.point(), 4);
    auto t2 = t2_apply(ps, r, S);
    auto irS = contract(truncated(r, 3), truncated(S, 3));
    REQUIRE(t2.degree() == 0);
    CHECK(jets_match(t2.at({}), irS.at({}) * 5.0, 1e-12));
}

TEST_CASE("side operators reproduce the order-two building blocks") {
    std::mt19937 rng(314159u);
    for (int m : {2, 3}) {
        Chart chart = make_chart(m);
        ChartConnection conn = random_connection(rng, chart);
        PointContext ctx(conn, helpers::random_point(rng, m), 4);
        QuantizationParams p{m, 2, Rational(1, 2), Rational(1, 3)};
        auto r = r_tensor(ctx);

        Jet f = eval_jet(parse(helpers::random_poly(rng, m, 3).to_source(chart), chart), ctx.point(), 4);
        SymTensor<Variance::Cov, Jet> f0(m, 0, Jet(m, 4));
        f0.at({}) = f;

        // f side, l = 0: grad_s^2 f - lambda (m+1) r v f
        auto lhs = f_side(p, ctx, r, f, 0);
        auto ddf = nabla_s(ctx, nabla_s(ctx, f0, p.lambda), p.lambda);
        auto rf = sym_product(truncated(r, 2), truncated(f0, 2)).scaled(to_double(p.lambda) * (m + 1));
        for (std::size_t q = 0; q < lhs.layout().size(); ++q)
            CHECK(jets_match(lhs.entry(q), ddf.entry(q) - truncated(rf, 2).entry(q), 1e-11));

        // f side, l = k: just f back
        auto idf = f_side(p, ctx, r, f, 2);
        CHECK(jets_match(idf.at({}), f, 1e-15));

        // s side, l = 2: Div^2 S + gamma_3 (m+1) i(r) S
        SymTensor<Variance::Contra, Jet> S(m, 2, Jet(m, 4));
        auto layout = SymLayout::get(m, 2);
        for (std::size_t q = 0; q < layout->size(); ++q) {
            helpers::Poly poly = helpers::random_poly(rng, m, 2);
            poly.terms.emplace_back(std::vector<int>(static_cast<std::size_t>(m), 0), 0.5);
            S.at(layout->tuple(q)) = eval_jet(parse(poly.to_source(chart), chart), ctx.point(), 4);
        }
        auto rhs_s = s_side(p, ctx, r, S, 2);
        auto div2 = divergence(ctx, divergence(ctx, S, p.delta()), p.delta());
        const double g3 = to_double(gamma_coeff(3, m, p.delta()));
        auto ir = contract(truncated(r, 2), truncated(S, 2)).scaled(g3 * (m + 1));
        CHECK(jets_match(rhs_s.at({}), div2.at({}) + truncated(ir, 2).at({}), 1e-11));

        // s side, l = 0: just S back
        auto ids = s_side(p, ctx, r, S, 0);
        for (std::size_t q = 0; q < ids.layout().size(); ++q)
            CHECK(jets_match(ids.entry(q), S.entry(q), 1e-15));
    }
}

TEST_CASE("order zero multiplies the symbol by the density") {
    std::mt19937 rng(7u);
    Chart chart = make_chart(2);
    ChartConnection conn = random_connection(rng, chart);
    std::vector<double> pt = helpers::random_point(rng, 2);
    PointContext ctx(conn, pt, 3);
    QuantizationParams p{2, 0, Rational(1, 2), Rational(1, 4)};
    SymbolField S(2, 0, p.delta());
    S.set_component({}, parse("2 + x1*x2", chart));
    DensityField f{p.lambda, parse("x1 - 3*x2", chart)};
    const double expect = (2 + pt[0] * pt[1]) * (pt[0] - 3 * pt[1]);
    CHECK(quantize(p, ctx, S, f) == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("first order evaluation worked by hand") {
    // m=2, lambda=mu=1/2, Gamma^1_{11}=x, S=(1,0), f=1 at (0.3, 0.7):
    // l=0: <S, grad f> with grad_a f = -(1/2) Gamma^c_{ca} f = (-x/2, 0), giving -0.15;
    // l=1: C_{1,1} <Div S, f> = (1/2)(Gamma^a_{a1} S^1) = (1/2)(0.3) = 0.15.
    Chart chart({"x", "y"});
    ChartConnection conn(chart);
    conn.set(0, 0, 0, parse("x", chart));
    PointContext ctx(conn, std::vector<double>{0.3, 0.7}, 3);
    QuantizationParams p{2, 1, Rational(1, 2), Rational(1, 2)};

    SymbolField S(2, 1, Rational(0));
    S.set_component({0}, parse("1", chart));
    DensityField f{Rational(1, 2), parse("1", chart)};

    auto Sj = eval_symbol(S, ctx);
    Jet fj = eval_density(f, ctx);
    auto r = r_tensor(ctx);
    auto grad = f_side(p, ctx, r, fj, 0);
    CHECK(grad.at({0}).value() == Catch::Approx(-0.15));
    CHECK(grad.at({1}).value() == Catch::Approx(0.0).margin(1e-15));
    auto div = s_side(p, ctx, r, Sj, 1);
    CHECK(div.at({}).value() == Catch::Approx(0.3));

    CHECK(quantize(p, ctx, Sj, fj) == Catch::Approx(0.0).margin(1e-14));
    CHECK(quantize(p, ctx, S, f) == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("vanishing connection reduces to the flat formula") {
    std::mt19937 rng(20250101u);
    for (int m : {2, 3}) {
        Chart chart = make_chart(m);
        ChartConnection conn(chart); // zero
        for (int k = 1; k <= 3; ++k) {
            QuantizationParams p{m, k, Rational(1, 2), Rational(1, 3)};
            SymbolField S = random_symbol(rng, chart, k, p.delta());
            DensityField f = random_density(rng, chart, p.lambda);
            std::vector<double> pt = helpers::random_point(rng, m);
            PointContext ctx(conn, pt, std::max(k + 2, 3));
            const double engine = quantize(p, ctx, eval_symbol(S, ctx), eval_density(f, ctx));
            const double direct = flat_quantize(p, S, f, pt);
            CHECK(helpers::close(engine, direct, 1e-12));
        }
    }
}

TEST_CASE("evaluation is bilinear in symbol and density") {
    std::mt19937 rng(606u);
    Chart chart = make_chart(2);
    ChartConnection conn = random_connection(rng, chart);
    std::vector<double> pt = helpers::random_point(rng, 2);
    PointContext ctx(conn, pt, 4);
    QuantizationParams p{2, 2, Rational(1, 2), Rational(2, 3)};

    auto S1 = eval_symbol(random_symbol(rng, chart, 2, p.delta()), ctx);
    auto S2 = eval_symbol(random_symbol(rng, chart, 2, p.delta()), ctx);
    Jet f1 = eval_density(random_density(rng, chart, p.lambda), ctx);
    Jet f2 = eval_density(random_density(rng, chart, p.lambda), ctx);

    const double a = quantize(p, ctx, S1 + S2.scaled(2.5), f1);
    const double b = quantize(p, ctx, S1, f1) + 2.5 * quantize(p, ctx, S2, f1);
    CHECK(helpers::close(a, b, 1e-11));

    const double c = quantize(p, ctx, S1, f1 + f2 * -1.75);
    const double d = quantize(p, ctx, S1, f1) - 1.75 * quantize(p, ctx, S1, f2);
    CHECK(helpers::close(c, d, 1e-11));
}

TEST_CASE("engine matches the longhand order-two and order-three formulas") {
    std::mt19937 rng(909090u);
    for (int m : {2, 3}) {
        Chart chart = make_chart(m);
        for (int trial = 0; trial < 3; ++trial) {
            ChartConnection conn = random_connection(rng, chart);
            std::vector<double> pt = helpers::random_point(rng, m);

            QuantizationParams p2{m, 2, Rational(1, 2), Rational(1, 3)};
            PointContext ctx2(conn, pt, 4);
            auto S2 = eval_symbol(random_symbol(rng, chart, 2, p2.delta()), ctx2);
            Jet f2 = eval_density(random_density(rng, chart, p2.lambda), ctx2);
            const double e2 = quantize(p2, ctx2, S2, f2);
            const double g2 = quantize_order2(p2, ctx2, S2, f2);
            CHECK(helpers::close(e2, g2, 1e-10));

            QuantizationParams p3{m, 3, Rational(2, 5), Rational(1, 5)};
            PointContext ctx3(conn, pt, 5);
            auto S3 = eval_symbol(random_symbol(rng, chart, 3, p3.delta()), ctx3);
            Jet f3 = eval_density(random_density(rng, chart, p3.lambda), ctx3);
            const double e3 = quantize(p3, ctx3, S3, f3);
            const double g3 = quantize_order3(p3, ctx3, S3, f3);
            CHECK(helpers::close(e3, g3, 1e-10));
        }
    }
}

TEST_CASE("principal symbol is recovered from monomial probes") {
    std::mt19937 rng(123123u);
    for (int m : {2, 3}) {
        Chart chart = make_chart(m);
        ChartConnection conn = random_connection(rng, chart);
        std::vector<double> pt = helpers::random_point(rng, m);
        for (int k : {2, 3}) {
            QuantizationParams p{m, k, Rational(1, 2), Rational(1, 3)};
            SymbolField S = random_symbol(rng, chart, k, p.delta());
            PointContext ctx(conn, pt, std::max(k + 2, 3));
            auto Sj = eval_symbol(S, ctx);
            double kfact = 1.0;
            for (int t = 2; t <= k; ++t) kfact *= t;
            auto layout = SymLayout::get(m, k);
            for (std::size_t q = 0; q < layout->size(); ++q) {
                std::string probe = "1";
                for (int i : layout->tuple(q)) {
                    char buf[64];
                    std::snprintf(buf, sizeof buf, "(%s - %.17g)", chart.coords[static_cast<std::size_t>(i)].c_str(),
                                  pt[static_cast<std::size_t>(i)]);
                    probe += " * " + std::string(buf);
                }
                Jet fj = eval_jet(parse(probe, chart), ctx.point(), ctx.trunc());
                const double got = quantize(p, ctx, Sj, fj) / kfact;
                CHECK(helpers::close(got, Sj.entry(q).value(), 1e-9));
            }
        }
    }
}

TEST_CASE("the evaluation depends only on the projective class of the connection") {
    std::mt19937 rng(321321u);
    for (int m : {2, 3}) {
        Chart chart = make_chart(m);
        for (int k : {1, 2, 3}) {
            // random connection, shifted by Gamma'^k_{ij} = Gamma^k_{ij} + a_i d^k_j + a_j d^k_i
            std::vector<helpers::Poly> alpha;
            for (int i = 0; i < m; ++i) alpha.push_back(helpers::random_poly(rng, m, 2));
            ChartConnection conn(chart), shifted(chart);
            for (int c = 0; c < m; ++c)
                for (int i = 0; i < m; ++i)
                    for (int j = i; j < m; ++j) {
                        helpers::Poly g = helpers::random_poly(rng, m, 2);
                        helpers::Poly gs = g;
                        if (c == j)
                            for (const auto& t : alpha[static_cast<std::size_t>(i)].terms) gs.terms.push_back(t);
                        if (c == i)
                            for (const auto& t : alpha[static_cast<std::size_t>(j)].terms) gs.terms.push_back(t);
                        if (!g.terms.empty()) conn.set(c, i, j, parse(g.to_source(chart), chart));
                        if (!gs.terms.empty()) shifted.set(c, i, j, parse(gs.to_source(chart), chart));
                    }

            QuantizationParams p{m, k, Rational(1, 2), Rational(1, 3)};
            SymbolField S = random_symbol(rng, chart, k, p.delta());
            DensityField f = random_density(rng, chart, p.lambda);
            for (int trial = 0; trial < 2; ++trial) {
                std::vector<double> pt = helpers::random_point(rng, m);
                const int trunc = std::max(k + 2, 3);
                PointContext ctx(conn, pt, trunc);
                PointContext ctx2(shifted, pt, trunc);
                const double q1 = quantize(p, ctx, eval_symbol(S, ctx), eval_density(f, ctx));
                const double q2 = quantize(p, ctx2, eval_symbol(S, ctx2), eval_density(f, ctx2));
                CHECK(helpers::close(q1, q2, 1e-9));
            }
        }
    }
}

TEST_CASE("critical weight shifts are refused with the offending terms named") {
    Chart chart = make_chart(2);
    ChartConnection conn(chart);
    PointContext ctx(conn, std::vector<double>{0.1, 0.2}, 4);
    QuantizationParams p{2, 2, Rational(0), Rational(5, 3)};
    SymbolField S(2, 2, p.delta());
    S.set_component({0, 1}, parse("1", chart));
    DensityField f{p.lambda, parse("1", chart)};
    try {
        quantize(p, ctx, S, f);
        FAIL("expected CriticalDelta");
    } catch (const CriticalDelta& e) {
        CHECK(e.info().resonance == 3);
        REQUIRE(e.info().pairs.size() == 2);
        CHECK(e.info().pairs[0] == std::make_pair(2, 1));
        CHECK(std::string(e.what()).find("(2,1)") != std::string::npos);
        CHECK(std::string(e.what()).find("(3,3)") != std::string::npos);
    }

    // delta = 2 is critical even though no k = 2 denominator vanishes
    QuantizationParams p2{2, 2, Rational(0), Rational(2)};
    SymbolField S2(2, 2, p2.delta());
    S2.set_component({0, 1}, parse("1", chart));
    CHECK_THROWS_AS(quantize(p2, ctx, S2, f), CriticalDelta);
    CHECK_THROWS_AS(flat_quantize(p2, S2, f, std::vector<double>{0.1, 0.2}), CriticalDelta);
}

TEST_CASE("field-based entry point validates the weights") {
    Chart chart = make_chart(2);
    ChartConnection conn(chart);
    PointContext ctx(conn, std::vector<double>{0.0, 0.0}, 3);
    QuantizationParams p{2, 1, Rational(1, 2), Rational(1, 3)};
    SymbolField good(2, 1, p.delta());
    good.set_component({0}, parse("1", chart));
    SymbolField bad(2, 1, Rational(1, 7));
    bad.set_component({0}, parse("1", chart));
    DensityField f{p.lambda, parse("1", chart)};
    DensityField fbad{Rational(1, 7), parse("1", chart)};
    CHECK_NOTHROW(quantize(p, ctx, good, f));
    CHECK_THROWS_AS(quantize(p, ctx, bad, f), std::invalid_argument);
    CHECK_THROWS_AS(quantize(p, ctx, good, fbad), std::invalid_argument);
}
