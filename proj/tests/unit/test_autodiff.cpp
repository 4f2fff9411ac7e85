#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "densetrf/autodiff.h"
#include "densetrf/errors.h"
#include "densetrf/rng.h"
#include "gradcheck.h"

using namespace dtrf;

namespace {

// Generic op gradcheck: loss = sum of elementwise-squared output, so every
// output entry contributes.
double run_fd(const std::function<ad::Value(ad::Graph&, const ParameterSet&)>& build, const ParameterSet& params,
              const std::string& pname) {
    auto forward = [&](const ParameterSet& p) {
        ad::Graph g;
        ad::Value out = build(g, p);
        ad::Value loss = g.mean_all(g.mul(out, out));
        return g.scalar(loss);
    };
    ad::Graph g;
    ad::Value out = build(g, params);
    ad::Value loss = g.mean_all(g.mul(out, out));
    g.backward(loss);
    ParameterSet single;
    single.add(pname, params.at(pname));
    auto rep = testsupport::finite_difference_check(
        single, forward, [&](const std::string& n) { return g.param_grad(n); }, 1e-5, 2e-4);
    return rep.worst_rel;
}

ParameterSet one(const std::string& name, Tensor t) {
    ParameterSet p;
    p.add(name, std::move(t));
    return p;
}

} // namespace

TEST_CASE("matmul values match a loop oracle") {
    Rng rng(7);
    Tensor a = Tensor::randn({3, 4}, rng);
    Tensor b = Tensor::randn({4, 5}, rng);
    ad::Graph g;
    ad::Value c = g.matmul(g.constant(a), g.constant(b));
    const Tensor& tv = g.value(c);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 5; ++j) {
            double s = 0.0;
            for (int k = 0; k < 4; ++k) s += a.at2(i, k) * b.at2(k, j);
            CHECK(tv.at2(i, j) == doctest::Approx(s).epsilon(1e-12));
        }
    }
}

TEST_CASE("elementwise and linear op gradients match finite differences") {
    Rng rng(11);
    auto p = one("x", Tensor::randn({4, 6}, rng));
    Tensor other = Tensor::randn({4, 6}, rng);
    Tensor mat = Tensor::randn({6, 3}, rng);

    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.add(g.param("x", ps.at("x")), g.constant(other)); }, p, "x") < 2e-4);
    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.mul(g.param("x", ps.at("x")), g.constant(other)); }, p, "x") < 2e-4);
    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.sigmoid(g.param("x", ps.at("x"))); }, p, "x") < 2e-4);
    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.tanh(g.param("x", ps.at("x"))); }, p, "x") < 2e-4);
    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.gelu(g.param("x", ps.at("x"))); }, p, "x") < 2e-4);
    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.exp(g.scale(g.param("x", ps.at("x")), 0.3)); }, p, "x") < 2e-4);
    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.matmul(g.param("x", ps.at("x")), g.constant(mat)); }, p, "x") < 2e-4);
    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.transpose(g.param("x", ps.at("x"))); }, p, "x") < 2e-4);
    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.softmax_axis0(g.param("x", ps.at("x"))); }, p, "x") < 2e-4);
    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.repeat_rows(g.param("x", ps.at("x")), 3); }, p, "x") < 2e-4);
    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.slice_cols(g.param("x", ps.at("x")), 1, 4); }, p, "x") < 2e-4);
    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.row_sum(g.param("x", ps.at("x"))); }, p, "x") < 2e-4);
}

TEST_CASE("broadcast and normalization gradients match finite differences") {
    Rng rng(13);
    Tensor m = Tensor::randn({5, 4}, rng);
    Tensor col = Tensor::randn({5, 1}, rng);
    for (int i = 0; i < 5; ++i) col[i] = 1.5 + std::fabs(col[i]); // keep divisions well-conditioned
    Tensor row = Tensor::randn({1, 4}, rng);
    Tensor gain = Tensor::randn({1, 4}, rng);
    Tensor bias = Tensor::randn({1, 4}, rng);

    auto pm = one("x", m);
    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.add_row_broadcast(g.param("x", ps.at("x")), g.constant(row)); }, pm, "x") < 2e-4);
    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.mul_col_broadcast(g.param("x", ps.at("x")), g.constant(col)); }, pm, "x") < 2e-4);
    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.div_col_broadcast(g.param("x", ps.at("x")), g.constant(col)); }, pm, "x") < 2e-4);
    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.layer_norm(g.param("x", ps.at("x")), g.constant(gain), g.constant(bias)); }, pm, "x") < 2e-4);

    auto pc = one("c", col);
    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.div_col_broadcast(g.constant(m), g.param("c", ps.at("c"))); }, pc, "c") < 2e-4);
    auto pg = one("g", gain);
    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.layer_norm(g.constant(m), g.param("g", ps.at("g")), g.constant(bias)); }, pg, "g") < 2e-4);
}

TEST_CASE("fused ops gradients match finite differences") {
    Rng rng(17);
    Tensor decoded = Tensor::randn({2 * 4, 3}, rng); // K=2, N=4
    Tensor weights = Tensor::randn({2, 4}, rng);
    Tensor grid = Tensor::randn({4, 3}, rng); // 2x2 grid
    Tensor target = Tensor::randn({4, 3}, rng);
    Tensor labels({16, 2});
    Rng lr(3);
    for (int64_t i = 0; i < labels.size(); ++i) labels[i] = lr.uniform() < 0.5 ? 0.0 : 1.0;
    Tensor logits = Tensor::randn({16, 2}, rng);

    auto pd = one("d", decoded);
    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.rows_weighted_sum(g.param("d", ps.at("d")), g.constant(weights), 2); }, pd, "d") < 2e-4);
    auto pw = one("w", weights);
    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.rows_weighted_sum(g.constant(decoded), g.param("w", ps.at("w")), 2); }, pw, "w") < 2e-4);
    auto pgrid = one("g", grid);
    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.bilinear_upsample(g.param("g", ps.at("g")), 2, 2, 2, 2); }, pgrid, "g") < 2e-4);
    auto pt = one("t", grid);
    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.mean_sq_diff(g.param("t", ps.at("t")), g.constant(target)); }, pt, "t") < 2e-4);
    auto pl = one("l", logits);
    CHECK(run_fd([&](ad::Graph& g, const ParameterSet& ps) { return g.bce_with_logits(g.param("l", ps.at("l")), g.constant(labels)); }, pl, "l") < 2e-4);
}

TEST_CASE("softmax_axis0 columns sum to one") {
    Rng rng(19);
    Tensor m = Tensor::randn({6, 9}, rng, 3.0);
    ad::Graph g;
    const Tensor& s = g.value(g.softmax_axis0(g.constant(m)));
    for (int j = 0; j < 9; ++j) {
        double col = 0.0;
        for (int i = 0; i < 6; ++i) col += s.at2(i, j);
        CHECK(col == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("bce of zero logits is ln 2") {
    Tensor logits({3, 3});
    Tensor y({3, 3});
    Rng rng(23);
    for (int64_t i = 0; i < y.size(); ++i) y[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    ad::Graph g;
    CHECK(g.scalar(g.bce_with_logits(g.constant(logits), g.constant(y))) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("bilinear upsample of a constant grid is constant; factor 1 is identity") {
    Tensor grid = Tensor::full({9, 2}, 0.7);
    ad::Graph g;
    const Tensor& up = g.value(g.bilinear_upsample(g.constant(grid), 3, 3, 4, 4));
    for (int64_t i = 0; i < up.size(); ++i) CHECK(up[i] == doctest::Approx(0.7).epsilon(1e-12));

    Rng rng(29);
    Tensor grid2 = Tensor::randn({9, 2}, rng);
    ad::Graph g2;
    const Tensor& same = g2.value(g2.bilinear_upsample(g2.constant(grid2), 3, 3, 1, 1));
    CHECK(same.max_abs_diff(grid2) == 0.0);
}

TEST_CASE("backward requires a scalar loss and rejects non-finite checks") {
    ad::Graph g;
    ad::Value x = g.param("x", Tensor::full({2, 2}, 1.0));
    CHECK_THROWS_AS(g.backward(x), ShapeError);
    Tensor bad({1, 2});
    bad[0] = std::numeric_limits<double>::quiet_NaN();
    ad::Graph g2;
    ad::Value b = g2.constant(bad);
    CHECK_THROWS_AS(g2.check_finite(b, "test"), NonFiniteError);
}
