#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "densetrf/errors.h"
#include "densetrf/metrics.h"
#include "densetrf/rng.h"

using namespace dtrf;

namespace {

BinaryMask random_mask(int h, int w, double density, Rng& rng) {
    BinaryMask m(h, w);
    for (auto& v : m.grid) v = rng.uniform() < density ? 1 : 0;
    return m;
}

// O(n^2) brute force over foreground pixel pairs, exact in squared-integer
// arithmetic; the library implementation uses a distance transform.
double brute_force_hausdorff(const BinaryMask& a, const BinaryMask& b) {
    auto directed = [](const BinaryMask& from, const BinaryMask& to) {
        int64_t worst = 0;
        for (int y1 = 0; y1 < from.h; ++y1)
            for (int x1 = 0; x1 < from.w; ++x1) {
                if (!from.at(y1, x1)) continue;
                int64_t best = INT64_MAX;
                for (int y2 = 0; y2 < to.h; ++y2)
                    for (int x2 = 0; x2 < to.w; ++x2) {
                        if (!to.at(y2, x2)) continue;
                        int64_t d = int64_t(y1 - y2) * (y1 - y2) + int64_t(x1 - x2) * (x1 - x2);
                        if (d < best) best = d;
                    }
                if (best > worst) worst = best;
            }
        return worst;
    };
    return std::sqrt(double(std::max(directed(a, b), directed(b, a))));
}

} // namespace

TEST_CASE("dice closed forms") {
    BinaryMask a(3, 3), b(3, 3);
    a.at(0, 0) = a.at(0, 1) = 1;
    b.at(0, 1) = b.at(0, 2) = 1;
    CHECK(dice(a, a) == 1.0);
    CHECK(dice(a, b) == doctest::Approx(0.5).epsilon(1e-15));

    BinaryMask c(3, 3);
    c.at(2, 2) = 1;
    BinaryMask d(3, 3);
    d.at(0, 0) = 1;
    CHECK(dice(c, d) == 0.0);
}

TEST_CASE("iou closed forms and empty-mask conventions") {
    BinaryMask a(3, 3), b(3, 3);
    a.at(0, 0) = a.at(0, 1) = 1;
    b.at(0, 1) = b.at(0, 2) = 1;
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    BinaryMask e1(3, 3), e2(3, 3); // both empty
    CHECK(dice(e1, e2) == 1.0);
    CHECK(iou(e1, e2) == 1.0);
    CHECK(dice(a, e1) == 0.0); // one empty
    CHECK(iou(a, e1) == 0.0);
    CHECK(!hausdorff(a, e1).has_value());
    CHECK(!hausdorff(e1, e2).has_value());
}

TEST_CASE("dice-iou bijection on random pairs") {
    Rng rng(101);
    for (int trial = 0; trial < 100; ++trial) {
        BinaryMask a = random_mask(8, 8, 0.4, rng);
        BinaryMask b = random_mask(8, 8, 0.4, rng);
        double d = dice(a, b);
        double i = iou(a, b);
        CHECK(std::fabs(d - 2.0 * i / (1.0 + i)) <= 1e-12);
    }
}

TEST_CASE("hausdorff closed forms") {
    BinaryMask a(6, 6), b(6, 6);
    a.at(0, 0) = 1;
    b.at(3, 4) = 1;
    CHECK(*hausdorff(a, b) == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(*hausdorff(a, a) == 0.0);
}

TEST_CASE("hausdorff equals the brute-force oracle exactly on random pairs") {
    Rng rng(202);
    for (int trial = 0; trial < 50; ++trial) {
        BinaryMask a = random_mask(12, 12, 0.15, rng);
        BinaryMask b = random_mask(12, 12, 0.15, rng);
        if (a.count() == 0 || b.count() == 0) {
            CHECK(!hausdorff(a, b).has_value());
            continue;
        }
        CHECK(*hausdorff(a, b) == brute_force_hausdorff(a, b));
    }
}

TEST_CASE("metrics are symmetric and dice/iou monotone in correct pixels") {
    Rng rng(303);
    for (int trial = 0; trial < 25; ++trial) {
        BinaryMask a = random_mask(10, 10, 0.3, rng);
        BinaryMask b = random_mask(10, 10, 0.3, rng);
        CHECK(dice(a, b) == dice(b, a));
        CHECK(iou(a, b) == iou(b, a));
        auto h1 = hausdorff(a, b);
        auto h2 = hausdorff(b, a);
        CHECK(h1.has_value() == h2.has_value());
        if (h1) CHECK(*h1 == *h2);

        // Turn one false-negative pixel into a hit: dice/iou may not decrease.
        BinaryMask a2 = a;
        bool found = false;
        for (int y = 0; y < 10 && !found; ++y)
            for (int x = 0; x < 10 && !found; ++x) {
                if (b.at(y, x) && !a2.at(y, x)) {
                    a2.at(y, x) = 1;
                    found = true;
                }
            }
        if (found) {
            CHECK(dice(a2, b) >= dice(a, b));
            CHECK(iou(a2, b) >= iou(a, b));
        }
    }
}

TEST_CASE("shape mismatch is rejected") {
    BinaryMask a(3, 3), b(3, 4);
    CHECK_THROWS_AS(dice(a, b), ShapeError);
    CHECK_THROWS_AS(iou(a, b), ShapeError);
    CHECK_THROWS_AS(hausdorff(a, b), ShapeError);
}

TEST_CASE("aggregate_runs closed forms") {
    AggregateReport single = aggregate_runs({RunMetrics{0.8, 0.7, 5.0}});
    CHECK(single.dice.mean == 0.8);
    CHECK(single.dice.stddev == 0.0);
    CHECK(single.dice.n == 1);

    AggregateReport two = aggregate_runs({RunMetrics{0.7, 0.6, 4.0}, RunMetrics{0.8, 0.5, std::nullopt}});
    CHECK(two.dice.mean == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(two.dice.stddev == doctest::Approx(0.070710678118654752).epsilon(1e-9));
    CHECK(two.hd_excluded == 1);
    CHECK(two.hd.n == 1);

    CHECK_THROWS_AS(aggregate_runs({}), Error);
}

TEST_CASE("aggregate_runs matches the formula oracle on random vectors") {
    Rng rng(404);
    std::vector<RunMetrics> runs;
    std::vector<double> ds;
    for (int i = 0; i < 5; ++i) {
        double d = rng.uniform();
        ds.push_back(d);
        runs.push_back(RunMetrics{d, rng.uniform(), rng.uniform() * 10});
    }
    double mean = 0;
    for (double d : ds) mean += d;
    mean /= 5;
    double var = 0;
    for (double d : ds) var += (d - mean) * (d - mean);
    double stddev = std::sqrt(var / 4.0);
    AggregateReport rep = aggregate_runs(runs);
    CHECK(rep.dice.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(rep.dice.stddev == doctest::Approx(stddev).epsilon(1e-12));
}

TEST_CASE("evaluate_mask_stacks means and hd bookkeeping") {
    std::vector<BinaryMask> pred(3, BinaryMask(4, 4)), gt(3, BinaryMask(4, 4));
    pred[1].at(1, 1) = 1;
    gt[1].at(1, 1) = 1;
    // class 2: gt empty, pred non-empty -> dice 0, hd undefined
    pred[2].at(2, 2) = 1;
    MetricReport rep = evaluate_mask_stacks(pred, gt, {1, 2});
    CHECK(rep.per_class.size() == 2);
    CHECK(rep.mean_dice == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(rep.hd_undefined_count == 1);
    CHECK(rep.per_class[0].dice == 1.0);
    // dice = 2*iou/(1+iou) holds per evaluated pair
    for (const auto& cm : rep.per_class) {
        CHECK(std::fabs(cm.dice - 2.0 * cm.iou / (1.0 + cm.iou)) <= 1e-12);
    }
}
