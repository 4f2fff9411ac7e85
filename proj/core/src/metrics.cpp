#include "densetrf/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "densetrf/errors.h"

namespace dtrf {

namespace {

// Large finite "no source here" value: keeps the parabola intersections
// finite while never beating a real foreground distance (max n^2 per axis).
constexpr double kInf = 1e12;

void check_shapes(const BinaryMask& a, const BinaryMask& b, const char* what) {
    if (a.h != b.h || a.w != b.w || a.h < 1 || a.w < 1) {
        throw ShapeError(std::string(what) + ": mask shapes " + std::to_string(a.h) + "x" + std::to_string(a.w) +
                         " vs " + std::to_string(b.h) + "x" + std::to_string(b.w));
    }
}

// 1D squared distance transform (lower envelope of parabolas).
void edt_1d(const std::vector<double>& f, std::vector<double>& d, int n, std::vector<int>& v, std::vector<double>& z) {
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        double s = ((f[size_t(q)] + double(q) * q) - (f[size_t(v[size_t(k)])] + double(v[size_t(k)]) * v[size_t(k)])) /
                   (2.0 * q - 2.0 * v[size_t(k)]);
        while (s <= z[size_t(k)]) {
            --k;
            s = ((f[size_t(q)] + double(q) * q) - (f[size_t(v[size_t(k)])] + double(v[size_t(k)]) * v[size_t(k)])) /
                (2.0 * q - 2.0 * v[size_t(k)]);
        }
        ++k;
        v[size_t(k)] = q;
        z[size_t(k)] = s;
        z[size_t(k) + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[size_t(k) + 1] < q) ++k;
        double dq = double(q) - v[size_t(k)];
        d[size_t(q)] = dq * dq + f[size_t(v[size_t(k)])];
    }
}

// Exact squared Euclidean distance to the nearest foreground pixel.
std::vector<double> squared_edt(const BinaryMask& m) {
    int h = m.h, w = m.w;
    std::vector<double> dist(size_t(h) * w);
    for (size_t i = 0; i < dist.size(); ++i) dist[i] = m.grid[i] ? 0.0 : kInf;

    auto nmax = size_t(std::max(h, w));
    std::vector<double> f(nmax), d(nmax), z(nmax + 1);
    std::vector<int> v(nmax);

    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) f[size_t(y)] = dist[size_t(y) * w + x];
        edt_1d(f, d, h, v, z);
        for (int y = 0; y < h; ++y) dist[size_t(y) * w + x] = d[size_t(y)];
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) f[size_t(x)] = dist[size_t(y) * w + x];
        edt_1d(f, d, w, v, z);
        for (int x = 0; x < w; ++x) dist[size_t(y) * w + x] = d[size_t(x)];
    }
    return dist;
}

} // namespace

int64_t BinaryMask::count() const {
    int64_t n = 0;
    for (uint8_t v : grid) n += (v != 0);
    return n;
}

double dice(const BinaryMask& pred, const BinaryMask& gt) {
    check_shapes(pred, gt, "dice");
    int64_t inter = 0, a = 0, b = 0;
    for (size_t i = 0; i < pred.grid.size(); ++i) {
        bool p = pred.grid[i] != 0, g = gt.grid[i] != 0;
        inter += (p && g);
        a += p;
        b += g;
    }
    if (a + b == 0) return 1.0;
    return 2.0 * double(inter) / double(a + b);
}

double iou(const BinaryMask& pred, const BinaryMask& gt) {
    check_shapes(pred, gt, "iou");
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < pred.grid.size(); ++i) {
        bool p = pred.grid[i] != 0, g = gt.grid[i] != 0;
        inter += (p && g);
        uni += (p || g);
    }
    if (uni == 0) return 1.0;
    return double(inter) / double(uni);
}

std::optional<double> hausdorff(const BinaryMask& pred, const BinaryMask& gt) {
    check_shapes(pred, gt, "hausdorff");
    if (pred.count() == 0 || gt.count() == 0) return std::nullopt;

    std::vector<double> to_gt = squared_edt(gt);
    std::vector<double> to_pred = squared_edt(pred);
    double worst = 0.0;
    for (size_t i = 0; i < pred.grid.size(); ++i) {
        if (pred.grid[i] && to_gt[i] > worst) worst = to_gt[i];
        if (gt.grid[i] && to_pred[i] > worst) worst = to_pred[i];
    }
    return std::sqrt(worst);
}

MetricReport evaluate_mask_stacks(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt,
                                  const std::vector<int>& classes) {
    if (pred.size() != gt.size()) throw ShapeError("evaluate_mask_stacks: stack sizes differ");
    if (classes.empty()) throw Error("evaluate_mask_stacks: no classes selected");
    MetricReport rep;
    double sd = 0.0, si = 0.0, sh = 0.0;
    int nh = 0;
    for (int cls : classes) {
        if (cls < 0 || size_t(cls) >= pred.size()) throw Error("evaluate_mask_stacks: class index out of range");
        ClassMetrics cm;
        cm.cls = cls;
        cm.dice = dice(pred[size_t(cls)], gt[size_t(cls)]);
        cm.iou = iou(pred[size_t(cls)], gt[size_t(cls)]);
        cm.hd = hausdorff(pred[size_t(cls)], gt[size_t(cls)]);
        sd += cm.dice;
        si += cm.iou;
        if (cm.hd) {
            sh += *cm.hd;
            ++nh;
        } else {
            ++rep.hd_undefined_count;
        }
        rep.per_class.push_back(cm);
    }
    rep.mean_dice = sd / double(classes.size());
    rep.mean_iou = si / double(classes.size());
    if (nh > 0) rep.mean_hd = sh / double(nh);
    return rep;
}

MeanStd mean_std(const std::vector<double>& xs) {
    if (xs.empty()) throw Error("mean_std: empty input");
    MeanStd ms;
    ms.n = int(xs.size());
    double s = 0.0;
    for (double x : xs) s += x;
    ms.mean = s / double(xs.size());
    if (xs.size() > 1) {
        double q = 0.0;
        for (double x : xs) {
            double d = x - ms.mean;
            q += d * d;
        }
        ms.stddev = std::sqrt(q / double(xs.size() - 1));
    }
    return ms;
}

AggregateReport aggregate_runs(const std::vector<RunMetrics>& runs) {
    if (runs.empty()) throw Error("aggregate_runs: no reports");
    std::vector<double> ds, is, hs;
    AggregateReport rep;
    for (const auto& r : runs) {
        ds.push_back(r.dice);
        is.push_back(r.iou);
        if (r.hd) {
            hs.push_back(*r.hd);
        } else {
            ++rep.hd_excluded;
        }
    }
    rep.dice = mean_std(ds);
    rep.iou = mean_std(is);
    if (!hs.empty()) rep.hd = mean_std(hs);
    return rep;
}

} // namespace dtrf
