#include "densetrf/autodiff.h"

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <unordered_map>

#include "densetrf/errors.h"

namespace dtrf::ad {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

MapC cmap(const Tensor& t) { return MapC(t.data(), t.rows(), t.cols()); }
MapM mmap(Tensor& t) { return MapM(t.data(), t.rows(), t.cols()); }

constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

double sigmoid_scalar(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

Graph::Graph() { nodes_.reserve(256); }

Value Graph::make(Tensor val, bool needs_grad, std::function<void(Graph&, Node&)> bwd) {
    Node n;
    n.val = std::move(val);
    n.needs_grad = needs_grad;
    if (needs_grad) n.bwd = std::move(bwd);
    nodes_.push_back(std::move(n));
    return Value{int(nodes_.size()) - 1};
}

Tensor& Graph::grad_buf(Value v) {
    Node& n = node(v);
    if (n.grd.empty() && n.val.size() > 0) n.grd = Tensor(n.val.shape());
    return n.grd;
}

Value Graph::constant(Tensor t) { return make(std::move(t), false, nullptr); }

Value Graph::param(const std::string& name, const Tensor& t) {
    for (const auto& [n, id] : params_) {
        if (n == name) {
            if (!nodes_[size_t(id)].val.same_shape(t)) {
                throw ShapeError("param rebinding with different shape: " + name);
            }
            return Value{id};
        }
    }
    Value v = make(t, true, nullptr);
    params_.emplace_back(name, v.id);
    return v;
}

Value Graph::add(Value a, Value b) {
    const Tensor& ta = node(a).val;
    const Tensor& tb = node(b).val;
    if (!ta.same_shape(tb)) throw ShapeError("add: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = ta;
    for (int64_t i = 0; i < out.size(); ++i) out[i] += tb[i];
    bool ng = node(a).needs_grad || node(b).needs_grad;
    return make(std::move(out), ng, [a, b](Graph& g, Node& self) {
        if (g.node(a).needs_grad) {
            Tensor& da = g.grad_buf(a);
            for (int64_t i = 0; i < da.size(); ++i) da[i] += self.grd[i];
        }
        if (g.node(b).needs_grad) {
            Tensor& db = g.grad_buf(b);
            for (int64_t i = 0; i < db.size(); ++i) db[i] += self.grd[i];
        }
    });
}

Value Graph::sub(Value a, Value b) {
    const Tensor& ta = node(a).val;
    const Tensor& tb = node(b).val;
    if (!ta.same_shape(tb)) throw ShapeError("sub: shape mismatch");
    Tensor out = ta;
    for (int64_t i = 0; i < out.size(); ++i) out[i] -= tb[i];
    bool ng = node(a).needs_grad || node(b).needs_grad;
    return make(std::move(out), ng, [a, b](Graph& g, Node& self) {
        if (g.node(a).needs_grad) {
            Tensor& da = g.grad_buf(a);
            for (int64_t i = 0; i < da.size(); ++i) da[i] += self.grd[i];
        }
        if (g.node(b).needs_grad) {
            Tensor& db = g.grad_buf(b);
            for (int64_t i = 0; i < db.size(); ++i) db[i] -= self.grd[i];
        }
    });
}

Value Graph::mul(Value a, Value b) {
    const Tensor& ta = node(a).val;
    const Tensor& tb = node(b).val;
    if (!ta.same_shape(tb)) throw ShapeError("mul: shape mismatch");
    Tensor out = ta;
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
    bool ng = node(a).needs_grad || node(b).needs_grad;
    return make(std::move(out), ng, [a, b](Graph& g, Node& self) {
        if (g.node(a).needs_grad) {
            Tensor& da = g.grad_buf(a);
            const Tensor& tb2 = g.node(b).val;
            for (int64_t i = 0; i < da.size(); ++i) da[i] += self.grd[i] * tb2[i];
        }
        if (g.node(b).needs_grad) {
            Tensor& db = g.grad_buf(b);
            const Tensor& ta2 = g.node(a).val;
            for (int64_t i = 0; i < db.size(); ++i) db[i] += self.grd[i] * ta2[i];
        }
    });
}

Value Graph::scale(Value a, double s) {
    Tensor out = node(a).val;
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= s;
    return make(std::move(out), node(a).needs_grad, [a, s](Graph& g, Node& self) {
        Tensor& da = g.grad_buf(a);
        for (int64_t i = 0; i < da.size(); ++i) da[i] += s * self.grd[i];
    });
}

Value Graph::add_scalar(Value a, double s) {
    Tensor out = node(a).val;
    for (int64_t i = 0; i < out.size(); ++i) out[i] += s;
    return make(std::move(out), node(a).needs_grad, [a](Graph& g, Node& self) {
        Tensor& da = g.grad_buf(a);
        for (int64_t i = 0; i < da.size(); ++i) da[i] += self.grd[i];
    });
}

Value Graph::sigmoid(Value a) {
    Tensor out = node(a).val;
    for (int64_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(out[i]);
    return make(std::move(out), node(a).needs_grad, [a](Graph& g, Node& self) {
        Tensor& da = g.grad_buf(a);
        for (int64_t i = 0; i < da.size(); ++i) {
            double y = self.val[i];
            da[i] += self.grd[i] * y * (1.0 - y);
        }
    });
}

Value Graph::tanh(Value a) {
    Tensor out = node(a).val;
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
    return make(std::move(out), node(a).needs_grad, [a](Graph& g, Node& self) {
        Tensor& da = g.grad_buf(a);
        for (int64_t i = 0; i < da.size(); ++i) {
            double y = self.val[i];
            da[i] += self.grd[i] * (1.0 - y * y);
        }
    });
}

Value Graph::gelu(Value a) {
    Tensor out = node(a).val;
    for (int64_t i = 0; i < out.size(); ++i) {
        double x = out[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    return make(std::move(out), node(a).needs_grad, [a](Graph& g, Node& self) {
        Tensor& da = g.grad_buf(a);
        const Tensor& x = g.node(a).val;
        for (int64_t i = 0; i < da.size(); ++i) {
            double xi = x[i];
            double cdf = 0.5 * (1.0 + std::erf(xi * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * xi * xi);
            da[i] += self.grd[i] * (cdf + xi * pdf);
        }
    });
}

Value Graph::exp(Value a) {
    Tensor out = node(a).val;
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
    return make(std::move(out), node(a).needs_grad, [a](Graph& g, Node& self) {
        Tensor& da = g.grad_buf(a);
        for (int64_t i = 0; i < da.size(); ++i) da[i] += self.grd[i] * self.val[i];
    });
}

Value Graph::matmul(Value a, Value b) {
    const Tensor& ta = node(a).val;
    const Tensor& tb = node(b).val;
    if (ta.cols() != tb.rows()) {
        throw ShapeError("matmul: inner dimensions " + ta.shape_str() + " x " + tb.shape_str());
    }
    Tensor out({ta.rows(), tb.cols()});
    mmap(out).noalias() = cmap(ta) * cmap(tb);
    bool ng = node(a).needs_grad || node(b).needs_grad;
    return make(std::move(out), ng, [a, b](Graph& g, Node& self) {
        MapC dout(self.grd.data(), self.grd.rows(), self.grd.cols());
        if (g.node(a).needs_grad) {
            Tensor& da = g.grad_buf(a);
            mmap(da).noalias() += dout * cmap(g.node(b).val).transpose();
        }
        if (g.node(b).needs_grad) {
            Tensor& db = g.grad_buf(b);
            mmap(db).noalias() += cmap(g.node(a).val).transpose() * dout;
        }
    });
}

Value Graph::transpose(Value a) {
    const Tensor& ta = node(a).val;
    Tensor out({ta.cols(), ta.rows()});
    mmap(out) = cmap(ta).transpose();
    return make(std::move(out), node(a).needs_grad, [a](Graph& g, Node& self) {
        Tensor& da = g.grad_buf(a);
        mmap(da) += MapC(self.grd.data(), self.grd.rows(), self.grd.cols()).transpose();
    });
}

Value Graph::add_row_broadcast(Value m, Value row) {
    const Tensor& tm = node(m).val;
    const Tensor& tr = node(row).val;
    if (tr.rows() != 1 || tr.cols() != tm.cols()) {
        throw ShapeError("add_row_broadcast: bias shape " + tr.shape_str() + " vs " + tm.shape_str());
    }
    Tensor out = tm;
    int r = tm.rows(), c = tm.cols();
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) out.at2(i, j) += tr[j];
    }
    bool ng = node(m).needs_grad || node(row).needs_grad;
    return make(std::move(out), ng, [m, row](Graph& g, Node& self) {
        int r = self.grd.rows(), c = self.grd.cols();
        if (g.node(m).needs_grad) {
            Tensor& dm = g.grad_buf(m);
            for (int64_t i = 0; i < dm.size(); ++i) dm[i] += self.grd[i];
        }
        if (g.node(row).needs_grad) {
            Tensor& dr = g.grad_buf(row);
            for (int i = 0; i < r; ++i) {
                for (int j = 0; j < c; ++j) dr[j] += self.grd.at2(i, j);
            }
        }
    });
}

Value Graph::mul_col_broadcast(Value m, Value col) {
    const Tensor& tm = node(m).val;
    const Tensor& tc = node(col).val;
    if (tc.cols() != 1 || tc.rows() != tm.rows()) throw ShapeError("mul_col_broadcast: shape");
    Tensor out = tm;
    int r = tm.rows(), c = tm.cols();
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) out.at2(i, j) *= tc[i];
    }
    bool ng = node(m).needs_grad || node(col).needs_grad;
    return make(std::move(out), ng, [m, col](Graph& g, Node& self) {
        int r = self.grd.rows(), c = self.grd.cols();
        const Tensor& tm2 = g.node(m).val;
        const Tensor& tc2 = g.node(col).val;
        if (g.node(m).needs_grad) {
            Tensor& dm = g.grad_buf(m);
            for (int i = 0; i < r; ++i) {
                for (int j = 0; j < c; ++j) dm.at2(i, j) += self.grd.at2(i, j) * tc2[i];
            }
        }
        if (g.node(col).needs_grad) {
            Tensor& dc = g.grad_buf(col);
            for (int i = 0; i < r; ++i) {
                double s = 0.0;
                for (int j = 0; j < c; ++j) s += self.grd.at2(i, j) * tm2.at2(i, j);
                dc[i] += s;
            }
        }
    });
}

Value Graph::div_col_broadcast(Value m, Value col) {
    const Tensor& tm = node(m).val;
    const Tensor& tc = node(col).val;
    if (tc.cols() != 1 || tc.rows() != tm.rows()) throw ShapeError("div_col_broadcast: shape");
    Tensor out = tm;
    int r = tm.rows(), c = tm.cols();
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) out.at2(i, j) /= tc[i];
    }
    bool ng = node(m).needs_grad || node(col).needs_grad;
    return make(std::move(out), ng, [m, col](Graph& g, Node& self) {
        int r = self.grd.rows(), c = self.grd.cols();
        const Tensor& tm2 = g.node(m).val;
        const Tensor& tc2 = g.node(col).val;
        if (g.node(m).needs_grad) {
            Tensor& dm = g.grad_buf(m);
            for (int i = 0; i < r; ++i) {
                for (int j = 0; j < c; ++j) dm.at2(i, j) += self.grd.at2(i, j) / tc2[i];
            }
        }
        if (g.node(col).needs_grad) {
            Tensor& dc = g.grad_buf(col);
            for (int i = 0; i < r; ++i) {
                double s = 0.0;
                double inv2 = 1.0 / (tc2[i] * tc2[i]);
                for (int j = 0; j < c; ++j) s -= self.grd.at2(i, j) * tm2.at2(i, j) * inv2;
                dc[i] += s;
            }
        }
    });
}

Value Graph::row_sum(Value m) {
    const Tensor& tm = node(m).val;
    int r = tm.rows(), c = tm.cols();
    Tensor out({r, 1});
    for (int i = 0; i < r; ++i) {
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += tm.at2(i, j);
        out[i] = s;
    }
    return make(std::move(out), node(m).needs_grad, [m, c](Graph& g, Node& self) {
        Tensor& dm = g.grad_buf(m);
        int r = self.grd.rows();
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) dm.at2(i, j) += self.grd[i];
        }
    });
}

Value Graph::mean_all(Value m) {
    const Tensor& tm = node(m).val;
    double s = 0.0;
    for (int64_t i = 0; i < tm.size(); ++i) s += tm[i];
    int64_t n = tm.size();
    Tensor out({1, 1});
    out[0] = s / double(n);
    return make(std::move(out), node(m).needs_grad, [m, n](Graph& g, Node& self) {
        Tensor& dm = g.grad_buf(m);
        double d = self.grd[0] / double(n);
        for (int64_t i = 0; i < dm.size(); ++i) dm[i] += d;
    });
}

Value Graph::reshape(Value a, std::vector<int> shape) {
    Tensor out = node(a).val.reshaped(shape);
    return make(std::move(out), node(a).needs_grad, [a](Graph& g, Node& self) {
        Tensor& da = g.grad_buf(a);
        for (int64_t i = 0; i < da.size(); ++i) da[i] += self.grd[i];
    });
}

Value Graph::slice_cols(Value a, int c0, int c1) {
    const Tensor& ta = node(a).val;
    int r = ta.rows(), c = ta.cols();
    if (c0 < 0 || c1 > c || c0 >= c1) throw ShapeError("slice_cols: bad range");
    Tensor out({r, c1 - c0});
    for (int i = 0; i < r; ++i) {
        for (int j = c0; j < c1; ++j) out.at2(i, j - c0) = ta.at2(i, j);
    }
    return make(std::move(out), node(a).needs_grad, [a, c0](Graph& g, Node& self) {
        Tensor& da = g.grad_buf(a);
        int r = self.grd.rows(), w = self.grd.cols();
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < w; ++j) da.at2(i, c0 + j) += self.grd.at2(i, j);
        }
    });
}

Value Graph::concat_cols(const std::vector<Value>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    int r = node(parts[0]).val.rows();
    int c = 0;
    bool ng = false;
    for (Value p : parts) {
        if (node(p).val.rows() != r) throw ShapeError("concat_cols: row mismatch");
        c += node(p).val.cols();
        ng = ng || node(p).needs_grad;
    }
    Tensor out({r, c});
    int off = 0;
    for (Value p : parts) {
        const Tensor& tp = node(p).val;
        int w = tp.cols();
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < w; ++j) out.at2(i, off + j) = tp.at2(i, j);
        }
        off += w;
    }
    std::vector<Value> ps = parts;
    return make(std::move(out), ng, [ps](Graph& g, Node& self) {
        int r = self.grd.rows();
        int off = 0;
        for (Value p : ps) {
            int w = g.node(p).val.cols();
            if (g.node(p).needs_grad) {
                Tensor& dp = g.grad_buf(p);
                for (int i = 0; i < r; ++i) {
                    for (int j = 0; j < w; ++j) dp.at2(i, j) += self.grd.at2(i, off + j);
                }
            }
            off += w;
        }
    });
}

Value Graph::repeat_rows(Value a, int times) {
    const Tensor& ta = node(a).val;
    int r = ta.rows(), c = ta.cols();
    Tensor out({r * times, c});
    for (int i = 0; i < r; ++i) {
        for (int t = 0; t < times; ++t) {
            for (int j = 0; j < c; ++j) out.at2(i * times + t, j) = ta.at2(i, j);
        }
    }
    return make(std::move(out), node(a).needs_grad, [a, times](Graph& g, Node& self) {
        Tensor& da = g.grad_buf(a);
        int r = da.rows(), c = da.cols();
        for (int i = 0; i < r; ++i) {
            for (int t = 0; t < times; ++t) {
                for (int j = 0; j < c; ++j) da.at2(i, j) += self.grd.at2(i * times + t, j);
            }
        }
    });
}

Value Graph::layer_norm(Value x, Value gain, Value bias, double eps) {
    const Tensor& tx = node(x).val;
    const Tensor& tg = node(gain).val;
    const Tensor& tb = node(bias).val;
    int r = tx.rows(), c = tx.cols();
    if (tg.rows() != 1 || tg.cols() != c || tb.rows() != 1 || tb.cols() != c) {
        throw ShapeError("layer_norm: gain/bias shape");
    }
    Tensor out({r, c});
    // Cache per-row mean and inverse stddev plus the normalized activations,
    // which the backward pass reuses.
    auto cache = std::make_shared<Tensor>(Tensor({r, c + 1}));
    for (int i = 0; i < r; ++i) {
        double mu = 0.0;
        for (int j = 0; j < c; ++j) mu += tx.at2(i, j);
        mu /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) {
            double d = tx.at2(i, j) - mu;
            var += d * d;
        }
        var /= c;
        double inv = 1.0 / std::sqrt(var + eps);
        cache->at2(i, c) = inv;
        for (int j = 0; j < c; ++j) {
            double xh = (tx.at2(i, j) - mu) * inv;
            cache->at2(i, j) = xh;
            out.at2(i, j) = xh * tg[j] + tb[j];
        }
    }
    bool ng = node(x).needs_grad || node(gain).needs_grad || node(bias).needs_grad;
    return make(std::move(out), ng, [x, gain, bias, cache](Graph& g, Node& self) {
        int r = self.grd.rows(), c = self.grd.cols();
        const Tensor& tg2 = g.node(gain).val;
        if (g.node(gain).needs_grad) {
            Tensor& dg = g.grad_buf(gain);
            for (int i = 0; i < r; ++i) {
                for (int j = 0; j < c; ++j) dg[j] += self.grd.at2(i, j) * cache->at2(i, j);
            }
        }
        if (g.node(bias).needs_grad) {
            Tensor& db = g.grad_buf(bias);
            for (int i = 0; i < r; ++i) {
                for (int j = 0; j < c; ++j) db[j] += self.grd.at2(i, j);
            }
        }
        if (g.node(x).needs_grad) {
            Tensor& dx = g.grad_buf(x);
            for (int i = 0; i < r; ++i) {
                double inv = cache->at2(i, c);
                double m1 = 0.0, m2 = 0.0;
                for (int j = 0; j < c; ++j) {
                    double dxh = self.grd.at2(i, j) * tg2[j];
                    m1 += dxh;
                    m2 += dxh * cache->at2(i, j);
                }
                m1 /= c;
                m2 /= c;
                for (int j = 0; j < c; ++j) {
                    double dxh = self.grd.at2(i, j) * tg2[j];
                    dx.at2(i, j) += inv * (dxh - m1 - cache->at2(i, j) * m2);
                }
            }
        }
    });
}

Value Graph::softmax_axis0(Value m) {
    const Tensor& tm = node(m).val;
    int r = tm.rows(), c = tm.cols();
    Tensor out({r, c});
    for (int j = 0; j < c; ++j) {
        double mx = -1e300;
        for (int i = 0; i < r; ++i) mx = std::max(mx, tm.at2(i, j));
        double z = 0.0;
        for (int i = 0; i < r; ++i) {
            double e = std::exp(tm.at2(i, j) - mx);
            out.at2(i, j) = e;
            z += e;
        }
        for (int i = 0; i < r; ++i) out.at2(i, j) /= z;
    }
    return make(std::move(out), node(m).needs_grad, [m](Graph& g, Node& self) {
        Tensor& dm = g.grad_buf(m);
        int r = self.grd.rows(), c = self.grd.cols();
        for (int j = 0; j < c; ++j) {
            double dot = 0.0;
            for (int i = 0; i < r; ++i) dot += self.grd.at2(i, j) * self.val.at2(i, j);
            for (int i = 0; i < r; ++i) {
                dm.at2(i, j) += self.val.at2(i, j) * (self.grd.at2(i, j) - dot);
            }
        }
    });
}

Value Graph::rows_weighted_sum(Value decoded, Value weights, int num_slots) {
    const Tensor& td = node(decoded).val;
    const Tensor& tw = node(weights).val;
    int n = tw.cols(), c = td.cols();
    if (tw.rows() != num_slots || td.rows() != num_slots * n) {
        throw ShapeError("rows_weighted_sum: decoded " + td.shape_str() + " weights " + tw.shape_str());
    }
    Tensor out({n, c});
    for (int k = 0; k < num_slots; ++k) {
        for (int j = 0; j < n; ++j) {
            double w = tw.at2(k, j);
            const double* src = td.data() + (int64_t(k) * n + j) * c;
            double* dst = out.data() + int64_t(j) * c;
            for (int q = 0; q < c; ++q) dst[q] += w * src[q];
        }
    }
    bool ng = node(decoded).needs_grad || node(weights).needs_grad;
    return make(std::move(out), ng, [decoded, weights, num_slots](Graph& g, Node& self) {
        const Tensor& td2 = g.node(decoded).val;
        const Tensor& tw2 = g.node(weights).val;
        int n = tw2.cols(), c = td2.cols();
        if (g.node(decoded).needs_grad) {
            Tensor& dd = g.grad_buf(decoded);
            for (int k = 0; k < num_slots; ++k) {
                for (int j = 0; j < n; ++j) {
                    double w = tw2.at2(k, j);
                    double* dst = dd.data() + (int64_t(k) * n + j) * c;
                    const double* dout = self.grd.data() + int64_t(j) * c;
                    for (int q = 0; q < c; ++q) dst[q] += w * dout[q];
                }
            }
        }
        if (g.node(weights).needs_grad) {
            Tensor& dw = g.grad_buf(weights);
            for (int k = 0; k < num_slots; ++k) {
                for (int j = 0; j < n; ++j) {
                    const double* src = td2.data() + (int64_t(k) * n + j) * c;
                    const double* dout = self.grd.data() + int64_t(j) * c;
                    double s = 0.0;
                    for (int q = 0; q < c; ++q) s += src[q] * dout[q];
                    dw.at2(k, j) += s;
                }
            }
        }
    });
}

Value Graph::bilinear_upsample(Value grid, int h, int w, int fh, int fw) {
    const Tensor& tg = node(grid).val;
    int c = tg.cols();
    if (tg.rows() != h * w) throw ShapeError("bilinear_upsample: grid rows != h*w");
    if (fh < 1 || fw < 1) throw ShapeError("bilinear_upsample: factors must be >= 1");
    int oh = h * fh, ow = w * fw;
    struct Tap {
        int src[4];
        double wt[4];
    };
    auto taps = std::make_shared<std::vector<Tap>>(size_t(oh) * ow);
    for (int oy = 0; oy < oh; ++oy) {
        double sy = (oy + 0.5) / fh - 0.5;
        int y0 = int(std::floor(sy));
        double ty = sy - y0;
        int y0c = std::min(std::max(y0, 0), h - 1);
        int y1c = std::min(std::max(y0 + 1, 0), h - 1);
        for (int ox = 0; ox < ow; ++ox) {
            double sx = (ox + 0.5) / fw - 0.5;
            int x0 = int(std::floor(sx));
            double tx = sx - x0;
            int x0c = std::min(std::max(x0, 0), w - 1);
            int x1c = std::min(std::max(x0 + 1, 0), w - 1);
            Tap& t = (*taps)[size_t(oy) * ow + ox];
            t.src[0] = y0c * w + x0c;
            t.src[1] = y0c * w + x1c;
            t.src[2] = y1c * w + x0c;
            t.src[3] = y1c * w + x1c;
            t.wt[0] = (1 - ty) * (1 - tx);
            t.wt[1] = (1 - ty) * tx;
            t.wt[2] = ty * (1 - tx);
            t.wt[3] = ty * tx;
        }
    }
    Tensor out({oh * ow, c});
    for (size_t p = 0; p < taps->size(); ++p) {
        const Tap& t = (*taps)[p];
        double* dst = out.data() + int64_t(p) * c;
        for (int q = 0; q < c; ++q) {
            dst[q] = t.wt[0] * tg.data()[int64_t(t.src[0]) * c + q] + t.wt[1] * tg.data()[int64_t(t.src[1]) * c + q] +
                     t.wt[2] * tg.data()[int64_t(t.src[2]) * c + q] + t.wt[3] * tg.data()[int64_t(t.src[3]) * c + q];
        }
    }
    return make(std::move(out), node(grid).needs_grad, [grid, taps, c](Graph& g, Node& self) {
        Tensor& dg = g.grad_buf(grid);
        for (size_t p = 0; p < taps->size(); ++p) {
            const Tap& t = (*taps)[p];
            const double* dout = self.grd.data() + int64_t(p) * c;
            for (int s = 0; s < 4; ++s) {
                double* dst = dg.data() + int64_t(t.src[s]) * c;
                for (int q = 0; q < c; ++q) dst[q] += t.wt[s] * dout[q];
            }
        }
    });
}

Value Graph::mean_sq_diff(Value a, Value b) {
    const Tensor& ta = node(a).val;
    const Tensor& tb = node(b).val;
    if (!ta.same_shape(tb)) throw ShapeError("mean_sq_diff: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    int64_t n = ta.size();
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double d = ta[i] - tb[i];
        s += d * d;
    }
    Tensor out({1, 1});
    out[0] = s / double(n);
    bool ng = node(a).needs_grad || node(b).needs_grad;
    return make(std::move(out), ng, [a, b, n](Graph& g, Node& self) {
        const Tensor& ta2 = g.node(a).val;
        const Tensor& tb2 = g.node(b).val;
        double d0 = 2.0 * self.grd[0] / double(n);
        if (g.node(a).needs_grad) {
            Tensor& da = g.grad_buf(a);
            for (int64_t i = 0; i < n; ++i) da[i] += d0 * (ta2[i] - tb2[i]);
        }
        if (g.node(b).needs_grad) {
            Tensor& db = g.grad_buf(b);
            for (int64_t i = 0; i < n; ++i) db[i] -= d0 * (ta2[i] - tb2[i]);
        }
    });
}

Value Graph::bce_with_logits(Value logits, Value targets) {
    const Tensor& tx = node(logits).val;
    const Tensor& ty = node(targets).val;
    if (!tx.same_shape(ty)) throw ShapeError("bce_with_logits: shape mismatch");
    int64_t n = tx.size();
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double x = tx[i];
        double y = ty[i];
        // max(x,0) - x*y + log(1 + exp(-|x|)): stable for large |x|.
        s += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::fabs(x)));
    }
    Tensor out({1, 1});
    out[0] = s / double(n);
    bool ng = node(logits).needs_grad || node(targets).needs_grad;
    return make(std::move(out), ng, [logits, targets, n](Graph& g, Node& self) {
        const Tensor& tx2 = g.node(logits).val;
        const Tensor& ty2 = g.node(targets).val;
        double d0 = self.grd[0] / double(n);
        if (g.node(logits).needs_grad) {
            Tensor& dx = g.grad_buf(logits);
            for (int64_t i = 0; i < n; ++i) dx[i] += d0 * (sigmoid_scalar(tx2[i]) - ty2[i]);
        }
        if (g.node(targets).needs_grad) {
            Tensor& dy = g.grad_buf(targets);
            for (int64_t i = 0; i < n; ++i) dy[i] -= d0 * tx2[i];
        }
    });
}

const Tensor& Graph::value(Value v) const { return node(v).val; }

double Graph::scalar(Value v) const {
    const Tensor& t = node(v).val;
    if (t.size() != 1) throw ShapeError("scalar: node is not a scalar");
    return t[0];
}

void Graph::backward(Value loss) {
    const Tensor& lv = node(loss).val;
    if (lv.size() != 1) throw ShapeError("backward: loss must be a scalar");
    for (auto& n : nodes_) {
        if (n.needs_grad) {
            if (n.grd.empty()) {
                n.grd = Tensor(n.val.shape());
            } else {
                for (int64_t i = 0; i < n.grd.size(); ++i) n.grd[i] = 0.0;
            }
        }
    }
    node(loss).grd[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[size_t(i)];
        if (n.needs_grad && n.bwd && !n.grd.empty()) n.bwd(*this, n);
    }
}

const Tensor& Graph::grad(Value v) const { return node(v).grd; }

const Tensor* Graph::param_grad(const std::string& name) const {
    for (const auto& [n, id] : params_) {
        if (n == name) {
            const Tensor& g = nodes_[size_t(id)].grd;
            return g.empty() ? nullptr : &g;
        }
    }
    return nullptr;
}

void Graph::check_finite(Value v, const std::string& what) const {
    if (!node(v).val.all_finite()) {
        throw NonFiniteError("non-finite values in " + what);
    }
}

} // namespace dtrf::ad
