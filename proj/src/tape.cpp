#include "psnerf/tape.hpp"

namespace psnerf::ad {

Var Tape::input(Arr value) { return record(std::move(value), nullptr); }

Var Tape::record(Arr value, BackwardFn fn) {
    if (!value.allFinite()) throw TapeError("tape: non-finite value recorded");
    nodes_.push_back(Node{std::move(value), Arr(), std::move(fn)});
    return Var{static_cast<int>(nodes_.size()) - 1, epoch_};
}

void Tape::check(Var v) const {
    if (v.id < 0 || v.epoch != epoch_ || static_cast<std::size_t>(v.id) >= nodes_.size())
        throw TapeError("tape: stale or invalid handle");
}

const Arr& Tape::grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.size() == 0)
        throw TapeError("tape: gradient not computed (run backward first)");
    return n.grad;
}

double Tape::scalar(Var v) const {
    const Arr& a = value(v);
    if (a.size() != 1) throw TapeError("tape: scalar() on non-scalar value");
    return a(0, 0);
}

void Tape::clear() {
    nodes_.clear();
    ++epoch_;
}

void Tape::accumulate(int id, const Arr& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0)
        n.grad = Arr::Zero(n.value.rows(), n.value.cols());
    n.grad += g;
}

void Tape::backward(Var output) {
    check(output);
    Node& out = nodes_[static_cast<std::size_t>(output.id)];
    if (out.value.size() != 1)
        throw TapeError("tape: backward requires a scalar output");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    out.grad = Arr::Ones(1, 1);
    for (int i = output.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.grad.size() != 0 && n.backward) n.backward(*this, i);
    }
}

namespace {

enum class Bcast { Same, AScalar, BScalar, ARow, BRow };

Bcast bcast_kind(const Arr& a, const Arr& b) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) return Bcast::Same;
    if (a.size() == 1) return Bcast::AScalar;
    if (b.size() == 1) return Bcast::BScalar;
    if (a.rows() == 1 && a.cols() == b.cols()) return Bcast::ARow;
    if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::BRow;
    throw TapeError("tape: incompatible shapes in elementwise op");
}

Arr expand(const Arr& x, Eigen::Index rows, Eigen::Index cols) {
    if (x.rows() == rows && x.cols() == cols) return x;
    if (x.size() == 1) return Arr::Constant(rows, cols, x(0, 0));
    return x.replicate(rows, 1);  // 1xB row over rows
}

// Reduce a full-shape gradient back to the broadcast operand's shape.
Arr reduce_to(const Arr& g, const Arr& like) {
    if (g.rows() == like.rows() && g.cols() == like.cols()) return g;
    if (like.size() == 1) {
        Arr r(1, 1);
        r(0, 0) = g.sum();
        return r;
    }
    return g.colwise().sum();
}

Var binary(Tape& t, Var a, Var b,
           const std::function<Arr(const Arr&, const Arr&)>& fwd,
           const std::function<std::pair<Arr, Arr>(const Arr&, const Arr&, const Arr&)>& bwd) {
    t.check(a);
    t.check(b);
    const Arr& va = t.value(a);
    const Arr& vb = t.value(b);
    (void)bcast_kind(va, vb);  // shape validation
    Eigen::Index rows = std::max(va.rows(), vb.rows());
    Eigen::Index cols = std::max(va.cols(), vb.cols());
    Arr ea = expand(va, rows, cols);
    Arr eb = expand(vb, rows, cols);
    int ia = a.id, ib = b.id;
    return t.record(fwd(ea, eb), [ia, ib, bwd](Tape& tt, int self) {
        const Arr& g = tt.grad_of(self);
        Arr ea2 = expand(tt.value_of(ia), g.rows(), g.cols());
        Arr eb2 = expand(tt.value_of(ib), g.rows(), g.cols());
        auto [ga, gb] = bwd(g, ea2, eb2);
        tt.accumulate(ia, reduce_to(ga, tt.value_of(ia)));
        tt.accumulate(ib, reduce_to(gb, tt.value_of(ib)));
    });
}

Var unary(Tape& t, Var a, Arr out, const std::function<Arr(const Arr&, const Arr&, const Arr&)>& bwd) {
    t.check(a);
    int ia = a.id;
    return t.record(std::move(out), [ia, bwd](Tape& tt, int self) {
        tt.accumulate(ia, bwd(tt.grad_of(self), tt.value_of(ia), tt.value_of(self)));
    });
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
    return binary(t, a, b, [](const Arr& x, const Arr& y) { return Arr(x + y); },
                  [](const Arr& g, const Arr&, const Arr&) { return std::pair<Arr, Arr>{g, g}; });
}

Var sub(Tape& t, Var a, Var b) {
    return binary(t, a, b, [](const Arr& x, const Arr& y) { return Arr(x - y); },
                  [](const Arr& g, const Arr&, const Arr&) { return std::pair<Arr, Arr>{g, Arr(-g)}; });
}

Var mul(Tape& t, Var a, Var b) {
    return binary(t, a, b, [](const Arr& x, const Arr& y) { return Arr(x * y); },
                  [](const Arr& g, const Arr& x, const Arr& y) {
                      return std::pair<Arr, Arr>{Arr(g * y), Arr(g * x)};
                  });
}

Var div(Tape& t, Var a, Var b) {
    return binary(t, a, b, [](const Arr& x, const Arr& y) { return Arr(x / y); },
                  [](const Arr& g, const Arr& x, const Arr& y) {
                      return std::pair<Arr, Arr>{Arr(g / y), Arr(-g * x / (y * y))};
                  });
}

Var cadd(Tape& t, Var a, double c) {
    return unary(t, a, Arr(t.value(a) + c),
                 [](const Arr& g, const Arr&, const Arr&) { return g; });
}

Var cmul(Tape& t, Var a, double c) {
    return unary(t, a, Arr(t.value(a) * c),
                 [c](const Arr& g, const Arr&, const Arr&) { return Arr(g * c); });
}

Var cmul(Tape& t, Var a, const Arr& c) {
    if (c.rows() != t.value(a).rows() || c.cols() != t.value(a).cols())
        throw TapeError("cmul: shape mismatch");
    return unary(t, a, Arr(t.value(a) * c),
                 [c](const Arr& g, const Arr&, const Arr&) { return Arr(g * c); });
}

Var csub_const_minus(Tape& t, double c, Var a) {
    return unary(t, a, Arr(c - t.value(a)),
                 [](const Arr& g, const Arr&, const Arr&) { return Arr(-g); });
}

Var neg(Tape& t, Var a) { return cmul(t, a, -1.0); }

Var exp(Tape& t, Var a) {
    return unary(t, a, Arr(t.value(a).exp()),
                 [](const Arr& g, const Arr&, const Arr& out) { return Arr(g * out); });
}

Var log(Tape& t, Var a) {
    return unary(t, a, Arr(t.value(a).log()),
                 [](const Arr& g, const Arr& x, const Arr&) { return Arr(g / x); });
}

Var sin(Tape& t, Var a) {
    return unary(t, a, Arr(t.value(a).sin()),
                 [](const Arr& g, const Arr& x, const Arr&) { return Arr(g * x.cos()); });
}

Var cos(Tape& t, Var a) {
    return unary(t, a, Arr(t.value(a).cos()),
                 [](const Arr& g, const Arr& x, const Arr&) { return Arr(-g * x.sin()); });
}

Var relu(Tape& t, Var a) {
    return unary(t, a, Arr(t.value(a).max(0.0)),
                 [](const Arr& g, const Arr& x, const Arr&) {
                     return Arr(g * (x > 0.0).cast<double>());
                 });
}

Var sigmoid(Tape& t, Var a) {
    Arr out = 1.0 / (1.0 + (-t.value(a)).exp());
    return unary(t, a, std::move(out),
                 [](const Arr& g, const Arr&, const Arr& y) { return Arr(g * y * (1.0 - y)); });
}

Var softplus(Tape& t, Var a) {
    // log(1+e^x), stable form
    const Arr& x = t.value(a);
    Arr out = x.max(0.0) + (1.0 + (-x.abs()).exp()).log();
    return unary(t, a, std::move(out),
                 [](const Arr& g, const Arr& x2, const Arr&) {
                     return Arr(g / (1.0 + (-x2).exp()));
                 });
}

Var square(Tape& t, Var a) {
    return unary(t, a, Arr(t.value(a).square()),
                 [](const Arr& g, const Arr& x, const Arr&) { return Arr(2.0 * g * x); });
}

Var matmul(Tape& t, Var a, Var b) {
    t.check(a);
    t.check(b);
    const Arr& va = t.value(a);
    const Arr& vb = t.value(b);
    if (va.cols() != vb.rows()) throw TapeError("matmul: inner dimension mismatch");
    Arr out = (va.matrix() * vb.matrix()).array();
    int ia = a.id, ib = b.id;
    return t.record(std::move(out), [ia, ib](Tape& tt, int self) {
        const auto g = tt.grad_of(self).matrix();
        tt.accumulate(ia, (g * tt.value_of(ib).matrix().transpose()).array());
        tt.accumulate(ib, (tt.value_of(ia).matrix().transpose() * g).array());
    });
}

Var matmul_const_left(Tape& t, const Arr& a, Var b) {
    t.check(b);
    if (a.cols() != t.value(b).rows()) throw TapeError("matmul: inner dimension mismatch");
    Arr out = (a.matrix() * t.value(b).matrix()).array();
    int ib = b.id;
    return t.record(std::move(out), [a, ib](Tape& tt, int self) {
        tt.accumulate(ib, (a.matrix().transpose() * tt.grad_of(self).matrix()).array());
    });
}

Var add_colwise(Tape& t, Var m, Var bias) {
    t.check(m);
    t.check(bias);
    const Arr& vm = t.value(m);
    const Arr& vb = t.value(bias);
    if (vb.cols() != 1 || vb.rows() != vm.rows()) throw TapeError("add_colwise: bias shape");
    Arr out = vm.colwise() + vb.col(0);
    int im = m.id, ib = bias.id;
    return t.record(std::move(out), [im, ib](Tape& tt, int self) {
        const Arr& g = tt.grad_of(self);
        tt.accumulate(im, g);
        tt.accumulate(ib, g.rowwise().sum());
    });
}

Var sum(Tape& t, Var a) {
    t.check(a);
    Arr out(1, 1);
    out(0, 0) = t.value(a).sum();
    int ia = a.id;
    return t.record(std::move(out), [ia](Tape& tt, int self) {
        double g = tt.grad_of(self)(0, 0);
        const Arr& v = tt.value_of(ia);
        tt.accumulate(ia, Arr::Constant(v.rows(), v.cols(), g));
    });
}

Var mean(Tape& t, Var a) {
    return cmul(t, sum(t, a), 1.0 / static_cast<double>(t.value(a).size()));
}

Var reshape(Tape& t, Var a, Eigen::Index rows, Eigen::Index cols) {
    t.check(a);
    const Arr& v = t.value(a);
    if (v.size() != rows * cols) throw TapeError("reshape: size mismatch");
    Arr out = Eigen::Map<const Arr>(v.data(), rows, cols);
    int ia = a.id;
    return t.record(std::move(out), [ia](Tape& tt, int self) {
        const Arr& g = tt.grad_of(self);
        const Arr& v2 = tt.value_of(ia);
        tt.accumulate(ia, Eigen::Map<const Arr>(g.data(), v2.rows(), v2.cols()));
    });
}

Var concat_rows(Tape& t, Var a, Var b) {
    t.check(a);
    t.check(b);
    const Arr& va = t.value(a);
    const Arr& vb = t.value(b);
    if (va.cols() != vb.cols()) throw TapeError("concat_rows: column mismatch");
    Arr out(va.rows() + vb.rows(), va.cols());
    out.topRows(va.rows()) = va;
    out.bottomRows(vb.rows()) = vb;
    int ia = a.id, ib = b.id;
    Eigen::Index ra = va.rows(), rb = vb.rows();
    return t.record(std::move(out), [ia, ib, ra, rb](Tape& tt, int self) {
        const Arr& g = tt.grad_of(self);
        tt.accumulate(ia, g.topRows(ra));
        tt.accumulate(ib, g.bottomRows(rb));
    });
}

Var slice_rows(Tape& t, Var a, Eigen::Index start, Eigen::Index count) {
    t.check(a);
    const Arr& v = t.value(a);
    if (start < 0 || count < 0 || start + count > v.rows())
        throw TapeError("slice_rows: out of range");
    Arr out = v.middleRows(start, count);
    int ia = a.id;
    return t.record(std::move(out), [ia, start, count](Tape& tt, int self) {
        const Arr& v2 = tt.value_of(ia);
        Arr g = Arr::Zero(v2.rows(), v2.cols());
        g.middleRows(start, count) = tt.grad_of(self);
        tt.accumulate(ia, g);
    });
}

Var cumsum_cols_exclusive(Tape& t, Var a) {
    t.check(a);
    const Arr& v = t.value(a);
    Arr out = Arr::Zero(v.rows(), v.cols());
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
        double acc = 0.0;
        for (Eigen::Index r = 0; r < v.rows(); ++r) {
            out(r, c) = acc;
            acc += v(r, c);
        }
    }
    int ia = a.id;
    return t.record(std::move(out), [ia](Tape& tt, int self) {
        const Arr& g = tt.grad_of(self);
        Arr ga = Arr::Zero(g.rows(), g.cols());
        // d out(r)/d in(j) = 1 for j < r  =>  grad in(j) = sum_{r > j} g(r)
        for (Eigen::Index c = 0; c < g.cols(); ++c) {
            double acc = 0.0;
            for (Eigen::Index r = g.rows() - 1; r >= 0; --r) {
                ga(r, c) = acc;
                acc += g(r, c);
            }
        }
        tt.accumulate(ia, ga);
    });
}

Var group_sum_cols(Tape& t, Var a, Eigen::Index group) {
    t.check(a);
    const Arr& v = t.value(a);
    if (group <= 0 || v.cols() % group != 0) throw TapeError("group_sum_cols: bad group size");
    Eigen::Index ngroups = v.cols() / group;
    Arr out = Arr::Zero(v.rows(), ngroups);
    for (Eigen::Index gidx = 0; gidx < ngroups; ++gidx)
        out.col(gidx) = v.middleCols(gidx * group, group).rowwise().sum();
    int ia = a.id;
    return t.record(std::move(out), [ia, group](Tape& tt, int self) {
        const Arr& g = tt.grad_of(self);
        const Arr& v2 = tt.value_of(ia);
        Arr ga(v2.rows(), v2.cols());
        for (Eigen::Index gidx = 0; gidx < g.cols(); ++gidx)
            ga.middleCols(gidx * group, group) = g.col(gidx).replicate(1, group);
        tt.accumulate(ia, ga);
    });
}

Var dot_cols(Tape& t, Var a, Var b) {
    t.check(a);
    t.check(b);
    const Arr& va = t.value(a);
    const Arr& vb = t.value(b);
    if (va.rows() != vb.rows() || va.cols() != vb.cols())
        throw TapeError("dot_cols: shape mismatch");
    Arr out = (va * vb).colwise().sum();
    int ia = a.id, ib = b.id;
    return t.record(std::move(out), [ia, ib](Tape& tt, int self) {
        const Arr& g = tt.grad_of(self);  // 1xB
        const Arr& va2 = tt.value_of(ia);
        const Arr& vb2 = tt.value_of(ib);
        Arr grow = g.replicate(va2.rows(), 1);
        tt.accumulate(ia, Arr(grow * vb2));
        tt.accumulate(ib, Arr(grow * va2));
    });
}

Var normalize_cols(Tape& t, Var a, double eps) {
    t.check(a);
    const Arr& v = t.value(a);
    Eigen::ArrayXd norms = v.matrix().colwise().norm().array() + eps;
    Arr out = v.rowwise() / norms.transpose();
    int ia = a.id;
    return t.record(std::move(out), [ia, eps](Tape& tt, int self) {
        const Arr& g = tt.grad_of(self);
        const Arr& v2 = tt.value_of(ia);
        const Arr& u = tt.value_of(self);
        Arr ga(v2.rows(), v2.cols());
        for (Eigen::Index c = 0; c < v2.cols(); ++c) {
            double n = v2.col(c).matrix().norm() + eps;
            double ug = (u.col(c) * g.col(c)).sum();
            ga.col(c) = (g.col(c) - u.col(c) * ug) / n;
        }
        tt.accumulate(ia, ga);
    });
}

Var positional_encode(Tape& t, Var p, int n_freq) {
    if (n_freq < 1) throw TapeError("positional_encode: n_freq must be >= 1");
    Var out{};
    for (int k = 0; k < n_freq; ++k) {
        Var scaled = cmul(t, p, std::ldexp(M_PI, k));
        Var block = concat_rows(t, sin(t, scaled), cos(t, scaled));
        out = k == 0 ? block : concat_rows(t, out, block);
    }
    return out;
}

Arr positional_encode(const Arr& p, int n_freq) {
    if (n_freq < 1) throw TapeError("positional_encode: n_freq must be >= 1");
    Arr out(p.rows() * 2 * n_freq, p.cols());
    for (int k = 0; k < n_freq; ++k) {
        Arr scaled = p * std::ldexp(M_PI, k);
        out.middleRows(2 * k * p.rows(), p.rows()) = scaled.sin();
        out.middleRows((2 * k + 1) * p.rows(), p.rows()) = scaled.cos();
    }
    return out;
}

}  // namespace psnerf::ad
