#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <vector>

namespace psnerf::ad {

using Arr = Eigen::ArrayXXd;

class Tape;

// Handle into a tape. Invalidated by Tape::clear().
struct Var {
    int id = -1;
    std::uint64_t epoch = 0;
    bool valid() const { return id >= 0; }
};

struct TapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Reverse-mode tape over small dense tensors. Single writer: one tape per
// worker, never shared. Gradients accumulate additively; clear() between
// optimization steps.
class Tape {
public:
    Var input(Arr value);

    const Arr& value(Var v) const { return node(v).value; }
    const Arr& grad(Var v) const;
    bool has_grad(Var v) const { return node(v).grad.size() != 0; }
    double scalar(Var v) const;

    std::size_t size() const { return nodes_.size(); }
    void clear();

    // Backpropagate from a scalar output; fills grad for every ancestor.
    void backward(Var output);

    // --- recording interface (used by the op free functions) ---
    using BackwardFn = std::function<void(Tape&, int self)>;
    Var record(Arr value, BackwardFn fn);
    void accumulate(int id, const Arr& g);
    const Arr& grad_of(int id) const { return nodes_[id].grad; }
    const Arr& value_of(int id) const { return nodes_[id].value; }
    void check(Var v) const;

private:
    struct Node {
        Arr value;
        Arr grad;  // empty until touched by backward
        BackwardFn backward;
    };

    const Node& node(Var v) const {
        check(v);
        return nodes_[static_cast<std::size_t>(v.id)];
    }

    std::vector<Node> nodes_;
    std::uint64_t epoch_ = 0;
};

// ---- primitive operations ----
// Elementwise binaries accept equal shapes, a 1x1 scalar on either side, or a
// 1xB row against an nxB matrix (row broadcast over rows).
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var div(Tape& t, Var a, Var b);

// Constant variants (constant not differentiated).
Var cadd(Tape& t, Var a, double c);
Var cmul(Tape& t, Var a, double c);
Var cmul(Tape& t, Var a, const Arr& c);   // elementwise, same shape
Var csub_const_minus(Tape& t, double c, Var a);  // c - a

Var neg(Tape& t, Var a);
Var exp(Tape& t, Var a);
Var log(Tape& t, Var a);
Var sin(Tape& t, Var a);
Var cos(Tape& t, Var a);
Var relu(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
Var softplus(Tape& t, Var a);
Var square(Tape& t, Var a);

Var matmul(Tape& t, Var a, Var b);
Var matmul_const_left(Tape& t, const Arr& a, Var b);
Var add_colwise(Tape& t, Var m, Var bias);  // bias: nx1 added to every column

Var sum(Tape& t, Var a);   // -> 1x1
Var mean(Tape& t, Var a);  // -> 1x1

Var reshape(Tape& t, Var a, Eigen::Index rows, Eigen::Index cols);  // col-major
Var concat_rows(Tape& t, Var a, Var b);
Var slice_rows(Tape& t, Var a, Eigen::Index start, Eigen::Index count);

// Exclusive prefix sum down each column (entry k = sum of entries < k).
Var cumsum_cols_exclusive(Tape& t, Var a);

// Sum consecutive groups of `group` columns: nx(G*group) -> nxG.
Var group_sum_cols(Tape& t, Var a, Eigen::Index group);

// Per-column dot product of two nxB arrays -> 1xB.
Var dot_cols(Tape& t, Var a, Var b);

// Normalize every column to unit length.
Var normalize_cols(Tape& t, Var a, double eps = 0.0);

// gamma(p): rows interleaved per frequency block:
// [sin(2^0 pi p); cos(2^0 pi p); ...; sin(2^{n-1} pi p); cos(2^{n-1} pi p)].
Var positional_encode(Tape& t, Var p, int n_freq);
Arr positional_encode(const Arr& p, int n_freq);  // plain (no tape)

}  // namespace psnerf::ad
