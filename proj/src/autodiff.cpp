#include "conseg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace conseg::ad {

namespace {
constexpr double kSqrt2Pi = 2.5066282746310002;
constexpr double kInvSqrt2 = 0.7071067811865476;
}  // namespace

int64_t numel(const Shape& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

void check_finite(const std::vector<double>& v, const std::string& context) {
    for (double x : v) {
        if (!std::isfinite(x)) throw NumericError("non-finite value in " + context);
    }
}

Parameter::Parameter(std::string n, Shape s) : name(std::move(n)), shape(std::move(s)) {
    int64_t sz = numel(shape);
    if (sz < 0) throw DimensionError("parameter " + name + ": negative extent");
    value.assign(static_cast<size_t>(sz), 0.0);
    grad.assign(static_cast<size_t>(sz), 0.0);
    m.assign(static_cast<size_t>(sz), 0.0);
    v.assign(static_cast<size_t>(sz), 0.0);
}

// ---------------------------------------------------------------------------
// Tensor handle
// ---------------------------------------------------------------------------

const Shape& Tensor::shape() const { return tape_->shape_of(*this); }
const std::vector<double>& Tensor::value() const { return tape_->value_of(*this); }
int64_t Tensor::size() const { return static_cast<int64_t>(value().size()); }

double Tensor::scalar() const {
    const auto& v = value();
    if (v.size() != 1) throw ContractError("scalar() on tensor of size " + std::to_string(v.size()));
    return v[0];
}

// ---------------------------------------------------------------------------
// Tape internals
// ---------------------------------------------------------------------------

Tensor Tape::make_node(Shape shape, std::vector<double> val) {
    if (numel(shape) != static_cast<int64_t>(val.size()))
        throw DimensionError("node data length does not match shape " + shape_str(shape));
    Node n;
    n.shape = std::move(shape);
    n.grad.assign(val.size(), 0.0);
    n.val = std::move(val);
    nodes_.push_back(std::move(n));
    return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

Tape::Node& Tape::node(const Tensor& t) {
    check_owned(t);
    return nodes_[static_cast<size_t>(t.node_)];
}

const Tape::Node& Tape::node(const Tensor& t) const {
    check_owned(t);
    return nodes_[static_cast<size_t>(t.node_)];
}

void Tape::check_owned(const Tensor& t) const {
    if (t.tape_ != this || t.node_ < 0 || t.node_ >= static_cast<int>(nodes_.size()))
        throw ContractError("tensor does not belong to this tape");
}

const std::vector<double>& Tape::value_of(const Tensor& t) const { return node(t).val; }
const std::vector<double>& Tape::grad_of(const Tensor& t) const { return node(t).grad; }
const Shape& Tape::shape_of(const Tensor& t) const { return node(t).shape; }

// ---------------------------------------------------------------------------
// Leaves
// ---------------------------------------------------------------------------

Tensor Tape::constant(Shape shape, std::vector<double> data) {
    return make_node(std::move(shape), std::move(data));
}

Tensor Tape::zeros(Shape shape) {
    int64_t n = numel(shape);
    return make_node(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tape::scalar_const(double v) { return make_node({1}, {v}); }

Tensor Tape::param(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Tensor(this, it->second);
    Tensor t = make_node(p.shape, p.value);
    nodes_.back().param = &p;
    param_nodes_[&p] = t.node_;
    return t;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.shape.size() != 2 || nb.shape.size() != 2)
        throw DimensionError("matmul expects rank-2 tensors, got " + shape_str(na.shape) +
                             " and " + shape_str(nb.shape));
    int m = na.shape[0], k = na.shape[1], k2 = nb.shape[0], n = nb.shape[1];
    if (k != k2)
        throw DimensionError("matmul inner extents disagree: " + shape_str(na.shape) + " * " +
                             shape_str(nb.shape));
    std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
    const auto& A = na.val;
    const auto& B = nb.val;
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            double av = A[static_cast<size_t>(i) * k + p];
            if (av == 0.0) continue;
            const double* brow = &B[static_cast<size_t>(p) * n];
            double* orow = &out[static_cast<size_t>(i) * n];
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    Tensor y = make_node({m, n}, std::move(out));
    int ia = a.node_, ib = b.node_, iy = y.node_;
    node(y).backprop = [this, ia, ib, iy, m, k, n]() {
        const auto& gy = nodes_[iy].grad;
        const auto& A = nodes_[ia].val;
        const auto& B = nodes_[ib].val;
        auto& ga = nodes_[ia].grad;
        auto& gb = nodes_[ib].grad;
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                double g = gy[static_cast<size_t>(i) * n + j];
                if (g == 0.0) continue;
                for (int p = 0; p < k; ++p) {
                    ga[static_cast<size_t>(i) * k + p] += g * B[static_cast<size_t>(p) * n + j];
                    gb[static_cast<size_t>(p) * n + j] += g * A[static_cast<size_t>(i) * k + p];
                }
            }
        }
    };
    return y;
}

Tensor Tape::transpose(const Tensor& a) {
    const Node& na = node(a);
    if (na.shape.size() != 2) throw DimensionError("transpose expects rank-2 tensor");
    int m = na.shape[0], n = na.shape[1];
    std::vector<double> out(static_cast<size_t>(m) * n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<size_t>(j) * m + i] = na.val[static_cast<size_t>(i) * n + j];
    Tensor y = make_node({n, m}, std::move(out));
    int ia = a.node_, iy = y.node_;
    node(y).backprop = [this, ia, iy, m, n]() {
        const auto& gy = nodes_[iy].grad;
        auto& ga = nodes_[ia].grad;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                ga[static_cast<size_t>(i) * n + j] += gy[static_cast<size_t>(j) * m + i];
    };
    return y;
}

// ---------------------------------------------------------------------------
// Elementwise binary with trailing-shape broadcast
// ---------------------------------------------------------------------------

namespace {

// b broadcasts over a iff b's shape equals a trailing slice of a's shape
bool trailing_broadcast(const Shape& a, const Shape& b) {
    if (b.size() > a.size()) return false;
    for (size_t i = 0; i < b.size(); ++i)
        if (b[b.size() - 1 - i] != a[a.size() - 1 - i]) return false;
    return true;
}

}  // namespace

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (!trailing_broadcast(na.shape, nb.shape))
        throw DimensionError("add: incompatible shapes " + shape_str(na.shape) + " and " +
                             shape_str(nb.shape));
    size_t n = na.val.size(), nbp = nb.val.size();
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = na.val[i] + nb.val[i % nbp];
    Tensor y = make_node(na.shape, std::move(out));
    int ia = a.node_, ib = b.node_, iy = y.node_;
    node(y).backprop = [this, ia, ib, iy, n, nbp]() {
        const auto& gy = nodes_[iy].grad;
        auto& ga = nodes_[ia].grad;
        auto& gb = nodes_[ib].grad;
        for (size_t i = 0; i < n; ++i) {
            ga[i] += gy[i];
            gb[i % nbp] += gy[i];
        }
    };
    return y;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (!trailing_broadcast(na.shape, nb.shape))
        throw DimensionError("sub: incompatible shapes " + shape_str(na.shape) + " and " +
                             shape_str(nb.shape));
    size_t n = na.val.size(), nbp = nb.val.size();
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = na.val[i] - nb.val[i % nbp];
    Tensor y = make_node(na.shape, std::move(out));
    int ia = a.node_, ib = b.node_, iy = y.node_;
    node(y).backprop = [this, ia, ib, iy, n, nbp]() {
        const auto& gy = nodes_[iy].grad;
        auto& ga = nodes_[ia].grad;
        auto& gb = nodes_[ib].grad;
        for (size_t i = 0; i < n; ++i) {
            ga[i] += gy[i];
            gb[i % nbp] -= gy[i];
        }
    };
    return y;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (!trailing_broadcast(na.shape, nb.shape))
        throw DimensionError("mul: incompatible shapes " + shape_str(na.shape) + " and " +
                             shape_str(nb.shape));
    size_t n = na.val.size(), nbp = nb.val.size();
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = na.val[i] * nb.val[i % nbp];
    Tensor y = make_node(na.shape, std::move(out));
    int ia = a.node_, ib = b.node_, iy = y.node_;
    node(y).backprop = [this, ia, ib, iy, n, nbp]() {
        const auto& gy = nodes_[iy].grad;
        const auto& A = nodes_[ia].val;
        const auto& B = nodes_[ib].val;
        auto& ga = nodes_[ia].grad;
        auto& gb = nodes_[ib].grad;
        for (size_t i = 0; i < n; ++i) {
            ga[i] += gy[i] * B[i % nbp];
            gb[i % nbp] += gy[i] * A[i];
        }
    };
    return y;
}

Tensor Tape::scale(const Tensor& a, double c) {
    const Node& na = node(a);
    std::vector<double> out(na.val.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = na.val[i] * c;
    Tensor y = make_node(na.shape, std::move(out));
    int ia = a.node_, iy = y.node_;
    node(y).backprop = [this, ia, iy, c]() {
        const auto& gy = nodes_[iy].grad;
        auto& ga = nodes_[ia].grad;
        for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * c;
    };
    return y;
}

Tensor Tape::add_scalar(const Tensor& a, double c) {
    const Node& na = node(a);
    std::vector<double> out(na.val.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = na.val[i] + c;
    Tensor y = make_node(na.shape, std::move(out));
    int ia = a.node_, iy = y.node_;
    node(y).backprop = [this, ia, iy]() {
        const auto& gy = nodes_[iy].grad;
        auto& ga = nodes_[ia].grad;
        for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    };
    return y;
}

// ---------------------------------------------------------------------------
// Elementwise unary
// ---------------------------------------------------------------------------

Tensor Tape::tanh(const Tensor& a) {
    const Node& na = node(a);
    std::vector<double> out(na.val.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(na.val[i]);
    Tensor y = make_node(na.shape, std::move(out));
    int ia = a.node_, iy = y.node_;
    node(y).backprop = [this, ia, iy]() {
        const auto& gy = nodes_[iy].grad;
        const auto& yv = nodes_[iy].val;
        auto& ga = nodes_[ia].grad;
        for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * (1.0 - yv[i] * yv[i]);
    };
    return y;
}

Tensor Tape::exp(const Tensor& a) {
    const Node& na = node(a);
    std::vector<double> out(na.val.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(na.val[i]);
    Tensor y = make_node(na.shape, std::move(out));
    int ia = a.node_, iy = y.node_;
    node(y).backprop = [this, ia, iy]() {
        const auto& gy = nodes_[iy].grad;
        const auto& yv = nodes_[iy].val;
        auto& ga = nodes_[ia].grad;
        for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * yv[i];
    };
    return y;
}

Tensor Tape::log(const Tensor& a) {
    const Node& na = node(a);
    std::vector<double> out(na.val.size());
    for (size_t i = 0; i < out.size(); ++i) {
        if (na.val[i] <= 0.0)
            throw NumericError("log of non-positive value " + std::to_string(na.val[i]));
        out[i] = std::log(na.val[i]);
    }
    Tensor y = make_node(na.shape, std::move(out));
    int ia = a.node_, iy = y.node_;
    node(y).backprop = [this, ia, iy]() {
        const auto& gy = nodes_[iy].grad;
        const auto& av = nodes_[ia].val;
        auto& ga = nodes_[ia].grad;
        for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] / av[i];
    };
    return y;
}

Tensor Tape::sigmoid(const Tensor& a) {
    const Node& na = node(a);
    std::vector<double> out(na.val.size());
    for (size_t i = 0; i < out.size(); ++i) {
        double x = na.val[i];
        out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    Tensor y = make_node(na.shape, std::move(out));
    int ia = a.node_, iy = y.node_;
    node(y).backprop = [this, ia, iy]() {
        const auto& gy = nodes_[iy].grad;
        const auto& yv = nodes_[iy].val;
        auto& ga = nodes_[ia].grad;
        for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * yv[i] * (1.0 - yv[i]);
    };
    return y;
}

Tensor Tape::softplus(const Tensor& a) {
    const Node& na = node(a);
    std::vector<double> out(na.val.size());
    for (size_t i = 0; i < out.size(); ++i) {
        double x = na.val[i];
        out[i] = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
    }
    Tensor y = make_node(na.shape, std::move(out));
    int ia = a.node_, iy = y.node_;
    node(y).backprop = [this, ia, iy]() {
        const auto& gy = nodes_[iy].grad;
        const auto& av = nodes_[ia].val;
        auto& ga = nodes_[ia].grad;
        for (size_t i = 0; i < gy.size(); ++i) {
            double x = av[i];
            double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
            ga[i] += gy[i] * s;
        }
    };
    return y;
}

Tensor Tape::gelu(const Tensor& a) {
    const Node& na = node(a);
    std::vector<double> out(na.val.size());
    for (size_t i = 0; i < out.size(); ++i) {
        double x = na.val[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    Tensor y = make_node(na.shape, std::move(out));
    int ia = a.node_, iy = y.node_;
    node(y).backprop = [this, ia, iy]() {
        const auto& gy = nodes_[iy].grad;
        const auto& av = nodes_[ia].val;
        auto& ga = nodes_[ia].grad;
        for (size_t i = 0; i < gy.size(); ++i) {
            double x = av[i];
            double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            double pdf = std::exp(-0.5 * x * x) / kSqrt2Pi;
            ga[i] += gy[i] * (cdf + x * pdf);
        }
    };
    return y;
}

Tensor Tape::relu(const Tensor& a) {
    const Node& na = node(a);
    std::vector<double> out(na.val.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = na.val[i] > 0.0 ? na.val[i] : 0.0;
    Tensor y = make_node(na.shape, std::move(out));
    int ia = a.node_, iy = y.node_;
    node(y).backprop = [this, ia, iy]() {
        const auto& gy = nodes_[iy].grad;
        const auto& av = nodes_[ia].val;
        auto& ga = nodes_[ia].grad;
        for (size_t i = 0; i < gy.size(); ++i)
            if (av[i] > 0.0) ga[i] += gy[i];
    };
    return y;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

Tensor Tape::concat_last_dim(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_last_dim: empty input");
    Shape lead(node(parts[0]).shape.begin(), node(parts[0]).shape.end() - 1);
    int64_t rows = numel(lead);
    int total = 0;
    std::vector<int> widths;
    for (const Tensor& t : parts) {
        const Shape& s = node(t).shape;
        Shape l(s.begin(), s.end() - 1);
        if (l != lead)
            throw DimensionError("concat_last_dim: leading dims differ");
        widths.push_back(s.back());
        total += s.back();
    }
    Shape out_shape = lead;
    out_shape.push_back(total);
    std::vector<double> out(static_cast<size_t>(rows) * total);
    int off = 0;
    for (size_t p = 0; p < parts.size(); ++p) {
        const auto& v = node(parts[p]).val;
        int w = widths[p];
        for (int64_t r = 0; r < rows; ++r)
            std::copy(v.begin() + r * w, v.begin() + (r + 1) * w,
                      out.begin() + r * total + off);
        off += w;
    }
    Tensor y = make_node(std::move(out_shape), std::move(out));
    std::vector<int> srcs;
    for (const Tensor& t : parts) srcs.push_back(t.node_);
    int iy = y.node_;
    node(y).backprop = [this, srcs, widths, rows, total, iy]() {
        const auto& gy = nodes_[iy].grad;
        int off = 0;
        for (size_t p = 0; p < srcs.size(); ++p) {
            auto& g = nodes_[srcs[p]].grad;
            int w = widths[p];
            for (int64_t r = 0; r < rows; ++r)
                for (int j = 0; j < w; ++j)
                    g[static_cast<size_t>(r) * w + j] += gy[static_cast<size_t>(r) * total + off + j];
            off += w;
        }
    };
    return y;
}

Tensor Tape::slice_rows(const Tensor& a, int row0, int row1) {
    const Node& na = node(a);
    if (na.shape.size() != 2) throw DimensionError("slice_rows expects rank-2 tensor");
    int m = na.shape[0], n = na.shape[1];
    if (row0 < 0 || row1 > m || row0 >= row1)
        throw DimensionError("slice_rows: bad range [" + std::to_string(row0) + "," +
                             std::to_string(row1) + ") for " + std::to_string(m) + " rows");
    std::vector<double> out(na.val.begin() + static_cast<size_t>(row0) * n,
                            na.val.begin() + static_cast<size_t>(row1) * n);
    Tensor y = make_node({row1 - row0, n}, std::move(out));
    int ia = a.node_, iy = y.node_;
    node(y).backprop = [this, ia, iy, row0, n]() {
        const auto& gy = nodes_[iy].grad;
        auto& ga = nodes_[ia].grad;
        for (size_t i = 0; i < gy.size(); ++i) ga[static_cast<size_t>(row0) * n + i] += gy[i];
    };
    return y;
}

Tensor Tape::reshape(const Tensor& a, Shape shape) {
    const Node& na = node(a);
    if (numel(shape) != static_cast<int64_t>(na.val.size()))
        throw DimensionError("reshape: size mismatch " + shape_str(na.shape) + " -> " +
                             shape_str(shape));
    Tensor y = make_node(std::move(shape), na.val);
    int ia = a.node_, iy = y.node_;
    node(y).backprop = [this, ia, iy]() {
        const auto& gy = nodes_[iy].grad;
        auto& ga = nodes_[ia].grad;
        for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    };
    return y;
}

// ---------------------------------------------------------------------------
// Reductions / normalizations
// ---------------------------------------------------------------------------

Tensor Tape::mean_all(const Tensor& a) {
    const Node& na = node(a);
    double s = 0.0;
    for (double x : na.val) s += x;
    double inv = 1.0 / static_cast<double>(na.val.size());
    Tensor y = make_node({1}, {s * inv});
    int ia = a.node_, iy = y.node_;
    node(y).backprop = [this, ia, iy, inv]() {
        double g = nodes_[iy].grad[0] * inv;
        auto& ga = nodes_[ia].grad;
        for (double& x : ga) x += g;
    };
    return y;
}

Tensor Tape::softmax_rows(const Tensor& a) {
    const Node& na = node(a);
    if (na.shape.empty()) throw DimensionError("softmax_rows on rank-0 tensor");
    int n = na.shape.back();
    int64_t rows = static_cast<int64_t>(na.val.size()) / n;
    std::vector<double> out(na.val.size());
    for (int64_t r = 0; r < rows; ++r) {
        const double* x = &na.val[static_cast<size_t>(r) * n];
        double* y = &out[static_cast<size_t>(r) * n];
        double mx = x[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
            y[j] = std::exp(x[j] - mx);
            s += y[j];
        }
        for (int j = 0; j < n; ++j) y[j] /= s;
    }
    Tensor y = make_node(na.shape, std::move(out));
    int ia = a.node_, iy = y.node_;
    node(y).backprop = [this, ia, iy, rows, n]() {
        const auto& gy = nodes_[iy].grad;
        const auto& yv = nodes_[iy].val;
        auto& ga = nodes_[ia].grad;
        for (int64_t r = 0; r < rows; ++r) {
            size_t off = static_cast<size_t>(r) * n;
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += gy[off + j] * yv[off + j];
            for (int j = 0; j < n; ++j) ga[off + j] += yv[off + j] * (gy[off + j] - dot);
        }
    };
    return y;
}

Tensor Tape::scale_rows(const Tensor& a, const Tensor& s) {
    const Node& na = node(a);
    const Node& ns = node(s);
    if (na.shape.size() != 2) throw DimensionError("scale_rows expects rank-2 tensor");
    int m = na.shape[0], n = na.shape[1];
    if (static_cast<int>(ns.val.size()) != m)
        throw DimensionError("scale_rows: scale length " + std::to_string(ns.val.size()) +
                             " != rows " + std::to_string(m));
    std::vector<double> out(na.val.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<size_t>(i) * n + j] = na.val[static_cast<size_t>(i) * n + j] * ns.val[i];
    Tensor y = make_node(na.shape, std::move(out));
    int ia = a.node_, is = s.node_, iy = y.node_;
    node(y).backprop = [this, ia, is, iy, m, n]() {
        const auto& gy = nodes_[iy].grad;
        const auto& av = nodes_[ia].val;
        const auto& sv = nodes_[is].val;
        auto& ga = nodes_[ia].grad;
        auto& gs = nodes_[is].grad;
        for (int i = 0; i < m; ++i) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) {
                size_t k = static_cast<size_t>(i) * n + j;
                ga[k] += gy[k] * sv[i];
                acc += gy[k] * av[k];
            }
            gs[i] += acc;
        }
    };
    return y;
}

Tensor Tape::gaussian_rows(const Tensor& sigma, int len) {
    const Node& ns = node(sigma);
    if (static_cast<int>(ns.val.size()) != len)
        throw DimensionError("gaussian_rows: sigma length != len");
    for (double s : ns.val)
        if (!(s > 0.0)) throw ContractError("gaussian_rows: non-positive sigma");
    std::vector<double> out(static_cast<size_t>(len) * len);
    for (int i = 0; i < len; ++i) {
        double s = ns.val[i];
        double pref = 1.0 / (kSqrt2Pi * s);
        double* row = &out[static_cast<size_t>(i) * len];
        double rs = 0.0;
        for (int j = 0; j < len; ++j) {
            double d = static_cast<double>(j - i);
            row[j] = pref * std::exp(-(d * d) / (2.0 * s * s));
            rs += row[j];
        }
        for (int j = 0; j < len; ++j) row[j] /= rs;
    }
    Tensor y = make_node({len, len}, std::move(out));
    int is = sigma.node_, iy = y.node_;
    node(y).backprop = [this, is, iy, len]() {
        // dG_ij/dsigma_i = G_ij * (a_ij - sum_j G_ij a_ij), a_ij = d^2/sigma^3 - 1/sigma
        const auto& gy = nodes_[iy].grad;
        const auto& G = nodes_[iy].val;
        const auto& sv = nodes_[is].val;
        auto& gs = nodes_[is].grad;
        for (int i = 0; i < len; ++i) {
            double s = sv[i];
            size_t off = static_cast<size_t>(i) * len;
            double abar = 0.0;
            for (int j = 0; j < len; ++j) {
                double d = static_cast<double>(j - i);
                abar += G[off + j] * (d * d / (s * s * s) - 1.0 / s);
            }
            double acc = 0.0;
            for (int j = 0; j < len; ++j) {
                double d = static_cast<double>(j - i);
                double a = d * d / (s * s * s) - 1.0 / s;
                acc += gy[off + j] * G[off + j] * (a - abar);
            }
            gs[i] += acc;
        }
    };
    return y;
}

// ---------------------------------------------------------------------------
// NN blocks
// ---------------------------------------------------------------------------

Tensor Tape::conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
    const Node& nx = node(x);
    const Node& nw = node(w);
    const Node& nb = node(b);
    if (nx.shape.size() != 3 || nw.shape.size() != 3)
        throw DimensionError("conv1d expects x[B,T,Cin], w[Cout,Cin,k]");
    int B = nx.shape[0], T = nx.shape[1], Cin = nx.shape[2];
    int Cout = nw.shape[0], Cin2 = nw.shape[1], k = nw.shape[2];
    if (Cin != Cin2) throw DimensionError("conv1d: channel mismatch");
    if (static_cast<int>(nb.val.size()) != Cout) throw DimensionError("conv1d: bias length != Cout");
    if (stride < 1) throw ConfigError("conv1d: stride must be >= 1");
    if (T < k)
        throw ConfigError("conv1d: input length " + std::to_string(T) +
                          " shorter than kernel " + std::to_string(k));
    int To = (T - k) / stride + 1;
    std::vector<double> out(static_cast<size_t>(B) * To * Cout, 0.0);
    for (int bi = 0; bi < B; ++bi) {
        for (int t = 0; t < To; ++t) {
            for (int o = 0; o < Cout; ++o) {
                double acc = nb.val[o];
                for (int ci = 0; ci < Cin; ++ci)
                    for (int j = 0; j < k; ++j)
                        acc += nx.val[(static_cast<size_t>(bi) * T + t * stride + j) * Cin + ci] *
                               nw.val[(static_cast<size_t>(o) * Cin + ci) * k + j];
                out[(static_cast<size_t>(bi) * To + t) * Cout + o] = acc;
            }
        }
    }
    Tensor y = make_node({B, To, Cout}, std::move(out));
    int ix = x.node_, iw = w.node_, ib = b.node_, iy = y.node_;
    node(y).backprop = [this, ix, iw, ib, iy, B, T, Cin, Cout, k, To, stride]() {
        const auto& gy = nodes_[iy].grad;
        const auto& xv = nodes_[ix].val;
        const auto& wv = nodes_[iw].val;
        auto& gx = nodes_[ix].grad;
        auto& gw = nodes_[iw].grad;
        auto& gb = nodes_[ib].grad;
        for (int bi = 0; bi < B; ++bi) {
            for (int t = 0; t < To; ++t) {
                for (int o = 0; o < Cout; ++o) {
                    double g = gy[(static_cast<size_t>(bi) * To + t) * Cout + o];
                    if (g == 0.0) continue;
                    gb[o] += g;
                    for (int ci = 0; ci < Cin; ++ci)
                        for (int j = 0; j < k; ++j) {
                            size_t xi = (static_cast<size_t>(bi) * T + t * stride + j) * Cin + ci;
                            size_t wi = (static_cast<size_t>(o) * Cin + ci) * k + j;
                            gx[xi] += g * wv[wi];
                            gw[wi] += g * xv[xi];
                        }
                }
            }
        }
    };
    return y;
}

Tensor Tape::mean_axis1(const Tensor& x) {
    const Node& nx = node(x);
    if (nx.shape.size() != 3) throw DimensionError("mean_axis1 expects rank-3 tensor");
    int B = nx.shape[0], T = nx.shape[1], C = nx.shape[2];
    std::vector<double> out(static_cast<size_t>(B) * C, 0.0);
    for (int bi = 0; bi < B; ++bi)
        for (int t = 0; t < T; ++t)
            for (int c = 0; c < C; ++c)
                out[static_cast<size_t>(bi) * C + c] +=
                    nx.val[(static_cast<size_t>(bi) * T + t) * C + c];
    double inv = 1.0 / T;
    for (double& v : out) v *= inv;
    Tensor y = make_node({B, C}, std::move(out));
    int ix = x.node_, iy = y.node_;
    node(y).backprop = [this, ix, iy, B, T, C, inv]() {
        const auto& gy = nodes_[iy].grad;
        auto& gx = nodes_[ix].grad;
        for (int bi = 0; bi < B; ++bi)
            for (int t = 0; t < T; ++t)
                for (int c = 0; c < C; ++c)
                    gx[(static_cast<size_t>(bi) * T + t) * C + c] +=
                        gy[static_cast<size_t>(bi) * C + c] * inv;
    };
    return y;
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const Node& nx = node(x);
    const Node& ng = node(gamma);
    const Node& nbta = node(beta);
    if (nx.shape.size() != 2) throw DimensionError("layer_norm expects rank-2 tensor");
    int m = nx.shape[0], n = nx.shape[1];
    if (static_cast<int>(ng.val.size()) != n || static_cast<int>(nbta.val.size()) != n)
        throw DimensionError("layer_norm: gamma/beta length != feature dim");
    std::vector<double> out(nx.val.size());
    std::vector<double> xhat(nx.val.size());
    std::vector<double> inv_std(m);
    for (int i = 0; i < m; ++i) {
        size_t off = static_cast<size_t>(i) * n;
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += nx.val[off + j];
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            double d = nx.val[off + j] - mu;
            var += d * d;
        }
        var /= n;
        double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        for (int j = 0; j < n; ++j) {
            xhat[off + j] = (nx.val[off + j] - mu) * is;
            out[off + j] = ng.val[j] * xhat[off + j] + nbta.val[j];
        }
    }
    Tensor y = make_node(nx.shape, std::move(out));
    int ix = x.node_, ig = gamma.node_, ib = beta.node_, iy = y.node_;
    node(y).backprop = [this, ix, ig, ib, iy, m, n, xhat = std::move(xhat),
                        inv_std = std::move(inv_std)]() {
        const auto& gy = nodes_[iy].grad;
        const auto& gv = nodes_[ig].val;
        auto& gx = nodes_[ix].grad;
        auto& gg = nodes_[ig].grad;
        auto& gb = nodes_[ib].grad;
        for (int i = 0; i < m; ++i) {
            size_t off = static_cast<size_t>(i) * n;
            double mean_gxh = 0.0, mean_gxh_xh = 0.0;
            for (int j = 0; j < n; ++j) {
                double gxh = gy[off + j] * gv[j];
                mean_gxh += gxh;
                mean_gxh_xh += gxh * xhat[off + j];
            }
            mean_gxh /= n;
            mean_gxh_xh /= n;
            for (int j = 0; j < n; ++j) {
                double gxh = gy[off + j] * gv[j];
                gx[off + j] += inv_std[i] * (gxh - mean_gxh - xhat[off + j] * mean_gxh_xh);
                gg[j] += gy[off + j] * xhat[off + j];
                gb[j] += gy[off + j];
            }
        }
    };
    return y;
}

Tensor Tape::pairwise_concat(const Tensor& c) {
    const Node& nc = node(c);
    if (nc.shape.size() != 2) throw DimensionError("pairwise_concat expects rank-2 tensor");
    int L = nc.shape[0], d = nc.shape[1];
    std::vector<double> out(static_cast<size_t>(L) * L * 2 * d);
    for (int i = 0; i < L; ++i)
        for (int j = 0; j < L; ++j) {
            size_t off = (static_cast<size_t>(i) * L + j) * 2 * d;
            std::copy(nc.val.begin() + static_cast<size_t>(i) * d,
                      nc.val.begin() + static_cast<size_t>(i + 1) * d, out.begin() + off);
            std::copy(nc.val.begin() + static_cast<size_t>(j) * d,
                      nc.val.begin() + static_cast<size_t>(j + 1) * d, out.begin() + off + d);
        }
    Tensor y = make_node({L * L, 2 * d}, std::move(out));
    int ic = c.node_, iy = y.node_;
    node(y).backprop = [this, ic, iy, L, d]() {
        const auto& gy = nodes_[iy].grad;
        auto& gc = nodes_[ic].grad;
        for (int i = 0; i < L; ++i)
            for (int j = 0; j < L; ++j) {
                size_t off = (static_cast<size_t>(i) * L + j) * 2 * d;
                for (int t = 0; t < d; ++t) {
                    gc[static_cast<size_t>(i) * d + t] += gy[off + t];
                    gc[static_cast<size_t>(j) * d + t] += gy[off + d + t];
                }
            }
    };
    return y;
}

Tensor Tape::dropout(const Tensor& x, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
    const Node& nx = node(x);
    if (rate == 0.0) return add_scalar(x, 0.0);
    double keep = 1.0 - rate;
    std::vector<double> mask(nx.val.size());
    std::vector<double> out(nx.val.size());
    for (size_t i = 0; i < mask.size(); ++i) {
        mask[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
        out[i] = nx.val[i] * mask[i];
    }
    Tensor y = make_node(nx.shape, std::move(out));
    int ix = x.node_, iy = y.node_;
    node(y).backprop = [this, ix, iy, mask = std::move(mask)]() {
        const auto& gy = nodes_[iy].grad;
        auto& gx = nodes_[ix].grad;
        for (size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * mask[i];
    };
    return y;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

Tensor Tape::cross_entropy(const Tensor& pred, const std::vector<double>& targets, double eps) {
    const Node& np = node(pred);
    if (np.shape.size() != 2) throw DimensionError("cross_entropy expects rank-2 predictions");
    if (targets.size() != np.val.size())
        throw DimensionError("cross_entropy: target size " + std::to_string(targets.size()) +
                             " != prediction size " + std::to_string(np.val.size()));
    int rows = np.shape[0], C = np.shape[1];
    double loss = 0.0;
    for (int i = 0; i < rows; ++i)
        for (int c = 0; c < C; ++c) {
            double t = targets[static_cast<size_t>(i) * C + c];
            if (t != 0.0) loss -= t * std::log(np.val[static_cast<size_t>(i) * C + c] + eps);
        }
    loss /= rows;
    Tensor y = make_node({1}, {loss});
    int ip = pred.node_, iy = y.node_;
    node(y).backprop = [this, ip, iy, targets, eps, rows]() {
        double g = nodes_[iy].grad[0] / rows;
        const auto& pv = nodes_[ip].val;
        auto& gp = nodes_[ip].grad;
        for (size_t i = 0; i < pv.size(); ++i)
            if (targets[i] != 0.0) gp[i] -= g * targets[i] / (pv[i] + eps);
    };
    return y;
}

Tensor Tape::mse(const Tensor& a, const Tensor& b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.shape != nb.shape)
        throw DimensionError("mse: shapes differ " + shape_str(na.shape) + " vs " +
                             shape_str(nb.shape));
    size_t n = na.val.size();
    double loss = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double d = na.val[i] - nb.val[i];
        loss += d * d;
    }
    loss /= static_cast<double>(n);
    Tensor y = make_node({1}, {loss});
    int ia = a.node_, ib = b.node_, iy = y.node_;
    node(y).backprop = [this, ia, ib, iy, n]() {
        double g = nodes_[iy].grad[0] * 2.0 / static_cast<double>(n);
        const auto& av = nodes_[ia].val;
        const auto& bv = nodes_[ib].val;
        auto& ga = nodes_[ia].grad;
        auto& gb = nodes_[ib].grad;
        for (size_t i = 0; i < n; ++i) {
            double d = g * (av[i] - bv[i]);
            ga[i] += d;
            gb[i] -= d;
        }
    };
    return y;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

void Tape::backward(const Tensor& loss) {
    check_owned(loss);
    Node& ln = node(loss);
    if (ln.val.size() != 1)
        throw ContractError("backward requires a scalar loss, got " + shape_str(ln.shape));
    ln.grad[0] = 1.0;
    for (size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].backprop) nodes_[i].backprop();
    }
    for (auto& [p, idx] : param_nodes_) {
        const auto& g = nodes_[static_cast<size_t>(idx)].grad;
        for (size_t i = 0; i < g.size(); ++i) p->grad[i] += g[i];
    }
}

}  // namespace conseg::ad
