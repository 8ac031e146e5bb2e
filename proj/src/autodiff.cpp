#include "gpas/autodiff.hpp"

#include <atomic>
#include <cmath>
#include <limits>

#include "gpas/errors.hpp"

namespace gpas::ad {

namespace {

std::atomic<std::uint64_t> next_trace_id{1};

void require_same_shape(const char *op, Shape a, Shape b) {
    if (!(a == b)) {
        throw DimensionError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
    }
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double *crow = c.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            const double *brow = b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

} // namespace

// ---------------------------------------------------------------- Var

Tape &Var::tape() const {
    if (tape_ == nullptr) throw TraceError("use of an empty Var");
    return *tape_;
}

Shape Var::shape() const { return tape().node(*this).shape; }

std::span<const double> Var::value() const {
    const Tape &t = tape();
    return t.values_of(t.node(*this));
}

std::span<const double> Var::grad() const {
    const auto &n = tape().node(*this);
    if (n.param != nullptr) return n.param->grad;
    return n.grad;
}

bool Var::requires_grad() const { return tape().node(*this).requires_grad; }

double Var::item() const {
    if (shape() != Shape{1, 1}) throw DimensionError("item() on non-scalar " + shape().str());
    return value()[0];
}

// ---------------------------------------------------------------- Tape

Tape::Tape() : trace_id_(next_trace_id++) {}

Tape::Node &Tape::node(Var v) {
    if (v.tape_ != this) throw TraceError("Var belongs to a different tape");
    if (v.trace_ != trace_id_) throw TraceError("stale Var from an earlier trace");
    return nodes_[v.id_];
}

const Tape::Node &Tape::node(Var v) const { return const_cast<Tape *>(this)->node(v); }

std::span<const double> Tape::values_of(const Node &n) const {
    if (n.param != nullptr) return n.param->value;
    return n.value;
}

std::span<double> Tape::grad_of(Node &n) {
    if (n.param != nullptr) return n.param->grad;
    return n.grad;
}

Var Tape::push(Node n) {
    if (backward_done_) throw TraceError("cannot extend a trace after backward(); call reset()");
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1), trace_id_);
}

Var Tape::constant(Shape shape, std::vector<double> values) {
    if (values.size() != shape.size()) {
        throw DimensionError("constant: " + std::to_string(values.size()) + " values for shape " + shape.str());
    }
    Node n;
    n.op = Op::constant;
    n.shape = shape;
    n.value = std::move(values);
    return push(std::move(n));
}

Var Tape::variable(Shape shape, std::vector<double> values) {
    Var v = constant(shape, std::move(values));
    auto &n = nodes_[v.id()];
    n.op = Op::variable;
    n.requires_grad = true;
    return v;
}

Var Tape::param(Parameter &p) {
    if (p.value.size() != p.shape.size()) throw DimensionError("parameter storage does not match its shape");
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
        return Var(this, it->second, trace_id_);
    }
    if (p.grad.size() != p.value.size()) p.grad.assign(p.value.size(), 0.0);
    Node n;
    n.op = Op::param;
    n.shape = p.shape;
    n.requires_grad = true;
    n.param = &p;
    Var v = push(std::move(n));
    param_nodes_.emplace(&p, v.id());
    return v;
}

void Tape::reset() {
    nodes_.clear();
    param_nodes_.clear();
    trace_id_ = next_trace_id++;
    backward_done_ = false;
}

void Tape::backward(Var loss) {
    if (backward_done_) throw TraceError("backward() called twice on the same trace without reset()");
    Node &ln = node(loss);
    if (ln.shape != Shape{1, 1}) throw DimensionError("backward() needs a scalar loss, got " + ln.shape.str());
    const std::uint32_t last = loss.id();
    for (std::uint32_t i = 0; i <= last; ++i) {
        Node &n = nodes_[i];
        if (n.requires_grad && n.param == nullptr) n.grad.assign(n.shape.size(), 0.0);
    }
    backward_done_ = true;
    if (!ln.requires_grad) return;
    grad_of(ln)[0] += 1.0;
    for (std::uint32_t i = last + 1; i-- > 0;) {
        Node &n = nodes_[i];
        if (n.requires_grad) backward_node(n);
    }
}

void Tape::backward_node(Node &n) {
    const std::span<const double> out = n.value;
    const std::span<const double> g = n.grad;
    auto arg = [&](std::size_t k) -> Node & { return nodes_[n.args[k]]; };

    switch (n.op) {
        case Op::constant:
        case Op::variable:
        case Op::param:
            return;

        case Op::matmul: {
            Node &a = arg(0);
            Node &b = arg(1);
            const std::size_t m = a.shape.rows, k = a.shape.cols, cols = b.shape.cols;
            const auto av = values_of(a);
            const auto bv = values_of(b);
            if (a.requires_grad) {
                auto ga = grad_of(a);
                // dA = dC * B^T
                for (std::size_t i = 0; i < m; ++i) {
                    const double *grow = g.data() + i * cols;
                    for (std::size_t p = 0; p < k; ++p) {
                        const double *brow = bv.data() + p * cols;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < cols; ++j) acc += grow[j] * brow[j];
                        ga[i * k + p] += acc;
                    }
                }
            }
            if (b.requires_grad) {
                auto gb = grad_of(b);
                // dB = A^T * dC
                for (std::size_t i = 0; i < m; ++i) {
                    const double *grow = g.data() + i * cols;
                    for (std::size_t p = 0; p < k; ++p) {
                        const double aval = av[i * k + p];
                        if (aval == 0.0) continue;
                        double *gbrow = gb.data() + p * cols;
                        for (std::size_t j = 0; j < cols; ++j) gbrow[j] += aval * grow[j];
                    }
                }
            }
            return;
        }

        case Op::add:
        case Op::sub: {
            const double sign = n.op == Op::add ? 1.0 : -1.0;
            Node &a = arg(0);
            Node &b = arg(1);
            if (a.requires_grad) {
                auto ga = grad_of(a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b.requires_grad) {
                auto gb = grad_of(b);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sign * g[i];
            }
            return;
        }

        case Op::mul: {
            Node &a = arg(0);
            Node &b = arg(1);
            const auto av = values_of(a);
            const auto bv = values_of(b);
            if (a.requires_grad) {
                auto ga = grad_of(a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
            }
            if (b.requires_grad) {
                auto gb = grad_of(b);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
            }
            return;
        }

        case Op::tanh: {
            auto gx = grad_of(arg(0));
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - out[i] * out[i]);
            return;
        }

        case Op::sigmoid: {
            auto gx = grad_of(arg(0));
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * out[i] * (1.0 - out[i]);
            return;
        }

        case Op::softplus: {
            Node &x = arg(0);
            const auto xv = values_of(x);
            auto gx = grad_of(x);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / (1.0 + std::exp(-xv[i]));
            return;
        }

        case Op::add_row: {
            Node &x = arg(0);
            Node &r = arg(1);
            if (x.requires_grad) {
                auto gx = grad_of(x);
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
            }
            if (r.requires_grad) {
                auto gr = grad_of(r);
                const std::size_t cols = n.shape.cols;
                for (std::size_t i = 0; i < n.shape.rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j) gr[j] += g[i * cols + j];
            }
            return;
        }

        case Op::scale: {
            auto gx = grad_of(arg(0));
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += n.scalar * g[i];
            return;
        }

        case Op::softmax_rows: {
            auto gx = grad_of(arg(0));
            const std::size_t cols = n.shape.cols;
            for (std::size_t i = 0; i < n.shape.rows; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < cols; ++j) dot += g[i * cols + j] * out[i * cols + j];
                for (std::size_t j = 0; j < cols; ++j) gx[i * cols + j] += out[i * cols + j] * (g[i * cols + j] - dot);
            }
            return;
        }

        case Op::log_softmax_rows: {
            auto gx = grad_of(arg(0));
            const std::size_t cols = n.shape.cols;
            for (std::size_t i = 0; i < n.shape.rows; ++i) {
                double total = 0.0;
                for (std::size_t j = 0; j < cols; ++j) total += g[i * cols + j];
                for (std::size_t j = 0; j < cols; ++j)
                    gx[i * cols + j] += g[i * cols + j] - std::exp(out[i * cols + j]) * total;
            }
            return;
        }

        case Op::concat: {
            std::size_t offset = 0;
            const std::size_t cols = n.shape.cols;
            for (std::size_t k = 0; k < n.args.size(); ++k) {
                Node &p = arg(k);
                const Shape ps = p.shape;
                if (p.requires_grad) {
                    auto gp = grad_of(p);
                    if (n.axis == 0) {
                        for (std::size_t i = 0; i < ps.size(); ++i) gp[i] += g[offset * cols + i];
                    } else {
                        for (std::size_t i = 0; i < ps.rows; ++i)
                            for (std::size_t j = 0; j < ps.cols; ++j) gp[i * ps.cols + j] += g[i * cols + offset + j];
                    }
                }
                offset += n.axis == 0 ? ps.rows : ps.cols;
            }
            return;
        }

        case Op::gather_row: {
            auto gt = grad_of(arg(0));
            const std::size_t cols = n.shape.cols;
            for (std::size_t j = 0; j < cols; ++j) gt[n.offset * cols + j] += g[j];
            return;
        }

        case Op::dropout: {
            auto gx = grad_of(arg(0));
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * n.aux[i];
            return;
        }

        case Op::slice: {
            Node &x = arg(0);
            auto gx = grad_of(x);
            const std::size_t xcols = x.shape.cols;
            if (n.axis == 0) {
                for (std::size_t i = 0; i < g.size(); ++i) gx[n.offset * xcols + i] += g[i];
            } else {
                for (std::size_t i = 0; i < n.shape.rows; ++i)
                    for (std::size_t j = 0; j < n.shape.cols; ++j) gx[i * xcols + n.offset + j] += g[i * n.shape.cols + j];
            }
            return;
        }

        case Op::transpose: {
            auto gx = grad_of(arg(0));
            const std::size_t r = n.shape.rows, c = n.shape.cols;
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) gx[j * r + i] += g[i * c + j];
            return;
        }

        case Op::sum: {
            auto gx = grad_of(arg(0));
            for (double &v : gx) v += g[0];
            return;
        }

        case Op::sum_rows: {
            Node &x = arg(0);
            auto gx = grad_of(x);
            const std::size_t cols = x.shape.cols;
            for (std::size_t i = 0; i < x.shape.rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) gx[i * cols + j] += g[j];
            return;
        }

        case Op::pick: {
            Node &x = arg(0);
            auto gx = grad_of(x);
            const std::size_t cols = x.shape.cols;
            for (std::size_t i = 0; i < n.index.size(); ++i) gx[i * cols + n.index[i]] += g[i];
            return;
        }
    }
}

// ---------------------------------------------------------------- ops

namespace {

Tape &common_tape(Var a, Var b) {
    Tape &t = a.tape();
    if (&b.tape() != &t) throw TraceError("operands come from different tapes");
    return t;
}

} // namespace

Var matmul(Var a, Var b) {
    Tape &t = common_tape(a, b);
    const auto &na = t.node(a);
    const auto &nb = t.node(b);
    if (na.shape.cols != nb.shape.rows) {
        throw DimensionError("matmul: inner dimensions disagree " + na.shape.str() + " x " + nb.shape.str());
    }
    Tape::Node n;
    n.op = Op::matmul;
    n.shape = {na.shape.rows, nb.shape.cols};
    n.requires_grad = na.requires_grad || nb.requires_grad;
    n.value.assign(n.shape.size(), 0.0);
    gemm_nn(t.values_of(na), t.values_of(nb), n.value, na.shape.rows, na.shape.cols, nb.shape.cols);
    n.args = {a.id(), b.id()};
    return t.push(std::move(n));
}

namespace {

template <typename F>
Var binary_pointwise(Op op, const char *name, Var a, Var b, F f) {
    Tape &t = common_tape(a, b);
    const auto &na = t.node(a);
    const auto &nb = t.node(b);
    require_same_shape(name, na.shape, nb.shape);
    const auto av = t.values_of(na);
    const auto bv = t.values_of(nb);
    Tape::Node n;
    n.op = op;
    n.shape = na.shape;
    n.requires_grad = na.requires_grad || nb.requires_grad;
    n.value.resize(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = f(av[i], bv[i]);
    n.args = {a.id(), b.id()};
    return t.push(std::move(n));
}

template <typename F>
Var unary_pointwise(Op op, Var x, F f) {
    Tape &t = x.tape();
    const auto &nx = t.node(x);
    const auto xv = t.values_of(nx);
    Tape::Node n;
    n.op = op;
    n.shape = nx.shape;
    n.requires_grad = nx.requires_grad;
    n.value.resize(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) n.value[i] = f(xv[i]);
    n.args = {x.id()};
    return t.push(std::move(n));
}

} // namespace

Var add(Var a, Var b) {
    return binary_pointwise(Op::add, "add", a, b, [](double x, double y) { return x + y; });
}

Var sub(Var a, Var b) {
    return binary_pointwise(Op::sub, "sub", a, b, [](double x, double y) { return x - y; });
}

Var mul(Var a, Var b) {
    return binary_pointwise(Op::mul, "mul", a, b, [](double x, double y) { return x * y; });
}

Var tanh(Var x) { return unary_pointwise(Op::tanh, x, [](double v) { return std::tanh(v); }); }

Var sigmoid(Var x) {
    return unary_pointwise(Op::sigmoid, x, [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
    });
}

Var softplus(Var x) {
    return unary_pointwise(Op::softplus, x,
                           [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); });
}

Var scale(Var x, double factor) {
    Var out = unary_pointwise(Op::scale, x, [factor](double v) { return factor * v; });
    out.tape().node(out).scalar = factor;
    return out;
}

Var add_row(Var x, Var row) {
    Tape &t = common_tape(x, row);
    const auto &nx = t.node(x);
    const auto &nr = t.node(row);
    if (nr.shape.rows != 1 || nr.shape.cols != nx.shape.cols) {
        throw DimensionError("add_row: row " + nr.shape.str() + " does not fit " + nx.shape.str());
    }
    const auto xv = t.values_of(nx);
    const auto rv = t.values_of(nr);
    Tape::Node n;
    n.op = Op::add_row;
    n.shape = nx.shape;
    n.requires_grad = nx.requires_grad || nr.requires_grad;
    n.value.resize(xv.size());
    const std::size_t cols = nx.shape.cols;
    for (std::size_t i = 0; i < nx.shape.rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) n.value[i * cols + j] = xv[i * cols + j] + rv[j];
    n.args = {x.id(), row.id()};
    return t.push(std::move(n));
}

namespace {

// Fills out with softmax (log == false) or log-softmax of each row.
void row_softmax(std::span<const double> in, std::span<double> out, Shape s, bool log) {
    for (std::size_t i = 0; i < s.rows; ++i) {
        const double *row = in.data() + i * s.cols;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < s.cols; ++j) {
            if (std::isnan(row[j]) || row[j] == std::numeric_limits<double>::infinity()) {
                throw NumericError("softmax: non-finite input");
            }
            mx = std::max(mx, row[j]);
        }
        if (!std::isfinite(mx)) throw NumericError("softmax: row has no finite entry");
        double total = 0.0;
        for (std::size_t j = 0; j < s.cols; ++j) total += std::exp(row[j] - mx);
        const double log_total = std::log(total);
        for (std::size_t j = 0; j < s.cols; ++j) {
            const double lp = row[j] - mx - log_total;
            out[i * s.cols + j] = log ? lp : std::exp(row[j] - mx) / total;
        }
    }
}

} // namespace

Var softmax_rows(Var x) {
    Tape &t = x.tape();
    const auto &nx = t.node(x);
    if (nx.shape.cols == 0) throw DimensionError("softmax_rows: empty rows");
    Tape::Node n;
    n.op = Op::softmax_rows;
    n.shape = nx.shape;
    n.requires_grad = nx.requires_grad;
    n.value.resize(nx.shape.size());
    row_softmax(t.values_of(nx), n.value, nx.shape, false);
    n.args = {x.id()};
    return t.push(std::move(n));
}

Var log_softmax_rows(Var x) {
    Tape &t = x.tape();
    const auto &nx = t.node(x);
    if (nx.shape.cols == 0) throw DimensionError("log_softmax_rows: empty rows");
    Tape::Node n;
    n.op = Op::log_softmax_rows;
    n.shape = nx.shape;
    n.requires_grad = nx.requires_grad;
    n.value.resize(nx.shape.size());
    row_softmax(t.values_of(nx), n.value, nx.shape, true);
    n.args = {x.id()};
    return t.push(std::move(n));
}

Var concat(std::span<const Var> parts, int axis) {
    if (parts.empty()) throw DimensionError("concat: no parts");
    if (axis != 0 && axis != 1) throw DimensionError("concat: axis " + std::to_string(axis) + " out of range");
    Tape &t = parts.front().tape();
    Shape out{0, 0};
    bool first = true;
    bool needs_grad = false;
    for (const Var &p : parts) {
        if (&p.tape() != &t) throw TraceError("concat: parts come from different tapes");
        const Shape s = t.node(p).shape;
        needs_grad = needs_grad || t.node(p).requires_grad;
        if (s.size() == 0) continue;
        if (first) {
            out = s;
            first = false;
            continue;
        }
        if (axis == 0) {
            if (s.cols != out.cols) throw DimensionError("concat: " + out.str() + " and " + s.str() + " along rows");
            out.rows += s.rows;
        } else {
            if (s.rows != out.rows) throw DimensionError("concat: " + out.str() + " and " + s.str() + " along cols");
            out.cols += s.cols;
        }
    }
    Tape::Node n;
    n.op = Op::concat;
    n.axis = axis;
    n.shape = out;
    n.requires_grad = needs_grad;
    n.value.resize(out.size());
    std::size_t offset = 0;
    for (const Var &p : parts) {
        const auto &np = t.node(p);
        if (np.shape.size() == 0) continue;
        const auto pv = t.values_of(np);
        if (axis == 0) {
            std::copy(pv.begin(), pv.end(), n.value.begin() + static_cast<std::ptrdiff_t>(offset * out.cols));
            offset += np.shape.rows;
        } else {
            for (std::size_t i = 0; i < np.shape.rows; ++i)
                for (std::size_t j = 0; j < np.shape.cols; ++j)
                    n.value[i * out.cols + offset + j] = pv[i * np.shape.cols + j];
            offset += np.shape.cols;
        }
        n.args.push_back(p.id());
    }
    return t.push(std::move(n));
}

Var concat(std::initializer_list<Var> parts, int axis) { return concat(std::span<const Var>(parts.begin(), parts.size()), axis); }

Var gather_row(Var table, std::size_t index) {
    Tape &t = table.tape();
    const auto &nt = t.node(table);
    if (index >= nt.shape.rows) {
        throw LookupError("gather_row: index " + std::to_string(index) + " outside table of " +
                          std::to_string(nt.shape.rows) + " rows");
    }
    const auto tv = t.values_of(nt);
    Tape::Node n;
    n.op = Op::gather_row;
    n.shape = {1, nt.shape.cols};
    n.requires_grad = nt.requires_grad;
    n.value.assign(tv.begin() + static_cast<std::ptrdiff_t>(index * nt.shape.cols),
                   tv.begin() + static_cast<std::ptrdiff_t>((index + 1) * nt.shape.cols));
    n.offset = index;
    n.args = {table.id()};
    return t.push(std::move(n));
}

Var dropout(Var x, double keep_prob, RngStream &rng, bool training) {
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
        throw ConfigError("dropout: keep_prob must lie in (0, 1], got " + std::to_string(keep_prob));
    }
    if (!training || keep_prob == 1.0) return x;
    Tape &t = x.tape();
    const auto &nx = t.node(x);
    const auto xv = t.values_of(nx);
    Tape::Node n;
    n.op = Op::dropout;
    n.shape = nx.shape;
    n.requires_grad = nx.requires_grad;
    n.aux.resize(xv.size());
    n.value.resize(xv.size());
    const double inv = 1.0 / keep_prob;
    for (std::size_t i = 0; i < xv.size(); ++i) {
        n.aux[i] = rng.bernoulli(keep_prob) ? inv : 0.0;
        n.value[i] = xv[i] * n.aux[i];
    }
    n.args = {x.id()};
    return t.push(std::move(n));
}

Var slice(Var x, int axis, std::size_t begin, std::size_t length) {
    Tape &t = x.tape();
    const auto &nx = t.node(x);
    if (axis != 0 && axis != 1) throw DimensionError("slice: axis " + std::to_string(axis) + " out of range");
    const std::size_t extent = axis == 0 ? nx.shape.rows : nx.shape.cols;
    if (begin + length > extent) {
        throw DimensionError("slice: [" + std::to_string(begin) + ", " + std::to_string(begin + length) +
                             ") exceeds " + nx.shape.str());
    }
    const auto xv = t.values_of(nx);
    Tape::Node n;
    n.op = Op::slice;
    n.axis = axis;
    n.offset = begin;
    n.requires_grad = nx.requires_grad;
    if (axis == 0) {
        n.shape = {length, nx.shape.cols};
        n.value.assign(xv.begin() + static_cast<std::ptrdiff_t>(begin * nx.shape.cols),
                       xv.begin() + static_cast<std::ptrdiff_t>((begin + length) * nx.shape.cols));
    } else {
        n.shape = {nx.shape.rows, length};
        n.value.resize(n.shape.size());
        for (std::size_t i = 0; i < nx.shape.rows; ++i)
            for (std::size_t j = 0; j < length; ++j) n.value[i * length + j] = xv[i * nx.shape.cols + begin + j];
    }
    n.args = {x.id()};
    return t.push(std::move(n));
}

Var transpose(Var x) {
    Tape &t = x.tape();
    const auto &nx = t.node(x);
    const auto xv = t.values_of(nx);
    Tape::Node n;
    n.op = Op::transpose;
    n.shape = {nx.shape.cols, nx.shape.rows};
    n.requires_grad = nx.requires_grad;
    n.value.resize(xv.size());
    for (std::size_t i = 0; i < nx.shape.rows; ++i)
        for (std::size_t j = 0; j < nx.shape.cols; ++j) n.value[j * nx.shape.rows + i] = xv[i * nx.shape.cols + j];
    n.args = {x.id()};
    return t.push(std::move(n));
}

Var sum(Var x) {
    Tape &t = x.tape();
    const auto &nx = t.node(x);
    double total = 0.0;
    for (double v : t.values_of(nx)) total += v;
    Tape::Node n;
    n.op = Op::sum;
    n.shape = {1, 1};
    n.requires_grad = nx.requires_grad;
    n.value = {total};
    n.args = {x.id()};
    return t.push(std::move(n));
}

Var sum_rows(Var x) {
    Tape &t = x.tape();
    const auto &nx = t.node(x);
    const auto xv = t.values_of(nx);
    Tape::Node n;
    n.op = Op::sum_rows;
    n.shape = {1, nx.shape.cols};
    n.requires_grad = nx.requires_grad;
    n.value.assign(nx.shape.cols, 0.0);
    for (std::size_t i = 0; i < nx.shape.rows; ++i)
        for (std::size_t j = 0; j < nx.shape.cols; ++j) n.value[j] += xv[i * nx.shape.cols + j];
    n.args = {x.id()};
    return t.push(std::move(n));
}

Var pick(Var x, std::span<const std::size_t> cols) {
    Tape &t = x.tape();
    const auto &nx = t.node(x);
    if (cols.size() != nx.shape.rows) {
        throw DimensionError("pick: " + std::to_string(cols.size()) + " indices for " + nx.shape.str());
    }
    const auto xv = t.values_of(nx);
    Tape::Node n;
    n.op = Op::pick;
    n.shape = {nx.shape.rows, 1};
    n.requires_grad = nx.requires_grad;
    n.value.resize(cols.size());
    for (std::size_t i = 0; i < cols.size(); ++i) {
        if (cols[i] >= nx.shape.cols) throw LookupError("pick: column " + std::to_string(cols[i]) + " out of range");
        n.value[i] = xv[i * nx.shape.cols + cols[i]];
    }
    n.index.assign(cols.begin(), cols.end());
    n.args = {x.id()};
    return t.push(std::move(n));
}

Var elementwise(Elementwise op, std::span<const Var> operands) {
    const std::size_t arity = (op == Elementwise::add || op == Elementwise::mul) ? 2 : 1;
    if (operands.size() != arity) {
        throw DimensionError("elementwise: expected " + std::to_string(arity) + " operands, got " +
                             std::to_string(operands.size()));
    }
    switch (op) {
        case Elementwise::add:
            return add(operands[0], operands[1]);
        case Elementwise::mul:
            return mul(operands[0], operands[1]);
        case Elementwise::tanh:
            return tanh(operands[0]);
        case Elementwise::sigmoid:
            return sigmoid(operands[0]);
    }
    throw DimensionError("elementwise: unknown op");
}

} // namespace gpas::ad
