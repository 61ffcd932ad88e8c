#include "seqdiff/tape.hpp"

#include <algorithm>
#include <cmath>

#include "seqdiff/threading.hpp"

namespace seqdiff {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
} // namespace

// ---------------------------------------------------------------------------
// ParamStore

Tensor& ParamStore::create(const std::string& name, Tensor init) {
    auto [it, inserted] = params_.emplace(name, std::move(init));
    if (!inserted) {
        throw ValueError("parameter already registered: " + name);
    }
    return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) {
        throw ValueError("unknown parameter: " + name);
    }
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) {
        throw ValueError("unknown parameter: " + name);
    }
    return it->second;
}

std::size_t ParamStore::total_size() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) {
        n += t.size();
    }
    return n;
}

// ---------------------------------------------------------------------------
// Matrix kernels

void matmul_raw(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    if (!accumulate) {
        std::fill(pc, pc + m * n, 0.0);
    }
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = pa + i * k;
        double* crow = pc + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = arow[l];
            const double* brow = pb + l * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

void matmul_nt_raw(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = pa + i * k;
        double* crow = pc + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = pb + j * k;
            double s = 0.0;
            for (std::size_t l = 0; l < k; ++l) {
                s += arow[l] * brow[l];
            }
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

void matmul_tn_raw(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    if (!accumulate) {
        std::fill(pc, pc + m * n, 0.0);
    }
    for (std::size_t l = 0; l < k; ++l) {
        const double* arow = pa + l * m;
        const double* brow = pb + l * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            double* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Tape

Tape::Tape(const ParamStore* params, Options opts) : params_(params), opts_(opts) {}

Tape::Tape(const ParamStore* params) : Tape(params, Options()) {}

const Tensor& Tape::val(Var v) const {
    return nodes_[v.id].value;
}

const Tensor& Tape::value(Var v) const {
    if (v.id >= nodes_.size()) {
        throw ValueError("Var does not belong to this tape");
    }
    return nodes_[v.id].value;
}

Var Tape::push(Node node, const char* op_name) {
    if (opts_.check_finite) {
        node.value.require_finite(op_name);
    }
    nodes_.push_back(std::move(node));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor v) {
    return push({OpKind::Constant, std::move(v), {}}, "constant");
}

Var Tape::param(const std::string& name) {
    auto it = param_nodes_.find(name);
    if (it != param_nodes_.end()) {
        return it->second;
    }
    if (params_ == nullptr) {
        throw ValueError("tape has no parameter store");
    }
    Node node{OpKind::Param, params_->at(name), {}};
    node.param_name = name;
    Var v = push(std::move(node), "param");
    param_nodes_.emplace(name, v);
    return v;
}

Var Tape::add(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb)) {
        throw ShapeError("add: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    }
    Tensor out = ta;
    const double* pb = tb.data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        po[i] += pb[i];
    }
    return push({OpKind::Add, std::move(out), {a.id, b.id}}, "add");
}

Var Tape::sub(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb)) {
        throw ShapeError("sub: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    }
    Tensor out = ta;
    const double* pb = tb.data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        po[i] -= pb[i];
    }
    return push({OpKind::Sub, std::move(out), {a.id, b.id}}, "sub");
}

Var Tape::mul(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb)) {
        throw ShapeError("mul: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    }
    Tensor out = ta;
    const double* pb = tb.data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        po[i] *= pb[i];
    }
    return push({OpKind::Mul, std::move(out), {a.id, b.id}}, "mul");
}

Var Tape::scale(Var a, double s) {
    Tensor out = val(a);
    for (double& x : out.values()) {
        x *= s;
    }
    Node node{OpKind::Scale, std::move(out), {a.id}};
    node.scalar = s;
    return push(std::move(node), "scale");
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.cols() != tb.rows()) {
        throw ShapeError("matmul: inner dims differ, " + ta.shape_str() + " vs " + tb.shape_str());
    }
    Tensor out({ta.rows(), tb.cols()});
    matmul_raw(ta, tb, out, false);
    return push({OpKind::MatMul, std::move(out), {a.id, b.id}}, "matmul");
}

Var Tape::matmul_nt(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.cols() != tb.cols()) {
        throw ShapeError("matmul_nt: inner dims differ, " + ta.shape_str() + " vs " + tb.shape_str());
    }
    Tensor out({ta.rows(), tb.rows()});
    matmul_nt_raw(ta, tb, out, false);
    return push({OpKind::MatMulNT, std::move(out), {a.id, b.id}}, "matmul_nt");
}

Var Tape::softmax_rows(Var a) {
    const Tensor& ta = val(a);
    Tensor out = ta;
    const std::size_t r = ta.rows(), c = ta.cols();
    for (std::size_t i = 0; i < r; ++i) {
        double* row = out.data() + i * c;
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) {
            mx = std::max(mx, row[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < c; ++j) {
            row[j] /= sum;
        }
    }
    return push({OpKind::SoftmaxRows, std::move(out), {a.id}}, "softmax_rows");
}

Var Tape::layer_norm_rows(Var a, double eps) {
    const Tensor& ta = val(a);
    Tensor out({ta.rows(), ta.cols()});
    const std::size_t r = ta.rows(), c = ta.cols();
    for (std::size_t i = 0; i < r; ++i) {
        const double* x = ta.data() + i * c;
        double* y = out.data() + i * c;
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            mean += x[j];
        }
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double d = x[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) {
            y[j] = (x[j] - mean) * inv;
        }
    }
    Node node{OpKind::LayerNormRows, std::move(out), {a.id}};
    node.scalar = eps;
    return push(std::move(node), "layer_norm_rows");
}

void Tape::vec_like(const Tensor& t, const char* op_name, std::size_t& len) {
    if (t.rank() == 1) {
        len = t.shape()[0];
    } else if (t.rank() == 2 && t.shape()[0] == 1) {
        len = t.shape()[1];
    } else {
        throw ShapeError(std::string(op_name) + ": expected vector, got " + t.shape_str());
    }
}

Var Tape::add_rowvec(Var m, Var v) {
    const Tensor& tm = val(m);
    const Tensor& tv = val(v);
    std::size_t len = 0;
    vec_like(tv, "add_rowvec", len);
    if (tm.cols() != len) {
        throw ShapeError("add_rowvec: width mismatch " + tm.shape_str() + " vs " + tv.shape_str());
    }
    Tensor out = tm;
    const double* pv = tv.data();
    for (std::size_t i = 0; i < tm.rows(); ++i) {
        double* row = out.data() + i * len;
        for (std::size_t j = 0; j < len; ++j) {
            row[j] += pv[j];
        }
    }
    return push({OpKind::AddRowVec, std::move(out), {m.id, v.id}}, "add_rowvec");
}

Var Tape::mul_rowvec(Var m, Var v) {
    const Tensor& tm = val(m);
    const Tensor& tv = val(v);
    std::size_t len = 0;
    vec_like(tv, "mul_rowvec", len);
    if (tm.cols() != len) {
        throw ShapeError("mul_rowvec: width mismatch " + tm.shape_str() + " vs " + tv.shape_str());
    }
    Tensor out = tm;
    const double* pv = tv.data();
    for (std::size_t i = 0; i < tm.rows(); ++i) {
        double* row = out.data() + i * len;
        for (std::size_t j = 0; j < len; ++j) {
            row[j] *= pv[j];
        }
    }
    return push({OpKind::MulRowVec, std::move(out), {m.id, v.id}}, "mul_rowvec");
}

Var Tape::broadcast_rows(Var v, std::size_t n) {
    const Tensor& tv = val(v);
    std::size_t len = 0;
    vec_like(tv, "broadcast_rows", len);
    if (n == 0) {
        throw ShapeError("broadcast_rows: need at least one row");
    }
    Tensor out({n, len});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(tv.data(), tv.data() + len, out.data() + i * len);
    }
    Node node{OpKind::BroadcastRows, std::move(out), {v.id}};
    node.aux0 = n;
    return push(std::move(node), "broadcast_rows");
}

Var Tape::gelu(Var a) {
    Tensor out = val(a);
    for (double& x : out.values()) {
        x = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    return push({OpKind::Gelu, std::move(out), {a.id}}, "gelu");
}

Var Tape::slice_cols(Var a, std::size_t begin, std::size_t count) {
    const Tensor& ta = val(a);
    if (begin + count > ta.cols() || count == 0) {
        throw ShapeError("slice_cols: range out of bounds for " + ta.shape_str());
    }
    Tensor out({ta.rows(), count});
    for (std::size_t i = 0; i < ta.rows(); ++i) {
        std::copy(ta.data() + i * ta.cols() + begin, ta.data() + i * ta.cols() + begin + count,
                  out.data() + i * count);
    }
    Node node{OpKind::SliceCols, std::move(out), {a.id}};
    node.aux0 = begin;
    node.aux1 = count;
    return push(std::move(node), "slice_cols");
}

Var Tape::concat_cols(std::span<const Var> parts) {
    if (parts.empty()) {
        throw ShapeError("concat_cols: no inputs");
    }
    const std::size_t r = val(parts[0]).rows();
    std::size_t total = 0;
    for (Var p : parts) {
        if (val(p).rows() != r) {
            throw ShapeError("concat_cols: row count mismatch");
        }
        total += val(p).cols();
    }
    Tensor out({r, total});
    std::size_t off = 0;
    Node node{OpKind::ConcatCols, {}, {}};
    for (Var p : parts) {
        const Tensor& tp = val(p);
        for (std::size_t i = 0; i < r; ++i) {
            std::copy(tp.data() + i * tp.cols(), tp.data() + (i + 1) * tp.cols(),
                      out.data() + i * total + off);
        }
        off += tp.cols();
        node.inputs.push_back(p.id);
    }
    node.value = std::move(out);
    return push(std::move(node), "concat_cols");
}

Var Tape::reshape(Var a, std::vector<std::size_t> shape) {
    const Tensor& ta = val(a);
    if (shape_product(shape) != ta.size()) {
        throw ShapeError("reshape: element count mismatch for " + ta.shape_str());
    }
    Tensor out(std::move(shape), ta.values());
    return push({OpKind::Reshape, std::move(out), {a.id}}, "reshape");
}

Var Tape::sum_all(Var a) {
    const Tensor& ta = val(a);
    double s = 0.0;
    for (double x : ta.values()) {
        s += x;
    }
    return push({OpKind::SumAll, Tensor::scalar(s), {a.id}}, "sum_all");
}

Var Tape::mean_all(Var a) {
    const Tensor& ta = val(a);
    double s = 0.0;
    for (double x : ta.values()) {
        s += x;
    }
    s /= static_cast<double>(ta.size());
    return push({OpKind::MeanAll, Tensor::scalar(s), {a.id}}, "mean_all");
}

// ---------------------------------------------------------------------------
// Reverse sweep

GradientMap Tape::backward(Var loss) const {
    const Tensor& lv = value(loss);
    if (lv.size() != 1) {
        throw ShapeError("backward: loss must be scalar, got " + lv.shape_str());
    }

    std::vector<Tensor> adj(nodes_.size());
    std::vector<bool> live(nodes_.size(), false);
    adj[loss.id] = Tensor(lv.shape(), {1.0});
    live[loss.id] = true;

    auto bump = [&](std::uint32_t id) -> Tensor& {
        if (!live[id]) {
            adj[id] = Tensor(nodes_[id].value.shape());
            live[id] = true;
        }
        return adj[id];
    };

    for (std::size_t idx = nodes_.size(); idx-- > 0;) {
        if (!live[idx]) {
            continue;
        }
        const Node& node = nodes_[idx];
        const Tensor& g = adj[idx];
        switch (node.kind) {
        case OpKind::Constant:
        case OpKind::Param:
            break;
        case OpKind::Add: {
            Tensor& ga = bump(node.inputs[0]);
            Tensor& gb = bump(node.inputs[1]);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
                gb[i] += g[i];
            }
            break;
        }
        case OpKind::Sub: {
            Tensor& ga = bump(node.inputs[0]);
            Tensor& gb = bump(node.inputs[1]);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
                gb[i] -= g[i];
            }
            break;
        }
        case OpKind::Mul: {
            const Tensor& va = nodes_[node.inputs[0]].value;
            const Tensor& vb = nodes_[node.inputs[1]].value;
            Tensor& ga = bump(node.inputs[0]);
            Tensor& gb = bump(node.inputs[1]);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * vb[i];
                gb[i] += g[i] * va[i];
            }
            break;
        }
        case OpKind::Scale: {
            Tensor& ga = bump(node.inputs[0]);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * node.scalar;
            }
            break;
        }
        case OpKind::MatMul: {
            const Tensor& va = nodes_[node.inputs[0]].value;
            const Tensor& vb = nodes_[node.inputs[1]].value;
            matmul_nt_raw(g, vb, bump(node.inputs[0]), true); // gA += G·Bᵀ
            matmul_tn_raw(va, g, bump(node.inputs[1]), true); // gB += Aᵀ·G
            break;
        }
        case OpKind::MatMulNT: {
            const Tensor& va = nodes_[node.inputs[0]].value;
            const Tensor& vb = nodes_[node.inputs[1]].value;
            matmul_raw(g, vb, bump(node.inputs[0]), true);    // gA += G·B
            matmul_tn_raw(g, va, bump(node.inputs[1]), true); // gB += Gᵀ·A
            break;
        }
        case OpKind::SoftmaxRows: {
            const Tensor& y = node.value;
            Tensor& ga = bump(node.inputs[0]);
            const std::size_t r = y.rows(), c = y.cols();
            for (std::size_t i = 0; i < r; ++i) {
                const double* yr = y.data() + i * c;
                const double* gr = g.data() + i * c;
                double dot = 0.0;
                for (std::size_t j = 0; j < c; ++j) {
                    dot += gr[j] * yr[j];
                }
                double* out = ga.data() + i * c;
                for (std::size_t j = 0; j < c; ++j) {
                    out[j] += yr[j] * (gr[j] - dot);
                }
            }
            break;
        }
        case OpKind::LayerNormRows: {
            const Tensor& x = nodes_[node.inputs[0]].value;
            const Tensor& y = node.value;
            Tensor& ga = bump(node.inputs[0]);
            const std::size_t r = x.rows(), c = x.cols();
            const double cn = static_cast<double>(c);
            for (std::size_t i = 0; i < r; ++i) {
                const double* xr = x.data() + i * c;
                const double* yr = y.data() + i * c;
                const double* gr = g.data() + i * c;
                double mean = 0.0;
                for (std::size_t j = 0; j < c; ++j) {
                    mean += xr[j];
                }
                mean /= cn;
                double var = 0.0;
                for (std::size_t j = 0; j < c; ++j) {
                    const double d = xr[j] - mean;
                    var += d * d;
                }
                var /= cn;
                const double inv = 1.0 / std::sqrt(var + node.scalar);
                double gmean = 0.0, gymean = 0.0;
                for (std::size_t j = 0; j < c; ++j) {
                    gmean += gr[j];
                    gymean += gr[j] * yr[j];
                }
                gmean /= cn;
                gymean /= cn;
                double* out = ga.data() + i * c;
                for (std::size_t j = 0; j < c; ++j) {
                    out[j] += inv * (gr[j] - gmean - yr[j] * gymean);
                }
            }
            break;
        }
        case OpKind::AddRowVec: {
            Tensor& gm = bump(node.inputs[0]);
            Tensor& gv = bump(node.inputs[1]);
            const std::size_t r = node.value.rows(), c = node.value.cols();
            for (std::size_t i = 0; i < r; ++i) {
                const double* gr = g.data() + i * c;
                double* gmr = gm.data() + i * c;
                for (std::size_t j = 0; j < c; ++j) {
                    gmr[j] += gr[j];
                    gv[j] += gr[j];
                }
            }
            break;
        }
        case OpKind::MulRowVec: {
            const Tensor& vm = nodes_[node.inputs[0]].value;
            const Tensor& vv = nodes_[node.inputs[1]].value;
            Tensor& gm = bump(node.inputs[0]);
            Tensor& gv = bump(node.inputs[1]);
            const std::size_t r = node.value.rows(), c = node.value.cols();
            for (std::size_t i = 0; i < r; ++i) {
                const double* gr = g.data() + i * c;
                const double* mr = vm.data() + i * c;
                double* gmr = gm.data() + i * c;
                for (std::size_t j = 0; j < c; ++j) {
                    gmr[j] += gr[j] * vv[j];
                    gv[j] += gr[j] * mr[j];
                }
            }
            break;
        }
        case OpKind::BroadcastRows: {
            Tensor& gv = bump(node.inputs[0]);
            const std::size_t r = node.value.rows(), c = node.value.cols();
            for (std::size_t i = 0; i < r; ++i) {
                const double* gr = g.data() + i * c;
                for (std::size_t j = 0; j < c; ++j) {
                    gv[j] += gr[j];
                }
            }
            break;
        }
        case OpKind::Gelu: {
            const Tensor& x = nodes_[node.inputs[0]].value;
            Tensor& ga = bump(node.inputs[0]);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double xv = x[i];
                const double cdf = 0.5 * (1.0 + std::erf(xv * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xv * xv);
                ga[i] += g[i] * (cdf + xv * pdf);
            }
            break;
        }
        case OpKind::SliceCols: {
            Tensor& ga = bump(node.inputs[0]);
            const std::size_t src_c = nodes_[node.inputs[0]].value.cols();
            const std::size_t r = node.value.rows(), c = node.value.cols();
            for (std::size_t i = 0; i < r; ++i) {
                const double* gr = g.data() + i * c;
                double* gar = ga.data() + i * src_c + node.aux0;
                for (std::size_t j = 0; j < c; ++j) {
                    gar[j] += gr[j];
                }
            }
            break;
        }
        case OpKind::ConcatCols: {
            const std::size_t r = node.value.rows(), total = node.value.cols();
            std::size_t off = 0;
            for (std::uint32_t in : node.inputs) {
                Tensor& gp = bump(in);
                const std::size_t c = nodes_[in].value.cols();
                for (std::size_t i = 0; i < r; ++i) {
                    const double* gr = g.data() + i * total + off;
                    double* gpr = gp.data() + i * c;
                    for (std::size_t j = 0; j < c; ++j) {
                        gpr[j] += gr[j];
                    }
                }
                off += c;
            }
            break;
        }
        case OpKind::Reshape: {
            Tensor& ga = bump(node.inputs[0]);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
            }
            break;
        }
        case OpKind::SumAll: {
            Tensor& ga = bump(node.inputs[0]);
            const double gv = g[0];
            for (std::size_t i = 0; i < ga.size(); ++i) {
                ga[i] += gv;
            }
            break;
        }
        case OpKind::MeanAll: {
            Tensor& ga = bump(node.inputs[0]);
            const double gv = g[0] / static_cast<double>(ga.size());
            for (std::size_t i = 0; i < ga.size(); ++i) {
                ga[i] += gv;
            }
            break;
        }
        }
    }

    GradientMap grads;
    if (params_ != nullptr) {
        for (const auto& [name, tensor] : params_->entries()) {
            grads.emplace(name, Tensor(tensor.shape()));
        }
    }
    for (const auto& [name, var] : param_nodes_) {
        if (live[var.id]) {
            grads[name] = adj[var.id];
        }
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Finite differences

double eval_graph(const GraphFn& fn, const ParamStore& params) {
    Tape tape(&params);
    Var loss = fn(tape);
    const Tensor& v = tape.value(loss);
    if (v.size() != 1) {
        throw ShapeError("graph must produce a scalar loss");
    }
    return v[0];
}

namespace {

void check_fd_args(double step, double tolerance) {
    if (!(step > 0.0 && step <= 1e-2)) {
        throw ValueError("finite_diff_check: step must lie in (0, 1e-2]");
    }
    if (!(tolerance > 0.0)) {
        throw ValueError("finite_diff_check: tolerance must be positive");
    }
}

FiniteDiffReport check_params(const GraphFn& fn, const ParamStore& params,
                              const std::vector<std::string>& names, double step,
                              double tolerance) {
    Tape tape(&params);
    Var loss = fn(tape);
    GradientMap analytic = tape.backward(loss);

    struct Job {
        const std::string* name;
        std::size_t index;
    };
    std::vector<Job> jobs;
    for (const auto& name : names) {
        const std::size_t n = params.at(name).size();
        for (std::size_t i = 0; i < n; ++i) {
            jobs.push_back({&name, i});
        }
    }

    std::vector<double> rel(jobs.size(), 0.0);
    parallel_for(jobs.size(), [&](std::size_t j) {
        const Job& job = jobs[j];
        ParamStore local = params;
        double& slot = local.at(*job.name)[job.index];
        const double base = slot;
        slot = base + step;
        const double up = eval_graph(fn, local);
        slot = base - step;
        const double down = eval_graph(fn, local);
        const double fd = (up - down) / (2.0 * step);
        const double an = analytic.at(*job.name)[job.index];
        const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-8});
        rel[j] = std::fabs(fd - an) / denom;
    });

    FiniteDiffReport report;
    report.checked = jobs.size();
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        if (rel[j] > report.max_rel_error) {
            report.max_rel_error = rel[j];
            report.worst_param = *jobs[j].name;
            report.worst_index = jobs[j].index;
        }
    }
    report.passed = report.max_rel_error < tolerance;
    return report;
}

} // namespace

FiniteDiffReport finite_diff_check(const GraphFn& fn, const ParamStore& params,
                                   const std::string& param_name, double step, double tolerance) {
    check_fd_args(step, tolerance);
    return check_params(fn, params, {param_name}, step, tolerance);
}

FiniteDiffReport finite_diff_check_all(const GraphFn& fn, const ParamStore& params, double step,
                                       double tolerance) {
    check_fd_args(step, tolerance);
    std::vector<std::string> names;
    for (const auto& [name, tensor] : params.entries()) {
        names.push_back(name);
    }
    return check_params(fn, params, names, step, tolerance);
}

} // namespace seqdiff
