#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "seqdiff/tensor.hpp"

namespace seqdiff {

// Named parameter registry. Iteration order is the sorted name order, which
// fixes the update order everywhere (optimizer, checksums, checkpoints).
class ParamStore {
public:
    Tensor& create(const std::string& name, Tensor init);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) != 0; }
    const std::map<std::string, Tensor>& entries() const { return params_; }
    std::map<std::string, Tensor>& entries() { return params_; }
    std::size_t total_size() const;

private:
    std::map<std::string, Tensor> params_;
};

using GradientMap = std::map<std::string, Tensor>;

// Handle into a Tape's node list.
struct Var {
    std::uint32_t id = 0;
};

// Eager operation recorder with reverse-mode differentiation. Every op
// validates shapes, computes its value immediately and (by default) rejects
// non-finite results. Evaluation is pure: replaying the same ops on the same
// inputs is bit-identical, and so is the backward sweep.
class Tape {
public:
    struct Options {
        bool check_finite = true;
    };

    explicit Tape(const ParamStore* params, Options opts);
    explicit Tape(const ParamStore* params = nullptr);

    Var constant(Tensor v);
    // Differentiable leaf bound to the store; repeated calls share one node.
    Var param(const std::string& name);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    Var matmul(Var a, Var b);
    Var matmul_nt(Var a, Var b); // a · bᵀ
    Var softmax_rows(Var a);
    Var layer_norm_rows(Var a, double eps = 1e-5);
    Var add_rowvec(Var m, Var v);
    Var mul_rowvec(Var m, Var v);
    Var broadcast_rows(Var v, std::size_t n);
    Var gelu(Var a);
    Var slice_cols(Var a, std::size_t begin, std::size_t count);
    Var concat_cols(std::span<const Var> parts);
    Var reshape(Var a, std::vector<std::size_t> shape);
    Var sum_all(Var a);
    Var mean_all(Var a);

    const Tensor& value(Var v) const;
    std::size_t node_count() const { return nodes_.size(); }

    // Reverse sweep from the scalar `loss`. Returns one gradient per
    // registered parameter; parameters the graph never touched get zeros.
    GradientMap backward(Var loss) const;

private:
    enum class OpKind : std::uint8_t {
        Constant,
        Param,
        Add,
        Sub,
        Mul,
        Scale,
        MatMul,
        MatMulNT,
        SoftmaxRows,
        LayerNormRows,
        AddRowVec,
        MulRowVec,
        BroadcastRows,
        Gelu,
        SliceCols,
        ConcatCols,
        Reshape,
        SumAll,
        MeanAll,
    };

    struct Node {
        OpKind kind;
        Tensor value;
        std::vector<std::uint32_t> inputs;
        double scalar = 0.0;
        std::size_t aux0 = 0;
        std::size_t aux1 = 0;
        std::string param_name;
    };

    Var push(Node node, const char* op_name);
    const Tensor& val(Var v) const;
    static void vec_like(const Tensor& t, const char* op_name, std::size_t& len);

    const ParamStore* params_;
    Options opts_;
    std::vector<Node> nodes_;
    std::map<std::string, Var> param_nodes_;
};

// Dense matrix kernels shared by forward and backward passes.
void matmul_raw(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate);
void matmul_nt_raw(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate); // c = a·bᵀ
void matmul_tn_raw(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate); // c = aᵀ·b

// -------------------------------------------------------------------------
// Finite-difference verification harness. `GraphFn` rebuilds the scalar loss
// on a fresh tape; the harness compares central differences of the rebuilt
// loss against one reverse sweep, element by element. It is independent of
// any particular model: it only ever calls the graph builder.

using GraphFn = std::function<Var(Tape&)>;

struct FiniteDiffReport {
    bool passed = true;
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
};

double eval_graph(const GraphFn& fn, const ParamStore& params);

// Checks one named parameter. step must lie in (0, 1e-2]; tolerance > 0.
FiniteDiffReport finite_diff_check(const GraphFn& fn, const ParamStore& params,
                                   const std::string& param_name, double step, double tolerance);

// Checks every registered parameter; a store with no parameters passes vacuously.
FiniteDiffReport finite_diff_check_all(const GraphFn& fn, const ParamStore& params, double step,
                                       double tolerance);

} // namespace seqdiff
