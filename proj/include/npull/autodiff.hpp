#pragma once

/**
 * Reverse-mode automatic differentiation over dense matrices.
 *
 * A Tape records primitive operations eagerly: every call computes the
 * node's value immediately and appends a record holding its parents. A
 * subsequent backward() walks the records in reverse and accumulates
 * adjoints. Values are column-batched: one column per sample.
 *
 * Input gradients of a network are carried along in forward mode by
 * stacking tangent columns next to the value columns and using
 * dual_activation(), which propagates both. Because every primitive on the
 * tape is first order, reverse mode over such a graph yields parameter
 * gradients of any loss that consumes the input gradient.
 *
 * @code
 *   ad::Tape tape;
 *   auto x = tape.leaf(Eigen::Vector3d(1, 2, 3));
 *   auto y = tape.dot(x, x);
 *   tape.backward(y);
 *   // tape.adjoint(x) == (2, 4, 6)
 * @endcode
 */

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace npull::ad
{
    using Matrix = Eigen::MatrixXd;
    using Index = Eigen::Index;

    struct NodeId
    {
        std::size_t index = 0;

        friend bool operator==(NodeId, NodeId) = default;
    };

    enum class ActivationKind
    {
        softplus,
        relu,
    };

    struct Activation
    {
        ActivationKind kind = ActivationKind::softplus;
        double beta = 100.0;  // softplus sharpness; ignored for relu

        double value(double x) const;
        double first(double x) const;
        double second(double x) const;
        /// value/first/second in one pass; either derivative pointer may be null.
        double evaluate(double x, double* first, double* second) const;

        friend bool operator==(const Activation&, const Activation&) = default;
    };

    enum class Op
    {
        leaf,
        affine,
        activation,
        dual_activation,
        add,
        sub,
        scale,
        hadamard,
        concat_rows,
        concat_cols,
        slice_rows,
        slice_cols,
        col_norm,
        col_dot,
        reciprocal,
        scale_cols,
        sum,
        dot,
        norm,
    };

    class Tape;

    /// A 3-D point recorded as a differentiable leaf.
    struct DualPoint
    {
        Eigen::Vector3d value;
        NodeId node;
    };

    class Tape
    {
    public:
        /// Leaf node. Leaves with requires_grad=false are constants: backward()
        /// leaves their adjoint at zero and does not propagate into them.
        NodeId leaf(Matrix value, bool requires_grad = true);
        DualPoint point(const Eigen::Vector3d& value);

        /// W x + b, with b added only to the first `bias_cols` columns
        /// (negative means all columns). Throws ConfigError on shape mismatch.
        NodeId affine(NodeId w, NodeId b, NodeId x, Index bias_cols = -1);
        NodeId activation(NodeId z, Activation act);
        /// z holds 1 + tangents column blocks [value | t_1 | ... | t_n]. The
        /// result is [act(value) | act'(value) * t_1 | ... | act'(value) * t_n].
        NodeId dual_activation(NodeId z, Activation act, Index tangents);

        NodeId add(NodeId a, NodeId b);
        NodeId sub(NodeId a, NodeId b);
        NodeId scale(NodeId a, double factor);
        NodeId hadamard(NodeId a, NodeId b);
        NodeId concat_rows(NodeId top, NodeId bottom);
        NodeId concat_cols(NodeId left, NodeId right);
        NodeId slice_rows(NodeId a, Index start, Index count);
        NodeId slice_cols(NodeId a, Index start, Index count);
        /// Euclidean norm of every column, 1 x cols.
        NodeId col_norm(NodeId a);
        /// Column-wise dot products, 1 x cols.
        NodeId col_dot(NodeId a, NodeId b);
        NodeId reciprocal(NodeId a);
        /// Multiplies column j of a (m x c) by r(0, j), r being 1 x c.
        NodeId scale_cols(NodeId a, NodeId r);
        NodeId sum(NodeId a);
        NodeId dot(NodeId a, NodeId b);
        NodeId norm(NodeId a);

        const Matrix& value(NodeId id) const { return nodes_.at(id.index).value; }
        /// Adjoint from the most recent backward(); zero-sized before the first one.
        const Matrix& adjoint(NodeId id) const { return nodes_.at(id.index).adjoint; }
        Op op(NodeId id) const { return nodes_.at(id.index).op; }
        std::vector<NodeId> parents(NodeId id) const;

        /// Reverse sweep from a 1 x 1 node. Every adjoint is zeroed first.
        void backward(NodeId output);
        /// Recomputes all non-leaf values in recording order.
        void replay();
        void reset() { nodes_.clear(); }
        std::size_t size() const { return nodes_.size(); }

    private:
        struct Node
        {
            Op op = Op::leaf;
            NodeId a{}, b{}, c{};
            int arity = 0;
            Index i0 = 0, i1 = 0;
            double scalar = 0.0;
            Activation act{};
            bool requires_grad = false;
            Matrix value;
            Matrix adjoint;
            Matrix slope;      // activation derivative at the value block
            Matrix curvature;  // second derivative, dual_activation only
        };

        NodeId push(Node node);
        Node make(Op op, std::initializer_list<NodeId> parents);
        void compute(Node& node) const;
        void propagate(const Node& node);
        Matrix& adj(NodeId id) { return nodes_[id.index].adjoint; }
        bool wants(NodeId id) const { return nodes_[id.index].requires_grad; }

        std::vector<Node> nodes_;
    };

    /// Dense y = W x + b on plain matrices, column by column. This is the
    /// batch-size-independent kernel used for inference: a column's result
    /// does not depend on how many other columns are evaluated with it.
    void affine_columns(const Matrix& w, const Eigen::VectorXd& b, const Matrix& x, Matrix& out);
}
