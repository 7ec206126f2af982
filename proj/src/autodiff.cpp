#include "npull/autodiff.hpp"

#include <cmath>
#include <string>

#include "npull/error.hpp"

namespace npull::ad
{
    namespace
    {
        std::string shape(const Matrix& m)
        {
            return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
        }

        void require(bool ok, const std::string& what)
        {
            if (!ok) {
                throw ConfigError("autodiff: " + what);
            }
        }

    }

    double Activation::value(double x) const { return evaluate(x, nullptr, nullptr); }

    double Activation::first(double x) const
    {
        double d1 = 0.0;
        evaluate(x, &d1, nullptr);
        return d1;
    }

    double Activation::second(double x) const
    {
        double d2 = 0.0;
        evaluate(x, nullptr, &d2);
        return d2;
    }

    double Activation::evaluate(double x, double* d1, double* d2) const
    {
        if (kind == ActivationKind::relu) {
            if (d1) *d1 = x > 0.0 ? 1.0 : 0.0;
            if (d2) *d2 = 0.0;
            return x > 0.0 ? x : 0.0;
        }
        const double bx = beta * x;
        const double e = std::exp(-std::abs(bx));
        const double s = bx >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
        if (d1) *d1 = s;
        if (d2) *d2 = beta * s * (1.0 - s);
        return (bx > 0.0 ? x : 0.0) + std::log1p(e) / beta;
    }

    void affine_columns(const Matrix& w, const Eigen::VectorXd& b, const Matrix& x, Matrix& out)
    {
        out.resize(w.rows(), x.cols());
        Eigen::VectorXd column(w.rows());
        for (Index j = 0; j < x.cols(); ++j) {
            column.noalias() = w * x.col(j);
            out.col(j) = column + b;
        }
    }

    Tape::Node Tape::make(Op op, std::initializer_list<NodeId> parents)
    {
        Node node;
        node.op = op;
        NodeId* slots[] = {&node.a, &node.b, &node.c};
        for (NodeId p : parents) {
            require(p.index < nodes_.size(), "parent node does not belong to this tape");
            *slots[node.arity++] = p;
            node.requires_grad = node.requires_grad || nodes_[p.index].requires_grad;
        }
        return node;
    }

    NodeId Tape::push(Node node)
    {
        compute(node);
        nodes_.push_back(std::move(node));
        return NodeId{nodes_.size() - 1};
    }

    NodeId Tape::leaf(Matrix value, bool requires_grad)
    {
        Node node;
        node.op = Op::leaf;
        node.requires_grad = requires_grad;
        node.value = std::move(value);
        nodes_.push_back(std::move(node));
        return NodeId{nodes_.size() - 1};
    }

    DualPoint Tape::point(const Eigen::Vector3d& value)
    {
        return DualPoint{value, leaf(Matrix(value), true)};
    }

    NodeId Tape::affine(NodeId w, NodeId b, NodeId x, Index bias_cols)
    {
        Node node = make(Op::affine, {w, b, x});
        const Matrix& wv = value(w);
        const Matrix& bv = value(b);
        const Matrix& xv = value(x);
        require(wv.cols() == xv.rows(),
                "affine: weight " + shape(wv) + " incompatible with input " + shape(xv));
        require(bv.rows() == wv.rows() && bv.cols() == 1,
                "affine: bias " + shape(bv) + " incompatible with weight " + shape(wv));
        node.i0 = bias_cols < 0 ? xv.cols() : bias_cols;
        require(node.i0 <= xv.cols(), "affine: bias column count exceeds input columns");
        return push(std::move(node));
    }

    NodeId Tape::activation(NodeId z, Activation act)
    {
        Node node = make(Op::activation, {z});
        node.act = act;
        return push(std::move(node));
    }

    NodeId Tape::dual_activation(NodeId z, Activation act, Index tangents)
    {
        Node node = make(Op::dual_activation, {z});
        node.act = act;
        node.i0 = tangents;
        require(tangents >= 0 && value(z).cols() % (tangents + 1) == 0,
                "dual_activation: column count not divisible into value and tangent blocks");
        return push(std::move(node));
    }

    NodeId Tape::add(NodeId a, NodeId b)
    {
        require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
                "add: shape mismatch " + shape(value(a)) + " vs " + shape(value(b)));
        return push(make(Op::add, {a, b}));
    }

    NodeId Tape::sub(NodeId a, NodeId b)
    {
        require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
                "sub: shape mismatch " + shape(value(a)) + " vs " + shape(value(b)));
        return push(make(Op::sub, {a, b}));
    }

    NodeId Tape::scale(NodeId a, double factor)
    {
        Node node = make(Op::scale, {a});
        node.scalar = factor;
        return push(std::move(node));
    }

    NodeId Tape::hadamard(NodeId a, NodeId b)
    {
        require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
                "hadamard: shape mismatch " + shape(value(a)) + " vs " + shape(value(b)));
        return push(make(Op::hadamard, {a, b}));
    }

    NodeId Tape::concat_rows(NodeId top, NodeId bottom)
    {
        require(value(top).cols() == value(bottom).cols(), "concat_rows: column count mismatch");
        return push(make(Op::concat_rows, {top, bottom}));
    }

    NodeId Tape::concat_cols(NodeId left, NodeId right)
    {
        require(value(left).rows() == value(right).rows(), "concat_cols: row count mismatch");
        return push(make(Op::concat_cols, {left, right}));
    }

    NodeId Tape::slice_rows(NodeId a, Index start, Index count)
    {
        require(start >= 0 && count >= 0 && start + count <= value(a).rows(), "slice_rows: out of range");
        Node node = make(Op::slice_rows, {a});
        node.i0 = start;
        node.i1 = count;
        return push(std::move(node));
    }

    NodeId Tape::slice_cols(NodeId a, Index start, Index count)
    {
        require(start >= 0 && count >= 0 && start + count <= value(a).cols(), "slice_cols: out of range");
        Node node = make(Op::slice_cols, {a});
        node.i0 = start;
        node.i1 = count;
        return push(std::move(node));
    }

    NodeId Tape::col_norm(NodeId a) { return push(make(Op::col_norm, {a})); }

    NodeId Tape::col_dot(NodeId a, NodeId b)
    {
        require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
                "col_dot: shape mismatch");
        return push(make(Op::col_dot, {a, b}));
    }

    NodeId Tape::reciprocal(NodeId a) { return push(make(Op::reciprocal, {a})); }

    NodeId Tape::scale_cols(NodeId a, NodeId r)
    {
        require(value(r).rows() == 1 && value(r).cols() == value(a).cols(),
                "scale_cols: factor row " + shape(value(r)) + " incompatible with " + shape(value(a)));
        return push(make(Op::scale_cols, {a, r}));
    }

    NodeId Tape::sum(NodeId a) { return push(make(Op::sum, {a})); }

    NodeId Tape::dot(NodeId a, NodeId b)
    {
        require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
                "dot: shape mismatch");
        return push(make(Op::dot, {a, b}));
    }

    NodeId Tape::norm(NodeId a) { return push(make(Op::norm, {a})); }

    std::vector<NodeId> Tape::parents(NodeId id) const
    {
        const Node& node = nodes_.at(id.index);
        const NodeId all[] = {node.a, node.b, node.c};
        return std::vector<NodeId>(all, all + node.arity);
    }

    void Tape::compute(Node& node) const
    {
        auto in = [&](NodeId id) -> const Matrix& { return nodes_[id.index].value; };
        Matrix& out = node.value;
        switch (node.op) {
        case Op::leaf:
            break;
        case Op::affine: {
            const Matrix& w = in(node.a);
            const Matrix& x = in(node.c);
            out.noalias() = w * x;
            out.leftCols(node.i0).colwise() += in(node.b).col(0);
            break;
        }
        case Op::activation: {
            const Matrix& z = in(node.a);
            out.resize(z.rows(), z.cols());
            node.slope.resize(z.rows(), z.cols());
            for (Index i = 0; i < z.size(); ++i) {
                out.data()[i] = node.act.evaluate(z.data()[i], node.slope.data() + i, nullptr);
            }
            break;
        }
        case Op::dual_activation: {
            const Matrix& z = in(node.a);
            const Index block = z.cols() / (node.i0 + 1);
            const Index n = z.rows() * block;
            out.resize(z.rows(), z.cols());
            node.slope.resize(z.rows(), block);
            node.curvature.resize(z.rows(), block);
            for (Index i = 0; i < n; ++i) {
                out.data()[i] = node.act.evaluate(z.data()[i], node.slope.data() + i, node.curvature.data() + i);
            }
            for (Index t = 1; t <= node.i0; ++t) {
                out.middleCols(t * block, block) = node.slope.cwiseProduct(z.middleCols(t * block, block));
            }
            break;
        }
        case Op::add:
            out = in(node.a) + in(node.b);
            break;
        case Op::sub:
            out = in(node.a) - in(node.b);
            break;
        case Op::scale:
            out = node.scalar * in(node.a);
            break;
        case Op::hadamard:
            out = in(node.a).cwiseProduct(in(node.b));
            break;
        case Op::concat_rows: {
            const Matrix& top = in(node.a);
            const Matrix& bottom = in(node.b);
            out.resize(top.rows() + bottom.rows(), top.cols());
            out.topRows(top.rows()) = top;
            out.bottomRows(bottom.rows()) = bottom;
            break;
        }
        case Op::concat_cols: {
            const Matrix& left = in(node.a);
            const Matrix& right = in(node.b);
            out.resize(left.rows(), left.cols() + right.cols());
            out.leftCols(left.cols()) = left;
            out.rightCols(right.cols()) = right;
            break;
        }
        case Op::slice_rows:
            out = in(node.a).middleRows(node.i0, node.i1);
            break;
        case Op::slice_cols:
            out = in(node.a).middleCols(node.i0, node.i1);
            break;
        case Op::col_norm:
            out = in(node.a).colwise().norm();
            break;
        case Op::col_dot:
            out = in(node.a).cwiseProduct(in(node.b)).colwise().sum();
            break;
        case Op::reciprocal:
            out = in(node.a).cwiseInverse();
            break;
        case Op::scale_cols:
            out = in(node.a) * in(node.b).row(0).asDiagonal();
            break;
        case Op::sum:
            out = Matrix::Constant(1, 1, in(node.a).sum());
            break;
        case Op::dot:
            out = Matrix::Constant(1, 1, in(node.a).cwiseProduct(in(node.b)).sum());
            break;
        case Op::norm:
            out = Matrix::Constant(1, 1, in(node.a).norm());
            break;
        }
    }

    void Tape::propagate(const Node& node)
    {
        const Matrix& g = node.adjoint;
        auto in = [&](NodeId id) -> const Matrix& { return nodes_[id.index].value; };
        switch (node.op) {
        case Op::leaf:
            break;
        case Op::affine: {
            const Matrix& w = in(node.a);
            const Matrix& x = in(node.c);
            if (wants(node.a)) {
                adj(node.a).noalias() += g * x.transpose();
            }
            if (wants(node.b)) {
                adj(node.b).col(0) += g.leftCols(node.i0).rowwise().sum();
            }
            if (wants(node.c)) {
                adj(node.c).noalias() += w.transpose() * g;
            }
            break;
        }
        case Op::activation:
            if (wants(node.a)) {
                adj(node.a) += g.cwiseProduct(node.slope);
            }
            break;
        case Op::dual_activation: {
            if (!wants(node.a)) {
                break;
            }
            const Matrix& z = in(node.a);
            const Index block = z.cols() / (node.i0 + 1);
            const Matrix& slope = node.slope;
            const Matrix& curvature = node.curvature;
            Matrix& dz = adj(node.a);
            Matrix d0 = g.leftCols(block).cwiseProduct(slope);
            for (Index t = 1; t <= node.i0; ++t) {
                const auto gt = g.middleCols(t * block, block);
                d0 += gt.cwiseProduct(z.middleCols(t * block, block)).cwiseProduct(curvature);
                dz.middleCols(t * block, block) += gt.cwiseProduct(slope);
            }
            dz.leftCols(block) += d0;
            break;
        }
        case Op::add:
            if (wants(node.a)) adj(node.a) += g;
            if (wants(node.b)) adj(node.b) += g;
            break;
        case Op::sub:
            if (wants(node.a)) adj(node.a) += g;
            if (wants(node.b)) adj(node.b) -= g;
            break;
        case Op::scale:
            if (wants(node.a)) adj(node.a) += node.scalar * g;
            break;
        case Op::hadamard:
            if (wants(node.a)) adj(node.a) += g.cwiseProduct(in(node.b));
            if (wants(node.b)) adj(node.b) += g.cwiseProduct(in(node.a));
            break;
        case Op::concat_rows: {
            const Index top = in(node.a).rows();
            if (wants(node.a)) adj(node.a) += g.topRows(top);
            if (wants(node.b)) adj(node.b) += g.bottomRows(g.rows() - top);
            break;
        }
        case Op::concat_cols: {
            const Index left = in(node.a).cols();
            if (wants(node.a)) adj(node.a) += g.leftCols(left);
            if (wants(node.b)) adj(node.b) += g.rightCols(g.cols() - left);
            break;
        }
        case Op::slice_rows:
            if (wants(node.a)) adj(node.a).middleRows(node.i0, node.i1) += g;
            break;
        case Op::slice_cols:
            if (wants(node.a)) adj(node.a).middleCols(node.i0, node.i1) += g;
            break;
        case Op::col_norm:
            if (wants(node.a)) {
                const Matrix& a = in(node.a);
                Matrix& da = adj(node.a);
                for (Index j = 0; j < a.cols(); ++j) {
                    const double n = node.value(0, j);
                    if (n > 0.0) {
                        da.col(j) += (g(0, j) / n) * a.col(j);
                    }
                }
            }
            break;
        case Op::col_dot:
            if (wants(node.a)) adj(node.a) += in(node.b) * g.row(0).asDiagonal();
            if (wants(node.b)) adj(node.b) += in(node.a) * g.row(0).asDiagonal();
            break;
        case Op::reciprocal:
            if (wants(node.a)) adj(node.a) -= g.cwiseProduct(node.value.cwiseProduct(node.value));
            break;
        case Op::scale_cols:
            if (wants(node.a)) adj(node.a) += g * in(node.b).row(0).asDiagonal();
            if (wants(node.b)) adj(node.b) += g.cwiseProduct(in(node.a)).colwise().sum();
            break;
        case Op::sum:
            if (wants(node.a)) adj(node.a).array() += g(0, 0);
            break;
        case Op::dot:
            if (wants(node.a)) adj(node.a) += g(0, 0) * in(node.b);
            if (wants(node.b)) adj(node.b) += g(0, 0) * in(node.a);
            break;
        case Op::norm:
            if (wants(node.a) && node.value(0, 0) > 0.0) {
                adj(node.a) += (g(0, 0) / node.value(0, 0)) * in(node.a);
            }
            break;
        }
    }

    void Tape::backward(NodeId output)
    {
        require(output.index < nodes_.size(), "backward: node does not belong to this tape");
        const Matrix& out = nodes_[output.index].value;
        require(out.rows() == 1 && out.cols() == 1,
                "backward: output must be a scalar node, got " + shape(out));
        for (Node& node : nodes_) {
            node.adjoint.setZero(node.value.rows(), node.value.cols());
        }
        nodes_[output.index].adjoint(0, 0) = 1.0;
        for (std::size_t i = output.index + 1; i-- > 0;) {
            if (nodes_[i].requires_grad && nodes_[i].op != Op::leaf) {
                propagate(nodes_[i]);
            }
        }
    }

    void Tape::replay()
    {
        for (Node& node : nodes_) {
            compute(node);
        }
    }
}
