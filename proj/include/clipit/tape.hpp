#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "clipit/errors.hpp"
#include "clipit/matrix.hpp"

namespace clipit {

/// Reverse-mode tape over a closed operator set: matrix multiply, scaled
/// add, scalar scale, bias-style add, tanh, row concatenation, the fused
/// softmax/cross-entropy loss, the cosine distillation loss, and L2
/// normalization. That set covers the whole model; nothing else is
/// differentiable here.
///
/// Adjoints are accumulated in reverse node-creation order, each node
/// adding into its inputs' adjoints immediately, so a given graph always
/// produces bit-identical gradients. Forward evaluation is eager; replaying
/// the recorded graph from the stored leaf values reproduces every node
/// value bit-exactly (see replay_matches()).
class Tape {
public:
    enum class Op {
        Leaf,
        MatMul,
        AddScaled,
        Scale,
        Tanh,
        ConcatRows,
        SoftmaxCe,
        KdCosine,
        L2Normalize,
    };

    using NodeId = int;

    NodeId leaf(Matrix v) { return push({Op::Leaf, -1, -1, std::move(v)}); }

    NodeId matmul(NodeId a, NodeId b) {
        return push({Op::MatMul, a, b, clipit::matmul(val(a), val(b))});
    }

    /// c0*a + c1*b elementwise; shapes must match. Plain add and bias-add
    /// are the (1, 1) case.
    NodeId add_scaled(NodeId a, NodeId b, double c0, double c1) {
        const Matrix& ma = val(a);
        const Matrix& mb = val(b);
        if (!ma.same_shape(mb)) throw DimensionMismatchError("tape add: shapes differ");
        Matrix out(ma.rows(), ma.cols());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = c0 * ma[i] + c1 * mb[i];
        Node n{Op::AddScaled, a, b, std::move(out)};
        n.c0 = c0;
        n.c1 = c1;
        return push(std::move(n));
    }

    NodeId add(NodeId a, NodeId b) { return add_scaled(a, b, 1.0, 1.0); }

    NodeId scale(NodeId a, double c) {
        const Matrix& ma = val(a);
        Matrix out(ma.rows(), ma.cols());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * ma[i];
        Node n{Op::Scale, a, -1, std::move(out)};
        n.c0 = c;
        return push(std::move(n));
    }

    NodeId tanh(NodeId a) {
        const Matrix& ma = val(a);
        Matrix out(ma.rows(), ma.cols());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(ma[i]);
        return push({Op::Tanh, a, -1, std::move(out)});
    }

    /// Stack two column vectors: [a; b].
    NodeId concat_rows(NodeId a, NodeId b) {
        const Matrix& ma = val(a);
        const Matrix& mb = val(b);
        if (ma.cols() != 1 || mb.cols() != 1)
            throw DimensionMismatchError("tape concat: column vectors required");
        Matrix out(ma.rows() + mb.rows(), 1);
        for (std::size_t i = 0; i < ma.rows(); ++i) out[i] = ma[i];
        for (std::size_t i = 0; i < mb.rows(); ++i) out[ma.rows() + i] = mb[i];
        return push({Op::ConcatRows, a, b, std::move(out)});
    }

    /// Fused softmax + cross-entropy: scalar -log softmax(z)[y].
    NodeId softmax_ce(NodeId logits, std::size_t y) {
        const Matrix& z = val(logits);
        if (z.cols() != 1) throw DimensionMismatchError("softmax_ce: column vector required");
        if (y >= z.rows()) throw IndexOutOfRangeError("softmax_ce: class index out of range");
        double m = z[0];
        for (std::size_t i = 1; i < z.rows(); ++i) m = std::max(m, z[i]);
        Matrix p(z.rows(), 1);
        double sum = 0.0;
        for (std::size_t i = 0; i < z.rows(); ++i) {
            p[i] = std::exp(z[i] - m);
            sum += p[i];
        }
        for (std::size_t i = 0; i < z.rows(); ++i) p[i] /= sum;
        Matrix loss(1, 1);
        loss[0] = -std::log(p[y]);
        Node n{Op::SoftmaxCe, logits, -1, std::move(loss)};
        n.saved = std::move(p);
        n.index = y;
        return push(std::move(n));
    }

    /// Cosine distillation loss 1 - cos(t_hat, t); differentiable in both.
    /// The denominator is a single sqrt of the squared-norm product so the
    /// loss is exactly zero for identical inputs.
    NodeId kd_cosine(NodeId t, NodeId t_hat) {
        const Matrix& mt = val(t);
        const Matrix& mh = val(t_hat);
        if (!mt.same_shape(mh)) throw DimensionMismatchError("kd_cosine: shapes differ");
        double dtt = 0.0, dhh = 0.0, d = 0.0;
        for (std::size_t i = 0; i < mt.size(); ++i) {
            dtt += mt[i] * mt[i];
            dhh += mh[i] * mh[i];
            d += mt[i] * mh[i];
        }
        if (dtt < 1e-60 || dhh < 1e-60)
            throw ZeroVectorError("kd_cosine: zero-length input");
        Matrix loss(1, 1);
        loss[0] = 1.0 - d / std::sqrt(dtt * dhh);
        return push({Op::KdCosine, t, t_hat, std::move(loss)});
    }

    NodeId l2_normalize(NodeId a) {
        const Matrix& ma = val(a);
        const double n = vec_norm(ma);
        if (n < 1e-30) throw ZeroVectorError("tape l2_normalize: zero-length input");
        Matrix out(ma.rows(), ma.cols());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = ma[i] / n;
        return push({Op::L2Normalize, a, -1, std::move(out)});
    }

    const Matrix& val(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].val; }

    std::size_t node_count() const { return nodes_.size(); }

    /// Backpropagate from a scalar node. Adjoints accumulate into every
    /// node; read them back with grad().
    void backward(NodeId loss) {
        const auto& ln = nodes_[static_cast<std::size_t>(loss)];
        if (ln.val.size() != 1)
            throw DimensionMismatchError("backward: loss must be scalar");
        adj_.clear();
        adj_.reserve(nodes_.size());
        for (const auto& n : nodes_) adj_.emplace_back(n.val.rows(), n.val.cols());
        adj_[static_cast<std::size_t>(loss)][0] = 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;) backprop_node(static_cast<NodeId>(i));
        have_adjoints_ = true;
    }

    const Matrix& grad(NodeId id) const {
        if (!have_adjoints_) throw IndexOutOfRangeError("grad: backward() not run");
        return adj_[static_cast<std::size_t>(id)];
    }

    /// Re-executes the recorded graph from the stored leaf values and
    /// checks every node value for bit-equality with the recording.
    bool replay_matches() const {
        Tape fresh;
        for (const auto& n : nodes_) {
            NodeId id = -1;
            switch (n.op) {
                case Op::Leaf: id = fresh.leaf(n.val); break;
                case Op::MatMul: id = fresh.matmul(n.a, n.b); break;
                case Op::AddScaled: id = fresh.add_scaled(n.a, n.b, n.c0, n.c1); break;
                case Op::Scale: id = fresh.scale(n.a, n.c0); break;
                case Op::Tanh: id = fresh.tanh(n.a); break;
                case Op::ConcatRows: id = fresh.concat_rows(n.a, n.b); break;
                case Op::SoftmaxCe: id = fresh.softmax_ce(n.a, n.index); break;
                case Op::KdCosine: id = fresh.kd_cosine(n.a, n.b); break;
                case Op::L2Normalize: id = fresh.l2_normalize(n.a); break;
            }
            if (!fresh.val(id).bit_equal(n.val)) return false;
        }
        return true;
    }

private:
    struct Node {
        Op op;
        NodeId a;
        NodeId b;
        Matrix val;
        double c0 = 1.0;
        double c1 = 1.0;
        std::size_t index = 0;  // class index for SoftmaxCe
        Matrix saved;           // probabilities for SoftmaxCe
    };

    NodeId push(Node n) {
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    static double vec_norm(const Matrix& m) {
        double s = 0.0;
        for (std::size_t i = 0; i < m.size(); ++i) s += m[i] * m[i];
        return std::sqrt(s);
    }

    void backprop_node(NodeId id) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        const Matrix& g = adj_[static_cast<std::size_t>(id)];
        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::MatMul:
                add_matmul_nt(adj_at(n.a), g, val(n.b));
                add_matmul_tn(adj_at(n.b), val(n.a), g);
                break;
            case Op::AddScaled:
                add_scaled_into(adj_at(n.a), g, n.c0);
                add_scaled_into(adj_at(n.b), g, n.c1);
                break;
            case Op::Scale:
                add_scaled_into(adj_at(n.a), g, n.c0);
                break;
            case Op::Tanh: {
                Matrix& da = adj_at(n.a);
                for (std::size_t i = 0; i < da.size(); ++i)
                    da[i] += g[i] * (1.0 - n.val[i] * n.val[i]);
                break;
            }
            case Op::ConcatRows: {
                Matrix& da = adj_at(n.a);
                Matrix& db = adj_at(n.b);
                for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i];
                for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[da.size() + i];
                break;
            }
            case Op::SoftmaxCe: {
                Matrix& dz = adj_at(n.a);
                const double gs = g[0];
                for (std::size_t i = 0; i < dz.size(); ++i) {
                    double e = n.saved[i] - (i == n.index ? 1.0 : 0.0);
                    dz[i] += gs * e;
                }
                break;
            }
            case Op::KdCosine: {
                const Matrix& t = val(n.a);
                const Matrix& th = val(n.b);
                const double nt = vec_norm(t);
                const double nh = vec_norm(th);
                double d = 0.0;
                for (std::size_t i = 0; i < t.size(); ++i) d += t[i] * th[i];
                const double cosv = d / (nt * nh);
                const double gs = g[0];
                Matrix& dt = adj_at(n.a);
                Matrix& dh = adj_at(n.b);
                for (std::size_t i = 0; i < t.size(); ++i) {
                    dt[i] += gs * -(th[i] / (nt * nh) - cosv * t[i] / (nt * nt));
                    dh[i] += gs * -(t[i] / (nt * nh) - cosv * th[i] / (nh * nh));
                }
                break;
            }
            case Op::L2Normalize: {
                const Matrix& x = val(n.a);
                const double nn = vec_norm(x);
                double yg = 0.0;
                for (std::size_t i = 0; i < x.size(); ++i) yg += n.val[i] * g[i];
                Matrix& dx = adj_at(n.a);
                for (std::size_t i = 0; i < x.size(); ++i)
                    dx[i] += (g[i] - n.val[i] * yg) / nn;
                break;
            }
        }
    }

    Matrix& adj_at(NodeId id) { return adj_[static_cast<std::size_t>(id)]; }

    std::vector<Node> nodes_;
    std::vector<Matrix> adj_;
    bool have_adjoints_ = false;
};

}  // namespace clipit
