#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "fewrank/error.hpp"

namespace fewrank {

// Dynamic reverse-mode tape over dense matrices. One tape per forward
// pass; nodes are created in topological order, so backward() is a simple
// reverse sweep. T is float for training and double for gradient checks.
template <typename T>
class Tape {
public:
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
    using Id = int;

    Id leaf(Mat value) {
        nodes_.push_back({std::move(value), {}, nullptr});
        return static_cast<Id>(nodes_.size() - 1);
    }

    const Mat& value(Id id) const { return nodes_[id].value; }
    const Mat& grad(Id id) const { return nodes_[id].grad; }

    Id matmul(Id a, Id b) {
        Id out = make(value(a) * value(b));
        nodes_[out].back = [this, a, b, out] {
            acc(a, nodes_[out].grad * value(b).transpose());
            acc(b, value(a).transpose() * nodes_[out].grad);
        };
        return out;
    }

    // A * B^T without a transpose node.
    Id matmul_nt(Id a, Id b) {
        Id out = make(value(a) * value(b).transpose());
        nodes_[out].back = [this, a, b, out] {
            acc(a, nodes_[out].grad * value(b));
            acc(b, nodes_[out].grad.transpose() * value(a));
        };
        return out;
    }

    Id add(Id a, Id b) {
        Id out = make(value(a) + value(b));
        nodes_[out].back = [this, a, b, out] {
            acc(a, nodes_[out].grad);
            acc(b, nodes_[out].grad);
        };
        return out;
    }

    // Broadcast a 1 x n row vector over every row of a.
    Id add_rowvec(Id a, Id b) {
        Id out = make(value(a).rowwise() + value(b).row(0));
        nodes_[out].back = [this, a, b, out] {
            acc(a, nodes_[out].grad);
            acc(b, nodes_[out].grad.colwise().sum());
        };
        return out;
    }

    Id add_const(Id a, const Mat& c) {
        Id out = make(value(a) + c);
        nodes_[out].back = [this, a, out] { acc(a, nodes_[out].grad); };
        return out;
    }

    Id scale(Id a, T s) {
        Id out = make(value(a) * s);
        nodes_[out].back = [this, a, s, out] { acc(a, nodes_[out].grad * s); };
        return out;
    }

    Id softmax_rows(Id a) {
        Mat v = value(a);
        for (Eigen::Index r = 0; r < v.rows(); ++r) {
            T m = v.row(r).maxCoeff();
            v.row(r) = (v.row(r).array() - m).exp();
            v.row(r) /= v.row(r).sum();
        }
        Id out = make(std::move(v));
        nodes_[out].back = [this, a, out] {
            const Mat& p = nodes_[out].value;
            const Mat& g = nodes_[out].grad;
            Mat ga(p.rows(), p.cols());
            for (Eigen::Index r = 0; r < p.rows(); ++r) {
                T dot = g.row(r).dot(p.row(r));
                ga.row(r) = (g.row(r).array() - dot) * p.row(r).array();
            }
            acc(a, ga);
        };
        return out;
    }

    Id layer_norm(Id a, Id gain, Id bias, T eps = static_cast<T>(1e-5)) {
        const Mat& x = value(a);
        Mat xhat(x.rows(), x.cols());
        Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(x.rows());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            T mu = x.row(r).mean();
            auto centered = (x.row(r).array() - mu);
            T var = centered.square().mean();
            inv_std(r) = T(1) / std::sqrt(var + eps);
            xhat.row(r) = centered * inv_std(r);
        }
        Mat y = (xhat.array().rowwise() * value(gain).row(0).array()).rowwise() +
                value(bias).row(0).array();
        Id out = make(std::move(y));
        nodes_[out].back = [this, a, gain, bias, out, xhat, inv_std] {
            const Mat& g = nodes_[out].grad;
            const Mat& gn = value(gain);
            Mat ga(xhat.rows(), xhat.cols());
            for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                Eigen::Matrix<T, 1, Eigen::Dynamic> dxhat =
                    (g.row(r).array() * gn.row(0).array()).matrix();
                T mean_dxhat = dxhat.mean();
                T mean_dxhat_xhat = (dxhat.array() * xhat.row(r).array()).mean();
                ga.row(r) =
                    ((dxhat.array() - mean_dxhat - xhat.row(r).array() * mean_dxhat_xhat) *
                     inv_std(r))
                        .matrix();
            }
            acc(a, ga);
            acc(gain, (nodes_[out].grad.array() * xhat.array()).colwise().sum().matrix());
            acc(bias, nodes_[out].grad.colwise().sum());
        };
        return out;
    }

    Id gelu(Id a) {
        const Mat& x = value(a);
        Mat y = x.unaryExpr([](T v) {
            return v * static_cast<T>(0.5) *
                   (T(1) + static_cast<T>(std::erf(static_cast<double>(v) / std::numbers::sqrt2)));
        });
        Id out = make(std::move(y));
        nodes_[out].back = [this, a, out] {
            const Mat& x = value(a);
            Mat d = x.unaryExpr([](T v) {
                double vd = static_cast<double>(v);
                double phi = 0.5 * (1.0 + std::erf(vd / std::numbers::sqrt2));
                double pdf = std::exp(-0.5 * vd * vd) / std::sqrt(2.0 * std::numbers::pi);
                return static_cast<T>(phi + vd * pdf);
            });
            acc(a, (nodes_[out].grad.array() * d.array()).matrix());
        };
        return out;
    }

    // Embedding lookup: rows of `table` selected by ids.
    Id gather_rows(Id table, std::vector<int> ids) {
        Mat v(static_cast<Eigen::Index>(ids.size()), value(table).cols());
        for (size_t i = 0; i < ids.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = value(table).row(ids[i]);
        Id out = make(std::move(v));
        nodes_[out].back = [this, table, ids = std::move(ids), out] {
            ensure_grad(table);
            for (size_t i = 0; i < ids.size(); ++i)
                nodes_[table].grad.row(ids[i]) += nodes_[out].grad.row(static_cast<Eigen::Index>(i));
        };
        return out;
    }

    Id slice_cols(Id a, Eigen::Index c0, Eigen::Index n) {
        Id out = make(value(a).middleCols(c0, n));
        nodes_[out].back = [this, a, c0, n, out] {
            ensure_grad(a);
            nodes_[a].grad.middleCols(c0, n) += nodes_[out].grad;
        };
        return out;
    }

    Id concat_cols(const std::vector<Id>& parts) {
        Eigen::Index rows = value(parts[0]).rows(), cols = 0;
        for (Id p : parts) cols += value(p).cols();
        Mat v(rows, cols);
        Eigen::Index c = 0;
        for (Id p : parts) {
            v.middleCols(c, value(p).cols()) = value(p);
            c += value(p).cols();
        }
        Id out = make(std::move(v));
        nodes_[out].back = [this, parts, out] {
            Eigen::Index c = 0;
            for (Id p : parts) {
                Eigen::Index n = value(p).cols();
                acc(p, nodes_[out].grad.middleCols(c, n));
                c += n;
            }
        };
        return out;
    }

    Id concat_rows(const std::vector<Id>& parts) {
        Eigen::Index cols = value(parts[0]).cols(), rows = 0;
        for (Id p : parts) rows += value(p).rows();
        Mat v(rows, cols);
        Eigen::Index r = 0;
        for (Id p : parts) {
            v.middleRows(r, value(p).rows()) = value(p);
            r += value(p).rows();
        }
        Id out = make(std::move(v));
        nodes_[out].back = [this, parts, out] {
            Eigen::Index r = 0;
            for (Id p : parts) {
                Eigen::Index n = value(p).rows();
                acc(p, nodes_[out].grad.middleRows(r, n));
                r += n;
            }
        };
        return out;
    }

    Id row(Id a, Eigen::Index r) {
        Id out = make(value(a).row(r));
        nodes_[out].back = [this, a, r, out] {
            ensure_grad(a);
            nodes_[a].grad.row(r) += nodes_[out].grad.row(0);
        };
        return out;
    }

    // Cross-entropy of a 1 x K logits row against `target`: -log softmax[target].
    Id cross_entropy(Id logits, Eigen::Index target) {
        const Mat& z = value(logits);
        if (z.rows() != 1) throw UsageError("cross_entropy expects a 1 x K logits row");
        if (target < 0 || target >= z.cols()) throw UsageError("target index out of range");
        T m = z.row(0).maxCoeff();
        T lse = m + std::log((z.row(0).array() - m).exp().sum());
        Mat v(1, 1);
        v(0, 0) = lse - z(0, target);
        Id out = make(std::move(v));
        nodes_[out].back = [this, logits, target, out] {
            const Mat& z = value(logits);
            T m = z.row(0).maxCoeff();
            Eigen::Matrix<T, 1, Eigen::Dynamic> p = (z.row(0).array() - m).exp();
            p /= p.sum();
            p(0, target) -= T(1);
            acc(logits, nodes_[out].grad(0, 0) * p);
        };
        return out;
    }

    Id mean(const std::vector<Id>& scalars) {
        Mat v(1, 1);
        v(0, 0) = T(0);
        for (Id s : scalars) v(0, 0) += value(s)(0, 0);
        v(0, 0) /= static_cast<T>(scalars.size());
        Id out = make(std::move(v));
        nodes_[out].back = [this, scalars, out] {
            Mat g(1, 1);
            g(0, 0) = nodes_[out].grad(0, 0) / static_cast<T>(scalars.size());
            for (Id s : scalars) acc(s, g);
        };
        return out;
    }

    void backward(Id root) {
        if (value(root).size() != 1) throw UsageError("backward root must be a scalar");
        ensure_grad(root);
        nodes_[root].grad(0, 0) = T(1);
        for (Id id = root; id >= 0; --id)
            if (nodes_[id].back && nodes_[id].grad.size() > 0) nodes_[id].back();
    }

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        Mat grad;
        std::function<void()> back;
    };

    Id make(Mat v) {
        nodes_.push_back({std::move(v), {}, nullptr});
        return static_cast<Id>(nodes_.size() - 1);
    }

    void ensure_grad(Id id) {
        if (nodes_[id].grad.size() == 0)
            nodes_[id].grad = Mat::Zero(nodes_[id].value.rows(), nodes_[id].value.cols());
    }

    template <typename Expr>
    void acc(Id id, const Expr& g) {
        ensure_grad(id);
        nodes_[id].grad += g;
    }

    std::vector<Node> nodes_;
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace fewrank
