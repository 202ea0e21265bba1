#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mvlift/common.hpp"
#include "mvlift/rng.hpp"

namespace mvlift {
namespace nn {

// Hand-derived backprop layers. Forward passes cache exactly the
// intermediates their backward passes need; gradients accumulate into the
// layer's grad buffers so a batch can be split into several passes.

inline double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}

inline double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return cdf + x * pdf;
}

inline MatrixXd gelu_mat(const MatrixXd& x) {
    return x.unaryExpr([](double v) { return gelu(v); });
}

/// Sums n values in a canonical (sorted) order, so the result does not
/// depend on the order the inputs were stored in. Used by the view-attention
/// reductions to make view-permutation equivariance bitwise.
inline double canonical_sum(double* vals, int n) {
    std::sort(vals, vals + n);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += vals[i];
    return acc;
}

// ---------------------------------------------------------------------------

struct ParamSpan {
    std::string name;
    double* value = nullptr;
    double* grad = nullptr;
    Index size = 0;
    bool trainable = true;
};

using ParamFn = std::function<void(const ParamSpan&)>;

// ---------------------------------------------------------------------------

/// y = x W^T + b with x holding one token per row.
struct Dense {
    MatrixXd w;   // out x in
    VectorXd b;   // out
    MatrixXd gw;
    VectorXd gb;

    void init(Rng& rng, Index out, Index in) {
        const double a = 1.0 / std::sqrt(static_cast<double>(in));
        w.resize(out, in);
        for (Index r = 0; r < out; ++r)
            for (Index c = 0; c < in; ++c) w(r, c) = rng.uniform(-a, a);
        b = VectorXd::Zero(out);
        gw = MatrixXd::Zero(out, in);
        gb = VectorXd::Zero(out);
    }

    void init_zero(Index out, Index in) {
        w = MatrixXd::Zero(out, in);
        b = VectorXd::Zero(out);
        gw = MatrixXd::Zero(out, in);
        gb = VectorXd::Zero(out);
    }

    MatrixXd forward(const MatrixXd& x) const {
        return ((x * w.transpose()).rowwise() + b.transpose());
    }

    MatrixXd backward(const MatrixXd& x, const MatrixXd& dy) {
        gw.noalias() += dy.transpose() * x;
        gb.noalias() += dy.colwise().sum().transpose();
        return dy * w;
    }

    void visit(const std::string& prefix, const ParamFn& fn, bool trainable) {
        fn({prefix + ".w", w.data(), gw.data(), w.size(), trainable});
        fn({prefix + ".b", b.data(), gb.data(), b.size(), trainable});
    }
};

// ---------------------------------------------------------------------------

struct LayerNorm {
    VectorXd gamma, beta;
    VectorXd ggamma, gbeta;

    static constexpr double kEps = 1e-5;

    struct Cache {
        MatrixXd xhat;
        VectorXd rstd;
    };

    void init(Index d) {
        gamma = VectorXd::Ones(d);
        beta = VectorXd::Zero(d);
        ggamma = VectorXd::Zero(d);
        gbeta = VectorXd::Zero(d);
    }

    MatrixXd forward(const MatrixXd& x, Cache& c) const {
        const Index n = x.rows(), d = x.cols();
        c.xhat.resize(n, d);
        c.rstd.resize(n);
        MatrixXd y(n, d);
        for (Index r = 0; r < n; ++r) {
            const double mu = x.row(r).mean();
            const double var = (x.row(r).array() - mu).square().sum() / d;
            const double rstd = 1.0 / std::sqrt(var + kEps);
            c.rstd(r) = rstd;
            c.xhat.row(r) = (x.row(r).array() - mu) * rstd;
            y.row(r) = c.xhat.row(r).cwiseProduct(gamma.transpose()) + beta.transpose();
        }
        return y;
    }

    MatrixXd backward(const Cache& c, const MatrixXd& dy) {
        const Index n = dy.rows(), d = dy.cols();
        ggamma.noalias() += (dy.array() * c.xhat.array()).colwise().sum().matrix().transpose();
        gbeta.noalias() += dy.colwise().sum().transpose();
        MatrixXd dx(n, d);
        for (Index r = 0; r < n; ++r) {
            const Eigen::RowVectorXd dyh = dy.row(r).cwiseProduct(gamma.transpose());
            const double m1 = dyh.mean();
            const double m2 = dyh.cwiseProduct(c.xhat.row(r)).mean();
            dx.row(r) =
                (dyh.array() - m1 - c.xhat.row(r).array() * m2) * c.rstd(r);
        }
        return dx;
    }

    void visit(const std::string& prefix, const ParamFn& fn, bool trainable) {
        fn({prefix + ".gamma", gamma.data(), ggamma.data(), gamma.size(), trainable});
        fn({prefix + ".beta", beta.data(), gbeta.data(), beta.size(), trainable});
    }
};

// ---------------------------------------------------------------------------

using Spans = std::vector<std::pair<Index, Index>>;  // (row offset, token count)

/// Multi-head self-attention applied independently within each span of rows
/// (one span per sequence in the stacked batch). Full bidirectional
/// attention, no masking.
struct MultiHeadAttention {
    Index heads = 1;
    Dense q, k, v, o;

    struct Cache {
        MatrixXd x, qm, km, vm, concat;
        std::vector<MatrixXd> probs;  // one (len x len) matrix per (span, head)
    };

    void init(Rng& rng, Index d, Index n_heads) {
        detail::require(d % n_heads == 0, "attention: d_model must divide by heads");
        heads = n_heads;
        q.init(rng, d, d);
        k.init(rng, d, d);
        v.init(rng, d, d);
        o.init(rng, d, d);
    }

    MatrixXd forward(const MatrixXd& x, const Spans& spans, Cache& c) const {
        const Index d = x.cols();
        const Index dh = d / heads;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
        c.x = x;
        c.qm = q.forward(x);
        c.km = k.forward(x);
        c.vm = v.forward(x);
        c.concat.resize(x.rows(), d);
        c.probs.clear();
        c.probs.reserve(spans.size() * static_cast<std::size_t>(heads));
        for (const auto& [off, len] : spans) {
            for (Index h = 0; h < heads; ++h) {
                const auto qh = c.qm.block(off, h * dh, len, dh);
                const auto kh = c.km.block(off, h * dh, len, dh);
                const auto vh = c.vm.block(off, h * dh, len, dh);
                MatrixXd scores = qh * kh.transpose() * inv_sqrt;
                for (Index r = 0; r < len; ++r) {
                    const double m = scores.row(r).maxCoeff();
                    scores.row(r) = (scores.row(r).array() - m).exp();
                    scores.row(r) /= scores.row(r).sum();
                }
                c.concat.block(off, h * dh, len, dh).noalias() = scores * vh;
                c.probs.push_back(std::move(scores));
            }
        }
        return o.forward(c.concat);
    }

    MatrixXd backward(const Cache& c, const Spans& spans, const MatrixXd& dy) {
        const Index d = c.x.cols();
        const Index dh = d / heads;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
        const MatrixXd dconcat = o.backward(c.concat, dy);
        MatrixXd dq = MatrixXd::Zero(c.x.rows(), d);
        MatrixXd dk = MatrixXd::Zero(c.x.rows(), d);
        MatrixXd dv = MatrixXd::Zero(c.x.rows(), d);
        std::size_t pi = 0;
        for (const auto& [off, len] : spans) {
            for (Index h = 0; h < heads; ++h) {
                const MatrixXd& p = c.probs[pi++];
                const auto qh = c.qm.block(off, h * dh, len, dh);
                const auto kh = c.km.block(off, h * dh, len, dh);
                const auto vh = c.vm.block(off, h * dh, len, dh);
                const auto doh = dconcat.block(off, h * dh, len, dh);
                MatrixXd dp = doh * vh.transpose();
                dv.block(off, h * dh, len, dh).noalias() = p.transpose() * doh;
                // softmax backward, rowwise
                for (Index r = 0; r < len; ++r) {
                    const double dot = dp.row(r).cwiseProduct(p.row(r)).sum();
                    dp.row(r) = p.row(r).cwiseProduct(dp.row(r).array() - dot);
                }
                dq.block(off, h * dh, len, dh).noalias() = dp * kh * inv_sqrt;
                dk.block(off, h * dh, len, dh).noalias() = dp.transpose() * qh * inv_sqrt;
            }
        }
        MatrixXd dx = q.backward(c.x, dq);
        dx += k.backward(c.x, dk);
        dx += v.backward(c.x, dv);
        return dx;
    }

    void visit(const std::string& prefix, const ParamFn& fn, bool trainable) {
        q.visit(prefix + ".q", fn, trainable);
        k.visit(prefix + ".k", fn, trainable);
        v.visit(prefix + ".v", fn, trainable);
        o.visit(prefix + ".o", fn, trainable);
    }
};

// ---------------------------------------------------------------------------

struct FeedForward {
    Dense fc1, fc2;

    struct Cache {
        MatrixXd x, h_pre, h_act;
    };

    void init(Rng& rng, Index d, Index d_ff) {
        fc1.init(rng, d_ff, d);
        fc2.init(rng, d, d_ff);
    }

    MatrixXd forward(const MatrixXd& x, Cache& c) const {
        c.x = x;
        c.h_pre = fc1.forward(x);
        c.h_act = gelu_mat(c.h_pre);
        return fc2.forward(c.h_act);
    }

    MatrixXd backward(const Cache& c, const MatrixXd& dy) {
        MatrixXd dh = fc2.backward(c.h_act, dy);
        dh.array() *= c.h_pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
        return fc1.backward(c.x, dh);
    }

    void visit(const std::string& prefix, const ParamFn& fn, bool trainable) {
        fc1.visit(prefix + ".fc1", fn, trainable);
        fc2.visit(prefix + ".fc2", fn, trainable);
    }
};

// ---------------------------------------------------------------------------

template <typename Params>
std::vector<ParamSpan> collect_params(Params& p) {
    std::vector<ParamSpan> spans;
    p.visit([&](const ParamSpan& s) { spans.push_back(s); });
    return spans;
}

inline Index param_count(const std::vector<ParamSpan>& spans, bool trainable_only) {
    Index n = 0;
    for (const auto& s : spans)
        if (!trainable_only || s.trainable) n += s.size;
    return n;
}

/// Validates analytic gradients against central finite differences on a
/// random subsample of coordinates. `compute_grads` must zero the grad
/// buffers and run a full forward/backward; `loss` must recompute the same
/// scalar loss from the current parameter values.
inline double grad_check(const std::vector<ParamSpan>& spans,
                         const std::function<double()>& loss,
                         const std::function<void()>& compute_grads, double eps,
                         Index n_coords, Rng& rng) {
    detail::require(eps > 0.0, "grad_check: eps must be positive");
    compute_grads();
    detail::require(std::isfinite(loss()), "grad_check: non-finite loss");

    std::vector<std::pair<std::size_t, Index>> coords;  // (span idx, offset)
    Index total = 0;
    for (const auto& s : spans) total += s.size;
    detail::require(total > 0, "grad_check: no parameters");
    for (Index i = 0; i < n_coords; ++i) {
        Index flat = static_cast<Index>(rng.integer(static_cast<std::uint64_t>(total)));
        for (std::size_t si = 0; si < spans.size(); ++si) {
            if (flat < spans[si].size) {
                coords.emplace_back(si, flat);
                break;
            }
            flat -= spans[si].size;
        }
    }

    double max_rel = 0.0;
    for (const auto& [si, off] : coords) {
        double* slot = spans[si].value + off;
        const double analytic = spans[si].grad[off];
        const double saved = *slot;
        *slot = saved + eps;
        const double lp = loss();
        *slot = saved - eps;
        const double lm = loss();
        *slot = saved;
        const double fd = (lp - lm) / (2.0 * eps);
        const double rel =
            std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-3});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace nn
}  // namespace mvlift
