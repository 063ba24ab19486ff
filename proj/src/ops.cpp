#include "tiseg/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tiseg {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

detail::Node& in(detail::Node& n, size_t i) { return *n.inputs[i]; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

void require_scalar(const Tensor& s, const char* op) {
    if (s.numel() != 1) throw std::invalid_argument(std::string(op) + ": expected a single-element tensor");
}

void require_rank(const Tensor& a, int r, const char* op) {
    if (a.rank() != r)
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                                    shape_str(a.shape()));
}

std::vector<double> copy_of(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    auto v = copy_of(a);
    auto bd = b.data();
    for (size_t i = 0; i < v.size(); ++i) v[i] += bd[i];
    return make_result(a.shape(), std::move(v), {a, b}, [](detail::Node& n) {
        for (size_t k = 0; k < 2; ++k) {
            if (!in(n, k).requires_grad) continue;
            auto& g = in(n, k).grad_buffer();
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    auto v = copy_of(a);
    auto bd = b.data();
    for (size_t i = 0; i < v.size(); ++i) v[i] -= bd[i];
    return make_result(a.shape(), std::move(v), {a, b}, [](detail::Node& n) {
        if (in(n, 0).requires_grad) {
            auto& g = in(n, 0).grad_buffer();
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (in(n, 1).requires_grad) {
            auto& g = in(n, 1).grad_buffer();
            for (size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    auto v = copy_of(a);
    auto bd = b.data();
    for (size_t i = 0; i < v.size(); ++i) v[i] *= bd[i];
    return make_result(a.shape(), std::move(v), {a, b}, [](detail::Node& n) {
        auto& A = in(n, 0);
        auto& B = in(n, 1);
        if (A.requires_grad) {
            auto& g = A.grad_buffer();
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * B.value[i];
        }
        if (B.requires_grad) {
            auto& g = B.grad_buffer();
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * A.value[i];
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    auto v = copy_of(a);
    for (auto& x : v) x *= c;
    return make_result(a.shape(), std::move(v), {a}, [c](detail::Node& n) {
        auto& g = in(n, 0).grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) g[i] += c * n.grad[i];
    });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
    require_scalar(s, "mul_scalar");
    const double sv = s.item();
    auto v = copy_of(a);
    for (auto& x : v) x *= sv;
    return make_result(a.shape(), std::move(v), {a, s}, [](detail::Node& n) {
        auto& A = in(n, 0);
        auto& S = in(n, 1);
        if (A.requires_grad) {
            auto& g = A.grad_buffer();
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * S.value[0];
        }
        if (S.requires_grad) {
            double acc = 0.0;
            for (size_t i = 0; i < n.grad.size(); ++i) acc += n.grad[i] * A.value[i];
            S.grad_buffer()[0] += acc;
        }
    });
}

Tensor div_scalar(const Tensor& a, const Tensor& s) {
    require_scalar(s, "div_scalar");
    const double sv = s.item();
    if (sv == 0.0) throw std::domain_error("div_scalar: division by zero");
    auto v = copy_of(a);
    for (auto& x : v) x /= sv;
    return make_result(a.shape(), std::move(v), {a, s}, [](detail::Node& n) {
        auto& A = in(n, 0);
        auto& S = in(n, 1);
        const double sv = S.value[0];
        if (A.requires_grad) {
            auto& g = A.grad_buffer();
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] / sv;
        }
        if (S.requires_grad) {
            double acc = 0.0;
            for (size_t i = 0; i < n.grad.size(); ++i) acc += n.grad[i] * A.value[i];
            S.grad_buffer()[0] -= acc / (sv * sv);
        }
    });
}

Tensor exp(const Tensor& a) {
    auto v = copy_of(a);
    for (auto& x : v) x = std::exp(x);
    return make_result(a.shape(), std::move(v), {a}, [](detail::Node& n) {
        auto& g = in(n, 0).grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * n.value[i];
    });
}

Tensor relu(const Tensor& a) {
    auto v = copy_of(a);
    for (auto& x : v) x = x > 0.0 ? x : 0.0;
    return make_result(a.shape(), std::move(v), {a}, [](detail::Node& n) {
        auto& g = in(n, 0).grad_buffer();
        for (size_t i = 0; i < g.size(); ++i)
            if (n.value[i] > 0.0) g[i] += n.grad[i];
    });
}

Tensor sigmoid(const Tensor& a) {
    auto v = copy_of(a);
    for (auto& x : v) x = 1.0 / (1.0 + std::exp(-x));
    return make_result(a.shape(), std::move(v), {a}, [](detail::Node& n) {
        auto& g = in(n, 0).grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
    });
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double x : a.data()) acc += x;
    return make_result({1}, {acc}, {a}, [](detail::Node& n) {
        auto& g = in(n, 0).grad_buffer();
        for (auto& x : g) x += n.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw std::invalid_argument("mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum_squares(const Tensor& a) {
    double acc = 0.0;
    for (double x : a.data()) acc += x * x;
    return make_result({1}, {acc}, {a}, [](detail::Node& n) {
        auto& A = in(n, 0);
        auto& g = A.grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * n.grad[0] * A.value[i];
    });
}

Tensor dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    double acc = 0.0;
    auto ad = a.data();
    auto bd = b.data();
    for (size_t i = 0; i < ad.size(); ++i) acc += ad[i] * bd[i];
    return make_result({1}, {acc}, {a, b}, [](detail::Node& n) {
        auto& A = in(n, 0);
        auto& B = in(n, 1);
        if (A.requires_grad) {
            auto& g = A.grad_buffer();
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0] * B.value[i];
        }
        if (B.requires_grad) {
            auto& g = B.grad_buffer();
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0] * A.value[i];
        }
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw std::invalid_argument("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
    return make_result(std::move(shape), copy_of(a), {a}, [](detail::Node& n) {
        auto& g = in(n, 0).grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const int64_t m = trans_a ? a.dim(1) : a.dim(0);
    const int64_t ka = trans_a ? a.dim(0) : a.dim(1);
    const int64_t kb = trans_b ? b.dim(1) : b.dim(0);
    const int64_t p = trans_b ? b.dim(0) : b.dim(1);
    if (ka != kb)
        throw std::invalid_argument("matmul: inner dimensions differ " + shape_str(a.shape()) + " * " +
                                    shape_str(b.shape()));
    std::vector<double> out(static_cast<size_t>(m * p));
    MapC A(a.data().data(), a.dim(0), a.dim(1));
    MapC B(b.data().data(), b.dim(0), b.dim(1));
    Map C(out.data(), m, p);
    if (!trans_a && !trans_b) C.noalias() = A * B;
    else if (trans_a && !trans_b) C.noalias() = A.transpose() * B;
    else if (!trans_a && trans_b) C.noalias() = A * B.transpose();
    else C.noalias() = A.transpose() * B.transpose();

    return make_result({m, p}, std::move(out), {a, b}, [trans_a, trans_b](detail::Node& n) {
        auto& An = in(n, 0);
        auto& Bn = in(n, 1);
        MapC G(n.grad.data(), n.shape[0], n.shape[1]);
        MapC A(An.value.data(), An.shape[0], An.shape[1]);
        MapC B(Bn.value.data(), Bn.shape[0], Bn.shape[1]);
        if (An.requires_grad) {
            Map dA(An.grad_buffer().data(), An.shape[0], An.shape[1]);
            // d(opA) = G * opB^T
            if (!trans_a) {
                if (!trans_b) dA.noalias() += G * B.transpose();
                else dA.noalias() += G * B;
            } else {
                if (!trans_b) dA.noalias() += B * G.transpose();
                else dA.noalias() += B.transpose() * G.transpose();
            }
        }
        if (Bn.requires_grad) {
            Map dB(Bn.grad_buffer().data(), Bn.shape[0], Bn.shape[1]);
            // d(opB) = opA^T * G
            if (!trans_b) {
                if (!trans_a) dB.noalias() += A.transpose() * G;
                else dB.noalias() += A * G;
            } else {
                if (!trans_a) dB.noalias() += G.transpose() * A;
                else dB.noalias() += G.transpose() * A.transpose();
            }
        }
    });
}

Tensor add_rowwise(const Tensor& x, const Tensor& b) {
    require_rank(x, 2, "add_rowwise");
    const int64_t rows = x.dim(0), cols = x.dim(1);
    if (b.numel() != cols)
        throw std::invalid_argument("add_rowwise: bias of " + std::to_string(b.numel()) + " for " +
                                    shape_str(x.shape()));
    auto v = copy_of(x);
    auto bd = b.data();
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) v[static_cast<size_t>(r * cols + c)] += bd[static_cast<size_t>(c)];
    return make_result(x.shape(), std::move(v), {x, b}, [rows, cols](detail::Node& n) {
        if (in(n, 0).requires_grad) {
            auto& g = in(n, 0).grad_buffer();
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (in(n, 1).requires_grad) {
            auto& g = in(n, 1).grad_buffer();
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < cols; ++c) g[static_cast<size_t>(c)] += n.grad[static_cast<size_t>(r * cols + c)];
        }
    });
}

Tensor softmax_rows(const Tensor& x, double logit_scale) {
    require_rank(x, 2, "softmax_rows");
    const int64_t rows = x.dim(0), cols = x.dim(1);
    if (cols == 0) throw std::invalid_argument("softmax_rows: zero columns");
    std::vector<double> v(static_cast<size_t>(rows * cols));
    auto xd = x.data();
    for (int64_t r = 0; r < rows; ++r) {
        const double* src = xd.data() + r * cols;
        double* dst = v.data() + r * cols;
        double mx = -INFINITY;
        for (int64_t c = 0; c < cols; ++c) mx = std::max(mx, src[c] * logit_scale);
        double z = 0.0;
        for (int64_t c = 0; c < cols; ++c) {
            dst[c] = std::exp(src[c] * logit_scale - mx);
            z += dst[c];
        }
        for (int64_t c = 0; c < cols; ++c) dst[c] /= z;
    }
    return make_result(x.shape(), std::move(v), {x}, [rows, cols, logit_scale](detail::Node& n) {
        auto& g = in(n, 0).grad_buffer();
        for (int64_t r = 0; r < rows; ++r) {
            const double* y = n.value.data() + r * cols;
            const double* dy = n.grad.data() + r * cols;
            double s = 0.0;
            for (int64_t c = 0; c < cols; ++c) s += dy[c] * y[c];
            double* dx = g.data() + r * cols;
            for (int64_t c = 0; c < cols; ++c) dx[c] += logit_scale * y[c] * (dy[c] - s);
        }
    });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_rank(x, 2, "layer_norm_rows");
    const int64_t rows = x.dim(0), cols = x.dim(1);
    if (gamma.numel() != cols || beta.numel() != cols)
        throw std::invalid_argument("layer_norm_rows: affine size mismatch for " + shape_str(x.shape()));
    auto xd = x.data();
    auto gd = gamma.data();
    auto bd = beta.data();
    // xhat and rstd are kept for the backward pass.
    auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(rows * cols));
    auto rstd = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
    std::vector<double> v(static_cast<size_t>(rows * cols));
    for (int64_t r = 0; r < rows; ++r) {
        const double* src = xd.data() + r * cols;
        double mu = 0.0;
        for (int64_t c = 0; c < cols; ++c) mu += src[c];
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (int64_t c = 0; c < cols; ++c) var += (src[c] - mu) * (src[c] - mu);
        var /= static_cast<double>(cols);
        const double rs = 1.0 / std::sqrt(var + eps);
        (*rstd)[static_cast<size_t>(r)] = rs;
        for (int64_t c = 0; c < cols; ++c) {
            const double h = (src[c] - mu) * rs;
            (*xhat)[static_cast<size_t>(r * cols + c)] = h;
            v[static_cast<size_t>(r * cols + c)] = gd[static_cast<size_t>(c)] * h + bd[static_cast<size_t>(c)];
        }
    }
    return make_result(x.shape(), std::move(v), {x, gamma, beta}, [rows, cols, xhat, rstd](detail::Node& n) {
        auto& X = in(n, 0);
        auto& G = in(n, 1);
        auto& B = in(n, 2);
        const double m = static_cast<double>(cols);
        for (int64_t r = 0; r < rows; ++r) {
            const double* dy = n.grad.data() + r * cols;
            const double* h = xhat->data() + r * cols;
            if (G.requires_grad) {
                auto& gg = G.grad_buffer();
                for (int64_t c = 0; c < cols; ++c) gg[static_cast<size_t>(c)] += dy[c] * h[c];
            }
            if (B.requires_grad) {
                auto& gb = B.grad_buffer();
                for (int64_t c = 0; c < cols; ++c) gb[static_cast<size_t>(c)] += dy[c];
            }
            if (X.requires_grad) {
                double s1 = 0.0, s2 = 0.0;
                for (int64_t c = 0; c < cols; ++c) {
                    const double dh = dy[c] * G.value[static_cast<size_t>(c)];
                    s1 += dh;
                    s2 += dh * h[c];
                }
                const double rs = (*rstd)[static_cast<size_t>(r)];
                double* dx = X.grad_buffer().data() + r * cols;
                for (int64_t c = 0; c < cols; ++c) {
                    const double dh = dy[c] * G.value[static_cast<size_t>(c)];
                    dx[c] += rs * (dh - s1 / m - h[c] * s2 / m);
                }
            }
        }
    });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const Shape& s0 = parts[0].shape();
    if (axis < 0) axis += static_cast<int>(s0.size());
    if (axis < 0 || axis >= static_cast<int>(s0.size())) throw std::invalid_argument("concat: bad axis");
    const auto ax = static_cast<size_t>(axis);
    int64_t outer = 1, inner = 1, total = 0;
    for (size_t i = 0; i < ax; ++i) outer *= s0[i];
    for (size_t i = ax + 1; i < s0.size(); ++i) inner *= s0[i];
    std::vector<int64_t> widths;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == s0.size();
        for (size_t i = 0; ok && i < s.size(); ++i) ok = (i == ax) || s[i] == s0[i];
        if (!ok) throw std::invalid_argument("concat: incompatible " + shape_str(s) + " vs " + shape_str(s0));
        widths.push_back(s[ax]);
        total += s[ax];
    }
    Shape out_shape = s0;
    out_shape[ax] = total;
    std::vector<double> v(static_cast<size_t>(outer * total * inner));
    int64_t off = 0;
    for (size_t k = 0; k < parts.size(); ++k) {
        const int64_t w = widths[k] * inner;
        auto src = parts[k].data();
        for (int64_t o = 0; o < outer; ++o)
            std::copy_n(src.data() + o * w, w, v.data() + o * total * inner + off);
        off += w;
    }
    return make_result(std::move(out_shape), std::move(v), parts, [outer, inner, total, widths](detail::Node& n) {
        int64_t off = 0;
        for (size_t k = 0; k < widths.size(); ++k) {
            const int64_t w = widths[k] * inner;
            if (in(n, k).requires_grad) {
                auto& g = in(n, k).grad_buffer();
                for (int64_t o = 0; o < outer; ++o) {
                    const double* src = n.grad.data() + o * total * inner + off;
                    double* dst = g.data() + o * w;
                    for (int64_t i = 0; i < w; ++i) dst[i] += src[i];
                }
            }
            off += w;
        }
    });
}

Tensor slice(const Tensor& a, int axis, int64_t begin, int64_t end) {
    const Shape& s = a.shape();
    if (axis < 0) axis += static_cast<int>(s.size());
    if (axis < 0 || axis >= static_cast<int>(s.size())) throw std::invalid_argument("slice: bad axis");
    const auto ax = static_cast<size_t>(axis);
    if (begin < 0 || end > s[ax] || begin > end)
        throw std::out_of_range("slice: [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                                shape_str(s));
    int64_t outer = 1, inner = 1;
    for (size_t i = 0; i < ax; ++i) outer *= s[i];
    for (size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
    const int64_t full = s[ax] * inner, w = (end - begin) * inner, off = begin * inner;
    Shape out_shape = s;
    out_shape[ax] = end - begin;
    std::vector<double> v(static_cast<size_t>(outer * w));
    auto src = a.data();
    for (int64_t o = 0; o < outer; ++o) std::copy_n(src.data() + o * full + off, w, v.data() + o * w);
    return make_result(std::move(out_shape), std::move(v), {a}, [outer, full, w, off](detail::Node& n) {
        auto& g = in(n, 0).grad_buffer();
        for (int64_t o = 0; o < outer; ++o) {
            const double* src = n.grad.data() + o * w;
            double* dst = g.data() + o * full + off;
            for (int64_t i = 0; i < w; ++i) dst[i] += src[i];
        }
    });
}

Tensor nchw_to_rows(const Tensor& x) {
    require_rank(x, 4, "nchw_to_rows");
    const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    std::vector<double> v(static_cast<size_t>(x.numel()));
    auto xd = x.data();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const double* src = xd.data() + (n * C + c) * HW;
            double* dst = v.data() + n * HW * C + c;
            for (int64_t p = 0; p < HW; ++p) dst[p * C] = src[p];
        }
    return make_result({N * HW, C}, std::move(v), {x}, [N, C, HW](detail::Node& nd) {
        auto& g = in(nd, 0).grad_buffer();
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c) {
                double* dst = g.data() + (n * C + c) * HW;
                const double* src = nd.grad.data() + n * HW * C + c;
                for (int64_t p = 0; p < HW; ++p) dst[p] += src[p * C];
            }
    });
}

Tensor rows_to_nchw(const Tensor& rows, int64_t N, int64_t H, int64_t W) {
    require_rank(rows, 2, "rows_to_nchw");
    const int64_t HW = H * W, C = rows.dim(1);
    if (rows.dim(0) != N * HW)
        throw std::invalid_argument("rows_to_nchw: " + shape_str(rows.shape()) + " cannot form N=" +
                                    std::to_string(N) + " " + std::to_string(H) + "x" + std::to_string(W));
    std::vector<double> v(static_cast<size_t>(rows.numel()));
    auto rd = rows.data();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            double* dst = v.data() + (n * C + c) * HW;
            const double* src = rd.data() + n * HW * C + c;
            for (int64_t p = 0; p < HW; ++p) dst[p] = src[p * C];
        }
    return make_result({N, C, H, W}, std::move(v), {rows}, [N, C, HW](detail::Node& nd) {
        auto& g = in(nd, 0).grad_buffer();
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c) {
                const double* src = nd.grad.data() + (n * C + c) * HW;
                double* dst = g.data() + n * HW * C + c;
                for (int64_t p = 0; p < HW; ++p) dst[p * C] += src[p];
            }
    });
}

Tensor unfold(const Tensor& x, int k, int stride, int pad) {
    require_rank(x, 4, "unfold");
    if (k < 1 || stride < 1 || pad < 0) throw std::invalid_argument("unfold: bad geometry");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t OH = (H + 2 * pad - k) / stride + 1, OW = (W + 2 * pad - k) / stride + 1;
    if (OH < 1 || OW < 1) throw std::invalid_argument("unfold: kernel larger than padded input " + shape_str(x.shape()));
    const int64_t cols = C * k * k;
    std::vector<double> v(static_cast<size_t>(N * OH * OW * cols), 0.0);
    auto xd = x.data();
    // Visits every (row, col, source) triple once; shared by forward and backward.
    auto visit = [=](auto&& fn) {
        for (int64_t n = 0; n < N; ++n)
            for (int64_t oy = 0; oy < OH; ++oy)
                for (int64_t ox = 0; ox < OW; ++ox) {
                    const int64_t row = (n * OH + oy) * OW + ox;
                    for (int64_t c = 0; c < C; ++c)
                        for (int ky = 0; ky < k; ++ky) {
                            const int64_t iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= H) continue;
                            const int64_t src_base = ((n * C + c) * H + iy) * W;
                            const int64_t dst_base = row * cols + (c * k + ky) * k;
                            for (int kx = 0; kx < k; ++kx) {
                                const int64_t ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= W) continue;
                                fn(dst_base + kx, src_base + ix);
                            }
                        }
                }
    };
    visit([&](int64_t d, int64_t s) { v[static_cast<size_t>(d)] = xd[static_cast<size_t>(s)]; });
    return make_result({N * OH * OW, cols}, std::move(v), {x}, [visit](detail::Node& nd) {
        auto& g = in(nd, 0).grad_buffer();
        const auto& dy = nd.grad;
        visit([&](int64_t d, int64_t s) { g[static_cast<size_t>(s)] += dy[static_cast<size_t>(d)]; });
    });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int pad) {
    require_rank(x, 4, "conv2d");
    require_rank(weight, 4, "conv2d weight");
    const int64_t OC = weight.dim(0), IC = weight.dim(1), k = weight.dim(2);
    if (weight.dim(3) != k) throw std::invalid_argument("conv2d: non-square kernel");
    if (x.dim(1) != IC)
        throw std::invalid_argument("conv2d: input " + shape_str(x.shape()) + " vs weight " + shape_str(weight.shape()));
    const int64_t N = x.dim(0);
    const int64_t OH = (x.dim(2) + 2 * pad - k) / stride + 1, OW = (x.dim(3) + 2 * pad - k) / stride + 1;
    Tensor cols = unfold(x, static_cast<int>(k), stride, pad);
    Tensor rows = matmul(cols, reshape(weight, {OC, IC * k * k}), false, true);
    if (bias.defined()) rows = add_rowwise(rows, bias);
    return rows_to_nchw(rows, N, OH, OW);
}

Tensor upsample_nearest(const Tensor& x, int f) {
    require_rank(x, 4, "upsample_nearest");
    if (f < 1) throw std::invalid_argument("upsample_nearest: factor < 1");
    const int64_t NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3), OH = H * f, OW = W * f;
    std::vector<double> v(static_cast<size_t>(NC * OH * OW));
    auto xd = x.data();
    for (int64_t p = 0; p < NC; ++p)
        for (int64_t y = 0; y < OH; ++y)
            for (int64_t xx = 0; xx < OW; ++xx)
                v[static_cast<size_t>((p * OH + y) * OW + xx)] = xd[static_cast<size_t>((p * H + y / f) * W + xx / f)];
    return make_result({x.dim(0), x.dim(1), OH, OW}, std::move(v), {x}, [NC, H, W, OH, OW, f](detail::Node& n) {
        auto& g = in(n, 0).grad_buffer();
        for (int64_t p = 0; p < NC; ++p)
            for (int64_t y = 0; y < OH; ++y)
                for (int64_t xx = 0; xx < OW; ++xx)
                    g[static_cast<size_t>((p * H + y / f) * W + xx / f)] += n.grad[static_cast<size_t>((p * OH + y) * OW + xx)];
    });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
    require_same_shape(logits, targets, "bce_with_logits");
    const auto count = static_cast<double>(logits.numel());
    if (count == 0) throw std::invalid_argument("bce_with_logits: empty input");
    auto z = logits.data();
    auto t = targets.data();
    double acc = 0.0;
    for (size_t i = 0; i < z.size(); ++i)
        acc += std::max(z[i], 0.0) - z[i] * t[i] + std::log1p(std::exp(-std::abs(z[i])));
    auto tv = std::make_shared<std::vector<double>>(t.begin(), t.end());
    return make_result({1}, {acc / count}, {logits}, [tv, count](detail::Node& n) {
        auto& L = in(n, 0);
        auto& g = L.grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) {
            const double s = 1.0 / (1.0 + std::exp(-L.value[i]));
            g[i] += n.grad[0] * (s - (*tv)[i]) / count;
        }
    });
}

}  // namespace tiseg
