// Copyright 2026 The crosscam Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "crosscam/core/autograd.hpp"

/// Differentiable tensor operations. Matrices are the last two axes viewed
/// as rows x cols (see Tensor::rows/cols).
namespace crosscam::ag {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

inline ConstMatMap as_mat(const Tensor& t, std::size_t rows, std::size_t cols) {
    return ConstMatMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline MatMap as_mat(Tensor& t, std::size_t rows, std::size_t cols) {
    return MatMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

namespace detail {
inline void require_same(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}
inline void require_2d(const Var& a, const char* op) {
    if (a.value().ndim() != 2) throw ShapeError(std::string(op) + ": expected 2-D tensor, got " + shape_str(a.shape()));
}
}  // namespace detail

inline Var add(const Var& a, const Var& b) {
    detail::require_same(a, b, "add");
    Tensor out = a.value();
    out += b.value();
    return make_result(std::move(out), {a, b}, [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k)
            if (Tensor* g = parent_grad(self, k)) *g += self.grad;
    });
}

inline Var sub(const Var& a, const Var& b) {
    detail::require_same(a, b, "sub");
    Tensor out = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        if (Tensor* g = parent_grad(self, 0)) *g += self.grad;
        if (Tensor* g = parent_grad(self, 1))
            for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] -= self.grad[i];
    });
}

/// Elementwise product.
inline Var mul(const Var& a, const Var& b) {
    detail::require_same(a, b, "mul");
    Tensor out = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        const auto& av = parent_value(self, 0);
        const auto& bv = parent_value(self, 1);
        if (Tensor* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i] * bv[i];
        if (Tensor* g = parent_grad(self, 1))
            for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i] * av[i];
    });
}

inline Var scale(const Var& a, double s) {
    Tensor out = a.value();
    for (auto& v : out.vec()) v *= s;
    return make_result(std::move(out), {a}, [s](Node& self) {
        if (Tensor* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += s * self.grad[i];
    });
}

inline Var add_scalar(const Var& a, double s) {
    Tensor out = a.value();
    for (auto& v : out.vec()) v += s;
    return make_result(std::move(out), {a}, [](Node& self) {
        if (Tensor* g = parent_grad(self, 0)) *g += self.grad;
    });
}

inline Var relu(const Var& a) {
    Tensor out = a.value();
    for (auto& v : out.vec()) v = v > 0.0 ? v : 0.0;
    return make_result(std::move(out), {a}, [](Node& self) {
        if (Tensor* g = parent_grad(self, 0)) {
            const auto& x = parent_value(self, 0);
            for (std::size_t i = 0; i < g->numel(); ++i)
                if (x[i] > 0.0) (*g)[i] += self.grad[i];
        }
    });
}

/// sqrt(max(x, floor)); the clamp keeps Euclidean distances differentiable
/// at coincident points.
inline Var sqrt_clamped(const Var& a, double floor = 1e-12) {
    Tensor out = a.value();
    for (auto& v : out.vec()) v = std::sqrt(std::max(v, floor));
    return make_result(std::move(out), {a}, [floor](Node& self) {
        if (Tensor* g = parent_grad(self, 0)) {
            const auto& x = parent_value(self, 0);
            for (std::size_t i = 0; i < g->numel(); ++i)
                if (x[i] > floor) (*g)[i] += self.grad[i] * 0.5 / self.value[i];
        }
    });
}

inline Var sum(const Var& a) {
    Tensor out({1}, a.value().sum());
    return make_result(std::move(out), {a}, [](Node& self) {
        if (Tensor* g = parent_grad(self, 0))
            for (auto& v : g->vec()) v += self.grad[0];
    });
}

inline Var mean(const Var& a) {
    if (a.numel() == 0) throw ShapeError("mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

inline Var reshape(const Var& a, Shape shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    return make_result(std::move(out), {a}, [](Node& self) {
        if (Tensor* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i];
    });
}

/// C = A B for A [m,k], B [k,n].
inline Var matmul(const Var& a, const Var& b) {
    detail::require_2d(a, "matmul");
    detail::require_2d(b, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    Tensor out({m, n});
    as_mat(out, m, n).noalias() = as_mat(a.value(), m, k) * as_mat(b.value(), k, n);
    return make_result(std::move(out), {a, b}, [m, k, n](Node& self) {
        auto dc = as_mat(self.grad, m, n);
        if (Tensor* g = parent_grad(self, 0))
            as_mat(*g, m, k).noalias() += dc * as_mat(parent_value(self, 1), k, n).transpose();
        if (Tensor* g = parent_grad(self, 1))
            as_mat(*g, k, n).noalias() += as_mat(parent_value(self, 0), m, k).transpose() * dc;
    });
}

inline Var transpose(const Var& a) {
    detail::require_2d(a, "transpose");
    const std::size_t r = a.dim(0), c = a.dim(1);
    Tensor out({c, r});
    as_mat(out, c, r) = as_mat(a.value(), r, c).transpose();
    return make_result(std::move(out), {a}, [r, c](Node& self) {
        if (Tensor* g = parent_grad(self, 0)) as_mat(*g, r, c) += as_mat(self.grad, c, r).transpose();
    });
}

/// X [R,C] + b broadcast over rows; b has C elements.
inline Var add_row(const Var& x, const Var& b) {
    const std::size_t r = x.value().rows(), c = x.value().cols();
    if (b.numel() != c) throw ShapeError("add_row: bias size " + std::to_string(b.numel()) + " vs cols " + std::to_string(c));
    Tensor out = x.value();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] += b.value()[j];
    return make_result(std::move(out), {x, b}, [r, c](Node& self) {
        if (Tensor* g = parent_grad(self, 0)) *g += self.grad;
        if (Tensor* g = parent_grad(self, 1))
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) (*g)[j] += self.grad[i * c + j];
    });
}

/// Affine map X W + b with W stored [in, out].
inline Var linear(const Var& x, const Var& w, const Var& b) { return add_row(matmul(x, w), b); }

/// Column means of X [R,C] as [1,C].
inline Var mean_rows(const Var& x) {
    detail::require_2d(x, "mean_rows");
    const std::size_t r = x.dim(0), c = x.dim(1);
    if (r == 0) throw ShapeError("mean_rows of empty matrix");
    Tensor out({1, c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j] += x.value()[i * c + j];
    for (auto& v : out.vec()) v /= static_cast<double>(r);
    return make_result(std::move(out), {x}, [r, c](Node& self) {
        if (Tensor* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[j] / static_cast<double>(r);
    });
}

/// X [R,C] minus a [1,C] row broadcast.
inline Var sub_row(const Var& x, const Var& row) {
    const std::size_t r = x.value().rows(), c = x.value().cols();
    if (row.numel() != c) throw ShapeError("sub_row: size mismatch");
    Tensor out = x.value();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] -= row.value()[j];
    return make_result(std::move(out), {x, row}, [r, c](Node& self) {
        if (Tensor* g = parent_grad(self, 0)) *g += self.grad;
        if (Tensor* g = parent_grad(self, 1))
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) (*g)[j] -= self.grad[i * c + j];
    });
}

/// Selected rows of X [R,C]; repeated indices accumulate on the way back.
inline Var gather_rows(const Var& x, std::vector<std::size_t> idx) {
    const std::size_t r = x.value().rows(), c = x.value().cols();
    Tensor out({idx.size(), c});
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] >= r) throw ShapeError("gather_rows: index " + std::to_string(idx[k]) + " out of range");
        std::copy_n(x.value().data() + idx[k] * c, c, out.data() + k * c);
    }
    return make_result(std::move(out), {x}, [idx = std::move(idx), c](Node& self) {
        if (Tensor* g = parent_grad(self, 0))
            for (std::size_t k = 0; k < idx.size(); ++k)
                for (std::size_t j = 0; j < c; ++j) (*g)[idx[k] * c + j] += self.grad[k * c + j];
    });
}

/// Flat element selection, output shape [idx.size()].
inline Var gather(const Var& x, std::vector<std::size_t> idx) {
    Tensor out({idx.size()});
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] >= x.numel()) throw ShapeError("gather: index out of range");
        out[k] = x.value()[idx[k]];
    }
    return make_result(std::move(out), {x}, [idx = std::move(idx)](Node& self) {
        if (Tensor* g = parent_grad(self, 0))
            for (std::size_t k = 0; k < idx.size(); ++k) (*g)[idx[k]] += self.grad[k];
    });
}

/// Stacks 2-D parts with equal column counts along rows.
inline Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t c = parts.front().value().cols();
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.value().cols() != c) throw ShapeError("concat_rows: column mismatch");
        total += p.value().rows();
    }
    Tensor out({total, c});
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.value().vec().begin(), p.value().vec().end(), out.data() + off);
        off += p.numel();
    }
    return make_result(std::move(out), parts, [](Node& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
            const std::size_t n = self.parents[k]->value.numel();
            if (Tensor* g = parent_grad(self, k))
                for (std::size_t i = 0; i < n; ++i) (*g)[i] += self.grad[off + i];
            off += n;
        }
    });
}

/// Repeats X [R,C] `times` times along rows.
inline Var tile_rows(const Var& x, std::size_t times) {
    const std::size_t n = x.numel();
    Tensor out({times * x.value().rows(), x.value().cols()});
    for (std::size_t t = 0; t < times; ++t) std::copy(x.value().vec().begin(), x.value().vec().end(), out.data() + t * n);
    return make_result(std::move(out), {x}, [times, n](Node& self) {
        if (Tensor* g = parent_grad(self, 0))
            for (std::size_t t = 0; t < times; ++t)
                for (std::size_t i = 0; i < n; ++i) (*g)[i] += self.grad[t * n + i];
    });
}

/// Row-wise log-softmax of X [R,C].
inline Var log_softmax_rows(const Var& x) {
    const std::size_t r = x.value().rows(), c = x.value().cols();
    Tensor out = x.value();
    for (std::size_t i = 0; i < r; ++i) {
        double* row = out.data() + i * c;
        const double mx = *std::max_element(row, row + c);
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - mx);
        const double lse = mx + std::log(s);
        for (std::size_t j = 0; j < c; ++j) row[j] -= lse;
    }
    return make_result(std::move(out), {x}, [r, c](Node& self) {
        if (Tensor* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < r; ++i) {
                double gs = 0.0;
                for (std::size_t j = 0; j < c; ++j) gs += self.grad[i * c + j];
                for (std::size_t j = 0; j < c; ++j)
                    (*g)[i * c + j] += self.grad[i * c + j] - std::exp(self.value[i * c + j]) * gs;
            }
    });
}

/// Row-wise L2 normalization. Zero rows are a numeric error.
inline Var l2_normalize_rows(const Var& x) {
    const std::size_t r = x.value().rows(), c = x.value().cols();
    Tensor out = x.value();
    std::vector<double> norms(r);
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += out[i * c + j] * out[i * c + j];
        norms[i] = std::sqrt(s);
        if (!(norms[i] > 0.0) || !std::isfinite(norms[i]))
            throw NumericError("l2_normalize_rows: row " + std::to_string(i) + " has zero or non-finite norm");
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= norms[i];
    }
    return make_result(std::move(out), {x}, [r, c, norms = std::move(norms)](Node& self) {
        if (Tensor* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < r; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < c; ++j) dot += self.grad[i * c + j] * self.value[i * c + j];
                for (std::size_t j = 0; j < c; ++j)
                    (*g)[i * c + j] += (self.grad[i * c + j] - dot * self.value[i * c + j]) / norms[i];
            }
    });
}

/// Per-row dot products of A, B [R,C] as [R].
inline Var rowwise_dot(const Var& a, const Var& b) {
    detail::require_same(a, b, "rowwise_dot");
    const std::size_t r = a.value().rows(), c = a.value().cols();
    Tensor out({r});
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += a.value()[i * c + j] * b.value()[i * c + j];
        out[i] = s;
    }
    return make_result(std::move(out), {a, b}, [r, c](Node& self) {
        const auto& av = parent_value(self, 0);
        const auto& bv = parent_value(self, 1);
        if (Tensor* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[i] * bv[i * c + j];
        if (Tensor* g = parent_grad(self, 1))
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[i] * av[i * c + j];
    });
}

/// Squared Euclidean distances between all rows of X [N,D], as [N,N].
inline Var pairwise_sq_dist(const Var& x) {
    detail::require_2d(x, "pairwise_sq_dist");
    const std::size_t n = x.dim(0), d = x.dim(1);
    Tensor out({n, n});
    const auto& xv = x.value();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = xv[i * d + k] - xv[j * d + k];
                s += diff * diff;
            }
            out[i * n + j] = s;
        }
    return make_result(std::move(out), {x}, [n, d](Node& self) {
        if (Tensor* g = parent_grad(self, 0)) {
            const auto& xv = parent_value(self, 0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const double gij = self.grad[i * n + j];
                    if (gij == 0.0 || i == j) continue;
                    for (std::size_t k = 0; k < d; ++k) {
                        const double diff = 2.0 * gij * (xv[i * d + k] - xv[j * d + k]);
                        (*g)[i * d + k] += diff;
                        (*g)[j * d + k] -= diff;
                    }
                }
        }
    });
}

/// Per-block Gram matrices: X is [B*P, D] made of B blocks of P rows; the
/// result [B*P, P] holds X_b X_b^T for each block.
inline Var block_gram(const Var& x, std::size_t blocks) {
    detail::require_2d(x, "block_gram");
    const std::size_t rows = x.dim(0), d = x.dim(1);
    if (blocks == 0 || rows % blocks != 0) throw ShapeError("block_gram: rows not divisible by blocks");
    const std::size_t p = rows / blocks;
    Tensor out({rows, p});
    for (std::size_t b = 0; b < blocks; ++b) {
        auto xb = ConstMatMap(x.value().data() + b * p * d, static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(d));
        MatMap(out.data() + b * p * p, static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p)).noalias() = xb * xb.transpose();
    }
    return make_result(std::move(out), {x}, [blocks, p, d](Node& self) {
        if (Tensor* g = parent_grad(self, 0))
            for (std::size_t b = 0; b < blocks; ++b) {
                auto xb = ConstMatMap(parent_value(self, 0).data() + b * p * d, static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(d));
                auto gb = ConstMatMap(self.grad.data() + b * p * p, static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
                MatMap(g->data() + b * p * d, static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(d)).noalias() +=
                    (gb + gb.transpose()) * xb;
            }
    });
}

}  // namespace crosscam::ag
