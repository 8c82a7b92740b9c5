#include "conqar/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "conqar/errors.hpp"

namespace conqar {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_string(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

// c[m x p] += a[m x k] * b[k x p]
void gemm_acc(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
              std::size_t k, std::size_t p) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c.data() + i * p;
        for (std::size_t t = 0; t < k; ++t) {
            const double av = a[i * k + t];
            if (av == 0.0) continue;
            const double* brow = b.data() + t * p;
            for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

Activation parse_activation(std::string_view name) {
    if (name == "relu") return Activation::Relu;
    if (name == "elu") return Activation::Elu;
    if (name == "identity") return Activation::Identity;
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation kind) {
    switch (kind) {
        case Activation::Relu: return "relu";
        case Activation::Elu: return "elu";
        case Activation::Identity: return "identity";
    }
    return "?";
}

Pooling parse_pooling(std::string_view name) {
    if (name == "mean") return Pooling::Mean;
    if (name == "max") return Pooling::Max;
    throw ConfigError("unknown pooling '" + std::string(name) + "'");
}

std::string_view to_string(Pooling kind) { return kind == Pooling::Mean ? "mean" : "max"; }

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                             shape_string(b.shape()));
    }
    const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
    Tensor out = tape.make_output({m, p}, {&a, &b});
    gemm_acc(a.data(), b.data(), out.data(), m, k, p);
    if (out.requires_grad()) {
        tape.record("matmul", out, [a, b, out, m, k, p]() {
            auto dc = out.grad();
            if (a.requires_grad()) {
                // dA = dC * B^T
                auto da = a.grad();
                auto bv = b.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t t = 0; t < k; ++t) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < p; ++j) acc += dc[i * p + j] * bv[t * p + j];
                        da[i * k + t] += acc;
                    }
            }
            if (b.requires_grad()) {
                // dB = A^T * dC
                auto db = b.grad();
                auto av = a.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t t = 0; t < k; ++t) {
                        const double w = av[i * k + t];
                        if (w == 0.0) continue;
                        for (std::size_t j = 0; j < p; ++j) db[t * p + j] += w * dc[i * p + j];
                    }
            }
        });
    }
    return out;
}

Tensor matvec(Tape& tape, const Tensor& a, const Tensor& x) {
    if (a.rank() != 2 || x.rank() != 1 || a.cols() != x.dim(0)) {
        throw DimensionError("matvec: incompatible shapes " + shape_string(a.shape()) + " and " +
                             shape_string(x.shape()));
    }
    const std::size_t m = a.rows(), k = a.cols();
    Tensor out = tape.make_output({m}, {&a, &x});
    auto av = a.data();
    auto xv = x.data();
    auto ov = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t t = 0; t < k; ++t) acc += av[i * k + t] * xv[t];
        ov[i] = acc;
    }
    if (out.requires_grad()) {
        tape.record("matvec", out, [a, x, out, m, k]() {
            auto dy = out.grad();
            if (a.requires_grad()) {
                auto da = a.grad();
                auto xv = x.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t t = 0; t < k; ++t) da[i * k + t] += dy[i] * xv[t];
            }
            if (x.requires_grad()) {
                auto dx = x.grad();
                auto av = a.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t t = 0; t < k; ++t) dx[t] += av[i * k + t] * dy[i];
            }
        });
    }
    return out;
}

Tensor transpose(Tape& tape, const Tensor& a) {
    require_rank(a, 2, "transpose");
    const std::size_t r = a.rows(), c = a.cols();
    Tensor out = tape.make_output({c, r}, {&a});
    auto av = a.data();
    auto ov = out.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ov[j * r + i] = av[i * c + j];
    if (out.requires_grad()) {
        tape.record("transpose", out, [a, out, r, c]() {
            auto da = a.grad();
            auto dy = out.grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) da[i * c + j] += dy[j * r + i];
        });
    }
    return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = tape.make_output(a.shape(), {&a, &b});
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    if (out.requires_grad()) {
        tape.record("add", out, [a, b, out]() {
            auto dy = out.grad();
            if (a.requires_grad())
                for (std::size_t i = 0; i < dy.size(); ++i) a.grad()[i] += dy[i];
            if (b.requires_grad())
                for (std::size_t i = 0; i < dy.size(); ++i) b.grad()[i] += dy[i];
        });
    }
    return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = tape.make_output(a.shape(), {&a, &b});
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    if (out.requires_grad()) {
        tape.record("sub", out, [a, b, out]() {
            auto dy = out.grad();
            if (a.requires_grad())
                for (std::size_t i = 0; i < dy.size(); ++i) a.grad()[i] += dy[i];
            if (b.requires_grad())
                for (std::size_t i = 0; i < dy.size(); ++i) b.grad()[i] -= dy[i];
        });
    }
    return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = tape.make_output(a.shape(), {&a, &b});
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    if (out.requires_grad()) {
        tape.record("mul", out, [a, b, out]() {
            auto dy = out.grad();
            if (a.requires_grad())
                for (std::size_t i = 0; i < dy.size(); ++i) a.grad()[i] += dy[i] * b[i];
            if (b.requires_grad())
                for (std::size_t i = 0; i < dy.size(); ++i) b.grad()[i] += dy[i] * a[i];
        });
    }
    return out;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
    Tensor out = tape.make_output(a.shape(), {&a});
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * factor;
    if (out.requires_grad()) {
        tape.record("scale", out, [a, out, factor]() {
            auto dy = out.grad();
            auto da = a.grad();
            for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * factor;
        });
    }
    return out;
}

Tensor add_scalar(Tape& tape, const Tensor& a, double offset) {
    Tensor out = tape.make_output(a.shape(), {&a});
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + offset;
    if (out.requires_grad()) {
        tape.record("add_scalar", out, [a, out]() {
            auto dy = out.grad();
            auto da = a.grad();
            for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
        });
    }
    return out;
}

Tensor square(Tape& tape, const Tensor& a) {
    Tensor out = tape.make_output(a.shape(), {&a});
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * a[i];
    if (out.requires_grad()) {
        tape.record("square", out, [a, out]() {
            auto dy = out.grad();
            auto da = a.grad();
            for (std::size_t i = 0; i < dy.size(); ++i) da[i] += 2.0 * a[i] * dy[i];
        });
    }
    return out;
}

Tensor sum(Tape& tape, const Tensor& a) {
    Tensor out = tape.make_output({1}, {&a});
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    out[0] = acc;
    if (out.requires_grad()) {
        tape.record("sum", out, [a, out]() {
            const double g = out.grad()[0];
            for (double& d : a.grad()) d += g;
        });
    }
    return out;
}

Tensor mean(Tape& tape, const Tensor& a) {
    return scale(tape, sum(tape, a), 1.0 / static_cast<double>(a.size()));
}

Tensor activation(Tape& tape, const Tensor& x, Activation kind) {
    if (kind == Activation::Identity) return x;
    Tensor out = tape.make_output(x.shape(), {&x});
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        if (kind == Activation::Relu) {
            out[i] = v > 0.0 ? v : 0.0;
        } else {
            out[i] = v > 0.0 ? v : std::expm1(v);
        }
    }
    if (out.requires_grad()) {
        tape.record(kind == Activation::Relu ? "relu" : "elu", out, [x, out, kind]() {
            auto dy = out.grad();
            auto dx = x.grad();
            for (std::size_t i = 0; i < dy.size(); ++i) {
                const double v = x[i];
                double slope;
                if (kind == Activation::Relu) {
                    slope = v > 0.0 ? 1.0 : 0.0;
                } else {
                    slope = v >= 0.0 ? 1.0 : std::exp(v);
                }
                dx[i] += slope * dy[i];
            }
        });
    }
    return out;
}

Tensor softmax(Tape& tape, const Tensor& v) {
    require_rank(v, 1, "softmax");
    Tensor out = tape.make_output(v.shape(), {&v});
    const double top = *std::max_element(v.data().begin(), v.data().end());
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - top);
        total += out[i];
    }
    for (double& o : out.data()) o /= total;
    if (out.requires_grad()) {
        tape.record("softmax", out, [v, out]() {
            auto dy = out.grad();
            double dot = 0.0;
            for (std::size_t i = 0; i < dy.size(); ++i) dot += dy[i] * out[i];
            auto dv = v.grad();
            for (std::size_t i = 0; i < dy.size(); ++i) dv[i] += out[i] * (dy[i] - dot);
        });
    }
    return out;
}

namespace {

// Normalizes count strided segments of src into dst; returns norms (0 for the
// zero branch). Element e of segment s lives at s*seg_stride + e*elem_stride.
std::vector<double> normalize_segments(std::span<const double> src, std::span<double> dst, std::size_t count,
                                       std::size_t length, std::size_t seg_stride, std::size_t elem_stride,
                                       double epsilon) {
    std::vector<double> norms(count, 0.0);
    for (std::size_t s = 0; s < count; ++s) {
        double sq = 0.0;
        for (std::size_t e = 0; e < length; ++e) {
            const double v = src[s * seg_stride + e * elem_stride];
            sq += v * v;
        }
        const double norm = std::sqrt(sq);
        if (norm >= epsilon) {
            norms[s] = norm;
            for (std::size_t e = 0; e < length; ++e) {
                const std::size_t idx = s * seg_stride + e * elem_stride;
                dst[idx] = src[idx] / norm;
            }
        } else {
            for (std::size_t e = 0; e < length; ++e) dst[s * seg_stride + e * elem_stride] = 0.0;
        }
    }
    return norms;
}

// dx = (dy - y * <y, dy>) / ||x|| on each non-degenerate segment.
void normalize_segments_backward(std::span<const double> y, std::span<const double> dy, std::span<double> dx,
                                 const std::vector<double>& norms, std::size_t length, std::size_t seg_stride,
                                 std::size_t elem_stride) {
    for (std::size_t s = 0; s < norms.size(); ++s) {
        if (norms[s] == 0.0) continue;
        double dot = 0.0;
        for (std::size_t e = 0; e < length; ++e) {
            const std::size_t idx = s * seg_stride + e * elem_stride;
            dot += y[idx] * dy[idx];
        }
        for (std::size_t e = 0; e < length; ++e) {
            const std::size_t idx = s * seg_stride + e * elem_stride;
            dx[idx] += (dy[idx] - y[idx] * dot) / norms[s];
        }
    }
}

}  // namespace

Tensor l2_normalize(Tape& tape, const Tensor& v, double epsilon) {
    require_rank(v, 1, "l2_normalize");
    if (!(epsilon > 0.0)) throw ConfigError("l2_normalize: epsilon must be positive");
    Tensor out = tape.make_output(v.shape(), {&v});
    auto norms = normalize_segments(v.data(), out.data(), 1, v.size(), 0, 1, epsilon);
    if (out.requires_grad()) {
        tape.record("l2_normalize", out, [v, out, norms = std::move(norms)]() {
            normalize_segments_backward(out.data(), out.grad(), v.grad(), norms, v.size(), 0, 1);
        });
    }
    return out;
}

Tensor normalize_columns(Tape& tape, const Tensor& m, double epsilon) {
    require_rank(m, 2, "normalize_columns");
    if (!(epsilon > 0.0)) throw ConfigError("normalize_columns: epsilon must be positive");
    const std::size_t rows = m.rows(), cols = m.cols();
    Tensor out = tape.make_output(m.shape(), {&m});
    // segment = column: starts at c, elements stride cols
    auto norms = normalize_segments(m.data(), out.data(), cols, rows, 1, cols, epsilon);
    if (out.requires_grad()) {
        tape.record("normalize_columns", out, [m, out, norms = std::move(norms), rows, cols]() {
            normalize_segments_backward(out.data(), out.grad(), m.grad(), norms, rows, 1, cols);
        });
    }
    return out;
}

Tensor scale_columns(Tape& tape, const Tensor& m, const Tensor& weights) {
    require_rank(m, 2, "scale_columns");
    require_rank(weights, 1, "scale_columns");
    if (weights.dim(0) != m.cols()) {
        throw DimensionError("scale_columns: matrix " + shape_string(m.shape()) + " vs weights " +
                             shape_string(weights.shape()));
    }
    const std::size_t rows = m.rows(), cols = m.cols();
    Tensor out = tape.make_output(m.shape(), {&m, &weights});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = m[r * cols + c] * weights[c];
    if (out.requires_grad()) {
        tape.record("scale_columns", out, [m, weights, out, rows, cols]() {
            auto dy = out.grad();
            if (m.requires_grad()) {
                auto dm = m.grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c) dm[r * cols + c] += dy[r * cols + c] * weights[c];
            }
            if (weights.requires_grad()) {
                auto dw = weights.grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c) dw[c] += dy[r * cols + c] * m[r * cols + c];
            }
        });
    }
    return out;
}

Tensor trace(Tape& tape, const Tensor& m) {
    require_rank(m, 2, "trace");
    if (m.rows() != m.cols()) throw DimensionError("trace: matrix not square " + shape_string(m.shape()));
    const std::size_t n = m.rows();
    Tensor out = tape.make_output({1}, {&m});
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += m[i * n + i];
    out[0] = acc;
    if (out.requires_grad()) {
        tape.record("trace", out, [m, out, n]() {
            const double g = out.grad()[0];
            auto dm = m.grad();
            for (std::size_t i = 0; i < n; ++i) dm[i * n + i] += g;
        });
    }
    return out;
}

Tensor diagonal(Tape& tape, const Tensor& m) {
    require_rank(m, 2, "diagonal");
    if (m.rows() != m.cols()) throw DimensionError("diagonal: matrix not square " + shape_string(m.shape()));
    const std::size_t n = m.rows();
    Tensor out = tape.make_output({n}, {&m});
    for (std::size_t i = 0; i < n; ++i) out[i] = m[i * n + i];
    if (out.requires_grad()) {
        tape.record("diagonal", out, [m, out, n]() {
            auto dy = out.grad();
            auto dm = m.grad();
            for (std::size_t i = 0; i < n; ++i) dm[i * n + i] += dy[i];
        });
    }
    return out;
}

namespace {

Tensor pool_axis(Tape& tape, const Tensor& m, Pooling kind, bool over_rows) {
    require_rank(m, 2, over_rows ? "pool_rows" : "pool_cols");
    const std::size_t rows = m.rows(), cols = m.cols();
    const std::size_t outer = over_rows ? rows : cols;
    const std::size_t inner = over_rows ? cols : rows;
    auto index = [=](std::size_t o, std::size_t i) { return over_rows ? o * cols + i : i * cols + o; };

    Tensor out = tape.make_output({outer}, {&m});
    std::vector<std::size_t> argmax(outer, 0);
    for (std::size_t o = 0; o < outer; ++o) {
        if (kind == Pooling::Mean) {
            double acc = 0.0;
            for (std::size_t i = 0; i < inner; ++i) acc += m[index(o, i)];
            out[o] = acc / static_cast<double>(inner);
        } else {
            std::size_t best = 0;
            for (std::size_t i = 1; i < inner; ++i)
                if (m[index(o, i)] > m[index(o, best)]) best = i;
            argmax[o] = best;
            out[o] = m[index(o, best)];
        }
    }
    if (out.requires_grad()) {
        tape.record(over_rows ? "pool_rows" : "pool_cols", out,
                    [m, out, kind, outer, inner, index, argmax = std::move(argmax)]() {
                        auto dy = out.grad();
                        auto dm = m.grad();
                        for (std::size_t o = 0; o < outer; ++o) {
                            if (kind == Pooling::Mean) {
                                const double g = dy[o] / static_cast<double>(inner);
                                for (std::size_t i = 0; i < inner; ++i) dm[index(o, i)] += g;
                            } else {
                                dm[index(o, argmax[o])] += dy[o];
                            }
                        }
                    });
    }
    return out;
}

}  // namespace

Tensor pool_rows(Tape& tape, const Tensor& m, Pooling kind) { return pool_axis(tape, m, kind, true); }
Tensor pool_cols(Tape& tape, const Tensor& m, Pooling kind) { return pool_axis(tape, m, kind, false); }

Tensor concat(Tape& tape, std::span<const Tensor> parts) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    std::size_t total = 0;
    for (const auto& p : parts) total += p.size();
    Tensor out = tape.make_output({total}, parts);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
        offset += p.size();
    }
    if (out.requires_grad()) {
        std::vector<Tensor> inputs(parts.begin(), parts.end());
        tape.record("concat", out, [inputs = std::move(inputs), out]() {
            auto dy = out.grad();
            std::size_t offset = 0;
            for (const auto& p : inputs) {
                if (p.requires_grad()) {
                    auto dp = p.grad();
                    for (std::size_t i = 0; i < p.size(); ++i) dp[i] += dy[offset + i];
                }
                offset += p.size();
            }
        });
    }
    return out;
}

Tensor concat_rows(Tape& tape, std::span<const Tensor> parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    const std::size_t cols = parts.front().cols();
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.cols() != cols) {
            throw DimensionError("concat_rows: shape " + shape_string(p.shape()) + " vs " +
                                 shape_string(parts.front().shape()));
        }
        rows += p.rows();
    }
    if (parts.size() == 1) return parts.front();
    // Row-major storage makes this a plain flat concatenation.
    Tensor out = tape.make_output({rows, cols}, parts);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
        offset += p.size();
    }
    if (out.requires_grad()) {
        std::vector<Tensor> inputs(parts.begin(), parts.end());
        tape.record("concat_rows", out, [inputs = std::move(inputs), out]() {
            auto dy = out.grad();
            std::size_t offset = 0;
            for (const auto& p : inputs) {
                if (p.requires_grad()) {
                    auto dp = p.grad();
                    for (std::size_t i = 0; i < p.size(); ++i) dp[i] += dy[offset + i];
                }
                offset += p.size();
            }
        });
    }
    return out;
}

Tensor embedding_lookup(Tape& tape, const Tensor& table, std::span<const std::int32_t> ids) {
    require_rank(table, 2, "embedding_lookup");
    if (ids.empty()) throw DimensionError("embedding_lookup: empty id list");
    const std::size_t d = table.rows(), vocab = table.cols(), length = ids.size();
    for (std::size_t i = 0; i < length; ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
            throw IndexError("embedding_lookup: token id " + std::to_string(ids[i]) + " at position " +
                             std::to_string(i) + " outside vocabulary of size " + std::to_string(vocab));
        }
    }
    Tensor out = tape.make_output({d, length}, {&table});
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t i = 0; i < length; ++i) out[r * length + i] = table[r * vocab + ids[i]];
    if (out.requires_grad()) {
        std::vector<std::int32_t> idx(ids.begin(), ids.end());
        tape.record("embedding_lookup", out, [table, out, idx = std::move(idx), d, vocab, length]() {
            auto dy = out.grad();
            auto dt = table.grad();
            for (std::size_t r = 0; r < d; ++r)
                for (std::size_t i = 0; i < length; ++i) dt[r * vocab + idx[i]] += dy[r * length + i];
        });
    }
    return out;
}

Tensor conv1d_same(Tape& tape, const Tensor& x, const Tensor& weights, const Tensor& bias) {
    require_rank(x, 2, "conv1d_same");
    if (weights.rank() != 3 || weights.dim(1) != x.rows() || bias.rank() != 1 || bias.dim(0) != weights.dim(0)) {
        throw DimensionError("conv1d_same: input " + shape_string(x.shape()) + ", weights " +
                             shape_string(weights.shape()) + ", bias " + shape_string(bias.shape()));
    }
    const std::size_t d = x.rows(), length = x.cols();
    const std::size_t filters = weights.dim(0), window = weights.dim(2);
    Tensor out = tape.make_output({filters, length}, {&x, &weights, &bias});
    auto xv = x.data();
    auto wv = weights.data();
    auto ov = out.data();
    for (std::size_t s = 0; s < filters; ++s) {
        double* orow = ov.data() + s * length;
        for (std::size_t i = 0; i < length; ++i) orow[i] = bias[s];
        for (std::size_t r = 0; r < d; ++r) {
            const double* xrow = xv.data() + r * length;
            for (std::size_t k = 0; k < window; ++k) {
                const double w = wv[(s * d + r) * window + k];
                // positions i with i + k < length; the rest read padding
                for (std::size_t i = 0; i + k < length; ++i) orow[i] += w * xrow[i + k];
            }
        }
    }
    if (out.requires_grad()) {
        tape.record("conv1d_same", out, [x, weights, bias, out, d, length, filters, window]() {
            auto dy = out.grad();
            auto xv = x.data();
            auto wv = weights.data();
            for (std::size_t s = 0; s < filters; ++s) {
                const double* grow = dy.data() + s * length;
                if (bias.requires_grad()) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < length; ++i) acc += grow[i];
                    bias.grad()[s] += acc;
                }
                for (std::size_t r = 0; r < d; ++r) {
                    const double* xrow = xv.data() + r * length;
                    for (std::size_t k = 0; k < window; ++k) {
                        const std::size_t widx = (s * d + r) * window + k;
                        if (weights.requires_grad()) {
                            double acc = 0.0;
                            for (std::size_t i = 0; i + k < length; ++i) acc += grow[i] * xrow[i + k];
                            weights.grad()[widx] += acc;
                        }
                        if (x.requires_grad()) {
                            double* dxrow = x.grad().data() + r * length;
                            const double w = wv[widx];
                            for (std::size_t i = 0; i + k < length; ++i) dxrow[i + k] += grow[i] * w;
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor dropout(Tape& tape, const Tensor& x, double rate, std::mt19937_64& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
    if (rate == 0.0) return x;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> keep(x.size());
    const double scale_kept = 1.0 / (1.0 - rate);
    for (double& k : keep) k = unit(rng) >= rate ? scale_kept : 0.0;
    Tensor out = tape.make_output(x.shape(), {&x});
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * keep[i];
    if (out.requires_grad()) {
        tape.record("dropout", out, [x, out, keep = std::move(keep)]() {
            auto dy = out.grad();
            auto dx = x.grad();
            for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * keep[i];
        });
    }
    return out;
}

double gradient_check(const LossFunction& loss_fn, std::span<Tensor> params, double step) {
    if (step < 1e-6 || step > 1e-4) throw ConfigError("gradient_check: step must lie in [1e-6, 1e-4]");

    auto evaluate = [&]() {
        Tape tape(Tape::Mode::NoGrad);
        return loss_fn(tape).item();
    };

    const double first = evaluate();
    const double second = evaluate();
    if (first != second) {
        throw NumericError("gradient_check: loss function is not deterministic (" + std::to_string(first) +
                           " vs " + std::to_string(second) + "); disable dropout");
    }

    for (auto& p : params) {
        if (!p.requires_grad()) p.set_requires_grad(true);
        p.zero_grad();
    }
    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        Tensor loss = loss_fn(tape);
        tape.backward(loss);
        for (const auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());
    }

    double worst = 0.0;
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto values = params[t].data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + step;
            const double up = evaluate();
            values[i] = saved - step;
            const double down = evaluate();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double err = std::abs(analytic[t][i] - numeric) / std::max(1.0, std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace conqar
