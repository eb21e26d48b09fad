#include "prunecoder/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <thread>

#include "prunecoder/rng.hpp"

namespace prunecoder::ops {

namespace {

std::atomic<int> g_num_threads{1};

void require_rank2(const Shape& s, const char* what) {
    if (s.size() != 2) throw UsageError(std::string(what) + " expects a rank-2 tensor, got " + shape_string(s));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw UsageError(std::string(what) + ": shape " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

// C[rows begin..end) = A * B, accumulating k in increasing order for every element.
template <typename T>
void matmul_rows(const T* a, const T* b, T* c, std::size_t row_begin, std::size_t row_end,
                 std::size_t k, std::size_t n) {
    for (std::size_t i = row_begin; i < row_end; ++i) {
        T* ci = c + i * n;
        std::fill(ci, ci + n, T{0});
        const T* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = ai[p];
            const T* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

struct AxisView {
    std::size_t outer;
    std::size_t len;
    std::size_t inner;
};

AxisView axis_view(const Shape& shape, int axis) {
    const int rank = static_cast<int>(shape.size());
    if (rank == 0) throw UsageError("softmax requires rank >= 1");
    const int a = axis < 0 ? axis + rank : axis;
    if (a < 0 || a >= rank) throw UsageError("softmax axis " + std::to_string(axis) + " out of range");
    AxisView v{1, shape[static_cast<std::size_t>(a)], 1};
    for (int i = 0; i < a; ++i) v.outer *= shape[static_cast<std::size_t>(i)];
    for (int i = a + 1; i < rank; ++i) v.inner *= shape[static_cast<std::size_t>(i)];
    return v;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

void set_num_threads(int n) { g_num_threads.store(std::max(1, n)); }
int num_threads() { return g_num_threads.load(); }

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    require_rank2(a.shape(), "transpose");
    const std::size_t r = a.dim(0), c = a.dim(1);
    Tensor<T> out({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
    return out;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require_rank2(a.shape(), "matmul");
    require_rank2(b.shape(), "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw UsageError("matmul inner dimensions disagree: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
    }
    Tensor<T> c({m, n});
    const int threads = std::min<int>(num_threads(), static_cast<int>(m));
    if (threads <= 1 || m * k * n < (1u << 16)) {
        matmul_rows(a.data().data(), b.data().data(), c.data().data(), 0, m, k, n);
    } else {
        std::vector<std::jthread> workers;
        const std::size_t chunk = (m + threads - 1) / threads;
        for (int t = 0; t < threads; ++t) {
            const std::size_t begin = t * chunk;
            const std::size_t end = std::min(m, begin + chunk);
            if (begin >= end) break;
            workers.emplace_back([&, begin, end] {
                matmul_rows(a.data().data(), b.data().data(), c.data().data(), begin, end, k, n);
            });
        }
    }
    require_finite(c, "matmul");
    return c;
}

template <typename T>
MatmulGrads<T> matmul_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& dc) {
    if (dc.shape() != Shape{a.dim(0), b.dim(1)}) throw UsageError("matmul_backward: gradient shape mismatch");
    return {matmul(dc, transpose(b)), matmul(transpose(a), dc)};
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    require_rank2(weight.shape(), "linear weight");
    if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) throw UsageError("linear: bias length mismatch");
    if (x.cols() != weight.dim(1)) {
        throw UsageError("linear: input " + shape_string(x.shape()) + " vs weight " + shape_string(weight.shape()));
    }
    const Tensor<T> x2 = x.rank() == 2 ? x : x.reshaped({x.rows(), x.cols()});
    Tensor<T> y = matmul(x2, transpose(weight));
    const std::size_t out = weight.dim(0);
    for (std::size_t r = 0; r < y.rows(); ++r) {
        auto row = y.row(r);
        for (std::size_t j = 0; j < out; ++j) row[j] += bias[j];
    }
    require_finite(y, "linear");
    if (x.rank() == 2) return y;
    Shape s = x.shape();
    s.back() = out;
    return y.reshaped(std::move(s));
}

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy) {
    const std::size_t out = weight.dim(0);
    if (dy.cols() != out || dy.rows() != x.rows()) throw UsageError("linear_backward: gradient shape mismatch");
    const Tensor<T> x2 = x.reshaped({x.rows(), x.cols()});
    const Tensor<T> dy2 = dy.reshaped({dy.rows(), out});
    LinearGrads<T> g{matmul(dy2, weight).reshaped(x.shape()), matmul(transpose(dy2), x2), Tensor<T>({out})};
    for (std::size_t r = 0; r < dy2.rows(); ++r) {
        auto row = dy2.row(r);
        for (std::size_t j = 0; j < out; ++j) g.dbias[j] += row[j];
    }
    return g;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
    const AxisView v = axis_view(x.shape(), axis);
    Tensor<T> y(x.shape());
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t in = 0; in < v.inner; ++in) {
            const std::size_t base = o * v.len * v.inner + in;
            T mx = -std::numeric_limits<T>::infinity();
            for (std::size_t i = 0; i < v.len; ++i) mx = std::max(mx, x[base + i * v.inner]);
            double sum = 0.0;
            for (std::size_t i = 0; i < v.len; ++i) {
                const T e = std::exp(x[base + i * v.inner] - mx);
                y[base + i * v.inner] = e;
                sum += e;
            }
            for (std::size_t i = 0; i < v.len; ++i) {
                y[base + i * v.inner] = static_cast<T>(y[base + i * v.inner] / sum);
            }
        }
    }
    require_finite(y, "softmax");
    return y;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& dy, int axis) {
    require_same_shape(y, dy, "softmax_backward");
    const AxisView v = axis_view(y.shape(), axis);
    Tensor<T> dx(y.shape());
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t in = 0; in < v.inner; ++in) {
            const std::size_t base = o * v.len * v.inner + in;
            double dot = 0.0;
            for (std::size_t i = 0; i < v.len; ++i) {
                const std::size_t idx = base + i * v.inner;
                dot += static_cast<double>(y[idx]) * dy[idx];
            }
            for (std::size_t i = 0; i < v.len; ++i) {
                const std::size_t idx = base + i * v.inner;
                dx[idx] = static_cast<T>(y[idx] * (dy[idx] - dot));
            }
        }
    }
    return dx;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
    const std::size_t n = x.cols();
    if (gamma.size() != n || beta.size() != n) throw UsageError("layer_norm: gamma/beta length mismatch");
    Tensor<T> y(x.shape());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto in = x.row(r);
        auto out = y.row(r);
        double mean = 0.0;
        for (T v : in) mean += v;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (T v : in) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n);
        const double rstd = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            out[j] = static_cast<T>(gamma[j] * ((in[j] - mean) * rstd) + beta[j]);
        }
    }
    require_finite(y, "layer_norm");
    return y;
}

template <typename T>
LayerNormGrads<T> layer_norm_backward(const Tensor<T>& x, const Tensor<T>& gamma, double eps,
                                      const Tensor<T>& dy) {
    require_same_shape(x, dy, "layer_norm_backward");
    const std::size_t n = x.cols();
    LayerNormGrads<T> g{Tensor<T>(x.shape()), Tensor<T>({n}), Tensor<T>({n})};
    std::vector<double> xhat(n), dxhat(n);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto in = x.row(r);
        const auto dout = dy.row(r);
        double mean = 0.0;
        for (T v : in) mean += v;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (T v : in) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n);
        const double rstd = 1.0 / std::sqrt(var + eps);
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            xhat[j] = (in[j] - mean) * rstd;
            dxhat[j] = static_cast<double>(dout[j]) * gamma[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xhat[j];
            g.dgamma[j] += static_cast<T>(dout[j] * xhat[j]);
            g.dbeta[j] += dout[j];
        }
        mean_dxhat /= static_cast<double>(n);
        mean_dxhat_xhat /= static_cast<double>(n);
        auto dx = g.dx.row(r);
        for (std::size_t j = 0; j < n; ++j) {
            dx[j] = static_cast<T>(rstd * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat));
        }
    }
    return g;
}

template <typename T>
T gelu(T x) {
    return static_cast<T>(x * normal_cdf(x));
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu(x[i]);
    require_finite(y, "gelu");
    return y;
}

template <typename T>
Tensor<T> gelu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
    require_same_shape(x, dy, "gelu_backward");
    Tensor<T> dx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        dx[i] = static_cast<T>(dy[i] * (normal_cdf(v) + v * normal_pdf(v)));
    }
    return dx;
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
    return y;
}

template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& y, const Tensor<T>& dy) {
    require_same_shape(y, dy, "tanh_backward");
    Tensor<T> dx(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * (T{1} - y[i] * y[i]);
    return dx;
}

template <typename T>
CrossEntropy<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
    require_rank2(logits.shape(), "cross_entropy");
    const std::size_t batch = logits.dim(0), classes = logits.dim(1);
    if (labels.size() != batch) throw UsageError("cross_entropy: label count does not match batch size");
    CrossEntropy<T> ce{T{0}, Tensor<T>(logits.shape())};
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const int label = labels[b];
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw UsageError("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                             std::to_string(classes) + ")");
        }
        const auto z = logits.row(b);
        const double mx = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (T v : z) sum += std::exp(v - mx);
        const double lse = mx + std::log(sum);
        const double zy = z[static_cast<std::size_t>(label)];
        if (zy == mx) {
            // log1p keeps full relative precision for confident correct predictions
            double rest = 0.0;
            for (std::size_t c = 0; c < classes; ++c) {
                if (c != static_cast<std::size_t>(label)) rest += std::exp(z[c] - zy);
            }
            total += std::log1p(rest);
        } else {
            total += lse - zy;
        }
        auto g = ce.dlogits.row(b);
        for (std::size_t c = 0; c < classes; ++c) {
            const double p = std::exp(z[c] - lse);
            g[c] = static_cast<T>((p - (c == static_cast<std::size_t>(label) ? 1.0 : 0.0)) / batch);
        }
    }
    ce.loss = static_cast<T>(total / static_cast<double>(batch));
    if (!std::isfinite(ce.loss)) throw NumericError("non-finite cross-entropy loss");
    return ce;
}

template <typename T>
DropoutResult<T> dropout(const Tensor<T>& x, double p, DropoutKey key) {
    if (p < 0.0 || p >= 1.0) throw UsageError("dropout probability must lie in [0, 1)");
    DropoutResult<T> r{x, Tensor<T>(x.shape(), T{1})};
    if (p == 0.0) return r;
    const std::uint64_t base = mix_keys({key.seed, key.step, key.tensor_id});
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    for (std::size_t i = 0; i < x.size(); ++i) {
        const bool keep = to_unit(splitmix64(base ^ (i * 0x9e3779b97f4a7c15ULL))) >= p;
        r.scale[i] = keep ? keep_scale : T{0};
        r.output[i] = x[i] * r.scale[i];
    }
    return r;
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "hadamard");
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& x) {
    if (acc.size() != x.size()) throw UsageError("add_inplace: size mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) acc[i] += x[i];
}

template <typename T>
Dual<T> dual_matmul(const Tensor<T>& a, const Tensor<T>& b) {
    return {matmul(a, b), [a, b](const Tensor<T>& dc) {
                auto g = matmul_backward(a, b, dc);
                return std::vector<Tensor<T>>{std::move(g.da), std::move(g.db)};
            }};
}

template <typename T>
Dual<T> dual_linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    return {linear(x, weight, bias), [x, weight](const Tensor<T>& dy) {
                auto g = linear_backward(x, weight, dy);
                return std::vector<Tensor<T>>{std::move(g.dx), std::move(g.dweight), std::move(g.dbias)};
            }};
}

template <typename T>
Dual<T> dual_softmax(const Tensor<T>& x, int axis) {
    Tensor<T> y = softmax(x, axis);
    return {y, [y, axis](const Tensor<T>& dy) { return std::vector<Tensor<T>>{softmax_backward(y, dy, axis)}; }};
}

template <typename T>
Dual<T> dual_layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
    return {layer_norm(x, gamma, beta, eps), [x, gamma, eps](const Tensor<T>& dy) {
                auto g = layer_norm_backward(x, gamma, eps, dy);
                return std::vector<Tensor<T>>{std::move(g.dx), std::move(g.dgamma), std::move(g.dbeta)};
            }};
}

template <typename T>
Dual<T> dual_gelu(const Tensor<T>& x) {
    return {gelu(x), [x](const Tensor<T>& dy) { return std::vector<Tensor<T>>{gelu_backward(x, dy)}; }};
}

template <typename T>
Dual<T> dual_tanh(const Tensor<T>& x) {
    Tensor<T> y = tanh(x);
    return {y, [y](const Tensor<T>& dy) { return std::vector<Tensor<T>>{tanh_backward(y, dy)}; }};
}

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const Primitive& primitive, const std::vector<TensorD>& point, double h,
                           std::uint64_t probe_seed) {
    const Dual<double> at = primitive(point);
    Rng rng(probe_seed);
    TensorD probe(at.output.shape());
    for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = rng.normal();
    const std::vector<TensorD> analytic = at.backward(probe);
    if (analytic.size() != point.size()) throw UsageError("grad_check: backward returned wrong arity");

    auto projected = [&](const std::vector<TensorD>& inputs) {
        const TensorD out = primitive(inputs).output;
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * probe[i];
        return s;
    };

    GradCheckResult result;
    std::vector<TensorD> work = point;
    for (std::size_t t = 0; t < work.size(); ++t) {
        if (analytic[t].shape() != point[t].shape()) throw UsageError("grad_check: gradient shape mismatch");
        for (std::size_t i = 0; i < work[t].size(); ++i) {
            const double orig = work[t][i];
            work[t][i] = orig + h;
            const double plus = projected(work);
            work[t][i] = orig - h;
            const double minus = projected(work);
            work[t][i] = orig;
            const double err = relative_error(analytic[t][i], (plus - minus) / (2.0 * h));
            ++result.coordinates;
            if (err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst_input = t;
                result.worst_index = i;
            }
        }
    }
    return result;
}

GradCheckResult grad_check_scalar(const std::function<double(std::span<const double>)>& loss,
                                  std::span<const double> point, std::span<const double> analytic,
                                  double h) {
    if (point.size() != analytic.size()) throw UsageError("grad_check_scalar: gradient length mismatch");
    GradCheckResult result;
    std::vector<double> work(point.begin(), point.end());
    for (std::size_t i = 0; i < work.size(); ++i) {
        const double orig = work[i];
        work[i] = orig + h;
        const double plus = loss(work);
        work[i] = orig - h;
        const double minus = loss(work);
        work[i] = orig;
        const double err = relative_error(analytic[i], (plus - minus) / (2.0 * h));
        ++result.coordinates;
        if (err > result.max_rel_error) {
            result.max_rel_error = err;
            result.worst_index = i;
        }
    }
    return result;
}

#define PRUNECODER_INSTANTIATE_OPS(T)                                                                  \
    template Tensor<T> transpose(const Tensor<T>&);                                                    \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                     \
    template MatmulGrads<T> matmul_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
    template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                   \
    template LinearGrads<T> linear_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
    template Tensor<T> softmax(const Tensor<T>&, int);                                                 \
    template Tensor<T> softmax_backward(const Tensor<T>&, const Tensor<T>&, int);                      \
    template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);       \
    template LayerNormGrads<T> layer_norm_backward(const Tensor<T>&, const Tensor<T>&, double,         \
                                                   const Tensor<T>&);                                  \
    template T gelu(T);                                                                                \
    template Tensor<T> gelu(const Tensor<T>&);                                                         \
    template Tensor<T> gelu_backward(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> tanh(const Tensor<T>&);                                                         \
    template Tensor<T> tanh_backward(const Tensor<T>&, const Tensor<T>&);                              \
    template CrossEntropy<T> cross_entropy(const Tensor<T>&, std::span<const int>);                    \
    template DropoutResult<T> dropout(const Tensor<T>&, double, DropoutKey);                           \
    template Tensor<T> hadamard(const Tensor<T>&, const Tensor<T>&);                                   \
    template void add_inplace(Tensor<T>&, const Tensor<T>&);                                           \
    template Dual<T> dual_matmul(const Tensor<T>&, const Tensor<T>&);                                  \
    template Dual<T> dual_linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                \
    template Dual<T> dual_softmax(const Tensor<T>&, int);                                              \
    template Dual<T> dual_layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);    \
    template Dual<T> dual_gelu(const Tensor<T>&);                                                      \
    template Dual<T> dual_tanh(const Tensor<T>&);

PRUNECODER_INSTANTIATE_OPS(float)
PRUNECODER_INSTANTIATE_OPS(double)

#undef PRUNECODER_INSTANTIATE_OPS

}  // namespace prunecoder::ops
