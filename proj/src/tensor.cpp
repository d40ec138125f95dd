#include "wxgen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "wxgen/error.hpp"

namespace wxgen {

namespace {

thread_local bool g_grad_enabled = true;

using Impl = detail::TensorImpl;
using ImplPtr = std::shared_ptr<Impl>;

size_t checked_numel(const std::vector<size_t>& shape) {
    if (shape.empty()) throw ValidationError("tensor shape must have at least one extent");
    size_t n = 1;
    for (size_t e : shape) {
        if (e == 0) throw ValidationError("tensor extents must be positive, got " + shape_str(shape));
        n *= e;
    }
    return n;
}

void ensure_grad(Impl& node) {
    if (node.grad.empty()) node.grad.assign(node.data.size(), 0.0);
}

bool tracked(const ImplPtr& node) { return node && node->requires_grad; }

// Builds the output tensor for an op; wires graph edges when tracking is on.
// The caller installs the backprop closure on the result iff requires_grad().
Tensor make_output(std::vector<size_t> shape, std::vector<double> data,
                   std::vector<ImplPtr> parents) {
    auto impl = std::make_shared<Impl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    bool track = false;
    if (g_grad_enabled)
        for (const auto& p : parents)
            if (tracked(p)) track = true;
    if (track) {
        impl->requires_grad = true;
        impl->parents = std::move(parents);
    }
    return Tensor(std::move(impl));
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ValidationError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                              " vs " + shape_str(b.shape()));
}

// Range of loop indices o such that 0 <= o*stride - pad + k < lin_extent.
void strided_range(long lin_extent, long loop_extent, long stride, long pad, long k, long& lo,
                   long& hi) {
    long a = pad - k;  // need o*stride >= a
    lo = a <= 0 ? 0 : (a + stride - 1) / stride;
    long b = lin_extent - 1 + pad - k;  // need o*stride <= b
    hi = b < 0 ? -1 : b / stride;
    if (hi > loop_extent - 1) hi = loop_extent - 1;
}

struct ConvGeom {
    long n, ci, d, h, w;        // input
    long co, kd, kh, kw;        // kernel
    long od, oh, ow;            // output spatial
    long stride, pad;
};

size_t xat(const ConvGeom& g, long n, long c, long d, long h, long w) {
    return static_cast<size_t>((((n * g.ci + c) * g.d + d) * g.h + h) * g.w + w);
}
size_t yat(const ConvGeom& g, long n, long c, long d, long h, long w) {
    return static_cast<size_t>((((n * g.co + c) * g.od + d) * g.oh + h) * g.ow + w);
}
// conv3 kernel layout [Co,Ci,kd,kh,kw]
size_t kat_conv(const ConvGeom& g, long co, long ci, long kd, long kh, long kw) {
    return static_cast<size_t>((((co * g.ci + ci) * g.kd + kd) * g.kh + kh) * g.kw + kw);
}
// conv3_transpose kernel layout [Ci,Co,kd,kh,kw]
size_t kat_convt(const ConvGeom& g, long ci, long co, long kd, long kh, long kw) {
    return static_cast<size_t>((((ci * g.co + co) * g.kd + kd) * g.kh + kh) * g.kw + kw);
}

// y[n,co,od,oh,ow] += sum w[co,ci,k] * x[n,ci,od*s-p+kd,...]
void conv3_accum(const double* x, const double* w, double* y, const ConvGeom& g) {
    for (long n = 0; n < g.n; ++n)
        for (long co = 0; co < g.co; ++co)
            for (long ci = 0; ci < g.ci; ++ci)
                for (long kd = 0; kd < g.kd; ++kd) {
                    long dlo, dhi;
                    strided_range(g.d, g.od, g.stride, g.pad, kd, dlo, dhi);
                    for (long kh = 0; kh < g.kh; ++kh) {
                        long hlo, hhi;
                        strided_range(g.h, g.oh, g.stride, g.pad, kh, hlo, hhi);
                        for (long kw = 0; kw < g.kw; ++kw) {
                            long wlo, whi;
                            strided_range(g.w, g.ow, g.stride, g.pad, kw, wlo, whi);
                            double wv = w[kat_conv(g, co, ci, kd, kh, kw)];
                            for (long od = dlo; od <= dhi; ++od) {
                                long id = od * g.stride - g.pad + kd;
                                for (long oh = hlo; oh <= hhi; ++oh) {
                                    long ih = oh * g.stride - g.pad + kh;
                                    const double* xrow = x + xat(g, n, ci, id, ih, 0);
                                    double* yrow = y + yat(g, n, co, od, oh, 0);
                                    long base = -g.pad + kw;
                                    for (long ow = wlo; ow <= whi; ++ow)
                                        yrow[ow] += wv * xrow[ow * g.stride + base];
                                }
                            }
                        }
                    }
                }
}

// dx[n,ci,od*s-p+kd,...] += sum w[co,ci,k] * dy[n,co,od,oh,ow]
void conv3_accum_dx(const double* dy, const double* w, double* dx, const ConvGeom& g) {
    for (long n = 0; n < g.n; ++n)
        for (long co = 0; co < g.co; ++co)
            for (long ci = 0; ci < g.ci; ++ci)
                for (long kd = 0; kd < g.kd; ++kd) {
                    long dlo, dhi;
                    strided_range(g.d, g.od, g.stride, g.pad, kd, dlo, dhi);
                    for (long kh = 0; kh < g.kh; ++kh) {
                        long hlo, hhi;
                        strided_range(g.h, g.oh, g.stride, g.pad, kh, hlo, hhi);
                        for (long kw = 0; kw < g.kw; ++kw) {
                            long wlo, whi;
                            strided_range(g.w, g.ow, g.stride, g.pad, kw, wlo, whi);
                            double wv = w[kat_conv(g, co, ci, kd, kh, kw)];
                            for (long od = dlo; od <= dhi; ++od) {
                                long id = od * g.stride - g.pad + kd;
                                for (long oh = hlo; oh <= hhi; ++oh) {
                                    long ih = oh * g.stride - g.pad + kh;
                                    double* xrow = dx + xat(g, n, ci, id, ih, 0);
                                    const double* yrow = dy + yat(g, n, co, od, oh, 0);
                                    long base = -g.pad + kw;
                                    for (long ow = wlo; ow <= whi; ++ow)
                                        xrow[ow * g.stride + base] += wv * yrow[ow];
                                }
                            }
                        }
                    }
                }
}

// dw[co,ci,k] += sum_n,od,oh,ow dy[n,co,od,oh,ow] * x[n,ci,od*s-p+kd,...]
void conv3_accum_dw(const double* dy, const double* x, double* dw, const ConvGeom& g) {
    for (long co = 0; co < g.co; ++co)
        for (long ci = 0; ci < g.ci; ++ci)
            for (long kd = 0; kd < g.kd; ++kd) {
                long dlo, dhi;
                strided_range(g.d, g.od, g.stride, g.pad, kd, dlo, dhi);
                for (long kh = 0; kh < g.kh; ++kh) {
                    long hlo, hhi;
                    strided_range(g.h, g.oh, g.stride, g.pad, kh, hlo, hhi);
                    for (long kw = 0; kw < g.kw; ++kw) {
                        long wlo, whi;
                        strided_range(g.w, g.ow, g.stride, g.pad, kw, wlo, whi);
                        double acc = 0.0;
                        for (long n = 0; n < g.n; ++n)
                            for (long od = dlo; od <= dhi; ++od) {
                                long id = od * g.stride - g.pad + kd;
                                for (long oh = hlo; oh <= hhi; ++oh) {
                                    long ih = oh * g.stride - g.pad + kh;
                                    const double* xrow = x + xat(g, n, ci, id, ih, 0);
                                    const double* yrow = dy + yat(g, n, co, od, oh, 0);
                                    long base = -g.pad + kw;
                                    for (long ow = wlo; ow <= whi; ++ow)
                                        acc += yrow[ow] * xrow[ow * g.stride + base];
                                }
                            }
                        dw[kat_conv(g, co, ci, kd, kh, kw)] += acc;
                    }
                }
            }
}

// For conv3_transpose the linear expression runs over INPUT coordinates:
// y[n,co,id*s-p+kd,...] += x[n,ci,id,ih,iw] * w[ci,co,k]. Geometry fields keep
// their conv meaning: d/h/w input extents, od/oh/ow output extents.
void convt3_accum(const double* x, const double* w, double* y, const ConvGeom& g) {
    for (long n = 0; n < g.n; ++n)
        for (long ci = 0; ci < g.ci; ++ci)
            for (long co = 0; co < g.co; ++co)
                for (long kd = 0; kd < g.kd; ++kd) {
                    long dlo, dhi;
                    strided_range(g.od, g.d, g.stride, g.pad, kd, dlo, dhi);
                    for (long kh = 0; kh < g.kh; ++kh) {
                        long hlo, hhi;
                        strided_range(g.oh, g.h, g.stride, g.pad, kh, hlo, hhi);
                        for (long kw = 0; kw < g.kw; ++kw) {
                            long wlo, whi;
                            strided_range(g.ow, g.w, g.stride, g.pad, kw, wlo, whi);
                            double wv = w[kat_convt(g, ci, co, kd, kh, kw)];
                            for (long id = dlo; id <= dhi; ++id) {
                                long od = id * g.stride - g.pad + kd;
                                for (long ih = hlo; ih <= hhi; ++ih) {
                                    long oh = ih * g.stride - g.pad + kh;
                                    const double* xrow = x + xat(g, n, ci, id, ih, 0);
                                    double* yrow = y + yat(g, n, co, od, oh, 0);
                                    long base = -g.pad + kw;
                                    for (long iw = wlo; iw <= whi; ++iw)
                                        yrow[iw * g.stride + base] += wv * xrow[iw];
                                }
                            }
                        }
                    }
                }
}

// dx[n,ci,id,ih,iw] += sum w[ci,co,k] * dy[n,co,id*s-p+kd,...]
void convt3_accum_dx(const double* dy, const double* w, double* dx, const ConvGeom& g) {
    for (long n = 0; n < g.n; ++n)
        for (long ci = 0; ci < g.ci; ++ci)
            for (long co = 0; co < g.co; ++co)
                for (long kd = 0; kd < g.kd; ++kd) {
                    long dlo, dhi;
                    strided_range(g.od, g.d, g.stride, g.pad, kd, dlo, dhi);
                    for (long kh = 0; kh < g.kh; ++kh) {
                        long hlo, hhi;
                        strided_range(g.oh, g.h, g.stride, g.pad, kh, hlo, hhi);
                        for (long kw = 0; kw < g.kw; ++kw) {
                            long wlo, whi;
                            strided_range(g.ow, g.w, g.stride, g.pad, kw, wlo, whi);
                            double wv = w[kat_convt(g, ci, co, kd, kh, kw)];
                            for (long id = dlo; id <= dhi; ++id) {
                                long od = id * g.stride - g.pad + kd;
                                for (long ih = hlo; ih <= hhi; ++ih) {
                                    long oh = ih * g.stride - g.pad + kh;
                                    double* xrow = dx + xat(g, n, ci, id, ih, 0);
                                    const double* yrow = dy + yat(g, n, co, od, oh, 0);
                                    long base = -g.pad + kw;
                                    for (long iw = wlo; iw <= whi; ++iw)
                                        xrow[iw] += wv * yrow[iw * g.stride + base];
                                }
                            }
                        }
                    }
                }
}

// dw[ci,co,k] += sum x[n,ci,id,ih,iw] * dy[n,co,id*s-p+kd,...]
void convt3_accum_dw(const double* dy, const double* x, double* dw, const ConvGeom& g) {
    for (long ci = 0; ci < g.ci; ++ci)
        for (long co = 0; co < g.co; ++co)
            for (long kd = 0; kd < g.kd; ++kd) {
                long dlo, dhi;
                strided_range(g.od, g.d, g.stride, g.pad, kd, dlo, dhi);
                for (long kh = 0; kh < g.kh; ++kh) {
                    long hlo, hhi;
                    strided_range(g.oh, g.h, g.stride, g.pad, kh, hlo, hhi);
                    for (long kw = 0; kw < g.kw; ++kw) {
                        long wlo, whi;
                        strided_range(g.ow, g.w, g.stride, g.pad, kw, wlo, whi);
                        double acc = 0.0;
                        for (long n = 0; n < g.n; ++n)
                            for (long id = dlo; id <= dhi; ++id) {
                                long od = id * g.stride - g.pad + kd;
                                for (long ih = hlo; ih <= hhi; ++ih) {
                                    long oh = ih * g.stride - g.pad + kh;
                                    const double* xrow = x + xat(g, n, ci, id, ih, 0);
                                    const double* yrow = dy + yat(g, n, co, od, oh, 0);
                                    long base = -g.pad + kw;
                                    for (long iw = wlo; iw <= whi; ++iw)
                                        acc += xrow[iw] * yrow[iw * g.stride + base];
                                }
                            }
                        dw[kat_convt(g, ci, co, kd, kh, kw)] += acc;
                    }
                }
            }
}

void accum_bias_grad(const double* dy, double* db, long n, long co, long spatial) {
    for (long b = 0; b < n; ++b)
        for (long c = 0; c < co; ++c) {
            const double* row = dy + (b * co + c) * spatial;
            double acc = 0.0;
            for (long i = 0; i < spatial; ++i) acc += row[i];
            db[c] += acc;
        }
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor Tensor::zeros(std::vector<size_t> shape, bool requires_grad) {
    size_t n = checked_numel(shape);
    auto impl = std::make_shared<Impl>();
    impl->shape = std::move(shape);
    impl->data.assign(n, 0.0);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::full(std::vector<size_t> shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.data().begin(), t.data().end(), value);
    return t;
}

Tensor Tensor::from_data(std::vector<size_t> shape, std::vector<double> data,
                         bool requires_grad) {
    size_t n = checked_numel(shape);
    if (n != data.size())
        throw ValidationError("from_data: shape " + shape_str(shape) + " wants " +
                              std::to_string(n) + " values, got " + std::to_string(data.size()));
    auto impl = std::make_shared<Impl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

const std::shared_ptr<detail::TensorImpl>& Tensor::impl() const {
    if (!impl_) throw Error("operation on an empty tensor");
    return impl_;
}

const std::vector<size_t>& Tensor::shape() const { return impl()->shape; }
size_t Tensor::size() const { return impl()->data.size(); }
bool Tensor::requires_grad() const { return impl()->requires_grad; }
std::vector<double>& Tensor::data() { return impl()->data; }
const std::vector<double>& Tensor::data() const { return impl()->data; }
bool Tensor::has_grad() const { return !impl()->grad.empty(); }

std::vector<double>& Tensor::grad() {
    if (!has_grad()) throw Error("tensor has no gradient; run backward first");
    return impl()->grad;
}

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) throw Error("tensor has no gradient; run backward first");
    return impl()->grad;
}

void Tensor::clear_grad() { impl()->grad.clear(); }

double Tensor::item() const {
    if (size() != 1)
        throw ValidationError("item() requires a one-element tensor, got " + shape_str(shape()));
    return data()[0];
}

Tensor Tensor::detached_clone() const {
    auto copy = std::make_shared<Impl>();
    copy->shape = impl()->shape;
    copy->data = impl()->data;
    copy->requires_grad = impl()->requires_grad;
    return Tensor(std::move(copy));
}

std::string shape_str(const std::vector<size_t>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    std::vector<double> out(a.size());
    const auto &da = a.data(), &db = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
    auto ai = a.impl(), bi = b.impl();
    Tensor result = make_output(a.shape(), std::move(out), {ai, bi});
    if (result.requires_grad()) {
        auto* oi = result.impl().get();
        oi->backprop = [ai, bi, oi] {
            const auto& g = oi->grad;
            if (tracked(ai)) {
                ensure_grad(*ai);
                for (size_t i = 0; i < g.size(); ++i) ai->grad[i] += g[i];
            }
            if (tracked(bi)) {
                ensure_grad(*bi);
                for (size_t i = 0; i < g.size(); ++i) bi->grad[i] += g[i];
            }
        };
    }
    return result;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    std::vector<double> out(a.size());
    const auto &da = a.data(), &db = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
    auto ai = a.impl(), bi = b.impl();
    Tensor result = make_output(a.shape(), std::move(out), {ai, bi});
    if (result.requires_grad()) {
        auto* oi = result.impl().get();
        oi->backprop = [ai, bi, oi] {
            const auto& g = oi->grad;
            if (tracked(ai)) {
                ensure_grad(*ai);
                for (size_t i = 0; i < g.size(); ++i) ai->grad[i] += g[i];
            }
            if (tracked(bi)) {
                ensure_grad(*bi);
                for (size_t i = 0; i < g.size(); ++i) bi->grad[i] -= g[i];
            }
        };
    }
    return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    std::vector<double> out(a.size());
    const auto &da = a.data(), &db = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
    auto ai = a.impl(), bi = b.impl();
    Tensor result = make_output(a.shape(), std::move(out), {ai, bi});
    if (result.requires_grad()) {
        auto* oi = result.impl().get();
        oi->backprop = [ai, bi, oi] {
            const auto& g = oi->grad;
            if (tracked(ai)) {
                ensure_grad(*ai);
                for (size_t i = 0; i < g.size(); ++i) ai->grad[i] += g[i] * bi->data[i];
            }
            if (tracked(bi)) {
                ensure_grad(*bi);
                for (size_t i = 0; i < g.size(); ++i) bi->grad[i] += g[i] * ai->data[i];
            }
        };
    }
    return result;
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.size());
    const auto& da = a.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = da[i] * factor;
    auto ai = a.impl();
    Tensor result = make_output(a.shape(), std::move(out), {ai});
    if (result.requires_grad()) {
        auto* oi = result.impl().get();
        oi->backprop = [ai, oi, factor] {
            ensure_grad(*ai);
            for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += factor * oi->grad[i];
        };
    }
    return result;
}

Tensor add_scalar(const Tensor& a, double value) {
    std::vector<double> out(a.size());
    const auto& da = a.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = da[i] + value;
    auto ai = a.impl();
    Tensor result = make_output(a.shape(), std::move(out), {ai});
    if (result.requires_grad()) {
        auto* oi = result.impl().get();
        oi->backprop = [ai, oi] {
            ensure_grad(*ai);
            for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
        };
    }
    return result;
}

Tensor exp(const Tensor& a) {
    std::vector<double> out(a.size());
    const auto& da = a.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(da[i]);
    auto ai = a.impl();
    Tensor result = make_output(a.shape(), std::move(out), {ai});
    if (result.requires_grad()) {
        auto* oi = result.impl().get();
        oi->backprop = [ai, oi] {
            ensure_grad(*ai);
            for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i] * oi->data[i];
        };
    }
    return result;
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.size());
    const auto& da = a.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = da[i] > 0.0 ? da[i] : 0.0;
    auto ai = a.impl();
    Tensor result = make_output(a.shape(), std::move(out), {ai});
    if (result.requires_grad()) {
        auto* oi = result.impl().get();
        oi->backprop = [ai, oi] {
            ensure_grad(*ai);
            for (size_t i = 0; i < oi->grad.size(); ++i)
                if (ai->data[i] > 0.0) ai->grad[i] += oi->grad[i];
        };
    }
    return result;
}

Tensor softplus(const Tensor& a) {
    std::vector<double> out(a.size());
    const auto& da = a.data();
    for (size_t i = 0; i < out.size(); ++i) {
        double x = da[i];
        out[i] = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    }
    auto ai = a.impl();
    Tensor result = make_output(a.shape(), std::move(out), {ai});
    if (result.requires_grad()) {
        auto* oi = result.impl().get();
        oi->backprop = [ai, oi] {
            ensure_grad(*ai);
            for (size_t i = 0; i < oi->grad.size(); ++i) {
                double x = ai->data[i];
                double sig = x > 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                     : std::exp(x) / (1.0 + std::exp(x));
                ai->grad[i] += oi->grad[i] * sig;
            }
        };
    }
    return result;
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    if (lo > hi) throw ValidationError("clamp: lo > hi");
    std::vector<double> out(a.size());
    const auto& da = a.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(da[i], lo), hi);
    auto ai = a.impl();
    Tensor result = make_output(a.shape(), std::move(out), {ai});
    if (result.requires_grad()) {
        auto* oi = result.impl().get();
        oi->backprop = [ai, oi, lo, hi] {
            ensure_grad(*ai);
            for (size_t i = 0; i < oi->grad.size(); ++i) {
                double x = ai->data[i];
                if (x >= lo && x <= hi) ai->grad[i] += oi->grad[i];
            }
        };
    }
    return result;
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    auto ai = a.impl();
    Tensor result = make_output({1}, {acc}, {ai});
    if (result.requires_grad()) {
        auto* oi = result.impl().get();
        oi->backprop = [ai, oi] {
            ensure_grad(*ai);
            double g = oi->grad[0];
            for (double& v : ai->grad) v += g;
        };
    }
    return result;
}

Tensor mean(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    double inv = 1.0 / static_cast<double>(a.size());
    auto ai = a.impl();
    Tensor result = make_output({1}, {acc * inv}, {ai});
    if (result.requires_grad()) {
        auto* oi = result.impl().get();
        oi->backprop = [ai, oi, inv] {
            ensure_grad(*ai);
            double g = oi->grad[0] * inv;
            for (double& v : ai->grad) v += g;
        };
    }
    return result;
}

Tensor reshape(const Tensor& a, std::vector<size_t> shape) {
    size_t n = checked_numel(shape);
    if (n != a.size())
        throw ValidationError("reshape: " + shape_str(a.shape()) + " has " +
                              std::to_string(a.size()) + " values, target " + shape_str(shape) +
                              " wants " + std::to_string(n));
    auto ai = a.impl();
    Tensor result = make_output(std::move(shape), a.data(), {ai});
    if (result.requires_grad()) {
        auto* oi = result.impl().get();
        oi->backprop = [ai, oi] {
            ensure_grad(*ai);
            for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
        };
    }
    return result;
}

Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    if (input.shape().size() != 2 || weight.shape().size() != 2 || bias.shape().size() != 1)
        throw ValidationError("dense: expected input [N,F_in], weight [F_out,F_in], bias [F_out]; got " +
                              shape_str(input.shape()) + ", " + shape_str(weight.shape()) + ", " +
                              shape_str(bias.shape()));
    size_t n = input.shape()[0], fin = input.shape()[1];
    size_t fout = weight.shape()[0];
    if (weight.shape()[1] != fin || bias.shape()[0] != fout)
        throw ValidationError("dense: dimension mismatch between input " + shape_str(input.shape()) +
                              ", weight " + shape_str(weight.shape()) + " and bias " +
                              shape_str(bias.shape()));
    std::vector<double> out(n * fout);
    const auto &x = input.data(), &w = weight.data(), &b = bias.data();
    for (size_t r = 0; r < n; ++r) {
        const double* xrow = x.data() + r * fin;
        double* orow = out.data() + r * fout;
        for (size_t o = 0; o < fout; ++o) {
            const double* wrow = w.data() + o * fin;
            double acc = b[o];
            for (size_t i = 0; i < fin; ++i) acc += xrow[i] * wrow[i];
            orow[o] = acc;
        }
    }
    auto xi = input.impl(), wi = weight.impl(), bi = bias.impl();
    Tensor result = make_output({n, fout}, std::move(out), {xi, wi, bi});
    if (result.requires_grad()) {
        auto* oi = result.impl().get();
        oi->backprop = [xi, wi, bi, oi, n, fin, fout] {
            const auto& g = oi->grad;
            if (tracked(xi)) {
                ensure_grad(*xi);
                for (size_t r = 0; r < n; ++r) {
                    const double* grow = g.data() + r * fout;
                    double* dxrow = xi->grad.data() + r * fin;
                    for (size_t o = 0; o < fout; ++o) {
                        const double* wrow = wi->data.data() + o * fin;
                        double gv = grow[o];
                        for (size_t i = 0; i < fin; ++i) dxrow[i] += gv * wrow[i];
                    }
                }
            }
            if (tracked(wi)) {
                ensure_grad(*wi);
                for (size_t r = 0; r < n; ++r) {
                    const double* grow = g.data() + r * fout;
                    const double* xrow = xi->data.data() + r * fin;
                    for (size_t o = 0; o < fout; ++o) {
                        double* dwrow = wi->grad.data() + o * fin;
                        double gv = grow[o];
                        for (size_t i = 0; i < fin; ++i) dwrow[i] += gv * xrow[i];
                    }
                }
            }
            if (tracked(bi)) {
                ensure_grad(*bi);
                for (size_t r = 0; r < n; ++r) {
                    const double* grow = g.data() + r * fout;
                    for (size_t o = 0; o < fout; ++o) bi->grad[o] += grow[o];
                }
            }
        };
    }
    return result;
}

size_t conv3_out_extent(size_t in, size_t kernel, size_t stride, size_t padding) {
    if (stride == 0) throw ValidationError("conv3: stride must be >= 1");
    if (in + 2 * padding < kernel)
        throw ValidationError("conv3: kernel extent " + std::to_string(kernel) +
                              " exceeds padded input extent " + std::to_string(in + 2 * padding));
    return (in + 2 * padding - kernel) / stride + 1;
}

size_t conv3_transpose_out_extent(size_t in, size_t kernel, size_t stride, size_t padding,
                                  size_t output_padding) {
    if (stride == 0) throw ValidationError("conv3_transpose: stride must be >= 1");
    if (output_padding >= stride)
        throw ValidationError("conv3_transpose: output_padding must be < stride");
    long out = static_cast<long>((in - 1) * stride + kernel + output_padding) -
               2 * static_cast<long>(padding);
    if (out <= 0)
        throw ValidationError("conv3_transpose: non-positive output extent for input " +
                              std::to_string(in));
    return static_cast<size_t>(out);
}

namespace {

ConvGeom conv_geom(const Tensor& input, const Tensor& kernel, const Tensor& bias, size_t stride,
                   size_t padding, bool transpose, size_t output_padding) {
    const char* op = transpose ? "conv3_transpose" : "conv3";
    if (input.shape().size() != 5)
        throw ValidationError(std::string(op) + ": input must be rank 5 [N,C,D,H,W], got " +
                              shape_str(input.shape()));
    if (kernel.shape().size() != 5)
        throw ValidationError(std::string(op) + ": kernel must be rank 5, got " +
                              shape_str(kernel.shape()));
    ConvGeom g{};
    g.n = static_cast<long>(input.shape()[0]);
    g.d = static_cast<long>(input.shape()[2]);
    g.h = static_cast<long>(input.shape()[3]);
    g.w = static_cast<long>(input.shape()[4]);
    g.stride = static_cast<long>(stride);
    g.pad = static_cast<long>(padding);
    size_t ci_in = input.shape()[1];
    size_t kc0 = kernel.shape()[0], kc1 = kernel.shape()[1];
    g.kd = static_cast<long>(kernel.shape()[2]);
    g.kh = static_cast<long>(kernel.shape()[3]);
    g.kw = static_cast<long>(kernel.shape()[4]);
    size_t ci_k = transpose ? kc0 : kc1;
    size_t co = transpose ? kc1 : kc0;
    if (ci_k != ci_in)
        throw ValidationError(std::string(op) + ": input channels " + std::to_string(ci_in) +
                              " do not match kernel input channels " + std::to_string(ci_k) +
                              " (input " + shape_str(input.shape()) + ", kernel " +
                              shape_str(kernel.shape()) + ")");
    if (bias.shape().size() != 1 || bias.shape()[0] != co)
        throw ValidationError(std::string(op) + ": bias must be [" + std::to_string(co) +
                              "], got " + shape_str(bias.shape()));
    g.ci = static_cast<long>(ci_in);
    g.co = static_cast<long>(co);
    if (transpose) {
        g.od = static_cast<long>(conv3_transpose_out_extent(input.shape()[2], kernel.shape()[2],
                                                            stride, padding, output_padding));
        g.oh = static_cast<long>(conv3_transpose_out_extent(input.shape()[3], kernel.shape()[3],
                                                            stride, padding, output_padding));
        g.ow = static_cast<long>(conv3_transpose_out_extent(input.shape()[4], kernel.shape()[4],
                                                            stride, padding, output_padding));
    } else {
        g.od = static_cast<long>(
            conv3_out_extent(input.shape()[2], kernel.shape()[2], stride, padding));
        g.oh = static_cast<long>(
            conv3_out_extent(input.shape()[3], kernel.shape()[3], stride, padding));
        g.ow = static_cast<long>(
            conv3_out_extent(input.shape()[4], kernel.shape()[4], stride, padding));
    }
    return g;
}

}  // namespace

Tensor conv3(const Tensor& input, const Tensor& kernel, const Tensor& bias, size_t stride,
             size_t padding) {
    ConvGeom g = conv_geom(input, kernel, bias, stride, padding, false, 0);
    std::vector<size_t> oshape{static_cast<size_t>(g.n), static_cast<size_t>(g.co),
                               static_cast<size_t>(g.od), static_cast<size_t>(g.oh),
                               static_cast<size_t>(g.ow)};
    std::vector<double> out(static_cast<size_t>(g.n * g.co * g.od * g.oh * g.ow));
    const auto& b = bias.data();
    long spatial = g.od * g.oh * g.ow;
    for (long n = 0; n < g.n; ++n)
        for (long c = 0; c < g.co; ++c)
            std::fill_n(out.data() + (n * g.co + c) * spatial, spatial,
                        b[static_cast<size_t>(c)]);
    conv3_accum(input.data().data(), kernel.data().data(), out.data(), g);
    auto xi = input.impl(), wi = kernel.impl(), bi = bias.impl();
    Tensor result = make_output(std::move(oshape), std::move(out), {xi, wi, bi});
    if (result.requires_grad()) {
        auto* oi = result.impl().get();
        oi->backprop = [xi, wi, bi, oi, g, spatial] {
            const double* dy = oi->grad.data();
            if (tracked(xi)) {
                ensure_grad(*xi);
                conv3_accum_dx(dy, wi->data.data(), xi->grad.data(), g);
            }
            if (tracked(wi)) {
                ensure_grad(*wi);
                conv3_accum_dw(dy, xi->data.data(), wi->grad.data(), g);
            }
            if (tracked(bi)) {
                ensure_grad(*bi);
                accum_bias_grad(dy, bi->grad.data(), g.n, g.co, spatial);
            }
        };
    }
    return result;
}

Tensor conv3_transpose(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                       size_t stride, size_t padding, size_t output_padding) {
    ConvGeom g = conv_geom(input, kernel, bias, stride, padding, true, output_padding);
    std::vector<size_t> oshape{static_cast<size_t>(g.n), static_cast<size_t>(g.co),
                               static_cast<size_t>(g.od), static_cast<size_t>(g.oh),
                               static_cast<size_t>(g.ow)};
    std::vector<double> out(static_cast<size_t>(g.n * g.co * g.od * g.oh * g.ow));
    const auto& b = bias.data();
    long spatial = g.od * g.oh * g.ow;
    for (long n = 0; n < g.n; ++n)
        for (long c = 0; c < g.co; ++c)
            std::fill_n(out.data() + (n * g.co + c) * spatial, spatial,
                        b[static_cast<size_t>(c)]);
    convt3_accum(input.data().data(), kernel.data().data(), out.data(), g);
    auto xi = input.impl(), wi = kernel.impl(), bi = bias.impl();
    Tensor result = make_output(std::move(oshape), std::move(out), {xi, wi, bi});
    if (result.requires_grad()) {
        auto* oi = result.impl().get();
        oi->backprop = [xi, wi, bi, oi, g, spatial] {
            const double* dy = oi->grad.data();
            if (tracked(xi)) {
                ensure_grad(*xi);
                convt3_accum_dx(dy, wi->data.data(), xi->grad.data(), g);
            }
            if (tracked(wi)) {
                ensure_grad(*wi);
                convt3_accum_dw(dy, xi->data.data(), wi->grad.data(), g);
            }
            if (tracked(bi)) {
                ensure_grad(*bi);
                accum_bias_grad(dy, bi->grad.data(), g.n, g.co, spatial);
            }
        };
    }
    return result;
}

void backward(const Tensor& loss) {
    const auto& root = loss.impl();
    if (root->data.size() != 1)
        throw ValidationError("backward: loss must be a scalar, got " + shape_str(root->shape));

    // Strong references keep every graph node alive for the whole sweep even
    // though edges are severed as soon as each closure has run.
    std::vector<ImplPtr> order;
    std::unordered_set<Impl*> visited;
    struct Frame {
        ImplPtr node;
        size_t next;
    };
    std::vector<Frame> stack{{root, 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.node->parents.size()) {
            const ImplPtr& p = f.node->parents[f.next++];
            if (visited.insert(p.get()).second) stack.push_back({p, 0});
        } else {
            order.push_back(std::move(f.node));
            stack.pop_back();
        }
    }

    for (const ImplPtr& node : order)
        if (node->parents.empty() && node->requires_grad && !node->grad.empty())
            throw ValidationError(
                "backward: leaf tensors still hold gradients from a previous pass; "
                "clear them before running backward again");

    ensure_grad(*root);
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Impl* node = it->get();
        if (node->backprop) {
            node->backprop();
            node->backprop = nullptr;
            node->parents.clear();
        }
    }
}

void quantize_f32(Tensor& t) {
    for (double& v : t.data()) v = static_cast<double>(static_cast<float>(v));
}

void adam_step(std::span<Tensor> params, AdamState& state, const AdamConfig& config,
               std::span<const std::string> names) {
    if (config.beta1 < 0 || config.beta1 >= 1 || config.beta2 < 0 || config.beta2 >= 1)
        throw ValidationError("adam_step: betas must lie in [0,1)");
    if (config.eps <= 0) throw ValidationError("adam_step: eps must be > 0");
    auto param_name = [&](size_t i) {
        return i < names.size() ? names[i] : "param[" + std::to_string(i) + "]";
    };
    if (state.first_moment.empty()) {
        state.first_moment.resize(params.size());
        state.second_moment.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            state.first_moment[i].assign(params[i].size(), 0.0);
            state.second_moment[i].assign(params[i].size(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size())
        throw ValidationError("adam_step: state tracks " +
                              std::to_string(state.first_moment.size()) + " params, got " +
                              std::to_string(params.size()));
    state.step_count += 1;
    double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step_count));
    double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step_count));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        if (!p.has_grad())
            throw ValidationError("adam_step: " + param_name(i) + " has no gradient");
        auto& g = p.grad();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        if (m.size() != g.size())
            throw ValidationError("adam_step: state shape mismatch for " + param_name(i));
        auto& x = p.data();
        for (size_t j = 0; j < g.size(); ++j) {
            if (!std::isfinite(g[j]))
                throw ValidationError("adam_step: non-finite gradient in " + param_name(i) +
                                      " at index " + std::to_string(j));
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            x[j] = static_cast<double>(
                static_cast<float>(x[j] - config.lr * mhat / (std::sqrt(vhat) + config.eps)));
        }
    }
}

double grad_norm(std::span<const Tensor> params) {
    double acc = 0.0;
    for (const Tensor& p : params)
        if (p.has_grad())
            for (double g : p.grad()) acc += g * g;
    return std::sqrt(acc);
}

void clip_grad_norm(std::span<Tensor> params, double max_norm) {
    if (max_norm <= 0) throw ValidationError("clip_grad_norm: max_norm must be > 0");
    double norm = grad_norm(params);
    if (norm <= max_norm || norm == 0.0) return;
    double s = max_norm / norm;
    for (Tensor& p : params)
        if (p.has_grad())
            for (double& g : p.grad()) g *= s;
}

}  // namespace wxgen
