#include "drn/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace drn {

namespace {

thread_local bool g_grad_enabled = true;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<NodePtr<T>> parents,
                   std::function<void(Node<T>&)> fn)
{
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    const bool needs = g_grad_enabled && std::any_of(parents.begin(), parents.end(), [](const auto& p) {
                           return p && p->requires_grad;
                       });
    if (needs) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward_fn = std::move(fn);
    }
    return Var<T>(std::move(node));
}

template <typename T>
bool wants(const NodePtr<T>& p)
{
    return p && p->requires_grad;
}

template <typename T>
void check_defined(const Var<T>& v, const char* op)
{
    if (!v.defined()) throw DimensionError(std::string(op) + ": undefined input");
}

// Unfolds one sample (C, H, W) into a (C·k·k) × (Ho·Wo) patch matrix.
template <typename T>
void im2col(const T* in, Index channels, Index height, Index width, int k, int stride, int pad,
            Index out_h, Index out_w, RowMatrix<T>& col)
{
    col.resize(channels * k * k, out_h * out_w);
    for (Index c = 0; c < channels; ++c) {
        const T* plane = in + c * height * width;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                T* row = col.data() + ((c * k + ki) * k + kj) * out_h * out_w;
                for (Index oy = 0; oy < out_h; ++oy) {
                    const Index iy = oy * stride - pad + ki;
                    T* dst = row + oy * out_w;
                    if (iy < 0 || iy >= height) {
                        std::fill(dst, dst + out_w, T(0));
                        continue;
                    }
                    const T* src = plane + iy * width;
                    for (Index ox = 0; ox < out_w; ++ox) {
                        const Index ix = ox * stride - pad + kj;
                        dst[ox] = (ix >= 0 && ix < width) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const RowMatrix<T>& col, Index channels, Index height, Index width, int k, int stride,
                int pad, Index out_h, Index out_w, T* out)
{
    for (Index c = 0; c < channels; ++c) {
        T* plane = out + c * height * width;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const T* row = col.data() + ((c * k + ki) * k + kj) * out_h * out_w;
                for (Index oy = 0; oy < out_h; ++oy) {
                    const Index iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= height) continue;
                    const T* src = row + oy * out_w;
                    T* dst = plane + iy * width;
                    for (Index ox = 0; ox < out_w; ++ox) {
                        const Index ix = ox * stride - pad + kj;
                        if (ix >= 0 && ix < width) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

bool grad_enabled()
{
    return g_grad_enabled;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled)
{
    g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard()
{
    g_grad_enabled = previous_;
}

template <typename T>
void backward(const Var<T>& root)
{
    check_defined(root, "backward");
    if (root.value().numel() != 1)
        throw DimensionError("backward: root must be a scalar, got " + root.shape().str());
    if (!root.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->ensure_grad().array() += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (node->backward_fn && node->grad.shape() == node->value.shape()) node->backward_fn(*node);
    }
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b)
{
    require_same_shape(a.shape(), b.shape(), "add");
    Tensor<T> out(a.shape(), a.value().array() + b.value().array());
    return make_result<T>(std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
        for (auto& p : self.parents)
            if (wants(p)) p->ensure_grad().array() += self.grad.array();
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b)
{
    require_same_shape(a.shape(), b.shape(), "sub");
    Tensor<T> out(a.shape(), a.value().array() - b.value().array());
    return make_result<T>(std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
        if (wants(self.parents[0])) self.parents[0]->ensure_grad().array() += self.grad.array();
        if (wants(self.parents[1])) self.parents[1]->ensure_grad().array() -= self.grad.array();
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b)
{
    require_same_shape(a.shape(), b.shape(), "mul");
    Tensor<T> out(a.shape(), a.value().array() * b.value().array());
    return make_result<T>(std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (wants(pa)) pa->ensure_grad().array() += self.grad.array() * pb->value.array();
        if (wants(pb)) pb->ensure_grad().array() += self.grad.array() * pa->value.array();
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor)
{
    Tensor<T> out(a.shape(), a.value().array() * factor);
    return make_result<T>(std::move(out), {a.node()}, [factor](Node<T>& self) {
        if (wants(self.parents[0])) self.parents[0]->ensure_grad().array() += self.grad.array() * factor;
    });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T value)
{
    Tensor<T> out(a.shape(), a.value().array() + value);
    return make_result<T>(std::move(out), {a.node()}, [](Node<T>& self) {
        if (wants(self.parents[0])) self.parents[0]->ensure_grad().array() += self.grad.array();
    });
}

template <typename T>
Var<T> abs(const Var<T>& x)
{
    Tensor<T> out(x.shape(), x.value().array().abs());
    return make_result<T>(std::move(out), {x.node()}, [](Node<T>& self) {
        auto& p = self.parents[0];
        if (!wants(p)) return;
        const auto& xv = p->value.array();
        p->ensure_grad().array() +=
            self.grad.array() * ((xv > T(0)).template cast<T>() - (xv < T(0)).template cast<T>());
    });
}

template <typename T>
Var<T> square(const Var<T>& x)
{
    Tensor<T> out(x.shape(), x.value().array().square());
    return make_result<T>(std::move(out), {x.node()}, [](Node<T>& self) {
        auto& p = self.parents[0];
        if (wants(p)) p->ensure_grad().array() += self.grad.array() * T(2) * p->value.array();
    });
}

template <typename T>
Var<T> tanh(const Var<T>& x)
{
    Tensor<T> out(x.shape(), x.value().array().tanh());
    return make_result<T>(std::move(out), {x.node()}, [](Node<T>& self) {
        auto& p = self.parents[0];
        if (wants(p))
            p->ensure_grad().array() += self.grad.array() * (T(1) - self.value.array().square());
    });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x)
{
    Tensor<T> out(x.shape(), T(1) / (T(1) + (-x.value().array()).exp()));
    return make_result<T>(std::move(out), {x.node()}, [](Node<T>& self) {
        auto& p = self.parents[0];
        const auto& y = self.value.array();
        if (wants(p)) p->ensure_grad().array() += self.grad.array() * y * (T(1) - y);
    });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope)
{
    const auto& xv = x.value().array();
    Tensor<T> out(x.shape(), (xv > T(0)).select(xv, xv * slope));
    return make_result<T>(std::move(out), {x.node()}, [slope](Node<T>& self) {
        auto& p = self.parents[0];
        if (!wants(p)) return;
        const auto& xv = p->value.array();
        p->ensure_grad().array() += (xv > T(0)).select(self.grad.array(), self.grad.array() * slope);
    });
}

template <typename T>
Var<T> clamp(const Var<T>& x, T lo, T hi)
{
    Tensor<T> out(x.shape(), x.value().array().max(lo).min(hi));
    return make_result<T>(std::move(out), {x.node()}, [lo, hi](Node<T>& self) {
        auto& p = self.parents[0];
        if (!wants(p)) return;
        const auto& xv = p->value.array();
        p->ensure_grad().array() +=
            ((xv >= lo) && (xv <= hi)).select(self.grad.array(), T(0));
    });
}

template <typename T>
Var<T> sum(const Var<T>& x)
{
    auto out = Tensor<T>::scalar(x.value().array().sum());
    return make_result<T>(std::move(out), {x.node()}, [](Node<T>& self) {
        auto& p = self.parents[0];
        if (wants(p)) p->ensure_grad().array() += self.grad.item();
    });
}

template <typename T>
Var<T> mean(const Var<T>& x)
{
    const T count = static_cast<T>(x.value().numel());
    auto out = Tensor<T>::scalar(x.value().array().sum() / count);
    return make_result<T>(std::move(out), {x.node()}, [count](Node<T>& self) {
        auto& p = self.parents[0];
        if (wants(p)) p->ensure_grad().array() += self.grad.item() / count;
    });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad)
{
    check_defined(x, "conv2d");
    check_defined(weight, "conv2d");
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    if (ws.c != xs.c)
        throw DimensionError("conv2d: input has " + std::to_string(xs.c) + " channels, weight expects " +
                             std::to_string(ws.c));
    if (ws.h != ws.w) throw DimensionError("conv2d: kernel must be square");
    if (bias.defined() && (bias.shape() != Shape{1, ws.n, 1, 1}))
        throw DimensionError("conv2d: bias shape " + bias.shape().str());
    const int k = static_cast<int>(ws.h);
    const Index out_h = (xs.h + 2 * pad - k) / stride + 1;
    const Index out_w = (xs.w + 2 * pad - k) / stride + 1;
    if (out_h <= 0 || out_w <= 0) throw DimensionError("conv2d: input " + xs.str() + " too small");

    const Index cout = ws.n;
    const Index kdim = ws.c * k * k;
    Tensor<T> out(Shape{xs.n, cout, out_h, out_w});
    Eigen::Map<const RowMatrix<T>> wm(weight.value().data(), cout, kdim);
    RowMatrix<T> col;
    for (Index n = 0; n < xs.n; ++n) {
        im2col(x.value().plane_data(n, 0), xs.c, xs.h, xs.w, k, stride, pad, out_h, out_w, col);
        auto ym = out.sample_matrix(n);
        ym.noalias() = wm * col;
        if (bias.defined()) ym.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(
                                                  bias.value().data(), cout);
    }

    std::vector<NodePtr<T>> parents{x.node(), weight.node()};
    if (bias.defined()) parents.push_back(bias.node());
    return make_result<T>(std::move(out), std::move(parents),
                          [xs, k, stride, pad, out_h, out_w, cout, kdim](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        Eigen::Map<const RowMatrix<T>> wm(pw->value.data(), cout, kdim);
        RowMatrix<T> col;
        RowMatrix<T> dcol;
        for (Index n = 0; n < xs.n; ++n) {
            auto gy = static_cast<const Tensor<T>&>(self.grad).sample_matrix(n);
            if (wants(pw)) {
                im2col(px->value.plane_data(n, 0), xs.c, xs.h, xs.w, k, stride, pad, out_h, out_w, col);
                Eigen::Map<RowMatrix<T>> dw(pw->ensure_grad().data(), cout, kdim);
                dw.noalias() += gy * col.transpose();
            }
            if (wants(px)) {
                dcol.noalias() = wm.transpose() * gy;
                col2im_add(dcol, xs.c, xs.h, xs.w, k, stride, pad, out_h, out_w,
                           px->ensure_grad().plane_data(n, 0));
            }
        }
        if (self.parents.size() > 2 && wants(self.parents[2])) {
            auto& db = self.parents[2]->ensure_grad();
            for (Index n = 0; n < xs.n; ++n)
                Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(db.data(), cout) +=
                    static_cast<const Tensor<T>&>(self.grad).sample_matrix(n).rowwise().sum();
        }
    });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias)
{
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    if (xs.h != 1 || xs.w != 1 || ws.h != 1 || ws.w != 1 || ws.c != xs.c)
        throw DimensionError("linear: input " + xs.str() + " incompatible with weight " + ws.str());
    if (bias.defined() && (bias.shape() != Shape{1, ws.n, 1, 1}))
        throw DimensionError("linear: bias shape " + bias.shape().str());
    const Index batch = xs.n;
    const Index in = xs.c;
    const Index outc = ws.n;
    Tensor<T> out(Shape{batch, outc, 1, 1});
    Eigen::Map<const RowMatrix<T>> xm(x.value().data(), batch, in);
    Eigen::Map<const RowMatrix<T>> wm(weight.value().data(), outc, in);
    Eigen::Map<RowMatrix<T>> ym(out.data(), batch, outc);
    ym.noalias() = xm * wm.transpose();
    if (bias.defined())
        ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.value().data(), outc);

    std::vector<NodePtr<T>> parents{x.node(), weight.node()};
    if (bias.defined()) parents.push_back(bias.node());
    return make_result<T>(std::move(out), std::move(parents), [batch, in, outc](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        Eigen::Map<const RowMatrix<T>> gy(self.grad.data(), batch, outc);
        if (wants(px)) {
            Eigen::Map<const RowMatrix<T>> wm(pw->value.data(), outc, in);
            Eigen::Map<RowMatrix<T>>(px->ensure_grad().data(), batch, in).noalias() += gy * wm;
        }
        if (wants(pw)) {
            Eigen::Map<const RowMatrix<T>> xm(px->value.data(), batch, in);
            Eigen::Map<RowMatrix<T>>(pw->ensure_grad().data(), outc, in).noalias() += gy.transpose() * xm;
        }
        if (self.parents.size() > 2 && wants(self.parents[2]))
            Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(self.parents[2]->ensure_grad().data(), outc) +=
                gy.colwise().sum();
    });
}

template <typename T>
Var<T> instance_norm(const Var<T>& x, T eps)
{
    const Shape s = x.shape();
    const Index hw = s.plane();
    auto normalized = std::make_shared<Tensor<T>>(s);
    auto inv_std = std::make_shared<Eigen::Array<T, Eigen::Dynamic, 1>>(s.n * s.c);
    for (Index n = 0; n < s.n; ++n) {
        for (Index c = 0; c < s.c; ++c) {
            const auto in = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>(x.value().plane_data(n, c), hw);
            const T mu = in.mean();
            const T var = (in - mu).square().mean();
            const T inv = T(1) / std::sqrt(var + eps);
            (*inv_std)[n * s.c + c] = inv;
            Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>(normalized->plane_data(n, c), hw) = (in - mu) * inv;
        }
    }
    Tensor<T> out = *normalized;
    return make_result<T>(std::move(out), {x.node()}, [s, hw, normalized, inv_std](Node<T>& self) {
        auto& p = self.parents[0];
        if (!wants(p)) return;
        auto& dx = p->ensure_grad();
        for (Index n = 0; n < s.n; ++n) {
            for (Index c = 0; c < s.c; ++c) {
                using ArrMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;
                const ArrMap g(self.grad.plane_data(n, c), hw);
                const ArrMap xhat(normalized->plane_data(n, c), hw);
                const T inv = (*inv_std)[n * s.c + c];
                Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>(dx.plane_data(n, c), hw) +=
                    inv * (g - g.mean() - xhat * (g * xhat).mean());
            }
        }
    });
}

template <typename T>
Var<T> channel_affine(const Var<T>& x, const Var<T>& scale, const Var<T>& bias)
{
    const Shape s = x.shape();
    for (const auto* v : {&scale, &bias}) {
        const Shape vs = v->shape();
        if (vs.c != s.c || vs.h != 1 || vs.w != 1 || (vs.n != s.n && vs.n != 1))
            throw DimensionError("channel_affine: modulation shape " + vs.str() + " for features " + s.str());
    }
    const Index hw = s.plane();
    Tensor<T> out(s);
    auto at = [](const Tensor<T>& t, Index n, Index c) { return t(t.n() == 1 ? 0 : n, c, 0, 0); };
    for (Index n = 0; n < s.n; ++n)
        for (Index c = 0; c < s.c; ++c)
            Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>(out.plane_data(n, c), hw) =
                Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>(x.value().plane_data(n, c), hw) *
                    at(scale.value(), n, c) +
                at(bias.value(), n, c);
    return make_result<T>(std::move(out), {x.node(), scale.node(), bias.node()}, [s, hw](Node<T>& self) {
        auto& px = self.parents[0];
        auto& ps = self.parents[1];
        auto& pb = self.parents[2];
        using ArrMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;
        for (Index n = 0; n < s.n; ++n) {
            const Index sn = ps->value.n() == 1 ? 0 : n;
            const Index bn = pb->value.n() == 1 ? 0 : n;
            for (Index c = 0; c < s.c; ++c) {
                const ArrMap g(self.grad.plane_data(n, c), hw);
                if (wants(px))
                    Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>(px->ensure_grad().plane_data(n, c), hw) +=
                        g * ps->value(sn, c, 0, 0);
                if (wants(ps)) ps->ensure_grad()(sn, c, 0, 0) += (g * ArrMap(px->value.plane_data(n, c), hw)).sum();
                if (wants(pb)) pb->ensure_grad()(bn, c, 0, 0) += g.sum();
            }
        }
    });
}

template <typename T>
Var<T> upsample_nearest(const Var<T>& x, int factor)
{
    const Shape s = x.shape();
    const Shape os{s.n, s.c, s.h * factor, s.w * factor};
    Tensor<T> out(os);
    for (Index n = 0; n < s.n; ++n)
        for (Index c = 0; c < s.c; ++c)
            for (Index y = 0; y < os.h; ++y)
                for (Index xx = 0; xx < os.w; ++xx) out(n, c, y, xx) = x.value()(n, c, y / factor, xx / factor);
    return make_result<T>(std::move(out), {x.node()}, [os, factor](Node<T>& self) {
        auto& p = self.parents[0];
        if (!wants(p)) return;
        auto& dx = p->ensure_grad();
        for (Index n = 0; n < os.n; ++n)
            for (Index c = 0; c < os.c; ++c)
                for (Index y = 0; y < os.h; ++y)
                    for (Index xx = 0; xx < os.w; ++xx) dx(n, c, y / factor, xx / factor) += self.grad(n, c, y, xx);
    });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x)
{
    const Shape s = x.shape();
    Tensor<T> out(Shape{s.n, s.c, 1, 1});
    for (Index n = 0; n < s.n; ++n) out.sample_matrix(n) = x.value().sample_matrix(n).rowwise().mean();
    return make_result<T>(std::move(out), {x.node()}, [s](Node<T>& self) {
        auto& p = self.parents[0];
        if (!wants(p)) return;
        const T inv = T(1) / static_cast<T>(s.plane());
        auto& dx = p->ensure_grad();
        for (Index n = 0; n < s.n; ++n)
            for (Index c = 0; c < s.c; ++c) dx.plane(n, c).array() += self.grad(n, c, 0, 0) * inv;
    });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b)
{
    const Shape sa = a.shape();
    const Shape sb = b.shape();
    if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w)
        throw DimensionError("concat_channels: " + sa.str() + " vs " + sb.str());
    Tensor<T> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
    const Index la = sa.c * sa.plane();
    const Index lb = sb.c * sb.plane();
    for (Index n = 0; n < sa.n; ++n) {
        out.array().segment(n * (la + lb), la) = a.value().array().segment(n * la, la);
        out.array().segment(n * (la + lb) + la, lb) = b.value().array().segment(n * lb, lb);
    }
    return make_result<T>(std::move(out), {a.node(), b.node()}, [sa, la, lb](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        for (Index n = 0; n < sa.n; ++n) {
            if (wants(pa)) pa->ensure_grad().array().segment(n * la, la) += self.grad.array().segment(n * (la + lb), la);
            if (wants(pb))
                pb->ensure_grad().array().segment(n * lb, lb) += self.grad.array().segment(n * (la + lb) + la, lb);
        }
    });
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, Index begin, Index count)
{
    const Shape s = x.shape();
    if (begin < 0 || count <= 0 || begin + count > s.c)
        throw DimensionError("slice_channels: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                             ") out of " + s.str());
    const Index hw = s.plane();
    Tensor<T> out(Shape{s.n, count, s.h, s.w});
    for (Index n = 0; n < s.n; ++n)
        out.array().segment(n * count * hw, count * hw) = x.value().array().segment(x.value().offset(n, begin, 0, 0), count * hw);
    return make_result<T>(std::move(out), {x.node()}, [s, begin, count, hw](Node<T>& self) {
        auto& p = self.parents[0];
        if (!wants(p)) return;
        auto& dx = p->ensure_grad();
        for (Index n = 0; n < s.n; ++n)
            dx.array().segment(dx.offset(n, begin, 0, 0), count * hw) += self.grad.array().segment(n * count * hw, count * hw);
    });
}

template <typename T>
Var<T> gram(const Var<T>& x)
{
    const Shape s = x.shape();
    if (s.numel() == 0) throw DimensionError("gram: empty features");
    const T norm = T(1) / static_cast<T>(s.c * s.plane());
    Tensor<T> out(Shape{s.n, 1, s.c, s.c});
    for (Index n = 0; n < s.n; ++n) {
        const auto f = x.value().sample_matrix(n);
        Eigen::Map<RowMatrix<T>>(out.plane_data(n, 0), s.c, s.c).noalias() = norm * (f * f.transpose());
    }
    return make_result<T>(std::move(out), {x.node()}, [s, norm](Node<T>& self) {
        auto& p = self.parents[0];
        if (!wants(p)) return;
        for (Index n = 0; n < s.n; ++n) {
            Eigen::Map<const RowMatrix<T>> g(self.grad.plane_data(n, 0), s.c, s.c);
            const auto f = p->value.sample_matrix(n);
            p->ensure_grad().sample_matrix(n).noalias() += norm * ((g + g.transpose()) * f);
        }
    });
}

#define DRN_INSTANTIATE_OPS(T)                                                              \
    template void backward(const Var<T>&);                                                  \
    template Var<T> add(const Var<T>&, const Var<T>&);                                      \
    template Var<T> sub(const Var<T>&, const Var<T>&);                                      \
    template Var<T> mul(const Var<T>&, const Var<T>&);                                      \
    template Var<T> scale(const Var<T>&, T);                                                \
    template Var<T> add_scalar(const Var<T>&, T);                                           \
    template Var<T> abs(const Var<T>&);                                                     \
    template Var<T> square(const Var<T>&);                                                  \
    template Var<T> tanh(const Var<T>&);                                                    \
    template Var<T> sigmoid(const Var<T>&);                                                 \
    template Var<T> leaky_relu(const Var<T>&, T);                                           \
    template Var<T> clamp(const Var<T>&, T, T);                                             \
    template Var<T> mean(const Var<T>&);                                                    \
    template Var<T> sum(const Var<T>&);                                                     \
    template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);          \
    template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                    \
    template Var<T> instance_norm(const Var<T>&, T);                                        \
    template Var<T> channel_affine(const Var<T>&, const Var<T>&, const Var<T>&);            \
    template Var<T> upsample_nearest(const Var<T>&, int);                                   \
    template Var<T> global_avg_pool(const Var<T>&);                                         \
    template Var<T> concat_channels(const Var<T>&, const Var<T>&);                          \
    template Var<T> slice_channels(const Var<T>&, Index, Index);                            \
    template Var<T> gram(const Var<T>&);

DRN_INSTANTIATE_OPS(float)
DRN_INSTANTIATE_OPS(double)

#undef DRN_INSTANTIATE_OPS

}  // namespace drn
