#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "delight/gemm.hpp"
#include "delight/tensor.hpp"

namespace delight::nn {

// Dynamic reverse-mode tape over NCHW tensors. Each op returns a node that
// owns its output; backward() walks the DAG once in reverse topological
// order. Gradients of leaf parameters are accumulated into an external sink
// so the graph can be dropped after each step.
template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backprop;
    Tensor<T>* grad_sink = nullptr;

    void ensure_grad() {
        if (grad.numel() != value.numel()) {
            grad = Tensor<T>(value.n, value.c, value.h, value.w);
        }
    }
};

template <typename T>
using NodeRef = std::shared_ptr<Node<T>>;

template <typename T>
NodeRef<T> constant(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    return n;
}

// Leaf whose gradient is accumulated into *sink (typically a parameter slot).
template <typename T>
NodeRef<T> leaf(const Tensor<T>& value, Tensor<T>* sink) {
    auto n = std::make_shared<Node<T>>();
    n->value = value;
    n->requires_grad = true;
    n->grad_sink = sink;
    return n;
}

namespace detail {

template <typename T>
NodeRef<T> make_op(Tensor<T> value, std::vector<NodeRef<T>> parents,
                   std::function<void(Node<T>&)> backprop) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents) n->requires_grad |= p->requires_grad;
    if (n->requires_grad) n->backprop = std::move(backprop);
    return n;
}

template <typename T>
void topo_sort(const NodeRef<T>& root, std::vector<Node<T>*>& order) {
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

}  // namespace detail

// Backpropagate from a scalar root. Parameter gradients are *added* to their
// sinks; callers zero the sinks between steps.
template <typename T>
void backward(const NodeRef<T>& root) {
    require(root->value.numel() == 1, "backward: root must be scalar");
    if (!root->requires_grad) return;
    std::vector<Node<T>*> order;
    detail::topo_sort(root, order);
    root->ensure_grad();
    root->grad.v[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->grad.numel() != n->value.numel()) continue;  // unreached branch
        if (n->backprop) n->backprop(*n);
        if (n->grad_sink) {
            require(n->grad_sink->numel() == n->grad.numel(), "backward: sink shape mismatch");
            for (std::size_t i = 0; i < n->grad.numel(); ++i) n->grad_sink->v[i] += n->grad.v[i];
        }
    }
}

// ---- arithmetic ----------------------------------------------------------

template <typename T>
NodeRef<T> add(const NodeRef<T>& a, const NodeRef<T>& b) {
    require(a->value.same_shape(b->value), "add: shape mismatch");
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] += b->value.v[i];
    return detail::make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
        for (int k = 0; k < 2; ++k) {
            auto& p = self.parents[k];
            if (!p->requires_grad) continue;
            p->ensure_grad();
            for (std::size_t i = 0; i < self.grad.numel(); ++i) p->grad.v[i] += self.grad.v[i];
        }
    });
}

template <typename T>
NodeRef<T> sub(const NodeRef<T>& a, const NodeRef<T>& b) {
    require(a->value.same_shape(b->value), "sub: shape mismatch");
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] -= b->value.v[i];
    return detail::make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
        if (self.parents[0]->requires_grad) {
            auto& p = self.parents[0];
            p->ensure_grad();
            for (std::size_t i = 0; i < self.grad.numel(); ++i) p->grad.v[i] += self.grad.v[i];
        }
        if (self.parents[1]->requires_grad) {
            auto& p = self.parents[1];
            p->ensure_grad();
            for (std::size_t i = 0; i < self.grad.numel(); ++i) p->grad.v[i] -= self.grad.v[i];
        }
    });
}

// y = scale * x + shift
template <typename T>
NodeRef<T> affine(const NodeRef<T>& x, T scale, T shift) {
    Tensor<T> out = x->value;
    for (auto& v : out.v) v = scale * v + shift;
    return detail::make_op<T>(std::move(out), {x}, [scale](Node<T>& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.numel(); ++i) p->grad.v[i] += scale * self.grad.v[i];
    });
}

// Elementwise product with a fixed tensor (mask / per-sample weight map).
// The weight broadcasts over channels when it has c == 1.
template <typename T>
NodeRef<T> weighted(const NodeRef<T>& x, Tensor<T> weight) {
    require(weight.n == x->value.n && weight.h == x->value.h && weight.w == x->value.w &&
                (weight.c == x->value.c || weight.c == 1),
            "weighted: weight shape mismatch");
    const bool broadcast = weight.c == 1 && x->value.c != 1;
    Tensor<T> out = x->value;
    const std::size_t plane = out.plane();
    for (int in = 0; in < out.n; ++in)
        for (int ic = 0; ic < out.c; ++ic) {
            const T* wp = weight.v.data() + (static_cast<std::size_t>(in) * weight.c + (broadcast ? 0 : ic)) * plane;
            T* op = out.v.data() + (static_cast<std::size_t>(in) * out.c + ic) * plane;
            for (std::size_t i = 0; i < plane; ++i) op[i] *= wp[i];
        }
    return detail::make_op<T>(std::move(out), {x}, [weight = std::move(weight), broadcast](Node<T>& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        const std::size_t plane = self.value.plane();
        for (int in = 0; in < self.value.n; ++in)
            for (int ic = 0; ic < self.value.c; ++ic) {
                const T* wp = weight.v.data() + (static_cast<std::size_t>(in) * weight.c + (broadcast ? 0 : ic)) * plane;
                const T* gp = self.grad.v.data() + (static_cast<std::size_t>(in) * self.value.c + ic) * plane;
                T* dp = p->grad.v.data() + (static_cast<std::size_t>(in) * self.value.c + ic) * plane;
                for (std::size_t i = 0; i < plane; ++i) dp[i] += gp[i] * wp[i];
            }
    });
}

// ---- activations ---------------------------------------------------------

template <typename T>
NodeRef<T> tanh_op(const NodeRef<T>& x) {
    Tensor<T> out = x->value;
    for (auto& v : out.v) v = std::tanh(v);
    return detail::make_op<T>(std::move(out), {x}, [](Node<T>& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.numel(); ++i) {
            const T y = self.value.v[i];
            p->grad.v[i] += self.grad.v[i] * (T(1) - y * y);
        }
    });
}

template <typename T>
NodeRef<T> relu(const NodeRef<T>& x) {
    Tensor<T> out = x->value;
    for (auto& v : out.v) v = v > T(0) ? v : T(0);
    return detail::make_op<T>(std::move(out), {x}, [](Node<T>& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.numel(); ++i)
            if (p->value.v[i] > T(0)) p->grad.v[i] += self.grad.v[i];
    });
}

// Per-channel PReLU; `slope` has shape (1, C, 1, 1).
template <typename T>
NodeRef<T> prelu(const NodeRef<T>& x, const NodeRef<T>& slope) {
    require(slope->value.c == x->value.c && slope->value.numel() == static_cast<std::size_t>(x->value.c),
            "prelu: slope must be (1,C,1,1)");
    Tensor<T> out = x->value;
    const std::size_t plane = out.plane();
    for (int in = 0; in < out.n; ++in)
        for (int ic = 0; ic < out.c; ++ic) {
            const T a = slope->value.v[ic];
            T* op = out.v.data() + (static_cast<std::size_t>(in) * out.c + ic) * plane;
            for (std::size_t i = 0; i < plane; ++i)
                if (op[i] < T(0)) op[i] *= a;
        }
    return detail::make_op<T>(std::move(out), {x, slope}, [](Node<T>& self) {
        auto& xp = self.parents[0];
        auto& ap = self.parents[1];
        const std::size_t plane = self.value.plane();
        if (xp->requires_grad) xp->ensure_grad();
        if (ap->requires_grad) ap->ensure_grad();
        for (int in = 0; in < self.value.n; ++in)
            for (int ic = 0; ic < self.value.c; ++ic) {
                const T a = ap->value.v[ic];
                const std::size_t base = (static_cast<std::size_t>(in) * self.value.c + ic) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const T xv = xp->value.v[base + i];
                    const T g = self.grad.v[base + i];
                    if (xp->requires_grad) xp->grad.v[base + i] += xv > T(0) ? g : a * g;
                    if (ap->requires_grad && xv <= T(0)) ap->grad.v[ic] += g * xv;
                }
            }
    });
}

// ---- normalization -------------------------------------------------------

// Instance normalization without affine parameters: each (sample, channel)
// plane is standardized with its own statistics, in train and eval alike.
template <typename T>
NodeRef<T> instance_norm(const NodeRef<T>& x, T eps = T(1e-5)) {
    const auto& xv = x->value;
    Tensor<T> out = xv;
    const std::size_t plane = xv.plane();
    std::vector<T> inv_std(static_cast<std::size_t>(xv.n) * xv.c);
    for (int in = 0; in < xv.n; ++in)
        for (int ic = 0; ic < xv.c; ++ic) {
            const std::size_t base = (static_cast<std::size_t>(in) * xv.c + ic) * plane;
            double mean = 0.0;
            for (std::size_t i = 0; i < plane; ++i) mean += xv.v[base + i];
            mean /= static_cast<double>(plane);
            double var = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
                const double d = xv.v[base + i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(plane);
            const T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
            inv_std[static_cast<std::size_t>(in) * xv.c + ic] = inv;
            for (std::size_t i = 0; i < plane; ++i)
                out.v[base + i] = static_cast<T>((xv.v[base + i] - mean) * inv);
        }
    return detail::make_op<T>(std::move(out), {x}, [inv_std = std::move(inv_std)](Node<T>& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        const std::size_t plane = self.value.plane();
        for (int in = 0; in < self.value.n; ++in)
            for (int ic = 0; ic < self.value.c; ++ic) {
                const std::size_t base = (static_cast<std::size_t>(in) * self.value.c + ic) * plane;
                const T inv = inv_std[static_cast<std::size_t>(in) * self.value.c + ic];
                double gmean = 0.0, gymean = 0.0;
                for (std::size_t i = 0; i < plane; ++i) {
                    gmean += self.grad.v[base + i];
                    gymean += static_cast<double>(self.grad.v[base + i]) * self.value.v[base + i];
                }
                gmean /= static_cast<double>(plane);
                gymean /= static_cast<double>(plane);
                for (std::size_t i = 0; i < plane; ++i)
                    p->grad.v[base + i] += inv * static_cast<T>(self.grad.v[base + i] - gmean -
                                                                self.value.v[base + i] * gymean);
            }
    });
}

// ---- convolution ---------------------------------------------------------

// 3x3 convolution, padding 1, stride 1 or 2. weight (Cout,Cin,3,3), bias (1,Cout,1,1).
template <typename T>
NodeRef<T> conv3x3(const NodeRef<T>& x, const NodeRef<T>& weight, const NodeRef<T>& bias,
                   int stride = 1) {
    const auto& xv = x->value;
    const auto& wv = weight->value;
    require(stride == 1 || stride == 2, "conv3x3: stride must be 1 or 2");
    require(wv.h == 3 && wv.w == 3 && wv.c == xv.c, "conv3x3: weight shape mismatch");
    require(bias->value.numel() == static_cast<std::size_t>(wv.n), "conv3x3: bias shape mismatch");

    const int cout = wv.n, cin = xv.c;
    const int oh = (xv.h - 1) / stride + 1;
    const int ow = (xv.w - 1) / stride + 1;
    const std::size_t ocols = static_cast<std::size_t>(oh) * ow;
    const int krows = cin * 9;

    Tensor<T> out(xv.n, cout, oh, ow);
    auto& col = conv_scratch<T>();
    col.resize(static_cast<std::size_t>(krows) * ocols);
    for (int in = 0; in < xv.n; ++in) {
        im2col_3x3(xv.sample(in), cin, xv.h, xv.w, stride, col.data());
        gemm(false, false, cout, static_cast<int>(ocols), krows, T(1), wv.v.data(), krows,
             col.data(), static_cast<int>(ocols), T(0), out.sample(in), static_cast<int>(ocols));
        for (int oc = 0; oc < cout; ++oc) {
            const T b = bias->value.v[oc];
            T* op = out.sample(in) + static_cast<std::size_t>(oc) * ocols;
            for (std::size_t i = 0; i < ocols; ++i) op[i] += b;
        }
    }

    const int ih = xv.h, iw = xv.w;
    return detail::make_op<T>(std::move(out), {x, weight, bias},
                              [stride, cin, cout, ih, iw, oh, ow](Node<T>& self) {
        auto& xp = self.parents[0];
        auto& wp = self.parents[1];
        auto& bp = self.parents[2];
        const std::size_t ocols = static_cast<std::size_t>(oh) * ow;
        const int krows = cin * 9;
        auto& col = conv_scratch<T>();
        col.resize(static_cast<std::size_t>(krows) * ocols);

        if (bp->requires_grad) {
            bp->ensure_grad();
            for (int in = 0; in < self.value.n; ++in)
                for (int oc = 0; oc < cout; ++oc) {
                    const T* gp = self.grad.sample(in) + static_cast<std::size_t>(oc) * ocols;
                    T acc = T(0);
                    for (std::size_t i = 0; i < ocols; ++i) acc += gp[i];
                    bp->grad.v[oc] += acc;
                }
        }
        if (wp->requires_grad) {
            wp->ensure_grad();
            for (int in = 0; in < self.value.n; ++in) {
                im2col_3x3(xp->value.sample(in), cin, ih, iw, stride, col.data());
                gemm(false, true, cout, krows, static_cast<int>(ocols), T(1), self.grad.sample(in),
                     static_cast<int>(ocols), col.data(), static_cast<int>(ocols), T(1),
                     wp->grad.v.data(), krows);
            }
        }
        if (xp->requires_grad) {
            xp->ensure_grad();
            for (int in = 0; in < self.value.n; ++in) {
                gemm(true, false, krows, static_cast<int>(ocols), cout, T(1), wp->value.v.data(),
                     krows, self.grad.sample(in), static_cast<int>(ocols), T(0), col.data(),
                     static_cast<int>(ocols));
                col2im_3x3(col.data(), cin, ih, iw, stride, xp->grad.sample(in));
            }
        }
    });
}

// ---- shape ops -----------------------------------------------------------

template <typename T>
NodeRef<T> upsample_nearest2(const NodeRef<T>& x) {
    const auto& xv = x->value;
    Tensor<T> out(xv.n, xv.c, xv.h * 2, xv.w * 2);
    for (int in = 0; in < xv.n; ++in)
        for (int ic = 0; ic < xv.c; ++ic)
            for (int y = 0; y < out.h; ++y)
                for (int xx = 0; xx < out.w; ++xx)
                    out.at(in, ic, y, xx) = xv.at(in, ic, y / 2, xx / 2);
    return detail::make_op<T>(std::move(out), {x}, [](Node<T>& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (int in = 0; in < self.value.n; ++in)
            for (int ic = 0; ic < self.value.c; ++ic)
                for (int y = 0; y < self.value.h; ++y)
                    for (int xx = 0; xx < self.value.w; ++xx)
                        p->grad.at(in, ic, y / 2, xx / 2) += self.grad.at(in, ic, y, xx);
    });
}

template <typename T>
NodeRef<T> maxpool2(const NodeRef<T>& x) {
    const auto& xv = x->value;
    require(xv.h >= 2 && xv.w >= 2, "maxpool2: spatial size must be >= 2");
    const int oh = xv.h / 2, ow = xv.w / 2;
    Tensor<T> out(xv.n, xv.c, oh, ow);
    std::vector<std::size_t> argmax(out.numel());
    std::size_t k = 0;
    for (int in = 0; in < xv.n; ++in)
        for (int ic = 0; ic < xv.c; ++ic)
            for (int y = 0; y < oh; ++y)
                for (int xx = 0; xx < ow; ++xx, ++k) {
                    T best = xv.at(in, ic, y * 2, xx * 2);
                    std::size_t best_idx =
                        ((static_cast<std::size_t>(in) * xv.c + ic) * xv.h + y * 2) * xv.w + xx * 2;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const std::size_t idx =
                                ((static_cast<std::size_t>(in) * xv.c + ic) * xv.h + y * 2 + dy) * xv.w +
                                xx * 2 + dx;
                            if (xv.v[idx] > best) {
                                best = xv.v[idx];
                                best_idx = idx;
                            }
                        }
                    out.v[k] = best;
                    argmax[k] = best_idx;
                }
    return detail::make_op<T>(std::move(out), {x}, [argmax = std::move(argmax)](Node<T>& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.numel(); ++i) p->grad.v[argmax[i]] += self.grad.v[i];
    });
}

template <typename T>
NodeRef<T> concat_channels(const NodeRef<T>& a, const NodeRef<T>& b) {
    const auto& av = a->value;
    const auto& bv = b->value;
    require(av.n == bv.n && av.h == bv.h && av.w == bv.w, "concat_channels: spatial mismatch");
    Tensor<T> out(av.n, av.c + bv.c, av.h, av.w);
    const std::size_t plane = av.plane();
    for (int in = 0; in < av.n; ++in) {
        std::copy_n(av.sample(in), static_cast<std::size_t>(av.c) * plane, out.sample(in));
        std::copy_n(bv.sample(in), static_cast<std::size_t>(bv.c) * plane,
                    out.sample(in) + static_cast<std::size_t>(av.c) * plane);
    }
    const int ca = av.c, cb = bv.c;
    return detail::make_op<T>(std::move(out), {a, b}, [ca, cb](Node<T>& self) {
        const std::size_t plane = self.value.plane();
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) pa->ensure_grad();
        if (pb->requires_grad) pb->ensure_grad();
        for (int in = 0; in < self.value.n; ++in) {
            const T* g = self.grad.sample(in);
            if (pa->requires_grad) {
                T* d = pa->grad.sample(in);
                for (std::size_t i = 0; i < static_cast<std::size_t>(ca) * plane; ++i) d[i] += g[i];
            }
            if (pb->requires_grad) {
                T* d = pb->grad.sample(in);
                const T* gb = g + static_cast<std::size_t>(ca) * plane;
                for (std::size_t i = 0; i < static_cast<std::size_t>(cb) * plane; ++i) d[i] += gb[i];
            }
        }
    });
}

// Copy of sample `index` as a (1,C,H,W) node; gradients scatter back.
template <typename T>
NodeRef<T> slice_sample(const NodeRef<T>& x, int index) {
    const auto& xv = x->value;
    require(index >= 0 && index < xv.n, "slice_sample: index out of range");
    Tensor<T> out(1, xv.c, xv.h, xv.w);
    std::copy_n(xv.sample(index), out.numel(), out.v.data());
    return detail::make_op<T>(std::move(out), {x}, [index](Node<T>& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        T* d = p->grad.sample(index);
        for (std::size_t i = 0; i < self.grad.numel(); ++i) d[i] += self.grad.v[i];
    });
}

// ---- reductions ----------------------------------------------------------

// Sum of absolute values -> scalar node.
template <typename T>
NodeRef<T> abs_sum(const NodeRef<T>& x) {
    double acc = 0.0;
    for (const T& v : x->value.v) acc += std::abs(static_cast<double>(v));
    return detail::make_op<T>(Tensor<T>::scalar(static_cast<T>(acc)), {x}, [](Node<T>& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        const T g = self.grad.v[0];
        for (std::size_t i = 0; i < p->value.numel(); ++i) {
            const T v = p->value.v[i];
            p->grad.v[i] += v > T(0) ? g : (v < T(0) ? -g : T(0));
        }
    });
}

template <typename T>
NodeRef<T> scalar_add(const NodeRef<T>& a, const NodeRef<T>& b) {
    require(a->value.numel() == 1 && b->value.numel() == 1, "scalar_add: scalars only");
    return add(a, b);
}

template <typename T>
NodeRef<T> scalar_scale(const NodeRef<T>& a, T k) {
    require(a->value.numel() == 1, "scalar_scale: scalar only");
    return affine(a, k, T(0));
}

template <typename T>
NodeRef<T> scalar_zero() {
    return constant(Tensor<T>::scalar(T(0)));
}

}  // namespace delight::nn
