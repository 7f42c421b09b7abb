#include "llab/tape.hpp"

#include <cmath>
#include <cstddef>

#include "llab/errors.hpp"

namespace llab {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}

struct ConvGeom {
    std::int64_t n, ic, h, w;      // input
    std::int64_t oc, kh, kw;       // kernel
    std::int64_t oh, ow;           // output
    int pad;
};

ConvGeom conv_geom_fwd(const Tensor& x, const Tensor& k, int pad) {
    require(x.shape.size() == 4, "conv input must be NCHW, got " + shape_str(x.shape));
    require(k.shape.size() == 4, "conv kernel must be OIHW, got " + shape_str(k.shape));
    ConvGeom g{x.shape[0], x.shape[1], x.shape[2], x.shape[3],
               k.shape[0], k.shape[2], k.shape[3], 0, 0, pad};
    require(k.shape[1] == g.ic, "conv kernel in-channels mismatch");
    g.oh = g.h + 2 * pad - g.kh + 1;
    g.ow = g.w + 2 * pad - g.kw + 1;
    require(g.oh >= 1 && g.ow >= 1, "conv kernel larger than padded input");
    return g;
}

}  // namespace

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::kLeaf: return "leaf";
        case OpKind::kAdd: return "add";
        case OpKind::kSub: return "sub";
        case OpKind::kMul: return "mul";
        case OpKind::kScale: return "scale";
        case OpKind::kAddScalar: return "add_scalar";
        case OpKind::kMatMul: return "matmul";
        case OpKind::kConvFwd: return "conv_fwd";
        case OpKind::kConvDx: return "conv_dx";
        case OpKind::kConvDw: return "conv_dw";
        case OpKind::kRelu: return "relu";
        case OpKind::kMaskPos: return "mask_pos";
        case OpKind::kSigmoid: return "sigmoid";
        case OpKind::kFakeQuant: return "fake_quant";
        case OpKind::kSteMask: return "ste_mask";
        case OpKind::kSum: return "sum";
        case OpKind::kBroadcast: return "broadcast";
        case OpKind::kRowBroadcast: return "row_broadcast";
        case OpKind::kColSum: return "col_sum";
        case OpKind::kChanBroadcast: return "chan_broadcast";
        case OpKind::kChanSum: return "chan_sum";
        case OpKind::kReshape: return "reshape";
        case OpKind::kUpow: return "upow";
    }
    return "?";
}

int Tape::push(Node n) {
    const int id = static_cast<int>(nodes_.size());
    if (!n.value.all_finite())
        throw NumericError(std::string("non-finite value produced by op '") + op_name(n.kind) +
                               "' (node " + std::to_string(id) + ")",
                           id);
    nodes_.push_back(std::move(n));
    return id;
}

int Tape::leaf(Tensor value, bool needs_grad, int param_segment) {
    Node n;
    n.kind = OpKind::kLeaf;
    n.needs_grad = needs_grad;
    n.param_segment = param_segment;
    n.value = std::move(value);
    return push(std::move(n));
}

int Tape::add(int a, int b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require(ta.same_shape(tb), "add shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    Node n;
    n.kind = OpKind::kAdd;
    n.in0 = a;
    n.in1 = b;
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    n.value = Tensor(ta.shape);
    for (std::size_t i = 0; i < ta.data.size(); ++i) n.value.data[i] = ta.data[i] + tb.data[i];
    return push(std::move(n));
}

int Tape::sub(int a, int b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require(ta.same_shape(tb), "sub shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    Node n;
    n.kind = OpKind::kSub;
    n.in0 = a;
    n.in1 = b;
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    n.value = Tensor(ta.shape);
    for (std::size_t i = 0; i < ta.data.size(); ++i) n.value.data[i] = ta.data[i] - tb.data[i];
    return push(std::move(n));
}

int Tape::mul(int a, int b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require(ta.same_shape(tb), "mul shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    Node n;
    n.kind = OpKind::kMul;
    n.in0 = a;
    n.in1 = b;
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    n.value = Tensor(ta.shape);
    for (std::size_t i = 0; i < ta.data.size(); ++i) n.value.data[i] = ta.data[i] * tb.data[i];
    return push(std::move(n));
}

int Tape::scale(int x, double c) {
    const Tensor& tx = val(x);
    Node n;
    n.kind = OpKind::kScale;
    n.in0 = x;
    n.c0 = c;
    n.needs_grad = node(x).needs_grad;
    n.value = Tensor(tx.shape);
    for (std::size_t i = 0; i < tx.data.size(); ++i)
        n.value.data[i] = static_cast<float>(c * tx.data[i]);
    return push(std::move(n));
}

int Tape::add_scalar(int x, double c) {
    const Tensor& tx = val(x);
    Node n;
    n.kind = OpKind::kAddScalar;
    n.in0 = x;
    n.c0 = c;
    n.needs_grad = node(x).needs_grad;
    n.value = Tensor(tx.shape);
    for (std::size_t i = 0; i < tx.data.size(); ++i)
        n.value.data[i] = static_cast<float>(tx.data[i] + c);
    return push(std::move(n));
}

int Tape::matmul(int a, int b, bool trans_a, bool trans_b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require(ta.shape.size() == 2 && tb.shape.size() == 2, "matmul expects rank-2 tensors");
    const std::int64_t m = trans_a ? ta.shape[1] : ta.shape[0];
    const std::int64_t k = trans_a ? ta.shape[0] : ta.shape[1];
    const std::int64_t kb = trans_b ? tb.shape[1] : tb.shape[0];
    const std::int64_t nn = trans_b ? tb.shape[0] : tb.shape[1];
    require(k == kb, "matmul inner dimension mismatch " + shape_str(ta.shape) + " x " + shape_str(tb.shape));

    Node n;
    n.kind = OpKind::kMatMul;
    n.in0 = a;
    n.in1 = b;
    n.flag0 = trans_a ? 1 : 0;
    n.flag1 = trans_b ? 1 : 0;
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    n.value = Tensor({m, nn});

    const std::int64_t lda = ta.shape[1];
    const std::int64_t ldb = tb.shape[1];
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t j = 0; j < nn; ++j) {
            double acc = 0.0;
            for (std::int64_t p = 0; p < k; ++p) {
                const float av = trans_a ? ta.at(p * lda + i) : ta.at(i * lda + p);
                const float bv = trans_b ? tb.at(j * ldb + p) : tb.at(p * ldb + j);
                acc += static_cast<double>(av) * static_cast<double>(bv);
            }
            n.value.at(i * nn + j) = static_cast<float>(acc);
        }
    }
    return push(std::move(n));
}

int Tape::conv_fwd(int x, int w, int pad) {
    const Tensor& tx = val(x);
    const Tensor& tw = val(w);
    const ConvGeom g = conv_geom_fwd(tx, tw, pad);

    Node n;
    n.kind = OpKind::kConvFwd;
    n.in0 = x;
    n.in1 = w;
    n.flag0 = pad;
    n.needs_grad = node(x).needs_grad || node(w).needs_grad;
    n.value = Tensor({g.n, g.oc, g.oh, g.ow});

    for (std::int64_t bn = 0; bn < g.n; ++bn)
        for (std::int64_t oc = 0; oc < g.oc; ++oc)
            for (std::int64_t oh = 0; oh < g.oh; ++oh)
                for (std::int64_t ow = 0; ow < g.ow; ++ow) {
                    double acc = 0.0;
                    for (std::int64_t ic = 0; ic < g.ic; ++ic)
                        for (std::int64_t kh = 0; kh < g.kh; ++kh) {
                            const std::int64_t ih = oh + kh - pad;
                            if (ih < 0 || ih >= g.h) continue;
                            for (std::int64_t kw = 0; kw < g.kw; ++kw) {
                                const std::int64_t iw = ow + kw - pad;
                                if (iw < 0 || iw >= g.w) continue;
                                acc += static_cast<double>(
                                           tx.at(((bn * g.ic + ic) * g.h + ih) * g.w + iw)) *
                                       static_cast<double>(
                                           tw.at(((oc * g.ic + ic) * g.kh + kh) * g.kw + kw));
                            }
                        }
                    n.value.at(((bn * g.oc + oc) * g.oh + oh) * g.ow + ow) =
                        static_cast<float>(acc);
                }
    return push(std::move(n));
}

int Tape::conv_dx(int gout, int w, int pad) {
    const Tensor& tg = val(gout);
    const Tensor& tw = val(w);
    require(tg.shape.size() == 4 && tw.shape.size() == 4, "conv_dx expects NCHW grad and OIHW kernel");
    const std::int64_t n_ = tg.shape[0], oc = tg.shape[1], oh = tg.shape[2], ow = tg.shape[3];
    const std::int64_t ic = tw.shape[1], kh = tw.shape[2], kw = tw.shape[3];
    require(tw.shape[0] == oc, "conv_dx kernel out-channels mismatch");
    const std::int64_t h = oh - 1 + kh - 2 * pad;
    const std::int64_t w_ = ow - 1 + kw - 2 * pad;
    require(h >= 1 && w_ >= 1, "conv_dx implied input size invalid");

    Node n;
    n.kind = OpKind::kConvDx;
    n.in0 = gout;
    n.in1 = w;
    n.flag0 = pad;
    n.needs_grad = node(gout).needs_grad || node(w).needs_grad;
    n.value = Tensor({n_, ic, h, w_});

    for (std::int64_t bn = 0; bn < n_; ++bn)
        for (std::int64_t c = 0; c < ic; ++c)
            for (std::int64_t ih = 0; ih < h; ++ih)
                for (std::int64_t iw = 0; iw < w_; ++iw) {
                    double acc = 0.0;
                    for (std::int64_t o = 0; o < oc; ++o)
                        for (std::int64_t r = 0; r < kh; ++r) {
                            const std::int64_t so = ih - r + pad;
                            if (so < 0 || so >= oh) continue;
                            for (std::int64_t s = 0; s < kw; ++s) {
                                const std::int64_t to = iw - s + pad;
                                if (to < 0 || to >= ow) continue;
                                acc += static_cast<double>(
                                           tg.at(((bn * oc + o) * oh + so) * ow + to)) *
                                       static_cast<double>(
                                           tw.at(((o * ic + c) * kh + r) * kw + s));
                            }
                        }
                    n.value.at(((bn * ic + c) * h + ih) * w_ + iw) = static_cast<float>(acc);
                }
    return push(std::move(n));
}

int Tape::conv_dw(int x, int gout, int pad) {
    const Tensor& tx = val(x);
    const Tensor& tg = val(gout);
    require(tx.shape.size() == 4 && tg.shape.size() == 4, "conv_dw expects NCHW tensors");
    const std::int64_t n_ = tx.shape[0], ic = tx.shape[1], h = tx.shape[2], w_ = tx.shape[3];
    const std::int64_t oc = tg.shape[1], oh = tg.shape[2], ow = tg.shape[3];
    require(tg.shape[0] == n_, "conv_dw batch mismatch");
    const std::int64_t kh = h + 2 * pad - oh + 1;
    const std::int64_t kw = w_ + 2 * pad - ow + 1;
    require(kh >= 1 && kw >= 1, "conv_dw implied kernel size invalid");

    Node n;
    n.kind = OpKind::kConvDw;
    n.in0 = x;
    n.in1 = gout;
    n.flag0 = pad;
    n.needs_grad = node(x).needs_grad || node(gout).needs_grad;
    n.value = Tensor({oc, ic, kh, kw});

    for (std::int64_t o = 0; o < oc; ++o)
        for (std::int64_t c = 0; c < ic; ++c)
            for (std::int64_t r = 0; r < kh; ++r)
                for (std::int64_t s = 0; s < kw; ++s) {
                    double acc = 0.0;
                    for (std::int64_t bn = 0; bn < n_; ++bn)
                        for (std::int64_t io = 0; io < oh; ++io) {
                            const std::int64_t ih = io + r - pad;
                            if (ih < 0 || ih >= h) continue;
                            for (std::int64_t jo = 0; jo < ow; ++jo) {
                                const std::int64_t iw = jo + s - pad;
                                if (iw < 0 || iw >= w_) continue;
                                acc += static_cast<double>(
                                           tx.at(((bn * ic + c) * h + ih) * w_ + iw)) *
                                       static_cast<double>(
                                           tg.at(((bn * oc + o) * oh + io) * ow + jo));
                            }
                        }
                    n.value.at(((o * ic + c) * kh + r) * kw + s) = static_cast<float>(acc);
                }
    return push(std::move(n));
}

int Tape::relu(int x) {
    const Tensor& tx = val(x);
    Node n;
    n.kind = OpKind::kRelu;
    n.in0 = x;
    n.needs_grad = node(x).needs_grad;
    n.value = Tensor(tx.shape);
    for (std::size_t i = 0; i < tx.data.size(); ++i)
        n.value.data[i] = tx.data[i] > 0.0f ? tx.data[i] : 0.0f;
    return push(std::move(n));
}

int Tape::mask_pos(int x) {
    const Tensor& tx = val(x);
    Node n;
    n.kind = OpKind::kMaskPos;
    n.in0 = x;
    n.needs_grad = false;  // derivative defined as zero everywhere
    n.value = Tensor(tx.shape);
    for (std::size_t i = 0; i < tx.data.size(); ++i)
        n.value.data[i] = tx.data[i] > 0.0f ? 1.0f : 0.0f;
    return push(std::move(n));
}

int Tape::sigmoid(int x) {
    const Tensor& tx = val(x);
    Node n;
    n.kind = OpKind::kSigmoid;
    n.in0 = x;
    n.needs_grad = node(x).needs_grad;
    n.value = Tensor(tx.shape);
    for (std::size_t i = 0; i < tx.data.size(); ++i)
        n.value.data[i] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(tx.data[i]))));
    return push(std::move(n));
}

int Tape::fake_quant(int x, float s, int bits) {
    require(s > 0.0f, "fake_quant scale must be positive");
    require(bits >= 2 && bits <= 16, "fake_quant bits out of range");
    const Tensor& tx = val(x);
    const double qmax = static_cast<double>((1 << (bits - 1)) - 1);
    const double qmin = -static_cast<double>(1 << (bits - 1));
    Node n;
    n.kind = OpKind::kFakeQuant;
    n.in0 = x;
    n.c0 = qmax * static_cast<double>(s);  // STE pass-through bound on |x|
    n.c1 = static_cast<double>(s);
    n.flag1 = bits;
    n.needs_grad = node(x).needs_grad;
    n.value = Tensor(tx.shape);
    for (std::size_t i = 0; i < tx.data.size(); ++i) {
        double code = std::nearbyint(static_cast<double>(tx.data[i]) / static_cast<double>(s));
        if (code > qmax) code = qmax;
        if (code < qmin) code = qmin;
        n.value.data[i] = static_cast<float>(code * static_cast<double>(s));
    }
    return push(std::move(n));
}

int Tape::ste_mask(int x, double bound) {
    const Tensor& tx = val(x);
    Node n;
    n.kind = OpKind::kSteMask;
    n.in0 = x;
    n.c0 = bound;
    n.needs_grad = false;
    n.value = Tensor(tx.shape);
    for (std::size_t i = 0; i < tx.data.size(); ++i)
        n.value.data[i] = std::fabs(static_cast<double>(tx.data[i])) <= bound ? 1.0f : 0.0f;
    return push(std::move(n));
}

int Tape::sum(int x) {
    const Tensor& tx = val(x);
    Node n;
    n.kind = OpKind::kSum;
    n.in0 = x;
    n.needs_grad = node(x).needs_grad;
    double acc = 0.0;
    for (float v : tx.data) acc += static_cast<double>(v);
    n.value = Tensor::scalar(static_cast<float>(acc));
    return push(std::move(n));
}

int Tape::broadcast(int s, std::vector<std::int64_t> shape) {
    const Tensor& ts = val(s);
    require(ts.numel() == 1, "broadcast source must be scalar");
    Node n;
    n.kind = OpKind::kBroadcast;
    n.in0 = s;
    n.needs_grad = node(s).needs_grad;
    n.value = Tensor::full(std::move(shape), ts.data[0]);
    return push(std::move(n));
}

int Tape::row_broadcast(int v, std::int64_t rows) {
    const Tensor& tv = val(v);
    require(tv.shape.size() == 1, "row_broadcast expects a vector");
    const std::int64_t cols = tv.shape[0];
    Node n;
    n.kind = OpKind::kRowBroadcast;
    n.in0 = v;
    n.flag0 = static_cast<int>(rows);
    n.needs_grad = node(v).needs_grad;
    n.value = Tensor({rows, cols});
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < cols; ++c) n.value.at(r * cols + c) = tv.at(c);
    return push(std::move(n));
}

int Tape::col_sum(int x) {
    const Tensor& tx = val(x);
    require(tx.shape.size() == 2, "col_sum expects a matrix");
    const std::int64_t rows = tx.shape[0], cols = tx.shape[1];
    Node n;
    n.kind = OpKind::kColSum;
    n.in0 = x;
    n.needs_grad = node(x).needs_grad;
    n.value = Tensor({cols});
    for (std::int64_t c = 0; c < cols; ++c) {
        double acc = 0.0;
        for (std::int64_t r = 0; r < rows; ++r) acc += static_cast<double>(tx.at(r * cols + c));
        n.value.at(c) = static_cast<float>(acc);
    }
    return push(std::move(n));
}

int Tape::chan_broadcast(int v, std::int64_t n_, std::int64_t h, std::int64_t w) {
    const Tensor& tv = val(v);
    require(tv.shape.size() == 1, "chan_broadcast expects a vector");
    const std::int64_t c_ = tv.shape[0];
    Node n;
    n.kind = OpKind::kChanBroadcast;
    n.in0 = v;
    n.needs_grad = node(v).needs_grad;
    n.value = Tensor({n_, c_, h, w});
    for (std::int64_t bn = 0; bn < n_; ++bn)
        for (std::int64_t c = 0; c < c_; ++c) {
            const float bv = tv.at(c);
            for (std::int64_t i = 0; i < h * w; ++i)
                n.value.at((bn * c_ + c) * h * w + i) = bv;
        }
    return push(std::move(n));
}

int Tape::chan_sum(int x) {
    const Tensor& tx = val(x);
    require(tx.shape.size() == 4, "chan_sum expects NCHW");
    const std::int64_t n_ = tx.shape[0], c_ = tx.shape[1], hw = tx.shape[2] * tx.shape[3];
    Node n;
    n.kind = OpKind::kChanSum;
    n.in0 = x;
    n.needs_grad = node(x).needs_grad;
    n.value = Tensor({c_});
    for (std::int64_t c = 0; c < c_; ++c) {
        double acc = 0.0;
        for (std::int64_t bn = 0; bn < n_; ++bn)
            for (std::int64_t i = 0; i < hw; ++i)
                acc += static_cast<double>(tx.at((bn * c_ + c) * hw + i));
        n.value.at(c) = static_cast<float>(acc);
    }
    return push(std::move(n));
}

int Tape::reshape(int x, std::vector<std::int64_t> shape) {
    const Tensor& tx = val(x);
    require(shape_numel(shape) == tx.numel(),
            "reshape to " + shape_str(shape) + " incompatible with " + shape_str(tx.shape));
    Node n;
    n.kind = OpKind::kReshape;
    n.in0 = x;
    n.needs_grad = node(x).needs_grad;
    n.value = Tensor(std::move(shape), tx.data);
    return push(std::move(n));
}

int Tape::upow(int x, double p) {
    const Tensor& tx = val(x);
    Node n;
    n.kind = OpKind::kUpow;
    n.in0 = x;
    n.c0 = p;
    n.needs_grad = node(x).needs_grad;
    n.value = Tensor(tx.shape);
    for (std::size_t i = 0; i < tx.data.size(); ++i) {
        const double xv = static_cast<double>(tx.data[i]);
        n.value.data[i] = xv <= 0.0 ? 0.0f : static_cast<float>(std::pow(xv, p));
    }
    return push(std::move(n));
}

int Tape::dot(int a, int b) {
    return sum(mul(a, b));
}

int Tape::mse(int pred, int target) {
    const int d = sub(pred, target);
    const int sq = mul(d, d);
    return scale(sum(sq), 1.0 / static_cast<double>(val(pred).numel()));
}

int Tape::frobenius_sq(int x) {
    return sum(mul(x, x));
}

int Tape::mean_all(int x) {
    return scale(sum(x), 1.0 / static_cast<double>(val(x).numel()));
}

std::vector<int> Tape::backward(int root) {
    if (root < 0 || root >= size()) throw StateError("backward root out of range");
    if (val(root).numel() != 1) throw StateError("backward root must be scalar");

    const int frontier = size();
    std::vector<int> adj(static_cast<std::size_t>(frontier), -1);
    adj[static_cast<std::size_t>(root)] = leaf(Tensor::scalar(1.0f), false);

    auto accumulate = [&](int target, int contrib) {
        if (target >= frontier) throw StateError("backward reached a node created mid-sweep");
        auto& slot = adj[static_cast<std::size_t>(target)];
        slot = slot < 0 ? contrib : add(slot, contrib);
    };

    for (int id = root; id >= 0; --id) {
        const int g = adj[static_cast<std::size_t>(id)];
        if (g < 0) continue;
        // Copy inputs/attrs: node references may dangle across push() reallocation.
        const Node& nd = node(id);
        const OpKind kind = nd.kind;
        const int in0 = nd.in0, in1 = nd.in1;
        const int flag0 = nd.flag0, flag1 = nd.flag1;
        const double c0 = nd.c0;
        const bool g0 = in0 >= 0 && node(in0).needs_grad;
        const bool g1 = in1 >= 0 && node(in1).needs_grad;
        if (!g0 && !g1) continue;

        switch (kind) {
            case OpKind::kLeaf:
            case OpKind::kMaskPos:
            case OpKind::kSteMask:
                break;
            case OpKind::kAdd:
                if (g0) accumulate(in0, g);
                if (g1) accumulate(in1, g);
                break;
            case OpKind::kSub:
                if (g0) accumulate(in0, g);
                if (g1) accumulate(in1, scale(g, -1.0));
                break;
            case OpKind::kMul:
                if (g0) accumulate(in0, mul(g, in1));
                if (g1) accumulate(in1, mul(g, in0));
                break;
            case OpKind::kScale:
                if (g0) accumulate(in0, scale(g, c0));
                break;
            case OpKind::kAddScalar:
                if (g0) accumulate(in0, g);
                break;
            case OpKind::kMatMul: {
                const bool ta = flag0 != 0, tb = flag1 != 0;
                if (g0) accumulate(in0, ta ? matmul(in1, g, tb, true) : matmul(g, in1, false, !tb));
                if (g1) accumulate(in1, tb ? matmul(g, in0, true, ta) : matmul(in0, g, !ta, false));
                break;
            }
            case OpKind::kConvFwd:
                if (g0) accumulate(in0, conv_dx(g, in1, flag0));
                if (g1) accumulate(in1, conv_dw(in0, g, flag0));
                break;
            case OpKind::kConvDx:
                // value = adjoint-of-conv applied to in0 with kernel in1
                if (g0) accumulate(in0, conv_fwd(g, in1, flag0));
                if (g1) accumulate(in1, conv_dw(g, in0, flag0));
                break;
            case OpKind::kConvDw:
                // value = kernel gradient for input in0 and output-grad in1
                if (g0) accumulate(in0, conv_dx(in1, g, flag0));
                if (g1) accumulate(in1, conv_fwd(in0, g, flag0));
                break;
            case OpKind::kRelu:
                if (g0) accumulate(in0, mul(g, mask_pos(in0)));
                break;
            case OpKind::kSigmoid: {
                // derivative y(1-y) written in recorded ops so it stays differentiable
                if (g0) {
                    const int one_minus = add_scalar(scale(id, -1.0), 1.0);
                    accumulate(in0, mul(g, mul(id, one_minus)));
                }
                break;
            }
            case OpKind::kFakeQuant:
                if (g0) accumulate(in0, mul(g, ste_mask(in0, c0)));
                break;
            case OpKind::kSum:
                if (g0) accumulate(in0, broadcast(g, val(in0).shape));
                break;
            case OpKind::kBroadcast:
                if (g0) accumulate(in0, sum(g));
                break;
            case OpKind::kRowBroadcast:
                if (g0) accumulate(in0, col_sum(g));
                break;
            case OpKind::kColSum:
                if (g0) accumulate(in0, row_broadcast(g, val(in0).shape[0]));
                break;
            case OpKind::kChanBroadcast:
                if (g0) accumulate(in0, chan_sum(g));
                break;
            case OpKind::kChanSum: {
                if (g0) {
                    const auto& xs = val(in0).shape;
                    accumulate(in0, chan_broadcast(g, xs[0], xs[2], xs[3]));
                }
                break;
            }
            case OpKind::kReshape:
                if (g0) accumulate(in0, reshape(g, val(in0).shape));
                break;
            case OpKind::kUpow:
                if (g0) accumulate(in0, mul(g, scale(upow(in0, c0 - 1.0), c0)));
                break;
        }
    }
    return adj;
}

}  // namespace llab
