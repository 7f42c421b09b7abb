#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "llab/tensor.hpp"

namespace llab {

// Primitive op set. Backward passes are recorded as ordinary nodes on the
// same tape, so differentiating twice (for Hessian-vector products) reuses
// the single mechanism. Every op emitted by a backward rule is itself a
// member of this set.
enum class OpKind {
    kLeaf,
    kAdd,        // a + b, same shape
    kSub,        // a - b
    kMul,        // a * b elementwise
    kScale,      // c * x
    kAddScalar,  // x + c
    kMatMul,     // op(A) * op(B) with transpose flags
    kConvFwd,    // 2-D cross-correlation, stride 1, zero padding
    kConvDx,     // adjoint of kConvFwd w.r.t. its input
    kConvDw,     // adjoint of kConvFwd w.r.t. its kernel
    kRelu,
    kMaskPos,   // 1 where x > 0 else 0; carries no gradient
    kSigmoid,
    kFakeQuant,  // dequantize(quantize(x)); straight-through backward
    kSteMask,    // 1 where |x| <= bound else 0; carries no gradient
    kSum,        // all elements -> scalar
    kBroadcast,  // scalar -> shape
    kRowBroadcast,  // vector(n) -> (rows, n)
    kColSum,        // (m, n) -> vector(n)
    kChanBroadcast,  // vector(C) -> (N, C, H, W)
    kChanSum,        // (N, C, H, W) -> vector(C)
    kReshape,
    kUpow,  // x^p for x > 0, 0 otherwise
};

struct Node {
    OpKind kind = OpKind::kLeaf;
    int in0 = -1;
    int in1 = -1;
    double c0 = 0.0;  // scale factor / added constant / exponent / STE bound
    double c1 = 0.0;  // fake-quant scale
    int flag0 = 0;    // matmul transA / conv pad / broadcast rows
    int flag1 = 0;    // matmul transB / fake-quant bits
    int param_segment = -1;  // layout segment for parameter leaves
    bool needs_grad = false;
    Tensor value;
};

// Append-only record of an eagerly evaluated computation. Node ids are
// topologically ordered by construction. Immutable once built except for
// appending; a tape must not be shared between threads mid-construction.
class Tape {
public:
    int leaf(Tensor value, bool needs_grad, int param_segment = -1);

    int add(int a, int b);
    int sub(int a, int b);
    int mul(int a, int b);
    int scale(int x, double c);
    int add_scalar(int x, double c);
    int matmul(int a, int b, bool trans_a = false, bool trans_b = false);
    int conv_fwd(int x, int w, int pad);
    int conv_dx(int g, int w, int pad);
    int conv_dw(int x, int g, int pad);
    int relu(int x);
    int mask_pos(int x);
    int sigmoid(int x);
    int fake_quant(int x, float scale, int bits);
    int ste_mask(int x, double bound);
    int sum(int x);
    int broadcast(int s, std::vector<std::int64_t> shape);
    int row_broadcast(int v, std::int64_t rows);
    int col_sum(int x);
    int chan_broadcast(int v, std::int64_t n, std::int64_t h, std::int64_t w);
    int chan_sum(int x);
    int reshape(int x, std::vector<std::int64_t> shape);
    int upow(int x, double p);

    // Convenience compositions.
    int dot(int a, int b);                      // sum(a * b)
    int mse(int pred, int target);              // mean squared error over all elements
    int frobenius_sq(int x);                    // sum of squares
    int mean_all(int x);                        // sum / numel

    const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    int size() const { return static_cast<int>(nodes_.size()); }
    void reserve(std::size_t n) { nodes_.reserve(n); }

    // Reverse sweep from a scalar root. Returns, for every node id present
    // when the sweep started, the id of its adjoint node (-1 when no
    // gradient flows there). New nodes are appended to this tape, so a
    // second sweep over a scalar built from adjoints yields second-order
    // derivatives.
    std::vector<int> backward(int root);

private:
    int push(Node n);
    std::vector<Node> nodes_;
};

const char* op_name(OpKind kind);

}  // namespace llab
