#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "llab/param.hpp"
#include "llab/quantizer.hpp"
#include "llab/tape.hpp"
#include "llab/tensor.hpp"

namespace llab {

enum class LayerKind { kDense, kConv2d, kRelu, kSigmoid, kFlatten };

struct LayerDef {
    LayerKind kind;
    std::string name;  // unique for parameterized layers
    std::int64_t units_in = 0, units_out = 0;                // dense
    std::int64_t in_ch = 0, out_ch = 0, ksize = 0, pad = 0;  // conv2d
    bool has_bias = true;

    static LayerDef dense(std::string name, std::int64_t in, std::int64_t out, bool bias = true);
    static LayerDef conv2d(std::string name, std::int64_t in_ch, std::int64_t out_ch,
                           std::int64_t ksize, std::int64_t pad);
    static LayerDef relu();
    static LayerDef sigmoid();
    static LayerDef flatten();
};

struct ModelSpec {
    std::string name;
    std::vector<std::int64_t> input_shape;  // per sample, e.g. {1,8,8} or {2}
    std::vector<LayerDef> layers;
    // Layer names whose weights are eligible bit-flip targets; empty means
    // every quantized weight tensor.
    std::vector<std::string> fault_scope;
};

// One recorded forward pass. The tape is exposed so callers can compose
// extra nodes (penalties, projections) before differentiating.
struct Forward {
    Tape tape;
    int input = -1;   // input leaf
    int output = -1;  // (N, d_out) output node
    int loss = -1;    // scalar task-loss node, -1 when no target was given
    std::vector<std::pair<int, int>> param_leaves;  // (segment index, leaf node)
};

// Validated, layout-carrying executable form of a ModelSpec.
class ModelGraph {
public:
    explicit ModelGraph(ModelSpec spec);

    const ModelSpec& spec() const { return spec_; }
    const LayoutPtr& layout() const { return layout_; }
    std::int64_t param_count() const { return layout_->total(); }
    std::int64_t d_out() const { return d_out_; }

    // Records a forward pass; attaches an MSE loss when targets is non-null.
    // Weight leaves are wrapped in fake-quant nodes when quant is active.
    Forward forward(const ParamVector& params, const Tensor& inputs, const Tensor* targets,
                    const ModelQuant* quant = nullptr, bool want_input_grad = false) const;

    // Gradient of the scalar node `root` (defaults to fw.loss) with respect
    // to all parameters, assembled in layout order.
    ParamVector gradient(Forward& fw, int root = -1) const;

    // Hessian-vector product of the task loss at `params`, computed
    // reverse-over-reverse by differentiating grad(loss) . v.
    ParamVector hvp(const ParamVector& params, const Tensor& inputs, const Tensor& targets,
                    const ParamVector& v, const ModelQuant* quant = nullptr) const;

    // Gradient of projection . f(x) with respect to the batch inputs.
    Tensor input_gradient(const ParamVector& params, const Tensor& inputs,
                          const Tensor& projection, const ModelQuant* quant = nullptr) const;

private:
    ModelSpec spec_;
    LayoutPtr layout_;
    std::int64_t d_out_ = 0;
    std::vector<std::int64_t> output_shape_;  // per sample
};

// Mean loss over a dataset split, evaluated in fixed-size batches with
// deterministic order and per-sample weighting.
double evaluate(const ModelGraph& model, const ParamVector& params, const Tensor& inputs,
                const Tensor& targets, const ModelQuant* quant = nullptr,
                std::int64_t batch_size = 64);

// Rows [begin, end) of a batch-major tensor.
Tensor slice_rows(const Tensor& t, std::int64_t begin, std::int64_t end);

}  // namespace llab
