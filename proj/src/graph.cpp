#include "llab/graph.hpp"

#include <algorithm>

#include "llab/errors.hpp"

namespace llab {

LayerDef LayerDef::dense(std::string name, std::int64_t in, std::int64_t out, bool bias) {
    LayerDef d;
    d.kind = LayerKind::kDense;
    d.name = std::move(name);
    d.units_in = in;
    d.units_out = out;
    d.has_bias = bias;
    return d;
}

LayerDef LayerDef::conv2d(std::string name, std::int64_t in_ch, std::int64_t out_ch,
                          std::int64_t ksize, std::int64_t pad) {
    LayerDef d;
    d.kind = LayerKind::kConv2d;
    d.name = std::move(name);
    d.in_ch = in_ch;
    d.out_ch = out_ch;
    d.ksize = ksize;
    d.pad = pad;
    return d;
}

LayerDef LayerDef::relu() {
    LayerDef d;
    d.kind = LayerKind::kRelu;
    return d;
}

LayerDef LayerDef::sigmoid() {
    LayerDef d;
    d.kind = LayerKind::kSigmoid;
    return d;
}

LayerDef LayerDef::flatten() {
    LayerDef d;
    d.kind = LayerKind::kFlatten;
    return d;
}

ModelGraph::ModelGraph(ModelSpec spec) : spec_(std::move(spec)) {
    std::vector<Segment> segments;
    std::vector<std::int64_t> shape = spec_.input_shape;  // per-sample shape
    for (const auto& layer : spec_.layers) {
        switch (layer.kind) {
            case LayerKind::kDense: {
                if (shape.size() != 1 || shape[0] != layer.units_in)
                    throw ConfigError("dense layer '" + layer.name + "' expects input dim " +
                                      std::to_string(layer.units_in) + ", got " + shape_str(shape));
                segments.push_back({layer.name + ".w",
                                    {layer.units_in, layer.units_out},
                                    SegRole::kDenseWeight});
                if (layer.has_bias)
                    segments.push_back({layer.name + ".b", {layer.units_out}, SegRole::kBias});
                shape = {layer.units_out};
                break;
            }
            case LayerKind::kConv2d: {
                if (shape.size() != 3 || shape[0] != layer.in_ch)
                    throw ConfigError("conv layer '" + layer.name + "' expects " +
                                      std::to_string(layer.in_ch) + " input channels, got " +
                                      shape_str(shape));
                const std::int64_t oh = shape[1] + 2 * layer.pad - layer.ksize + 1;
                const std::int64_t ow = shape[2] + 2 * layer.pad - layer.ksize + 1;
                if (oh < 1 || ow < 1)
                    throw ConfigError("conv layer '" + layer.name + "' kernel exceeds padded input");
                segments.push_back({layer.name + ".w",
                                    {layer.out_ch, layer.in_ch, layer.ksize, layer.ksize},
                                    SegRole::kConvWeight});
                segments.push_back({layer.name + ".b", {layer.out_ch}, SegRole::kBias});
                shape = {layer.out_ch, oh, ow};
                break;
            }
            case LayerKind::kRelu:
            case LayerKind::kSigmoid:
                break;
            case LayerKind::kFlatten:
                shape = {shape_numel(shape)};
                break;
        }
    }
    layout_ = std::make_shared<const Layout>(std::move(segments));
    output_shape_ = shape;
    d_out_ = shape_numel(shape);
}

Forward ModelGraph::forward(const ParamVector& params, const Tensor& inputs, const Tensor* targets,
                            const ModelQuant* quant, bool want_input_grad) const {
    if (params.size() != layout_->total())
        throw ConfigError("parameter vector length " + std::to_string(params.size()) +
                          " does not match layout total " + std::to_string(layout_->total()));
    if (inputs.shape.empty())
        throw ConfigError("batch input must have a leading batch dimension");
    const std::int64_t batch = inputs.shape[0];
    {
        std::vector<std::int64_t> per_sample(inputs.shape.begin() + 1, inputs.shape.end());
        if (per_sample != spec_.input_shape)
            throw ConfigError("batch sample shape " + shape_str(per_sample) +
                              " does not match model input " + shape_str(spec_.input_shape));
    }

    Forward fw;
    Tape& tape = fw.tape;
    fw.input = tape.leaf(inputs, want_input_grad);
    int cur = fw.input;

    int seg_cursor = 0;
    auto param_leaf = [&](int seg_index) {
        const int id = tape.leaf(params.segment_tensor(seg_index), true, seg_index);
        fw.param_leaves.emplace_back(seg_index, id);
        return id;
    };

    for (const auto& layer : spec_.layers) {
        switch (layer.kind) {
            case LayerKind::kDense: {
                const int w_seg = seg_cursor++;
                int w = param_leaf(w_seg);
                if (quant && quant->active())
                    if (const QuantSpec* qs = quant->spec_for(w_seg))
                        w = tape.fake_quant(w, qs->scale, qs->bits);
                cur = tape.matmul(cur, w);
                if (layer.has_bias) {
                    const int b = param_leaf(seg_cursor++);
                    cur = tape.add(cur, tape.row_broadcast(b, batch));
                }
                break;
            }
            case LayerKind::kConv2d: {
                const int w_seg = seg_cursor++;
                const int b_seg = seg_cursor++;
                int w = param_leaf(w_seg);
                if (quant && quant->active())
                    if (const QuantSpec* qs = quant->spec_for(w_seg))
                        w = tape.fake_quant(w, qs->scale, qs->bits);
                const int b = param_leaf(b_seg);
                const int conv = tape.conv_fwd(cur, w, static_cast<int>(layer.pad));
                const auto& cs = tape.val(conv).shape;
                cur = tape.add(conv, tape.chan_broadcast(b, cs[0], cs[2], cs[3]));
                break;
            }
            case LayerKind::kRelu:
                cur = tape.relu(cur);
                break;
            case LayerKind::kSigmoid:
                cur = tape.sigmoid(cur);
                break;
            case LayerKind::kFlatten: {
                const auto& s = tape.val(cur).shape;
                std::int64_t per = 1;
                for (std::size_t i = 1; i < s.size(); ++i) per *= s[i];
                cur = tape.reshape(cur, {batch, per});
                break;
            }
        }
    }

    fw.output = tape.val(cur).shape.size() == 2 ? cur : tape.reshape(cur, {batch, d_out_});

    if (targets) {
        if (targets->shape.empty() || targets->shape[0] != batch)
            throw ConfigError("target batch size mismatch");
        if (targets->numel() != batch * d_out_)
            throw ConfigError("target numel " + std::to_string(targets->numel()) +
                              " does not match output " + std::to_string(batch * d_out_));
        Tensor flat_target(*targets);
        flat_target.shape = {batch, d_out_};
        const int t = tape.leaf(std::move(flat_target), false);
        fw.loss = tape.mse(fw.output, t);
    }
    return fw;
}

ParamVector ModelGraph::gradient(Forward& fw, int root) const {
    if (root < 0) root = fw.loss;
    if (root < 0) throw StateError("gradient requested but forward recorded no loss");
    const std::vector<int> adj = fw.tape.backward(root);
    ParamVector g(layout_);
    for (const auto& [seg, leaf] : fw.param_leaves) {
        if (leaf >= static_cast<int>(adj.size())) continue;
        const int a = adj[static_cast<std::size_t>(leaf)];
        if (a < 0) continue;  // no gradient path: stays zero
        const Segment& sg = layout_->segments()[static_cast<std::size_t>(seg)];
        const Tensor& av = fw.tape.val(a);
        for (std::int64_t i = 0; i < sg.size; ++i)
            g.values[static_cast<std::size_t>(sg.offset + i)] = av.at(i);
    }
    return g;
}

ParamVector ModelGraph::hvp(const ParamVector& params, const Tensor& inputs, const Tensor& targets,
                            const ParamVector& v, const ModelQuant* quant) const {
    if (v.size() != layout_->total()) throw ConfigError("hvp direction length mismatch");
    Forward fw = forward(params, inputs, &targets, quant);
    Tape& tape = fw.tape;
    const std::vector<int> adj = tape.backward(fw.loss);

    // s = grad(loss) . v with v held constant
    int s = -1;
    for (const auto& [seg, leaf] : fw.param_leaves) {
        const int a = adj[static_cast<std::size_t>(leaf)];
        if (a < 0) continue;
        const int v_leaf = tape.leaf(v.segment_tensor(seg), false);
        const int term = tape.dot(a, v_leaf);
        s = s < 0 ? term : tape.add(s, term);
    }
    if (s < 0) return ParamVector(layout_);  // loss independent of parameters

    const std::vector<int> adj2 = tape.backward(s);
    ParamVector h(layout_);
    for (const auto& [seg, leaf] : fw.param_leaves) {
        const int a = adj2[static_cast<std::size_t>(leaf)];
        if (a < 0) continue;
        const Segment& sg = layout_->segments()[static_cast<std::size_t>(seg)];
        const Tensor& av = tape.val(a);
        for (std::int64_t i = 0; i < sg.size; ++i)
            h.values[static_cast<std::size_t>(sg.offset + i)] = av.at(i);
    }
    return h;
}

Tensor ModelGraph::input_gradient(const ParamVector& params, const Tensor& inputs,
                                  const Tensor& projection, const ModelQuant* quant) const {
    if (projection.numel() != d_out_)
        throw ConfigError("projection length " + std::to_string(projection.numel()) +
                          " does not match output dim " + std::to_string(d_out_));
    Forward fw = forward(params, inputs, nullptr, quant, /*want_input_grad=*/true);
    Tape& tape = fw.tape;
    Tensor proj(projection);
    proj.shape = {d_out_};
    const int p = tape.leaf(std::move(proj), false);
    const int s = tape.dot(fw.output, tape.row_broadcast(p, inputs.shape[0]));
    const std::vector<int> adj = tape.backward(s);
    const int a = adj[static_cast<std::size_t>(fw.input)];
    if (a < 0) return Tensor::zeros(inputs.shape);
    Tensor g = tape.val(a);
    g.shape = inputs.shape;
    return g;
}

Tensor slice_rows(const Tensor& t, std::int64_t begin, std::int64_t end) {
    if (t.shape.empty() || begin < 0 || end > t.shape[0] || begin >= end)
        throw ConfigError("slice_rows range invalid");
    std::int64_t per = 1;
    for (std::size_t i = 1; i < t.shape.size(); ++i) per *= t.shape[i];
    std::vector<std::int64_t> shape = t.shape;
    shape[0] = end - begin;
    Tensor out(shape);
    std::copy(t.data.begin() + static_cast<std::ptrdiff_t>(begin * per),
              t.data.begin() + static_cast<std::ptrdiff_t>(end * per), out.data.begin());
    return out;
}

double evaluate(const ModelGraph& model, const ParamVector& params, const Tensor& inputs,
                const Tensor& targets, const ModelQuant* quant, std::int64_t batch_size) {
    if (inputs.shape.empty() || inputs.shape[0] == 0) throw ConfigError("evaluate on empty split");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    const std::int64_t n = inputs.shape[0];
    const std::int64_t d = model.d_out();
    double weighted = 0.0;
    for (std::int64_t begin = 0; begin < n; begin += batch_size) {
        const std::int64_t end = std::min(n, begin + batch_size);
        const Tensor bx = slice_rows(inputs, begin, end);
        const Tensor by = slice_rows(targets, begin, end);
        Forward fw = model.forward(params, bx, &by, quant);
        weighted += static_cast<double>(fw.tape.val(fw.loss).item()) *
                    static_cast<double>((end - begin) * d);
    }
    return weighted / static_cast<double>(n * d);
}

}  // namespace llab
