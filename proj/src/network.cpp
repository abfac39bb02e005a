#include "oiqa/network.hpp"

#include "oiqa/layers.hpp"

namespace oiqa {

struct Network::Trace {
    std::vector<Tensor> inputs;   // input of each layer
    std::vector<Tensor> pooled;   // robust block: pooled input
    std::vector<Tensor> lifted;   // robust block: input of the orthogonal conv
};

Network::Network(const ModelGraph& model) : model_(&model) {
    validate_model(model);
    shapes_ = infer_shapes(model);
    cayley_.resize(model.layers.size());
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const auto& spec = model.layers[i];
        if (spec.kind != LayerKind::robust_block) continue;
        const std::size_t n = std::min(shapes_[i][1], shapes_[i][2]);
        cayley_[i] = CayleyOperator(CayleyConvParams{model.param(spec.param_ids[1]), n});
    }
}

const CayleyOperator& Network::cayley(std::size_t layer) const {
    if (layer >= cayley_.size() || model_->layers[layer].kind != LayerKind::robust_block)
        throw ConfigError("layer " + std::to_string(layer) + " is not a robust block");
    return cayley_[layer];
}

Tensor Network::run(const Tensor& x, Trace* trace) const {
    require_shape(x, model_->input_shape, "model input");
    x.require_finite("model input");
    const auto& layers = model_->layers;
    if (trace) {
        trace->inputs.resize(layers.size());
        trace->pooled.resize(layers.size());
        trace->lifted.resize(layers.size());
    }
    Tensor cur = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& spec = layers[i];
        Tensor next;
        switch (spec.kind) {
            case LayerKind::conv2d:
                next = layers::conv2d_forward(cur, model_->param(spec.param_ids[0]), model_->param(spec.param_ids[1]),
                                              {spec.stride, spec.padding, spec.dilation});
                break;
            case LayerKind::dense:
                next = layers::dense_forward(cur, model_->param(spec.param_ids[0]), model_->param(spec.param_ids[1]));
                break;
            case LayerKind::relu:
            case LayerKind::elu:
            case LayerKind::silu:
            case LayerKind::gelu:
                next = layers::activation_forward(spec.kind, cur);
                break;
            case LayerKind::adaptive_square_pool:
                next = layers::adaptive_square_pool_forward(cur);
                break;
            case LayerKind::avg_pool:
                next = layers::avg_pool_forward(cur, spec.kernel, spec.stride);
                break;
            case LayerKind::flatten:
                next = cur.reshaped({cur.size()});
                break;
            case LayerKind::robust_block: {
                const Tensor& reduce = model_->param(spec.param_ids[0]);
                Tensor pooled = layers::adaptive_square_pool_forward(cur);
                const std::size_t c = pooled.dim(0), n = pooled.dim(1), plane = n * n;
                Tensor lifted({c, n, n});
                for (std::size_t m = 0; m < spec.mid_channels; ++m)
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        const double w = reduce[m * c + ch];
                        if (w == 0.0) continue;
                        for (std::size_t p = 0; p < plane; ++p) lifted[m * plane + p] += w * pooled[ch * plane + p];
                    }
                next = cayley_[i].apply(lifted);
                if (trace) {
                    trace->pooled[i] = std::move(pooled);
                    trace->lifted[i] = std::move(lifted);
                }
                break;
            }
        }
        if (trace) trace->inputs[i] = std::move(cur);
        cur = std::move(next);
    }
    return cur;
}

double Network::forward(const Tensor& x) const { return run(x, nullptr)[0]; }

double Network::backward(const Tensor& x, Gradients& grads, bool want_params) const {
    Trace trace;
    const double score = run(x, &trace)[0];
    const auto& layers = model_->layers;
    grads.by_param.clear();
    Tensor g = Tensor::filled(shapes_.back(), 1.0);
    for (std::size_t idx = layers.size(); idx-- > 0;) {
        const auto& spec = layers[idx];
        const Tensor& in = trace.inputs[idx];
        switch (spec.kind) {
            case LayerKind::conv2d: {
                auto cg = layers::conv2d_backward(in, model_->param(spec.param_ids[0]),
                                                  {spec.stride, spec.padding, spec.dilation}, g, want_params);
                g = std::move(cg.input);
                if (want_params) {
                    grads.by_param[spec.param_ids[0]] = std::move(cg.weight);
                    grads.by_param[spec.param_ids[1]] = std::move(cg.bias);
                }
                break;
            }
            case LayerKind::dense: {
                auto dg = layers::dense_backward(in, model_->param(spec.param_ids[0]), g, want_params);
                g = dg.input.reshaped(in.shape());
                if (want_params) {
                    grads.by_param[spec.param_ids[0]] = std::move(dg.weight);
                    grads.by_param[spec.param_ids[1]] = std::move(dg.bias);
                }
                break;
            }
            case LayerKind::relu:
            case LayerKind::elu:
            case LayerKind::silu:
            case LayerKind::gelu:
                g = layers::activation_backward(spec.kind, in, g);
                break;
            case LayerKind::adaptive_square_pool:
                g = layers::adaptive_square_pool_backward(in.shape(), g);
                break;
            case LayerKind::avg_pool:
                g = layers::avg_pool_backward(in.shape(), spec.kernel, spec.stride, g);
                break;
            case LayerKind::flatten:
                g = g.reshaped(in.shape());
                break;
            case LayerKind::robust_block: {
                const Tensor& reduce = model_->param(spec.param_ids[0]);
                const Tensor& pooled = trace.pooled[idx];
                auto og = cayley_[idx].backward(trace.lifted[idx], g, want_params);
                const std::size_t c = pooled.dim(0), n = pooled.dim(1), plane = n * n, mid = spec.mid_channels;
                Tensor g_pooled(pooled.shape());
                Tensor g_reduce({mid, c});
                for (std::size_t m = 0; m < mid; ++m) {
                    const double* gm = og.input.values().data() + m * plane;
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        const double w = reduce[m * c + ch];
                        const double* pc = pooled.values().data() + ch * plane;
                        double* gp = g_pooled.values().data() + ch * plane;
                        double acc = 0.0;
                        for (std::size_t p = 0; p < plane; ++p) {
                            acc += gm[p] * pc[p];
                            gp[p] += w * gm[p];
                        }
                        g_reduce[m * c + ch] = acc;
                    }
                }
                g = layers::adaptive_square_pool_backward(in.shape(), g_pooled);
                if (want_params) {
                    grads.by_param[spec.param_ids[0]] = std::move(g_reduce);
                    grads.by_param[spec.param_ids[1]] = std::move(og.kernel);
                }
                break;
            }
        }
    }
    grads.by_input = std::move(g);
    return score;
}

Gradients Network::backward(const Tensor& x, bool want_params) const {
    Gradients grads;
    backward(x, grads, want_params);
    return grads;
}

double forward(const ModelGraph& model, const Tensor& x) { return Network(model).forward(x); }

Gradients backward(const ModelGraph& model, const Tensor& x) { return Network(model).backward(x); }

}  // namespace oiqa
