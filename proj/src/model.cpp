#include "oiqa/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

#include "oiqa/random.hpp"

namespace oiqa {

namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 10> kKindNames{{
    {LayerKind::conv2d, "conv2d"},
    {LayerKind::dense, "dense"},
    {LayerKind::relu, "relu"},
    {LayerKind::elu, "elu"},
    {LayerKind::silu, "silu"},
    {LayerKind::gelu, "gelu"},
    {LayerKind::adaptive_square_pool, "adaptive_square_pool"},
    {LayerKind::avg_pool, "avg_pool"},
    {LayerKind::flatten, "flatten"},
    {LayerKind::robust_block, "robust_block"},
}};

std::string layer_label(const ModelGraph& model, std::size_t index) {
    return "layer " + std::to_string(index) + " (" + std::string(to_string(model.layers[index].kind)) + ")";
}

void expect_param(const ModelGraph& model, std::size_t index, std::size_t slot, const Shape& shape) {
    const auto& spec = model.layers[index];
    if (spec.param_ids.size() <= slot)
        throw ConfigError(layer_label(model, index) + ": missing parameter slot " + std::to_string(slot));
    auto it = model.params.find(spec.param_ids[slot]);
    if (it == model.params.end())
        throw ConfigError(layer_label(model, index) + ": unknown parameter '" + spec.param_ids[slot] + "'");
    if (it->second.shape() != shape)
        throw ConfigError(layer_label(model, index) + ": parameter '" + spec.param_ids[slot] + "' has shape " +
                          shape_string(it->second.shape()) + ", expected " + shape_string(shape));
}

}  // namespace

std::string_view to_string(LayerKind kind) {
    for (auto [k, name] : kKindNames)
        if (k == kind) return name;
    return "unknown";
}

LayerKind layer_kind_from_string(std::string_view name) {
    for (auto [k, n] : kKindNames)
        if (n == name) return k;
    throw FormatError("unknown layer kind '" + std::string(name) + "'");
}

bool is_activation(LayerKind kind) {
    return kind == LayerKind::relu || kind == LayerKind::elu || kind == LayerKind::silu || kind == LayerKind::gelu;
}

const Tensor& ModelGraph::param(const std::string& id) const {
    auto it = params.find(id);
    if (it == params.end()) throw ConfigError("unknown parameter '" + id + "'");
    return it->second;
}

Tensor& ModelGraph::param(const std::string& id) {
    auto it = params.find(id);
    if (it == params.end()) throw ConfigError("unknown parameter '" + id + "'");
    return it->second;
}

std::size_t ModelGraph::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [id, t] : params) n += t.size();
    return n;
}

std::size_t conv_out_size(std::size_t s_in, std::size_t ker, std::size_t pad, std::size_t stride,
                          std::size_t dilation) {
    if (s_in == 0 || ker == 0 || stride == 0 || dilation == 0)
        throw ConfigError("conv_out_size: size, kernel, stride and dilation must be positive");
    const long long span = static_cast<long long>((ker - 1) * dilation + 1);
    const long long padded = static_cast<long long>(s_in + 2 * pad);
    if (padded < span)
        throw ConfigError("conv_out_size: kernel extent " + std::to_string(span) + " exceeds padded input " +
                          std::to_string(padded));
    return static_cast<std::size_t>((padded - span) / static_cast<long long>(stride) + 1);
}

std::vector<Shape> infer_shapes(const ModelGraph& model) {
    if (model.input_shape.empty()) throw ConfigError("model has no input shape");
    std::vector<Shape> shapes{model.input_shape};
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const auto& spec = model.layers[i];
        const Shape& in = shapes.back();
        const bool chw = in.size() == 3;
        auto need_chw = [&] {
            if (!chw) throw ConfigError(layer_label(model, i) + ": expects a C×H×W input, got " + shape_string(in));
        };
        Shape out;
        switch (spec.kind) {
            case LayerKind::conv2d: {
                need_chw();
                if (spec.out_channels == 0) throw ConfigError(layer_label(model, i) + ": zero output channels");
                std::size_t h, w;
                try {
                    h = conv_out_size(in[1], spec.kernel, spec.padding, spec.stride, spec.dilation);
                    w = conv_out_size(in[2], spec.kernel, spec.padding, spec.stride, spec.dilation);
                } catch (const ConfigError& e) {
                    throw ConfigError(layer_label(model, i) + ": " + e.what());
                }
                expect_param(model, i, 0, {spec.out_channels, in[0], spec.kernel, spec.kernel});
                expect_param(model, i, 1, {spec.out_channels});
                out = {spec.out_channels, h, w};
                break;
            }
            case LayerKind::dense: {
                if (spec.out_channels == 0) throw ConfigError(layer_label(model, i) + ": zero output features");
                expect_param(model, i, 0, {spec.out_channels, shape_size(in)});
                expect_param(model, i, 1, {spec.out_channels});
                out = {spec.out_channels};
                break;
            }
            case LayerKind::relu:
            case LayerKind::elu:
            case LayerKind::silu:
            case LayerKind::gelu:
                if (!spec.param_ids.empty()) throw ConfigError(layer_label(model, i) + ": activations carry no parameters");
                out = in;
                break;
            case LayerKind::adaptive_square_pool: {
                need_chw();
                const std::size_t n = std::min(in[1], in[2]);
                out = {in[0], n, n};
                break;
            }
            case LayerKind::avg_pool: {
                need_chw();
                if (spec.kernel == 0) {
                    out = {in[0], 1, 1};
                } else {
                    try {
                        out = {in[0], conv_out_size(in[1], spec.kernel, 0, spec.stride, 1),
                               conv_out_size(in[2], spec.kernel, 0, spec.stride, 1)};
                    } catch (const ConfigError& e) {
                        throw ConfigError(layer_label(model, i) + ": " + e.what());
                    }
                }
                break;
            }
            case LayerKind::flatten:
                out = {shape_size(in)};
                break;
            case LayerKind::robust_block: {
                need_chw();
                const std::size_t c = in[0];
                if (c < 2) throw ConfigError(layer_label(model, i) + ": robust block needs at least 2 channels");
                if (spec.mid_channels != c / 2)
                    throw ConfigError(layer_label(model, i) + ": mid_channels must be floor(C/2) = " +
                                      std::to_string(c / 2));
                const std::size_t n = std::min(in[1], in[2]);
                expect_param(model, i, 0, {spec.mid_channels, c});
                if (spec.param_ids.size() < 2)
                    throw ConfigError(layer_label(model, i) + ": missing Cayley kernel parameter");
                const auto& k = model.param(spec.param_ids[1]);
                if (k.rank() != 4 || k.dim(0) != c || k.dim(1) != c || k.dim(2) != k.dim(3))
                    throw ConfigError(layer_label(model, i) + ": Cayley kernel must be C×C×k×k with C = " +
                                      std::to_string(c));
                out = {c, n, n};
                break;
            }
        }
        shapes.push_back(std::move(out));
    }
    return shapes;
}

void validate_model(const ModelGraph& model) {
    const auto shapes = infer_shapes(model);
    if (shape_size(shapes.back()) != 1)
        throw ConfigError("model output has shape " + shape_string(shapes.back()) + ", expected a single score");
    if (model.score_range && !(model.score_range->lo < model.score_range->hi))
        throw ConfigError("score_range must satisfy lo < hi");
}

void apply_masks(ModelGraph& model) {
    for (const auto& spec : model.layers) {
        if (spec.masked_channels.empty()) continue;
        if (spec.kind != LayerKind::conv2d && spec.kind != LayerKind::dense)
            throw ConfigError("masks are only supported on conv2d and dense layers");
        Tensor& w = model.param(spec.param_ids[0]);
        Tensor& b = model.param(spec.param_ids[1]);
        const std::size_t slice = w.size() / w.dim(0);
        auto wv = w.values();
        for (auto ch : spec.masked_channels) {
            if (ch >= w.dim(0)) throw ConfigError("masked channel index out of range");
            std::fill(wv.begin() + static_cast<std::ptrdiff_t>(ch * slice),
                      wv.begin() + static_cast<std::ptrdiff_t>((ch + 1) * slice), 0.0);
            b[ch] = 0.0;
        }
    }
}

std::vector<std::size_t> conv_layer_indices(const ModelGraph& model) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < model.layers.size(); ++i)
        if (model.layers[i].kind == LayerKind::conv2d) out.push_back(i);
    return out;
}

ModelBuilder::ModelBuilder(Shape input_shape, std::uint64_t seed) : seed_(seed) {
    model_.input_shape = std::move(input_shape);
}

Shape ModelBuilder::current_shape() const { return infer_shapes(model_).back(); }

ModelBuilder& ModelBuilder::push(LayerSpec spec) {
    spec.fresh = fresh_;
    model_.layers.push_back(std::move(spec));
    return *this;
}

ModelBuilder& ModelBuilder::conv(std::size_t out_channels, std::size_t kernel, std::size_t stride, std::size_t padding,
                                 std::size_t dilation) {
    const Shape in = current_shape();
    if (in.size() != 3) throw ConfigError("conv requires a C×H×W input");
    const std::size_t index = model_.layers.size();
    const std::string w_id = "L" + std::to_string(index) + ".weight";
    const std::string b_id = "L" + std::to_string(index) + ".bias";
    Tensor w({out_channels, in[0], kernel, kernel});
    Rng rng(derive_seed(seed_, index));
    const double scale = std::sqrt(2.0 / static_cast<double>(in[0] * kernel * kernel));
    for (auto& v : w.values()) v = scale * rng.normal();
    model_.params[w_id] = std::move(w);
    model_.params[b_id] = Tensor({out_channels});
    LayerSpec spec;
    spec.kind = LayerKind::conv2d;
    spec.out_channels = out_channels;
    spec.kernel = kernel;
    spec.stride = stride;
    spec.padding = padding;
    spec.dilation = dilation;
    spec.param_ids = {w_id, b_id};
    push(std::move(spec));
    current_shape();
    return *this;
}

ModelBuilder& ModelBuilder::dense(std::size_t out_features) {
    const std::size_t in = shape_size(current_shape());
    const std::size_t index = model_.layers.size();
    const std::string w_id = "L" + std::to_string(index) + ".weight";
    const std::string b_id = "L" + std::to_string(index) + ".bias";
    Tensor w({out_features, in});
    Rng rng(derive_seed(seed_, index));
    const double scale = std::sqrt(2.0 / static_cast<double>(in));
    for (auto& v : w.values()) v = scale * rng.normal();
    model_.params[w_id] = std::move(w);
    model_.params[b_id] = Tensor({out_features});
    LayerSpec spec;
    spec.kind = LayerKind::dense;
    spec.out_channels = out_features;
    spec.param_ids = {w_id, b_id};
    return push(std::move(spec));
}

ModelBuilder& ModelBuilder::activation(LayerKind kind) {
    if (!is_activation(kind)) throw ConfigError("not an activation kind");
    LayerSpec spec;
    spec.kind = kind;
    return push(std::move(spec));
}

ModelBuilder& ModelBuilder::avg_pool(std::size_t kernel, std::size_t stride) {
    LayerSpec spec;
    spec.kind = LayerKind::avg_pool;
    spec.kernel = kernel;
    spec.stride = stride;
    push(std::move(spec));
    current_shape();
    return *this;
}

ModelBuilder& ModelBuilder::adaptive_square_pool() {
    LayerSpec spec;
    spec.kind = LayerKind::adaptive_square_pool;
    return push(std::move(spec));
}

ModelBuilder& ModelBuilder::flatten() {
    LayerSpec spec;
    spec.kind = LayerKind::flatten;
    return push(std::move(spec));
}

ModelBuilder& ModelBuilder::fresh() {
    fresh_ = true;
    return *this;
}

ModelGraph ModelBuilder::build() const {
    infer_shapes(model_);
    return model_;
}

ModelGraph make_toy_model(const ToyModelOptions& options, std::uint64_t seed) {
    return ModelBuilder({options.channels, options.image_size, options.image_size}, seed)
        .conv(8, 3, 1, 1)
        .relu()
        .conv(16, 3, 2, 1)
        .relu()
        .conv(24, 3, 2, 1)
        .relu()
        .conv(24, 3, 2, 1)
        .relu()
        .global_avg_pool()
        .flatten()
        .fresh()
        .dense(options.hidden)
        .relu()
        .dense(1)
        .build();
}

}  // namespace oiqa
