#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "oiqa/tensor.hpp"

namespace oiqa {

enum class LayerKind {
    conv2d,
    dense,
    relu,
    elu,
    silu,
    gelu,
    adaptive_square_pool,
    avg_pool,
    flatten,
    robust_block,
};

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);
bool is_activation(LayerKind kind);

/// One layer of a ModelGraph. Only the fields relevant to `kind` are used:
///   conv2d        out_channels, kernel, stride, padding, dilation; params {weight, bias}
///   dense         out_channels (= out features); params {weight, bias}
///   avg_pool      kernel, stride (kernel 0 means global average)
///   robust_block  mid_channels; params {reduce (1x1 conv weight), kernel (Cayley weights)}
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t dilation = 1;
    std::size_t mid_channels = 0;
    std::vector<std::string> param_ids;
    /// Layer was not part of the originally trained model (head, inserted block).
    bool fresh = false;
    /// Output channels zero-masked by pruning, ascending.
    std::vector<std::size_t> masked_channels;

    bool operator==(const LayerSpec&) const = default;
};

struct ScoreRange {
    double lo = 0.0;
    double hi = 1.0;
    bool operator==(const ScoreRange&) const = default;
};

struct ModelGraph {
    Shape input_shape;
    std::vector<LayerSpec> layers;
    std::map<std::string, Tensor> params;
    std::optional<ScoreRange> score_range;

    const Tensor& param(const std::string& id) const;
    Tensor& param(const std::string& id);
    std::size_t parameter_count() const;

    bool operator==(const ModelGraph&) const = default;
};

/// Output extent of a convolution along one axis:
/// floor((s_in + 2 pad - (ker - 1) dilation - 1) / stride + 1).
/// Throws ConfigError when the result would be < 1.
std::size_t conv_out_size(std::size_t s_in, std::size_t ker, std::size_t pad, std::size_t stride,
                          std::size_t dilation);

/// Static shape pass: element i is the input shape of layer i, the last one is
/// the model output. Also checks parameter shapes. Throws ConfigError naming
/// the first failing layer.
std::vector<Shape> infer_shapes(const ModelGraph& model);

/// Shape pass plus the requirement that the model emits a single score.
void validate_model(const ModelGraph& model);

/// Zeroes the weight slices (and biases) of every masked output channel.
void apply_masks(ModelGraph& model);

/// Incremental model construction with seeded He-style initialization.
class ModelBuilder {
public:
    ModelBuilder(Shape input_shape, std::uint64_t seed);

    ModelBuilder& conv(std::size_t out_channels, std::size_t kernel, std::size_t stride = 1, std::size_t padding = 0,
                       std::size_t dilation = 1);
    ModelBuilder& dense(std::size_t out_features);
    ModelBuilder& activation(LayerKind kind);
    ModelBuilder& relu() { return activation(LayerKind::relu); }
    ModelBuilder& avg_pool(std::size_t kernel, std::size_t stride);
    ModelBuilder& global_avg_pool() { return avg_pool(0, 0); }
    ModelBuilder& adaptive_square_pool();
    ModelBuilder& flatten();
    /// Marks every layer added after this call as fresh.
    ModelBuilder& fresh();

    ModelGraph build() const;

private:
    ModelBuilder& push(LayerSpec spec);
    Shape current_shape() const;

    ModelGraph model_;
    std::uint64_t seed_;
    bool fresh_ = false;
};

struct ToyModelOptions {
    std::size_t channels = 3;
    std::size_t image_size = 32;
    std::size_t hidden = 16;
};

/// Four strided 3x3 conv blocks (3->8->16->24->24), global average pooling and
/// a two-layer head marked fresh. Placement ratios strictly decrease with depth.
ModelGraph make_toy_model(const ToyModelOptions& options, std::uint64_t seed);

/// Indices of conv2d layers, in order.
std::vector<std::size_t> conv_layer_indices(const ModelGraph& model);

}  // namespace oiqa
