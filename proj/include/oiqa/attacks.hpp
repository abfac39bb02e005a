#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "oiqa/model.hpp"
#include "oiqa/tensor.hpp"

namespace oiqa {

enum class AttackKind { pgd, uap, stadv };

std::string_view to_string(AttackKind kind);
AttackKind attack_kind_from_string(std::string_view name);

struct AttackConfig {
    AttackKind kind = AttackKind::pgd;
    double epsilon = 8.0 / 255.0;  // l-inf radius; unused by stadv
    std::size_t steps = 10;
    /// Sign-step size in pixel-value units (pgd, uap); largest per-iteration
    /// flow change in pixels (stadv).
    double step_size = 1.0 / 255.0;
    double flow_smoothness = 0.05;  // stadv only
    std::uint64_t seed = 0;
    /// Report the highest-scoring iterate instead of the last one (pgd, stadv).
    bool select_best = true;
    /// Start pgd from a seeded uniform point in the ball instead of zero.
    bool random_start = false;
};

/// Defaults used by the evaluation protocol for each attack.
AttackConfig default_attack_config(AttackKind kind);

/// Throws ConfigError unless epsilon >= 0, step_size > 0 and steps >= 1.
void validate_attack_config(const AttackConfig& config);

struct ImageOutcome {
    double clean_score = 0.0;
    double attacked_score = 0.0;
    double linf = 0.0;  // max |attacked - clean| over pixels
};

struct AttackResult {
    std::vector<ImageOutcome> images;
    std::vector<Tensor> attacked;
    /// pgd: one delta per image; uap: the single universal v; stadv: one 2×H×W flow per image.
    std::vector<Tensor> perturbations;
    double mean_flow = 0.0;  // stadv: mean per-pixel flow length
    double max_flow = 0.0;
};

AttackResult pgd_attack(const ModelGraph& model, const Tensor& x, const AttackConfig& config);

/// Universal perturbation trained with full-dataset sign steps. Throws
/// InputError on an empty dataset.
AttackResult uap_train(const ModelGraph& model, std::span<const Tensor> images, const AttackConfig& config,
                       unsigned threads = 1);

AttackResult stadv_attack(const ModelGraph& model, const Tensor& x, const AttackConfig& config);

/// Dispatches on config.kind; pgd and stadv run per image in parallel.
AttackResult run_attack(const ModelGraph& model, std::span<const Tensor> images, const AttackConfig& config,
                        unsigned threads = 1);

/// Bilinear resampling of a C×H×W image at (i + flow[0](i,j), j + flow[1](i,j)),
/// sample coordinates clamped to the image.
Tensor warp(const Tensor& x, const Tensor& flow);

struct WarpGrads {
    Tensor input;
    Tensor flow;
};

WarpGrads warp_backward(const Tensor& x, const Tensor& flow, const Tensor& grad_out);

/// sum over pixels and right/down neighbours of sqrt(|d flow|^2 + 1e-8).
double flow_total_variation(const Tensor& flow);
Tensor flow_total_variation_grad(const Tensor& flow);

}  // namespace oiqa
