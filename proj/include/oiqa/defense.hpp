#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "oiqa/dataset.hpp"
#include "oiqa/model.hpp"
#include "oiqa/train.hpp"

namespace oiqa {

enum class PruneCriterion { l1, l2 };

std::string_view to_string(PruneCriterion c);
PruneCriterion prune_criterion_from_string(std::string_view name);

struct PruneConfig {
    PruneCriterion criterion = PruneCriterion::l2;
    double rate = 0.1;
    /// Eligible conv layer indices; empty means every conv2d layer.
    std::vector<std::size_t> scope;
};

struct ChannelScore {
    std::size_t layer = 0;
    std::size_t channel = 0;
    double value = 0.0;
};

struct PruneReport {
    std::map<std::size_t, std::vector<std::size_t>> masked;  // layer -> newly masked channels
    std::size_t total_masked = 0;
    std::vector<ChannelScore> scores;  // every in-scope channel, before masking
};

/// Masks the floor(rate * N) in-scope output channels with the smallest filter
/// norm (ties: lower layer, then lower channel). Throws PruningError when a
/// layer would lose every channel and ConfigError on a bad rate or scope.
std::pair<ModelGraph, PruneReport> prune_channels(const ModelGraph& model, const PruneConfig& config);

struct FineTuneConfig {
    std::size_t epochs = 5;
    double lr = 1e-4;  // training lr / 10
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

/// Adam fine-tuning with mask re-application; recomputes score_range.
TrainResult fine_tune(ModelGraph& model, std::span<const QualitySample> data, const FineTuneConfig& config);

enum class ReplaceMode { full, partial };

struct ActivationReport {
    std::vector<std::size_t> replaced;
    std::string warning;
};

/// full: every ReLU; partial: ReLUs in fresh layers only. Parameters are untouched.
std::pair<ModelGraph, ActivationReport> replace_activations(const ModelGraph& model, ReplaceMode mode,
                                                            LayerKind activation);

struct DefenseOptions {
    bool skip_block = false;
    /// Conv layer to place the block in front of; the placement scan decides when unset.
    std::optional<std::size_t> position;
    PruneConfig prune;
    /// Optional activation swap applied after pruning, before fine-tuning.
    std::optional<LayerKind> activation;
    ReplaceMode activation_mode = ReplaceMode::partial;
    FineTuneConfig fine_tune;
    std::uint64_t seed = 0;
};

struct DefenseResult {
    ModelGraph model;
    std::optional<std::size_t> block_position;
    PruneReport prune;
    ActivationReport activations;
    TrainResult fine_tune;
    /// JSON: options, seeds, masks and checkpoint hashes of input and output.
    std::string provenance;
};

/// Robust block insertion, channel pruning, optional activation swap and
/// fine-tuning, in that order.
/// Errors are rethrown with the failing stage named.
DefenseResult defend(const ModelGraph& model, std::span<const QualitySample> data, const DefenseOptions& options);

}  // namespace oiqa
