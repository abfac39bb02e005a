#include "oiqa/defense.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "oiqa/cayley.hpp"
#include "oiqa/error.hpp"
#include "oiqa/hash.hpp"
#include "oiqa/random.hpp"
#include "oiqa/serialize.hpp"
#include "oiqa/spectral.hpp"

namespace oiqa {

std::string_view to_string(PruneCriterion c) { return c == PruneCriterion::l1 ? "l1" : "l2"; }

PruneCriterion prune_criterion_from_string(std::string_view name) {
    if (name == "l1") return PruneCriterion::l1;
    if (name == "l2") return PruneCriterion::l2;
    throw ConfigError("unknown pruning criterion '" + std::string(name) + "' (expected l1 or l2)");
}

std::pair<ModelGraph, PruneReport> prune_channels(const ModelGraph& model, const PruneConfig& config) {
    if (!(config.rate >= 0.0 && config.rate < 1.0)) throw ConfigError("prune: rate must be in [0, 1)");
    ModelGraph out = model;
    PruneReport report;
    if (config.rate == 0.0) return {std::move(out), std::move(report)};

    std::vector<std::size_t> scope = config.scope.empty() ? conv_layer_indices(model) : config.scope;
    if (scope.empty()) throw ConfigError("prune: no conv layers in scope");
    std::sort(scope.begin(), scope.end());
    scope.erase(std::unique(scope.begin(), scope.end()), scope.end());
    for (std::size_t l : scope) {
        if (l >= model.layers.size() || model.layers[l].kind != LayerKind::conv2d)
            throw ConfigError("prune: layer " + std::to_string(l) + " is not a conv layer");
    }

    for (std::size_t l : scope) {
        const Tensor& w = model.param(model.layers[l].param_ids.at(0));
        const std::size_t per = w.size() / w.dim(0);
        for (std::size_t o = 0; o < w.dim(0); ++o) {
            double mu = 0.0;
            for (std::size_t i = 0; i < per; ++i) {
                const double v = w[o * per + i];
                mu += config.criterion == PruneCriterion::l1 ? std::abs(v) : v * v;
            }
            if (config.criterion == PruneCriterion::l2) mu = std::sqrt(mu);
            report.scores.push_back({l, o, mu});
        }
    }

    std::vector<ChannelScore> order = report.scores;
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.value != b.value) return a.value < b.value;
        if (a.layer != b.layer) return a.layer < b.layer;
        return a.channel < b.channel;
    });
    const auto count = static_cast<std::size_t>(std::floor(config.rate * static_cast<double>(order.size())));
    for (std::size_t k = 0; k < count; ++k) report.masked[order[k].layer].push_back(order[k].channel);

    for (auto& [l, channels] : report.masked) {
        std::sort(channels.begin(), channels.end());
        auto& spec = out.layers[l];
        std::vector<std::size_t> merged = spec.masked_channels;
        merged.insert(merged.end(), channels.begin(), channels.end());
        std::sort(merged.begin(), merged.end());
        merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
        if (merged.size() >= spec.out_channels)
            throw PruningError("prune: rate " + std::to_string(config.rate) + " would mask every channel of layer " +
                               std::to_string(l) + " (" + std::string(to_string(spec.kind)) + ")");
        spec.masked_channels = std::move(merged);
        report.total_masked += channels.size();
    }
    apply_masks(out);
    return {std::move(out), std::move(report)};
}

TrainResult fine_tune(ModelGraph& model, std::span<const QualitySample> data, const FineTuneConfig& config) {
    TrainConfig tc;
    tc.epochs = config.epochs;
    tc.lr = config.lr;
    tc.batch_size = config.batch_size;
    tc.seed = config.seed;
    tc.threads = config.threads;
    return train(model, data, tc);
}

std::pair<ModelGraph, ActivationReport> replace_activations(const ModelGraph& model, ReplaceMode mode,
                                                            LayerKind activation) {
    if (!is_activation(activation) || activation == LayerKind::relu)
        throw ConfigError("replace_activations: target must be elu, silu or gelu");
    ModelGraph out = model;
    ActivationReport report;
    const bool any_fresh = std::any_of(model.layers.begin(), model.layers.end(), [](const auto& l) { return l.fresh; });
    if (mode == ReplaceMode::partial && !any_fresh) {
        report.warning = "partial replacement requested but the model has no fresh layers; nothing replaced";
        return {std::move(out), std::move(report)};
    }
    for (std::size_t i = 0; i < out.layers.size(); ++i) {
        auto& l = out.layers[i];
        if (l.kind != LayerKind::relu) continue;
        if (mode == ReplaceMode::partial && !l.fresh) continue;
        l.kind = activation;
        report.replaced.push_back(i);
    }
    return {std::move(out), std::move(report)};
}

namespace {

template <class Fn>
auto stage(const char* name, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.kind(), std::string("defend: stage '") + name + "' failed: " + e.what());
    }
}

}  // namespace

DefenseResult defend(const ModelGraph& model, std::span<const QualitySample> data, const DefenseOptions& options) {
    using json = nlohmann::ordered_json;
    DefenseResult r;
    r.model = model;
    const std::uint64_t block_seed = derive_seed(options.seed, 1);
    const std::uint64_t tune_seed = derive_seed(options.seed, 2);

    json prov;
    prov["input_checkpoint_sha256"] = sha256_hex(encode_checkpoint(model));

    json block;
    if (options.skip_block) {
        block = "skipped";
    } else {
        r.block_position = stage("robust_block", [&] {
            const std::size_t pos = options.position ? *options.position : recommend_placement(placement_scan(model));
            r.model = insert_robust_block(model, pos, block_seed);
            return pos;
        });
        block = {{"position", *r.block_position}, {"seed", block_seed}};
    }
    prov["robust_block"] = block;

    PruneConfig pc = options.prune;
    if (pc.scope.empty()) pc.scope = conv_layer_indices(r.model);
    r.prune = stage("prune", [&] {
        auto [pruned, report] = prune_channels(r.model, pc);
        r.model = std::move(pruned);
        return report;
    });
    json masks = json::object();
    for (const auto& [l, ch] : r.prune.masked) masks[std::to_string(l)] = ch;
    prov["prune"] = {{"criterion", std::string(to_string(pc.criterion))},
                     {"rate", pc.rate},
                     {"scope", pc.scope},
                     {"total_masked", r.prune.total_masked},
                     {"masked", masks}};

    if (options.activation) {
        r.activations = stage("activations", [&] {
            auto [swapped, report] = replace_activations(r.model, options.activation_mode, *options.activation);
            r.model = std::move(swapped);
            return report;
        });
        prov["activations"] = {{"mode", options.activation_mode == ReplaceMode::full ? "full" : "partial"},
                               {"activation", std::string(to_string(*options.activation))},
                               {"replaced", r.activations.replaced},
                               {"warning", r.activations.warning}};
    }

    const bool modified =
        r.block_position.has_value() || r.prune.total_masked > 0 || !r.activations.replaced.empty();
    if (modified && options.fine_tune.epochs > 0) {
        FineTuneConfig fc = options.fine_tune;
        fc.seed = tune_seed;
        r.fine_tune = stage("fine_tune", [&] { return fine_tune(r.model, data, fc); });
        prov["fine_tune"] = {{"epochs", fc.epochs}, {"lr", fc.lr}, {"batch_size", fc.batch_size}, {"seed", fc.seed}};
    } else {
        prov["fine_tune"] = "skipped";
    }
    prov["seed"] = options.seed;
    prov["output_checkpoint_sha256"] = sha256_hex(encode_checkpoint(r.model));
    r.provenance = prov.dump();
    return r;
}

}  // namespace oiqa
