#include "oiqa/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oiqa/network.hpp"
#include "oiqa/parallel.hpp"
#include "oiqa/random.hpp"

namespace oiqa {

namespace {

struct SampleGrad {
    double loss = 0.0;
    std::map<std::string, Tensor> by_param;
};

SampleGrad sample_gradient(const Network& net, const QualitySample& sample, const TrainConfig& config) {
    SampleGrad out;
    Gradients g;
    const double score = net.backward(sample.image, g, true);
    const double residual = score - sample.label;
    out.loss = residual * residual;
    const double gnorm = config.nt_lambda > 0.0 ? norm2(g.by_input) : 0.0;
    Gradients shifted;
    if (gnorm > 0.0) {
        // d/dtheta ||g||^2 = 2 (dg/dtheta)^T g, and (dg/dtheta)^T u is the
        // parameter gradient of the score's directional derivative along u.
        out.loss += config.nt_lambda * gnorm * gnorm;
        net.backward(sample.image + (config.nt_step / gnorm) * g.by_input, shifted, true);
    }
    const double factor = gnorm > 0.0 ? 2.0 * config.nt_lambda * gnorm / config.nt_step : 0.0;
    for (auto& [id, t] : g.by_param) {
        Tensor grad = (2.0 * residual) * t;
        if (gnorm > 0.0) grad += factor * (shifted.by_param.at(id) - t);
        out.by_param.emplace(id, std::move(grad));
    }
    return out;
}

struct OptimizerState {
    std::map<std::string, Tensor> m, v;
    std::size_t step = 0;
};

void apply_update(ModelGraph& model, const std::map<std::string, Tensor>& grad, const TrainConfig& config,
                  OptimizerState& state) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
    for (const auto& [id, g] : grad) {
        auto p = model.param(id).values();
        const auto gv = g.values();
        if (config.optimizer == OptimizerKind::sgd) {
            for (std::size_t i = 0; i < p.size(); ++i) p[i] -= config.lr * gv[i];
            continue;
        }
        auto [mit, m_new] = state.m.try_emplace(id, g.shape());
        auto [vit, v_new] = state.v.try_emplace(id, g.shape());
        auto m = mit->second.values();
        auto v = vit->second.values();
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gv[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gv[i] * gv[i];
            p[i] -= config.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config.adam_eps);
        }
    }
}

}  // namespace

TrainResult train(ModelGraph& model, std::span<const QualitySample> data, const TrainConfig& config) {
    if (data.empty()) throw TrainingError("train: dataset is empty");
    if (config.batch_size == 0) throw ConfigError("train: batch_size must be positive");
    if (config.nt_lambda < 0.0) throw ConfigError("train: nt_lambda must be non-negative");
    validate_model(model);
    apply_masks(model);

    TrainResult result;
    OptimizerState state;
    std::vector<std::size_t> order(data.size());
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(config.seed, epoch));
        rng.shuffle(order.begin(), order.end());

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t count = std::min(config.batch_size, order.size() - start);
            const Network net(model);
            std::vector<SampleGrad> slots(count);
            parallel_for(count, config.threads,
                         [&](std::size_t i) { slots[i] = sample_gradient(net, data[order[start + i]], config); });

            // Fixed-order reduction keeps results independent of the thread count.
            std::map<std::string, Tensor> total = std::move(slots[0].by_param);
            double batch_loss = slots[0].loss;
            for (std::size_t i = 1; i < count; ++i) {
                batch_loss += slots[i].loss;
                for (auto& [id, t] : total) t += slots[i].by_param.at(id);
            }
            const double inv = 1.0 / static_cast<double>(count);
            for (auto& [id, t] : total) t = inv * t;
            batch_loss *= inv;
            if (!std::isfinite(batch_loss))
                throw TrainingError("training diverged (non-finite loss) in epoch " + std::to_string(epoch + 1));

            apply_update(model, total, config, state);
            apply_masks(model);
            epoch_loss += batch_loss * static_cast<double>(count);
        }
        epoch_loss /= static_cast<double>(order.size());
        for (const auto& [id, t] : model.params) {
            for (double v : t.values())
                if (!std::isfinite(v))
                    throw TrainingError("training diverged (non-finite parameter) in epoch " + std::to_string(epoch + 1));
        }
        result.loss_curve.push_back(epoch_loss);
    }
    calibrate_score_range(model, data, config.threads);
    return result;
}

std::vector<double> predict(const ModelGraph& model, std::span<const QualitySample> data, unsigned threads) {
    const Network net(model);
    std::vector<double> scores(data.size());
    parallel_for(data.size(), threads, [&](std::size_t i) { scores[i] = net.forward(data[i].image); });
    return scores;
}

double mean_squared_error(const ModelGraph& model, std::span<const QualitySample> data, unsigned threads) {
    if (data.empty()) throw InputError("mean_squared_error: dataset is empty");
    const auto scores = predict(model, data, threads);
    double s = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) s += (scores[i] - data[i].label) * (scores[i] - data[i].label);
    return s / static_cast<double>(scores.size());
}

void calibrate_score_range(ModelGraph& model, std::span<const QualitySample> data, unsigned threads) {
    if (data.empty()) throw InputError("calibrate_score_range: dataset is empty");
    const auto scores = predict(model, data, threads);
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    if (!(*lo < *hi)) throw TrainingError("score range is degenerate: every prediction equals " + std::to_string(*lo));
    model.score_range = ScoreRange{*lo, *hi};
}

}  // namespace oiqa
