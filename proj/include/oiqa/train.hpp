#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "oiqa/dataset.hpp"
#include "oiqa/model.hpp"

namespace oiqa {

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
    std::size_t epochs = 30;
    double lr = 1e-3;
    OptimizerKind optimizer = OptimizerKind::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t batch_size = 16;
    /// Weight of the input-gradient penalty ||d score / d x||^2.
    double nt_lambda = 0.0;
    /// Finite-difference step (along the unit input gradient) used to
    /// differentiate the penalty w.r.t. parameters.
    double nt_step = 1e-4;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

struct TrainResult {
    std::vector<double> loss_curve;  // mean batch loss per epoch
};

/// Mini-batch training on MSE(score, label) + nt_lambda ||grad_x||^2. Pruning
/// masks are re-applied after every update. Sets score_range to the min/max
/// prediction on `data` after the last epoch. Throws TrainingError on
/// divergence or empty data.
TrainResult train(ModelGraph& model, std::span<const QualitySample> data, const TrainConfig& config);

std::vector<double> predict(const ModelGraph& model, std::span<const QualitySample> data, unsigned threads = 1);
double mean_squared_error(const ModelGraph& model, std::span<const QualitySample> data, unsigned threads = 1);

/// Recomputes score_range from predictions on `data`.
void calibrate_score_range(ModelGraph& model, std::span<const QualitySample> data, unsigned threads = 1);

}  // namespace oiqa
