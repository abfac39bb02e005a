#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oiqa/attacks.hpp"
#include "oiqa/dataset.hpp"
#include "oiqa/metrics.hpp"
#include "oiqa/model.hpp"

namespace oiqa {

/// {2, 4, 6, 8, 10} / 255
std::vector<double> default_eps_grid();

struct RobustnessReport {
    std::string attack;
    std::vector<double> epsilons;  // a single 0 entry for stadv
    std::vector<double> abs_gain_curve;
    std::vector<double> r_score_curve;
    double abs_gain = 0.0;  // mean over the curve
    double r_score = 0.0;
    std::optional<double> abs_gain_auc;  // absent for single-point curves
    std::optional<double> r_score_auc;
    double srocc = 0.0;  // clean predictions vs labels
    double plcc = 0.0;
    std::vector<double> weights{1.0};
    std::string config_hash;
    /// Normalized (clean, attacked) pairs per epsilon, in dataset order.
    std::vector<std::vector<ScorePair>> pairs;
};

/// Attacks every sample at each epsilon of the grid (once for stadv), with
/// scores normalized by the model's score_range.
RobustnessReport evaluate_robustness(const ModelGraph& model, std::span<const QualitySample> data,
                                     const AttackConfig& config, const std::vector<double>& eps_grid,
                                     unsigned threads = 1);

/// Element-wise weighted mean of two reports on the same grid. Weights must
/// be non-negative and sum to 1.
RobustnessReport weighted_summary(const RobustnessReport& a, const RobustnessReport& b,
                                  std::pair<double, double> weights = {2.0 / 3.0, 1.0 / 3.0});

/// Defense criterion: the defended model's gain is strictly below the baseline's.
struct GainComparison {
    double defended = 0.0;
    double baseline = 0.0;
    bool defended_lower = false;
};

GainComparison compare_gain(double defended, double baseline);

struct PlotSeries {
    std::string name;
    std::vector<double> values;
};

/// Line plot of metric-vs-epsilon curves (x axis in units of 1/255).
std::string svg_curve_plot(const std::string& title, const std::string& y_label, const std::vector<double>& epsilons,
                           const std::vector<PlotSeries>& series);

}  // namespace oiqa
