#pragma once

#include <span>
#include <utility>
#include <vector>

#include "oiqa/model.hpp"

namespace oiqa {

/// (s - lo) / (hi - lo) clamped to [0, 1]. Throws NormalizationError unless lo < hi.
double normalize(double score, const ScoreRange& range);
std::vector<double> normalize(std::span<const double> scores, const ScoreRange& range);

struct ScorePair {
    double clean = 0.0;
    double attacked = 0.0;
};

/// Signed mean of attacked - clean. Throws InputError when empty.
double abs_gain(std::span<const ScorePair> pairs);

inline constexpr double kRScoreFloor = 1e-6;

/// Mean of log_base(max(hi - attacked, clean - lo) / |attacked - clean|), both
/// numerator and denominator floored at kRScoreFloor.
double r_score(std::span<const ScorePair> pairs, double lo = 0.0, double hi = 1.0, double log_base = 10.0);

/// Trapezoidal area over epsilon measured in units of 1/255. Needs at least two
/// strictly increasing epsilons, otherwise InputError.
double auc_over_eps(std::span<const std::pair<double, double>> curve);

std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation; n >= 3 and non-constant inputs or CorrelationError.
double plcc(std::span<const double> pred, std::span<const double> labels);
/// Pearson correlation of average ranks.
double srocc(std::span<const double> pred, std::span<const double> labels);

}  // namespace oiqa
