#include "oiqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "oiqa/error.hpp"

namespace oiqa {

double normalize(double score, const ScoreRange& range) {
    if (!(range.lo < range.hi))
        throw NormalizationError("normalize: degenerate score range [" + std::to_string(range.lo) + ", " +
                                 std::to_string(range.hi) + "]");
    return std::clamp((score - range.lo) / (range.hi - range.lo), 0.0, 1.0);
}

std::vector<double> normalize(std::span<const double> scores, const ScoreRange& range) {
    std::vector<double> out;
    out.reserve(scores.size());
    for (double s : scores) out.push_back(normalize(s, range));
    return out;
}

double abs_gain(std::span<const ScorePair> pairs) {
    if (pairs.empty()) throw InputError("abs_gain: no score pairs");
    double sum = 0.0;
    for (const auto& p : pairs) sum += p.attacked - p.clean;
    return sum / static_cast<double>(pairs.size());
}

double r_score(std::span<const ScorePair> pairs, double lo, double hi, double log_base) {
    if (pairs.empty()) throw InputError("r_score: no score pairs");
    if (!(log_base > 0.0) || log_base == 1.0) throw ConfigError("r_score: invalid log base");
    const double scale = std::log(log_base);
    double sum = 0.0;
    for (const auto& p : pairs) {
        const double num = std::max({hi - p.attacked, p.clean - lo, kRScoreFloor});
        const double den = std::max(std::abs(p.attacked - p.clean), kRScoreFloor);
        sum += log_base == 10.0 ? std::log10(num / den) : std::log(num / den) / scale;
    }
    return sum / static_cast<double>(pairs.size());
}

double auc_over_eps(std::span<const std::pair<double, double>> curve) {
    if (curve.size() < 2) throw InputError("auc_over_eps: need at least two points");
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        if (!(curve[i].first > curve[i - 1].first))
            throw InputError("auc_over_eps: epsilon grid must be strictly increasing");
        const double width = (curve[i].first - curve[i - 1].first) * 255.0;
        area += 0.5 * width * (curve[i].second + curve[i - 1].second);
    }
    return area;
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double plcc(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InputError("correlation: length mismatch");
    if (a.size() < 3) throw CorrelationError("correlation: need at least 3 samples");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) throw CorrelationError("correlation: constant input has no variance");
    return sab / std::sqrt(saa * sbb);
}

double srocc(std::span<const double> pred, std::span<const double> labels) {
    if (pred.size() != labels.size()) throw InputError("srocc: length mismatch");
    const auto rp = average_ranks(pred);
    const auto rl = average_ranks(labels);
    return plcc(rp, rl);
}

}  // namespace oiqa
