#include "oiqa/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "oiqa/error.hpp"
#include "oiqa/hash.hpp"
#include "oiqa/train.hpp"

namespace oiqa {
namespace {

std::string config_text(const AttackConfig& c, const std::vector<double>& grid) {
    std::ostringstream os;
    os.precision(17);
    os << "kind=" << to_string(c.kind) << ";steps=" << c.steps << ";step_size=" << c.step_size
       << ";flow_smoothness=" << c.flow_smoothness << ";seed=" << c.seed << ";select_best=" << c.select_best
       << ";random_start=" << c.random_start << ";grid=";
    for (double e : grid) os << e << ',';
    return os.str();
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

std::optional<double> curve_auc(const std::vector<double>& eps, const std::vector<double>& values) {
    if (eps.size() < 2) return std::nullopt;
    std::vector<std::pair<double, double>> curve;
    for (std::size_t i = 0; i < eps.size(); ++i) curve.emplace_back(eps[i], values[i]);
    return auc_over_eps(curve);
}

}  // namespace

std::vector<double> default_eps_grid() {
    return {2.0 / 255.0, 4.0 / 255.0, 6.0 / 255.0, 8.0 / 255.0, 10.0 / 255.0};
}

RobustnessReport evaluate_robustness(const ModelGraph& model, std::span<const QualitySample> data,
                                     const AttackConfig& config, const std::vector<double>& eps_grid,
                                     unsigned threads) {
    if (data.empty()) throw InputError("evaluate_robustness: empty dataset");
    if (!model.score_range) throw NormalizationError("evaluate_robustness: model has no score range");
    const ScoreRange range = *model.score_range;

    RobustnessReport r;
    r.attack = std::string(to_string(config.kind));
    r.epsilons = config.kind == AttackKind::stadv ? std::vector<double>{0.0} : eps_grid;
    if (r.epsilons.empty()) throw InputError("evaluate_robustness: empty epsilon grid");
    r.config_hash = sha256_hex(config_text(config, r.epsilons));

    std::vector<Tensor> images;
    std::vector<double> labels;
    for (const auto& s : data) {
        images.push_back(s.image);
        labels.push_back(s.label);
    }
    const auto clean = predict(model, data, threads);
    r.srocc = srocc(clean, labels);
    r.plcc = plcc(clean, labels);

    for (double eps : r.epsilons) {
        AttackConfig c = config;
        c.epsilon = eps;
        const AttackResult res = run_attack(model, images, c, threads);
        std::vector<ScorePair> pairs;
        for (const auto& o : res.images)
            pairs.push_back({normalize(o.clean_score, range), normalize(o.attacked_score, range)});
        r.abs_gain_curve.push_back(abs_gain(pairs));
        r.r_score_curve.push_back(r_score(pairs));
        r.pairs.push_back(std::move(pairs));
    }
    r.abs_gain = mean(r.abs_gain_curve);
    r.r_score = mean(r.r_score_curve);
    r.abs_gain_auc = curve_auc(r.epsilons, r.abs_gain_curve);
    r.r_score_auc = curve_auc(r.epsilons, r.r_score_curve);
    return r;
}

RobustnessReport weighted_summary(const RobustnessReport& a, const RobustnessReport& b,
                                  std::pair<double, double> weights) {
    const auto [wa, wb] = weights;
    if (!(wa >= 0.0 && wb >= 0.0) || std::abs(wa + wb - 1.0) > 1e-12)
        throw InputError("weighted_summary: weights must be non-negative and sum to 1");
    if (a.epsilons != b.epsilons || a.abs_gain_curve.size() != b.abs_gain_curve.size())
        throw InputError("weighted_summary: reports use different epsilon grids");
    auto mix = [&](double x, double y) { return wa * x + wb * y; };
    RobustnessReport r;
    r.attack = a.attack == b.attack ? a.attack : a.attack + "+" + b.attack;
    r.epsilons = a.epsilons;
    for (std::size_t i = 0; i < a.abs_gain_curve.size(); ++i) {
        r.abs_gain_curve.push_back(mix(a.abs_gain_curve[i], b.abs_gain_curve[i]));
        r.r_score_curve.push_back(mix(a.r_score_curve[i], b.r_score_curve[i]));
    }
    r.abs_gain = mix(a.abs_gain, b.abs_gain);
    r.r_score = mix(a.r_score, b.r_score);
    if (a.abs_gain_auc && b.abs_gain_auc) r.abs_gain_auc = mix(*a.abs_gain_auc, *b.abs_gain_auc);
    if (a.r_score_auc && b.r_score_auc) r.r_score_auc = mix(*a.r_score_auc, *b.r_score_auc);
    r.srocc = mix(a.srocc, b.srocc);
    r.plcc = mix(a.plcc, b.plcc);
    r.weights = {wa, wb};
    r.config_hash = a.config_hash == b.config_hash ? a.config_hash : sha256_hex(a.config_hash + b.config_hash);
    return r;
}

GainComparison compare_gain(double defended, double baseline) { return {defended, baseline, defended < baseline}; }

std::string svg_curve_plot(const std::string& title, const std::string& y_label, const std::vector<double>& epsilons,
                           const std::vector<PlotSeries>& series) {
    constexpr double W = 480, H = 320, L = 60, R = 20, T = 40, B = 50;
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (double e : epsilons) {
        x0 = std::min(x0, e * 255.0);
        x1 = std::max(x1, e * 255.0);
    }
    for (const auto& s : series)
        for (double v : s.values) {
            y0 = std::min(y0, v);
            y1 = std::max(y1, v);
        }
    if (epsilons.empty() || series.empty()) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 <= x0) x1 = x0 + 1.0;
    if (y1 <= y0) y1 = y0 + 1.0;
    auto px = [&](double e) { return L + (e * 255.0 - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };

    std::ostringstream os;
    os.precision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    for (double e : epsilons)
        os << "<text x=\"" << px(e) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-size=\"10\">"
           << e * 255.0 << "</text>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"11\">epsilon (1/255)</text>\n";
    os << "<text x=\"14\" y=\"" << H / 2 << "\" transform=\"rotate(-90 14 " << H / 2
       << ")\" text-anchor=\"middle\" font-size=\"11\">" << y_label << "</text>\n";
    os << "<text x=\"" << L - 4 << "\" y=\"" << py(y0) << "\" text-anchor=\"end\" font-size=\"10\">" << y0
       << "</text>\n";
    os << "<text x=\"" << L - 4 << "\" y=\"" << py(y1) + 4 << "\" text-anchor=\"end\" font-size=\"10\">" << y1
       << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* color = colors[k % 5];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < std::min(epsilons.size(), series[k].values.size()); ++i)
            os << px(epsilons[i]) << ',' << py(series[k].values[i]) << ' ';
        os << "\"/>\n";
        os << "<text x=\"" << W - R - 4 << "\" y=\"" << T + 14 * static_cast<double>(k) << "\" text-anchor=\"end\" fill=\""
           << color << "\" font-size=\"11\">" << series[k].name << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace oiqa
