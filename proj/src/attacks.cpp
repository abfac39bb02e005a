#include "oiqa/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "oiqa/error.hpp"
#include "oiqa/network.hpp"
#include "oiqa/parallel.hpp"
#include "oiqa/random.hpp"

namespace oiqa {
namespace {

constexpr double kTvSmoothing = 1e-8;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Tensor clamp_unit(const Tensor& x, const Tensor& delta) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::clamp(x[i] + delta[i], 0.0, 1.0);
    return out;
}

void require_kind(const AttackConfig& config, AttackKind kind, const char* context) {
    validate_attack_config(config);
    if (config.kind != kind)
        throw ConfigError(std::string(context) + ": config is for attack '" + std::string(to_string(config.kind)) +
                          "'");
}

void require_image(const Tensor& x, const char* context) {
    if (x.rank() != 3) throw ShapeError(std::string(context) + ": expected C×H×W image, got " + shape_string(x.shape()));
    x.require_finite(context);
}

void require_gradient(const Tensor& g, const char* context) {
    for (double v : g.values())
        if (!std::isfinite(v)) throw GradientError(std::string(context) + ": non-finite input gradient");
}

ImageOutcome outcome(double clean, double attacked, const Tensor& x, const Tensor& xa) {
    return {clean, attacked, max_abs_diff(xa, x)};
}

}  // namespace

std::string_view to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::pgd: return "pgd";
        case AttackKind::uap: return "uap";
        case AttackKind::stadv: return "stadv";
    }
    return "?";
}

AttackKind attack_kind_from_string(std::string_view name) {
    for (auto k : {AttackKind::pgd, AttackKind::uap, AttackKind::stadv})
        if (name == to_string(k)) return k;
    throw ConfigError("unknown attack '" + std::string(name) + "' (expected pgd, uap or stadv)");
}

AttackConfig default_attack_config(AttackKind kind) {
    AttackConfig c;
    c.kind = kind;
    if (kind == AttackKind::stadv) {
        c.steps = 5;
        c.step_size = 0.25;
    }
    return c;
}

void validate_attack_config(const AttackConfig& c) {
    if (!(c.epsilon >= 0.0) || !std::isfinite(c.epsilon))
        throw ConfigError("attack: epsilon must be finite and >= 0");
    if (!(c.step_size > 0.0) || !std::isfinite(c.step_size)) throw ConfigError("attack: step_size must be > 0");
    if (c.steps < 1) throw ConfigError("attack: steps must be >= 1");
    if (!(c.flow_smoothness >= 0.0)) throw ConfigError("attack: flow_smoothness must be >= 0");
}

AttackResult pgd_attack(const ModelGraph& model, const Tensor& x, const AttackConfig& config) {
    require_kind(config, AttackKind::pgd, "pgd_attack");
    require_image(x, "pgd_attack");
    const Network net(model);
    const double eps = config.epsilon;

    Tensor delta(x.shape());
    if (config.random_start) {
        Rng rng(config.seed);
        for (std::size_t i = 0; i < x.size(); ++i)
            delta[i] = std::clamp(rng.uniform(-eps, eps), -x[i], 1.0 - x[i]);
    }
    const double clean = net.forward(x);
    double best_score = -std::numeric_limits<double>::infinity();
    Tensor best_delta;
    auto consider = [&](double score, const Tensor& d) {
        if (!config.select_best || score > best_score) {
            best_score = score;
            best_delta = d;
        }
    };

    Gradients g;
    for (std::size_t t = 0; t < config.steps; ++t) {
        const double score = net.backward(clamp_unit(x, delta), g, false);
        if (t > 0) consider(score, delta);
        require_gradient(g.by_input, "pgd_attack");
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = std::clamp(delta[i] + config.step_size * sign(g.by_input[i]), -eps, eps);
            delta[i] = std::clamp(d, -x[i], 1.0 - x[i]);
        }
    }
    consider(net.forward(clamp_unit(x, delta)), delta);

    AttackResult r;
    r.attacked.push_back(clamp_unit(x, best_delta));
    r.images.push_back(outcome(clean, best_score, x, r.attacked.back()));
    r.perturbations.push_back(std::move(best_delta));
    return r;
}

AttackResult uap_train(const ModelGraph& model, std::span<const Tensor> images, const AttackConfig& config,
                       unsigned threads) {
    require_kind(config, AttackKind::uap, "uap_train");
    if (images.empty()) throw InputError("uap_train: empty dataset");
    for (const auto& x : images) {
        require_image(x, "uap_train");
        if (x.shape() != images[0].shape())
            throw ShapeError("uap_train: images differ in shape (" + shape_string(x.shape()) + " vs " +
                             shape_string(images[0].shape()) + ")");
    }
    const Network net(model);
    const double eps = config.epsilon;
    Tensor v(images[0].shape());
    std::vector<Tensor> slots(images.size());
    for (std::size_t t = 0; t < config.steps; ++t) {
        parallel_for(images.size(), threads, [&](std::size_t i) {
            Gradients g;
            net.backward(clamp_unit(images[i], v), g, false);
            require_gradient(g.by_input, "uap_train");
            slots[i] = std::move(g.by_input);
        });
        Tensor mean(v.shape());
        for (const auto& s : slots) mean += s;
        const double count = static_cast<double>(images.size());
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = std::clamp(v[i] + config.step_size * sign(mean[i] / count), -eps, eps);
    }

    AttackResult r;
    r.images.resize(images.size());
    r.attacked.resize(images.size());
    parallel_for(images.size(), threads, [&](std::size_t i) {
        r.attacked[i] = clamp_unit(images[i], v);
        r.images[i] = outcome(net.forward(images[i]), net.forward(r.attacked[i]), images[i], r.attacked[i]);
    });
    r.perturbations.push_back(std::move(v));
    return r;
}

Tensor warp(const Tensor& x, const Tensor& flow) {
    require_image(x, "warp");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    require_shape(flow, {2, h, w}, "warp flow");
    Tensor out(x.shape());
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const double sy = std::clamp(static_cast<double>(i) + flow.at(0, i, j), 0.0, static_cast<double>(h - 1));
            const double sx = std::clamp(static_cast<double>(j) + flow.at(1, i, j), 0.0, static_cast<double>(w - 1));
            const auto y0 = static_cast<std::size_t>(std::floor(sy)), x0 = static_cast<std::size_t>(std::floor(sx));
            const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
            const double ty = sy - static_cast<double>(y0), tx = sx - static_cast<double>(x0);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double a = x.at(ch, y0, x0), b = x.at(ch, y0, x1);
                const double cc = x.at(ch, y1, x0), d = x.at(ch, y1, x1);
                // lerp form keeps constant regions and zero flow exact
                const double top = a + tx * (b - a), bot = cc + tx * (d - cc);
                out.at(ch, i, j) = top + ty * (bot - top);
            }
        }
    return out;
}

WarpGrads warp_backward(const Tensor& x, const Tensor& flow, const Tensor& grad_out) {
    require_image(x, "warp_backward");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    require_shape(flow, {2, h, w}, "warp_backward flow");
    require_shape(grad_out, x.shape(), "warp_backward grad");
    WarpGrads g{Tensor(x.shape()), Tensor(flow.shape())};
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const double ry = static_cast<double>(i) + flow.at(0, i, j);
            const double rx = static_cast<double>(j) + flow.at(1, i, j);
            const double hi_y = static_cast<double>(h - 1), hi_x = static_cast<double>(w - 1);
            const double sy = std::clamp(ry, 0.0, hi_y), sx = std::clamp(rx, 0.0, hi_x);
            const bool free_y = ry > 0.0 && ry < hi_y, free_x = rx > 0.0 && rx < hi_x;
            const auto y0 = static_cast<std::size_t>(std::floor(sy)), x0 = static_cast<std::size_t>(std::floor(sx));
            const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
            const double ty = sy - static_cast<double>(y0), tx = sx - static_cast<double>(x0);
            double gy = 0.0, gx = 0.0;
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double go = grad_out.at(ch, i, j);
                const double a = x.at(ch, y0, x0), b = x.at(ch, y0, x1);
                const double cc = x.at(ch, y1, x0), d = x.at(ch, y1, x1);
                const double top = a + tx * (b - a), bot = cc + tx * (d - cc);
                gy += go * (bot - top);
                gx += go * ((1.0 - ty) * (b - a) + ty * (d - cc));
                g.input.at(ch, y0, x0) += go * (1.0 - tx) * (1.0 - ty);
                g.input.at(ch, y0, x1) += go * tx * (1.0 - ty);
                g.input.at(ch, y1, x0) += go * (1.0 - tx) * ty;
                g.input.at(ch, y1, x1) += go * tx * ty;
            }
            g.flow.at(0, i, j) = free_y ? gy : 0.0;
            g.flow.at(1, i, j) = free_x ? gx : 0.0;
        }
    return g;
}

namespace {

template <class Fn>
void for_each_flow_edge(const Tensor& flow, Fn&& fn) {
    const std::size_t h = flow.dim(1), w = flow.dim(2);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            if (j + 1 < w) fn(i, j, i, j + 1);
            if (i + 1 < h) fn(i, j, i + 1, j);
        }
}

}  // namespace

double flow_total_variation(const Tensor& flow) {
    double tv = 0.0;
    for_each_flow_edge(flow, [&](std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        const double dy = flow.at(0, i, j) - flow.at(0, k, l), dx = flow.at(1, i, j) - flow.at(1, k, l);
        tv += std::sqrt(dy * dy + dx * dx + kTvSmoothing);
    });
    return tv;
}

Tensor flow_total_variation_grad(const Tensor& flow) {
    Tensor g(flow.shape());
    for_each_flow_edge(flow, [&](std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        const double dy = flow.at(0, i, j) - flow.at(0, k, l), dx = flow.at(1, i, j) - flow.at(1, k, l);
        const double r = std::sqrt(dy * dy + dx * dx + kTvSmoothing);
        g.at(0, i, j) += dy / r;
        g.at(0, k, l) -= dy / r;
        g.at(1, i, j) += dx / r;
        g.at(1, k, l) -= dx / r;
    });
    return g;
}

AttackResult stadv_attack(const ModelGraph& model, const Tensor& x, const AttackConfig& config) {
    require_kind(config, AttackKind::stadv, "stadv_attack");
    require_image(x, "stadv_attack");
    const Network net(model);
    const double tau = config.flow_smoothness;
    Tensor flow({2, x.dim(1), x.dim(2)});
    const double clean = net.forward(x);

    double best_objective = -std::numeric_limits<double>::infinity(), best_score = clean;
    Tensor best_flow = flow;
    auto consider = [&](double score, const Tensor& f) {
        const double objective = score - tau * flow_total_variation(f);
        if (!config.select_best || objective > best_objective) {
            best_objective = objective;
            best_score = score;
            best_flow = f;
        }
    };

    Gradients g;
    for (std::size_t t = 0; t < config.steps; ++t) {
        const double score = net.backward(warp(x, flow), g, false);
        if (t > 0) consider(score, flow);
        require_gradient(g.by_input, "stadv_attack");
        Tensor ascent = warp_backward(x, flow, g.by_input).flow - tau * flow_total_variation_grad(flow);
        const double m = max_abs(ascent);
        if (m == 0.0) break;
        flow += (config.step_size / m) * ascent;
    }
    consider(net.forward(warp(x, flow)), flow);

    AttackResult r;
    r.attacked.push_back(warp(x, best_flow));
    r.images.push_back(outcome(clean, best_score, x, r.attacked.back()));
    const std::size_t pixels = x.dim(1) * x.dim(2);
    double total = 0.0;
    for (std::size_t p = 0; p < pixels; ++p) {
        const double len = std::hypot(best_flow[p], best_flow[pixels + p]);
        total += len;
        r.max_flow = std::max(r.max_flow, len);
    }
    r.mean_flow = total / static_cast<double>(pixels);
    r.perturbations.push_back(std::move(best_flow));
    return r;
}

AttackResult run_attack(const ModelGraph& model, std::span<const Tensor> images, const AttackConfig& config,
                        unsigned threads) {
    if (config.kind == AttackKind::uap) return uap_train(model, images, config, threads);
    std::vector<AttackResult> parts(images.size());
    parallel_for(images.size(), threads, [&](std::size_t i) {
        parts[i] = config.kind == AttackKind::pgd ? pgd_attack(model, images[i], config)
                                                  : stadv_attack(model, images[i], config);
    });
    AttackResult r;
    double flow_sum = 0.0;
    for (auto& p : parts) {
        r.images.push_back(p.images[0]);
        r.attacked.push_back(std::move(p.attacked[0]));
        r.perturbations.push_back(std::move(p.perturbations[0]));
        flow_sum += p.mean_flow;
        r.max_flow = std::max(r.max_flow, p.max_flow);
    }
    if (!parts.empty()) r.mean_flow = flow_sum / static_cast<double>(parts.size());
    return r;
}

}  // namespace oiqa
