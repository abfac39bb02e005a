#include "oiqa/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oiqa/error.hpp"
#include "oiqa/parallel.hpp"
#include "oiqa/random.hpp"

namespace oiqa {
namespace {

void require_kernel(const Tensor& kernel, const char* context) {
    if (kernel.rank() != 4 || kernel.dim(2) != kernel.dim(3))
        throw ShapeError(std::string(context) + ": expected c_out×c_in×k×k kernel, got " +
                         shape_string(kernel.shape()));
}

// Rotates v so its largest entry is real and positive, then keeps the real
// part. For a real operator the result is still a top singular vector.
std::vector<double> real_direction(std::span<const complex> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) > std::abs(v[best])) best = i;
    const complex phase = std::abs(v[best]) > 0 ? std::conj(v[best]) / std::abs(v[best]) : complex{1.0};
    std::vector<double> out(v.size());
    double norm = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = (v[i] * phase).real();
        norm += out[i] * out[i];
    }
    norm = std::sqrt(norm);
    for (auto& x : out) x /= norm;
    return out;
}

std::vector<complex> column(const ComplexMatrix& m, std::size_t c) {
    std::vector<complex> out(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) out[r] = m(r, c);
    return out;
}

// Modified Gram-Schmidt, applied twice for orthogonality near machine precision.
void orthonormalize_columns(ComplexMatrix& m) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t p = 0; p < c; ++p) {
                complex d{};
                for (std::size_t r = 0; r < m.rows(); ++r) d += std::conj(m(r, p)) * m(r, c);
                for (std::size_t r = 0; r < m.rows(); ++r) m(r, c) -= d * m(r, p);
            }
        }
        double n = 0.0;
        for (std::size_t r = 0; r < m.rows(); ++r) n += std::norm(m(r, c));
        n = std::sqrt(n);
        if (n < 1e-12) throw ConstructionError("orthonormalize: rank-deficient random draw");
        for (std::size_t r = 0; r < m.rows(); ++r) m(r, c) /= n;
    }
}

ComplexMatrix gaussian_orthonormal(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    ComplexMatrix m(rows, cols);
    for (auto& v : m.entries()) v = rng.normal();
    orthonormalize_columns(m);
    return m;
}

double vector_norm(std::span<const complex> v) {
    double s = 0.0;
    for (const auto& x : v) s += std::norm(x);
    return std::sqrt(s);
}

}  // namespace

Tensor circular_conv(const Tensor& kernel, const Tensor& x) {
    require_kernel(kernel, "circular_conv");
    const std::size_t co = kernel.dim(0), ci = kernel.dim(1), k = kernel.dim(2);
    if (x.rank() != 3 || x.dim(0) != ci || x.dim(1) != x.dim(2))
        throw ShapeError("circular_conv: expected " + std::to_string(ci) + "×n×n input, got " +
                         shape_string(x.shape()));
    const std::size_t n = x.dim(1);
    Tensor y({co, n, n});
    for (std::size_t o = 0; o < co; ++o)
        for (std::size_t i = 0; i < ci; ++i)
            for (std::size_t u = 0; u < k; ++u)
                for (std::size_t v = 0; v < k; ++v) {
                    const double w = kernel[((o * ci + i) * k + u) * k + v];
                    if (w == 0.0) continue;
                    for (std::size_t py = 0; py < n; ++py) {
                        const std::size_t sy = (py + n * k - u) % n;
                        for (std::size_t px = 0; px < n; ++px)
                            y.at(o, py, px) += w * x.at(i, sy, (px + n * k - v) % n);
                    }
                }
    return y;
}

ComplexMatrix materialize_circular_conv(const Tensor& kernel, std::size_t n) {
    require_kernel(kernel, "materialize_circular_conv");
    const std::size_t co = kernel.dim(0), ci = kernel.dim(1), k = kernel.dim(2);
    if (std::max(co, ci) * n * n > kMaterializedCap)
        throw SizeError("materialize_circular_conv: c·n² = " + std::to_string(std::max(co, ci) * n * n) +
                        " exceeds the cap of " + std::to_string(kMaterializedCap));
    const std::size_t nn = n * n;
    ComplexMatrix m(co * nn, ci * nn);
    for (std::size_t o = 0; o < co; ++o)
        for (std::size_t i = 0; i < ci; ++i)
            for (std::size_t u = 0; u < k; ++u)
                for (std::size_t v = 0; v < k; ++v) {
                    const double w = kernel[((o * ci + i) * k + u) * k + v];
                    for (std::size_t py = 0; py < n; ++py)
                        for (std::size_t px = 0; px < n; ++px) {
                            const std::size_t sy = (py + n * k - u) % n, sx = (px + n * k - v) % n;
                            m(o * nn + py * n + px, i * nn + sy * n + sx) += w;
                        }
                }
    return m;
}

OperatorSpectrum matrix_spectrum(const ComplexMatrix& m) {
    const SvdResult svd = svd_small(m);
    OperatorSpectrum out;
    out.spectral_norm = svd.singular_values.empty() ? 0.0 : svd.singular_values[0];
    out.frobenius_norm = m.frobenius();
    out.top_vector = Tensor({m.cols()}, real_direction(column(svd.v, 0)));
    return out;
}

OperatorSpectrum conv_spectrum(const Tensor& kernel, std::size_t n, ConvSemantics semantics) {
    require_kernel(kernel, "conv_spectrum");
    const std::size_t ci = kernel.dim(1);
    if (semantics == ConvSemantics::materialized) {
        OperatorSpectrum out = matrix_spectrum(materialize_circular_conv(kernel, n));
        out.top_vector = out.top_vector.reshaped({ci, n, n});
        return out;
    }

    const auto spectrum = kernel_spectrum(kernel, n);
    OperatorSpectrum out;
    std::size_t best_f = 0;
    std::vector<complex> best_v;
    double frob2 = 0.0;
    out.frequency_singular_values.reserve(spectrum.size());
    for (std::size_t f = 0; f < spectrum.size(); ++f) {
        const SvdResult svd = svd_small(spectrum[f]);
        const double f1 = spectrum[f].frobenius();
        frob2 += f1 * f1;
        if (f == 0 || svd.singular_values[0] > out.spectral_norm) {
            out.spectral_norm = svd.singular_values[0];
            best_f = f;
            best_v = column(svd.v, 0);
        }
        out.frequency_singular_values.push_back(svd.singular_values);
    }
    out.frobenius_norm = std::sqrt(frob2);

    // v ⊗ exp(+2πi f·p / n) is the frequency-f eigendirection. After fixing
    // the phase of v its real part is a real input direction with the same gain.
    std::size_t b = 0;
    for (std::size_t i = 1; i < best_v.size(); ++i)
        if (std::abs(best_v[i]) > std::abs(best_v[b])) b = i;
    const complex phase = std::conj(best_v[b]) / std::abs(best_v[b]);
    const std::size_t fy = best_f / n, fx = best_f % n;
    Tensor top({ci, n, n});
    for (std::size_t i = 0; i < ci; ++i)
        for (std::size_t py = 0; py < n; ++py)
            for (std::size_t px = 0; px < n; ++px) {
                const double angle = 2.0 * std::numbers::pi * static_cast<double>((fy * py + fx * px) % n) /
                                     static_cast<double>(n);
                top.at(i, py, px) = (best_v[i] * phase * std::polar(1.0, angle)).real();
            }
    out.top_vector = (1.0 / norm2(top)) * top;
    return out;
}

OperatorSpectrum cayley_spectrum(const CayleyOperator& op) {
    OperatorSpectrum out;
    double frob2 = 0.0;
    for (std::size_t f = 0; f < op.frequencies(); ++f) {
        const SvdResult svd = svd_small(op.q(f));
        const double f1 = op.q(f).frobenius();
        frob2 += f1 * f1;
        out.spectral_norm = std::max(out.spectral_norm, svd.singular_values[0]);
        out.frequency_singular_values.push_back(svd.singular_values);
    }
    out.frobenius_norm = std::sqrt(frob2);
    const std::size_t c = op.channels(), n = op.size();
    // Every direction has unit gain; the constant image in channel 0 is as good as any.
    Tensor top({c, n, n});
    for (std::size_t p = 0; p < n * n; ++p) top[p] = 1.0 / static_cast<double>(n);
    out.top_vector = std::move(top);
    return out;
}

AmplificationReport verify_amplification(const LinearOperator& op, const OperatorSpectrum& spectrum,
                                         double delta_magnitude) {
    if (!(delta_magnitude > 0.0)) throw ConfigError("verify_amplification: delta magnitude must be positive");
    AmplificationReport r;
    r.sigma1 = spectrum.spectral_norm;
    const Tensor delta = delta_magnitude * spectrum.top_vector;
    r.delta_norm = norm2(delta);
    r.output_norm = norm2(op(delta));
    r.ratio = r.output_norm / r.delta_norm;
    // Rounding puts the spectral norm of an exactly orthogonal operator a few
    // ulps either side of 1.
    r.amplifying = r.sigma1 > 1.0 + 1e-10;
    if (r.amplifying) {
        r.message = "amplifying operator: ||W delta|| / ||delta|| = " + std::to_string(r.ratio);
    } else {
        r.message = "precondition not met: sigma1 = " + std::to_string(r.sigma1) + " <= 1, operator does not amplify";
    }
    return r;
}

ComplexMatrix random_orthogonal(std::size_t n, std::uint64_t seed) { return gaussian_orthonormal(n, n, seed); }

ComplexMatrix matrix_with_spectrum(std::size_t m, const std::vector<double>& singular_values, std::uint64_t seed) {
    const std::size_t n = singular_values.size();
    if (m < n) throw ConfigError("matrix_with_spectrum: need m >= n");
    const ComplexMatrix u = gaussian_orthonormal(m, n, derive_seed(seed, 0));
    const ComplexMatrix v = gaussian_orthonormal(n, n, derive_seed(seed, 1));
    ComplexMatrix us = u;
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) us(r, c) *= singular_values[c];
    return us * v.adjoint();
}

std::vector<double> sample_lemma_spectrum(std::size_t m, std::size_t n, double sigma1, std::uint64_t seed) {
    if (n == 0 || m < n) throw ConfigError("sample_lemma_spectrum: need m >= n >= 1");
    if (!(sigma1 > 1.0)) throw ConstructionError("sample_lemma_spectrum: sigma1 must exceed 1");
    const double target = static_cast<double>(m) / static_cast<double>(n);
    // sigma_i <= sigma_1 bounds ||W||_F / ||W||_2 by sqrt(n).
    if (std::sqrt(static_cast<double>(n)) <= target)
        throw ConstructionError("sample_lemma_spectrum: ||W||_F / ||W||_2 <= sqrt(" + std::to_string(n) +
                                ") cannot exceed m/n = " + std::to_string(target));
    constexpr int kMaxDraws = 100000;
    Rng rng(seed);
    std::vector<double> s(n);
    for (int draw = 0; draw < kMaxDraws; ++draw) {
        s[0] = 1.0;
        double sum = 1.0;
        for (std::size_t i = 1; i < n; ++i) {
            s[i] = rng.uniform();
            sum += s[i] * s[i];
        }
        if (std::sqrt(sum) > target) {
            std::sort(s.begin() + 1, s.end(), std::greater<>());
            for (auto& x : s) x *= sigma1;
            return s;
        }
    }
    throw ConstructionError("sample_lemma_spectrum: no feasible spectrum found in " + std::to_string(kMaxDraws) +
                            " draws for m = " + std::to_string(m) + ", n = " + std::to_string(n));
}

bool lemma1_holds(const ComplexMatrix& w, const ComplexMatrix& h, std::span<const complex> delta) {
    const auto y = w * (h * delta);
    const double bound = static_cast<double>(w.rows()) / static_cast<double>(w.cols()) * vector_norm(delta);
    return vector_norm(y) > bound;
}

Lemma1Report verify_lemma1(std::size_t trials, std::size_t m, std::size_t n, std::uint64_t seed, double epsilon,
                           std::size_t threads) {
    if (n == 0 || m < n) throw ConfigError("verify_lemma1: need m >= n >= 1");
    const double target = static_cast<double>(m) / static_cast<double>(n);
    struct Trial {
        double margin_w, margin_wh;
    };
    std::vector<Trial> slots(trials);
    auto gain = [&](const ComplexMatrix& wh, const std::vector<double>& dir) {
        std::vector<complex> delta(dir.size());
        for (std::size_t i = 0; i < dir.size(); ++i) delta[i] = epsilon * dir[i];
        return vector_norm(wh * delta) / vector_norm(delta);
    };
    parallel_for(trials, static_cast<unsigned>(threads), [&](std::size_t t) {
        const std::uint64_t ts = derive_seed(seed, t);
        Rng rng(ts);
        const double sigma1 = 1.0 + 2.0 * target * (1.0 - rng.uniform());
        const auto s = sample_lemma_spectrum(m, n, sigma1, derive_seed(ts, 1));
        const ComplexMatrix w = matrix_with_spectrum(m, s, derive_seed(ts, 2));
        const ComplexMatrix h = random_orthogonal(n, derive_seed(ts, 3));
        const ComplexMatrix wh = w * h;
        const auto v_w = real_direction(column(svd_small(w).v, 0));
        const auto v_wh = real_direction(column(svd_small(wh).v, 0));
        slots[t] = {gain(wh, v_w) - target, gain(wh, v_wh) - target};
    });
    Lemma1Report r{m, n, trials, 0, 0, 0.0, 0.0};
    for (std::size_t t = 0; t < trials; ++t) {
        r.passes_w += slots[t].margin_w > 0.0;
        r.passes_wh += slots[t].margin_wh > 0.0;
        r.min_margin_w = t == 0 ? slots[t].margin_w : std::min(r.min_margin_w, slots[t].margin_w);
        r.min_margin_wh = t == 0 ? slots[t].margin_wh : std::min(r.min_margin_wh, slots[t].margin_wh);
    }
    return r;
}

double placement_ratio(const ConvShape& s) {
    const double in = static_cast<double>(s.c_in * s.h_in * s.w_in);
    const double out = static_cast<double>(s.c_out * s.h_out * s.w_out);
    if (in == 0.0 || out == 0.0) throw ConfigError("placement_ratio: empty shape");
    return out / in;
}

std::vector<PlacementScore> placement_scan(const std::vector<ConvShape>& shapes) {
    std::vector<PlacementScore> out;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        const auto& s = shapes[i];
        out.push_back({i, s.c_in, s.c_out, s.h_in, s.w_in, s.h_out, s.w_out, placement_ratio(s)});
    }
    return out;
}

std::vector<PlacementScore> placement_scan(const ModelGraph& model) {
    const auto shapes = infer_shapes(model);
    std::vector<PlacementScore> out;
    for (std::size_t i : conv_layer_indices(model)) {
        const Shape& a = shapes[i];
        const Shape& b = shapes[i + 1];
        const ConvShape s{a[0], a[1], a[2], b[0], b[1], b[2]};
        out.push_back({i, s.c_in, s.c_out, s.h_in, s.w_in, s.h_out, s.w_out, placement_ratio(s)});
    }
    return out;
}

std::size_t recommend_placement(const std::vector<PlacementScore>& scores) {
    if (scores.empty()) throw ConfigError("recommend_placement: model has no conv layers");
    const auto it = std::min_element(scores.begin(), scores.end(),
                                     [](const auto& a, const auto& b) { return a.ratio < b.ratio; });
    return it->layer_index;
}

}  // namespace oiqa
