#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "oiqa/cayley.hpp"
#include "oiqa/linalg.hpp"
#include "oiqa/model.hpp"
#include "oiqa/tensor.hpp"

namespace oiqa {

struct OperatorSpectrum {
    double spectral_norm = 0.0;
    double frobenius_norm = 0.0;
    /// Real unit vector attaining the spectral norm, shaped like the operator input.
    Tensor top_vector;
    /// Per-frequency singular values, descending within each frequency (circular only).
    std::vector<std::vector<double>> frequency_singular_values;
};

enum class ConvSemantics { circular, materialized };

/// Largest c·n² accepted by the materialized path.
inline constexpr std::size_t kMaterializedCap = 4096;

/// Circular convolution y[o](p) = sum_i sum_u K[o][i](u) x[i](p - u mod n),
/// evaluated directly in the spatial domain.
Tensor circular_conv(const Tensor& kernel, const Tensor& x);

/// Dense (c_out n²)×(c_in n²) matrix of circular_conv on an n×n grid.
ComplexMatrix materialize_circular_conv(const Tensor& kernel, std::size_t n);

OperatorSpectrum conv_spectrum(const Tensor& kernel, std::size_t n, ConvSemantics semantics);
OperatorSpectrum matrix_spectrum(const ComplexMatrix& m);
OperatorSpectrum cayley_spectrum(const CayleyOperator& op);

using LinearOperator = std::function<Tensor(const Tensor&)>;

struct AmplificationReport {
    bool amplifying = false;  // precondition sigma1 > 1 held
    double sigma1 = 0.0;
    double delta_norm = 0.0;
    double output_norm = 0.0;
    double ratio = 0.0;
    std::string message;
};

/// Applies `op` to delta = magnitude * v1 and reports ||op(delta)|| / ||delta||.
AmplificationReport verify_amplification(const LinearOperator& op, const OperatorSpectrum& spectrum,
                                         double delta_magnitude);

/// Real m×n matrix with prescribed singular values (descending, length n),
/// random orthonormal singular vectors.
ComplexMatrix matrix_with_spectrum(std::size_t m, const std::vector<double>& singular_values, std::uint64_t seed);

/// Random real orthogonal n×n matrix (QR of a Gaussian matrix).
ComplexMatrix random_orthogonal(std::size_t n, std::uint64_t seed);

/// Singular values s with s[0] = sigma1 > 1 and ||s|| / sigma1 > m/n, drawn
/// by rejection. Throws ConstructionError when no such spectrum exists.
std::vector<double> sample_lemma_spectrum(std::size_t m, std::size_t n, double sigma1, std::uint64_t seed);

/// ||W H delta|| > (m/n) ||delta|| for a single instance.
bool lemma1_holds(const ComplexMatrix& w, const ComplexMatrix& h, std::span<const complex> delta);

struct Lemma1Report {
    std::size_t m = 0;
    std::size_t n = 0;
    std::size_t trials = 0;
    std::size_t passes_w = 0;   // delta along the top right singular vector of W
    std::size_t passes_wh = 0;  // delta along the top right singular vector of W·H
    double min_margin_w = 0.0;  // min over trials of ||WH delta|| / ||delta|| - m/n
    double min_margin_wh = 0.0;

    std::size_t best() const { return std::max(passes_w, passes_wh); }
};

/// Monte-Carlo check with sigma1 ~ U(1, 1 + 2m/n) and ||delta|| = epsilon.
Lemma1Report verify_lemma1(std::size_t trials, std::size_t m, std::size_t n, std::uint64_t seed,
                           double epsilon = 0.1, std::size_t threads = 1);

struct ConvShape {
    std::size_t c_in = 0, h_in = 0, w_in = 0;
    std::size_t c_out = 0, h_out = 0, w_out = 0;
};

struct PlacementScore {
    std::size_t layer_index = 0;
    std::size_t c_in = 0, c_out = 0;
    std::size_t h_in = 0, w_in = 0, h_out = 0, w_out = 0;
    double ratio = 0.0;  // (c_out h_out w_out) / (c_in h_in w_in)
};

double placement_ratio(const ConvShape& s);

/// One score per conv layer of `model`, from the static shape pass.
std::vector<PlacementScore> placement_scan(const ModelGraph& model);
/// Same for a bare list of conv shapes; layer_index is the list position.
std::vector<PlacementScore> placement_scan(const std::vector<ConvShape>& shapes);

/// Layer index with the smallest ratio (first on ties).
std::size_t recommend_placement(const std::vector<PlacementScore>& scores);

}  // namespace oiqa
