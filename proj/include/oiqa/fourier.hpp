#pragma once

#include "oiqa/tensor.hpp"

namespace oiqa {

/// Convention used throughout: forward transform is unnormalized, inverse
/// carries the 1/(H*W) factor. Recorded in checkpoint headers.
inline constexpr const char* kDftConvention = "forward-unnormalized/inverse-1-over-N";

/// Residue above which idft2 refuses to drop the imaginary part.
inline constexpr double kSymmetryTolerance = 1e-8;

/// Per-channel forward 2-D DFT of a real C×H×W tensor.
Tensor dft2(const Tensor& x);

/// Per-channel inverse 2-D DFT returning the real part. Throws SymmetryError
/// when any imaginary component reaches kSymmetryTolerance.
Tensor idft2(const Tensor& spectrum);

// Complex-to-complex variants on C×H×W tensors (real input is promoted).
Tensor dft2_complex(const Tensor& x);
Tensor idft2_complex(const Tensor& spectrum);

}  // namespace oiqa
