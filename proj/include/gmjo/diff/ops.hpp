// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "gmjo/diff/tensor.hpp"

namespace gmjo::diff {

// Elementwise arithmetic. Shapes must match, except that a 1-element tensor
// broadcasts against anything (result takes the larger shape).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(double a, const Tensor& b);
Tensor mul(const Tensor& a, double b);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, double b) { return add(a, -b); }
inline Tensor operator-(double a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, b); }
inline Tensor operator*(double a, const Tensor& b) { return mul(b, a); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// Elementwise transcendentals and clamps.
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor abs(const Tensor& a);      // subgradient 0 at 0
Tensor clamp01(const Tensor& a);  // zero slope outside [0,1]
Tensor clamp_min(const Tensor& a, double lo);

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);

// Linear algebra on [m,k] x [k,n] row-major matrices.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add_rowvec(const Tensor& x, const Tensor& v);  // [n,c] + [c]

// Row-structured ops.
Tensor softmax_rows(const Tensor& x);
Tensor rows_normalize(const Tensor& x);              // L2 per row; zero rows are errors
Tensor rows_dot(const Tensor& a, const Tensor& b);   // [n,c],[n,c] -> [n]
Tensor qmul_rows(const Tensor& a, const Tensor& b);  // Hamilton product per row, [n,4]
Tensor gather_rows(const Tensor& x, std::vector<int> idx);

// Layout ops.
Tensor reshape(const Tensor& x, std::vector<int> shape);
Tensor slice_flat(const Tensor& x, std::int64_t offset, std::vector<int> shape);
Tensor concat_flat(const std::vector<Tensor>& parts, std::vector<int> shape);

/// Bilinear sample of a [h,w,c] grid at fixed (row,col) float coordinates in
/// grid units, clamped to the boundary. Coordinates are not differentiated;
/// backward scatters into the grid. Returns [n,c].
Tensor bilinear_sample(const Tensor& grid, std::vector<double> rowcol);

/// Separable correlation of a [h,w,c] image with an odd symmetric kernel and
/// zero padding. Symmetric kernel + zero padding make the op self-adjoint.
Tensor blur_separable(const Tensor& img, std::vector<double> kernel);

/// Median over the masked entries; even counts average the two middles and
/// split the gradient 0.5/0.5 between them.
Tensor masked_median(const Tensor& x, const std::vector<std::uint8_t>& mask);

}  // namespace gmjo::diff
