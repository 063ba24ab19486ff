#pragma once

#include <vector>

#include "tiseg/maskenc.hpp"
#include "tiseg/tensor.hpp"

namespace tiseg {

// Regularised least-squares fit of a convolution filter w (D x C x k x k):
//
//   L(w) = sum_i || conv(F_i, w) - E_i ||^2 + lambda * ||w||^2
//
// over the N template feature maps F_i and their label encodings E_i.
struct FewShotProblem {
    Tensor features;   // N x C x h x w
    Tensor encodings;  // N x D x h x w
    Tensor lambda;     // single element, >= 0
    int kernel_size = 3;
};

struct LearnedKernel {
    Tensor weights;              // D x (C*k*k), columns ordered (c, ky, kx)
    int64_t channels = 0;        // C
    int kernel_size = 1;
    std::vector<double> trace;   // objective at iterates 0..K (closed form: final value only)
    Tensor objective;            // differentiable objective at the returned weights
    Tensor data_term;            // differentiable squared-error part of `objective`
    bool rank_deficient = false;  // closed form fell back to the least-norm solution
    int steps_taken = 0;

    // D x C x k x k view.
    Tensor filter() const;
};

// Exact minimiser via the normal equations (A^T A + lambda I) w = A^T b. Not
// differentiable; used as a reference solution.
LearnedKernel solve_closed_form(const FewShotProblem& problem);

// Steepest descent from w = 0 with the exact line search for a quadratic. Every
// step is built from differentiable ops, so gradients reach features,
// encodings and lambda. Stops early once the gradient vanishes.
LearnedKernel solve_iterative(const FewShotProblem& problem, int steps);

// Same-padded convolution of target features with the learned filter.
MaskEncoding apply_kernel(const LearnedKernel& kernel, const Tensor& features);

}  // namespace tiseg
