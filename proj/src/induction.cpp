#include "tiseg/induction.hpp"

#include <Eigen/Dense>
#include <stdexcept>

#include "tiseg/ops.hpp"

namespace tiseg {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_problem(const FewShotProblem& p) {
    const Tensor& F = p.features;
    const Tensor& E = p.encodings;
    if (F.rank() != 4 || E.rank() != 4)
        throw std::invalid_argument("few-shot problem expects N x C x h x w features and N x D x h x w encodings");
    if (F.dim(0) != E.dim(0) || F.dim(2) != E.dim(2) || F.dim(3) != E.dim(3))
        throw std::invalid_argument("few-shot problem: features " + shape_str(F.shape()) + " and encodings " +
                                    shape_str(E.shape()) + " are not spatially aligned");
    if (p.lambda.numel() != 1 || p.lambda.item() < 0.0)
        throw std::invalid_argument("few-shot problem: lambda must be a single non-negative value");
    if (p.kernel_size < 1 || p.kernel_size % 2 == 0)
        throw std::invalid_argument("few-shot problem: kernel size must be odd");
}

}  // namespace

Tensor LearnedKernel::filter() const {
    return reshape(weights, {weights.dim(0), channels, kernel_size, kernel_size});
}

LearnedKernel solve_closed_form(const FewShotProblem& problem) {
    check_problem(problem);
    NoGradGuard no_grad;
    const int k = problem.kernel_size;
    Tensor A = unfold(problem.features, k, 1, k / 2);
    Tensor B = nchw_to_rows(problem.encodings);
    const int64_t R = A.dim(0), P = A.dim(1), D = B.dim(1);
    Eigen::Map<const RowMat> a(A.data().data(), R, P);
    Eigen::Map<const RowMat> b(B.data().data(), R, D);
    const double lambda = problem.lambda.item();

    LearnedKernel out;
    out.channels = problem.features.dim(1);
    out.kernel_size = k;
    Eigen::MatrixXd x;
    if (lambda > 0.0) {
        Eigen::MatrixXd normal = a.transpose() * a;
        normal.diagonal().array() += lambda;
        x = normal.ldlt().solve(a.transpose() * b);
    } else {
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
        out.rank_deficient = cod.rank() < P;
        x = cod.solve(Eigen::MatrixXd(b));
    }
    std::vector<double> w(static_cast<size_t>(D * P));
    Eigen::Map<RowMat>(w.data(), D, P) = x.transpose();
    out.weights = Tensor::from({D, P}, std::move(w));
    out.data_term = sum_squares(sub(matmul(A, out.weights, false, true), B));
    out.objective = add(out.data_term, scale(sum_squares(out.weights), lambda));
    out.trace.push_back(out.objective.item());
    return out;
}

LearnedKernel solve_iterative(const FewShotProblem& problem, int steps) {
    check_problem(problem);
    if (steps < 1) throw std::invalid_argument("solve_iterative needs steps >= 1");
    const int k = problem.kernel_size;
    const Tensor& lambda = problem.lambda;
    Tensor A = unfold(problem.features, k, 1, k / 2);
    Tensor B = nchw_to_rows(problem.encodings);
    const int64_t P = A.dim(1), D = B.dim(1);

    LearnedKernel out;
    out.channels = problem.features.dim(1);
    out.kernel_size = k;
    Tensor W = Tensor::zeros({D, P});
    double first_grad_sq = 0.0;
    for (int s = 0;; ++s) {
        Tensor residual = sub(matmul(A, W, false, true), B);
        Tensor data_term = sum_squares(residual);
        Tensor objective = add(data_term, mul_scalar(sum_squares(W), lambda));
        out.trace.push_back(objective.item());
        out.objective = objective;
        out.data_term = data_term;
        if (s == steps) break;

        // grad = 2 (A W^T - B)^T A + 2 lambda W
        Tensor grad = scale(add(matmul(residual, A, true, false), mul_scalar(W, lambda)), 2.0);
        Tensor grad_sq = sum_squares(grad);
        const double gsq = grad_sq.item();
        if (s == 0) first_grad_sq = gsq;
        if (gsq == 0.0 || gsq <= 1e-30 * first_grad_sq) break;
        // Exact minimiser of the quadratic along -grad.
        Tensor curvature = add(sum_squares(matmul(A, grad, false, true)), mul_scalar(grad_sq, lambda));
        Tensor step = div_scalar(grad_sq, scale(curvature, 2.0));
        W = sub(W, mul_scalar(grad, step));
        out.steps_taken = s + 1;
    }
    out.weights = W;
    return out;
}

MaskEncoding apply_kernel(const LearnedKernel& kernel, const Tensor& features) {
    if (features.rank() != 4 || features.dim(1) != kernel.channels)
        throw std::invalid_argument("apply_kernel: features " + shape_str(features.shape()) + " do not have " +
                                    std::to_string(kernel.channels) + " channels");
    return {conv2d(features, kernel.filter(), Tensor(), 1, kernel.kernel_size / 2), Head::ind};
}

}  // namespace tiseg
