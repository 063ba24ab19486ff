#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tiseg {

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;

    std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Dense row-major double tensor with reverse-mode autodiff.
///
/// A Tensor is a shared handle: copies alias the same storage and graph node.
/// Graph edges are recorded only while grad mode is enabled (see NoGradGuard)
/// and at least one input requires a gradient.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int64_t dim(int i) const;
    int rank() const { return static_cast<int>(shape().size()); }
    int64_t numel() const;

    std::span<const double> data() const;
    // Mutable access is meant for parameter updates and test fixtures; it
    // bypasses the graph.
    std::span<double> mutable_data();
    std::span<const double> grad() const;
    bool has_grad() const;
    double item() const;

    bool requires_grad() const;
    void set_requires_grad(bool on);
    void zero_grad();
    Tensor detach() const;
    Tensor clone() const;

    // Seeds d(self)/d(self) = 1; self must hold exactly one element.
    void backward() const;

    std::shared_ptr<detail::Node> node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Builds an op result. backward receives the output node and must accumulate
// into inputs' grad buffers for those that require grad.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward);

}  // namespace tiseg
