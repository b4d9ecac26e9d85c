#pragma once

// Dense row-major tensors with reverse-mode gradients recorded on a
// dynamically built tape.
//
// A Tensor is a cheap handle. Values are never modified after an op produces
// them; only leaves (parameters) may be written, by the optimizer or a
// gradient checker. Ops record themselves on the thread's active GradTape
// when at least one input requires a gradient, so inference outside a tape
// builds no graph at all.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ecglink::numerics {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape) noexcept;

namespace detail {

struct Node {
    Shape shape;
    std::shared_ptr<std::vector<double>> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    std::vector<double>& grad_buffer();
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor filled(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const;

    std::span<const double> values() const;
    // Leaves only. Writes are visible through every view of the same storage.
    std::span<double> mutable_values();
    double item() const;
    double operator[](std::size_t i) const { return values()[i]; }
    double at(std::size_t row, std::size_t col) const;

    bool requires_grad() const;
    bool is_leaf() const;
    bool has_grad() const;
    // Empty span when nothing has been accumulated yet.
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    // New gradient-tracking leaf sharing this tensor's storage but owning a
    // separate gradient buffer. Lets several tapes differentiate through the
    // same frozen parameter values independently.
    Tensor view() const;
    // Deep copy of the values as a fresh leaf.
    Tensor clone(bool requires_grad = false) const;

    const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

// Records ops created on this thread while alive. Nested tapes stack; the
// innermost is active.
class GradTape {
public:
    GradTape();
    ~GradTape();
    GradTape(const GradTape&) = delete;
    GradTape& operator=(const GradTape&) = delete;

    // Seeds d(loss)/d(loss) = 1 and runs every recorded backward in reverse.
    // The loss must hold exactly one value.
    void backward(const Tensor& loss);

    std::size_t size() const noexcept { return nodes_.size(); }

    static GradTape* current() noexcept;
    void record(std::shared_ptr<detail::Node> node);

private:
    std::vector<std::shared_ptr<detail::Node>> nodes_;
    GradTape* previous_;
};

// Builds an op result. When a tape is active and any parent requires a
// gradient, the node is recorded with `backward`; otherwise the graph edge is
// dropped.
Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> parents, std::function<void(detail::Node&)> backward);

}  // namespace ecglink::numerics
