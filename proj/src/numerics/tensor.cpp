#include "ecglink/numerics/tensor.hpp"

#include <sstream>

#include "ecglink/error.hpp"

namespace ecglink::numerics {
namespace {

thread_local GradTape* t_current_tape = nullptr;

}  // namespace

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_size(const Shape& shape) noexcept {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        n *= d;
    }
    return n;
}

std::vector<double>& detail::Node::grad_buffer() {
    if (grad.empty()) {
        grad.assign(data->size(), 0.0);
    }
    return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    for (std::size_t d : shape) {
        if (d == 0) {
            throw DimensionError("tensor extents must be positive, got " + to_string(shape));
        }
    }
    if (shape_size(shape) != values.size()) {
        throw DimensionError("shape " + to_string(shape) + " does not hold " +
                             std::to_string(values.size()) + " values");
    }
    node_ = std::make_shared<detail::Node>();
    node_->shape = std::move(shape);
    node_->data = std::make_shared<std::vector<double>>(std::move(values));
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
    const std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

const Shape& Tensor::shape() const {
    if (!node_) {
        throw DimensionError("undefined tensor");
    }
    return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
    const Shape& s = shape();
    if (axis >= s.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + to_string(s));
    }
    return s[axis];
}

std::size_t Tensor::size() const { return node_ ? node_->data->size() : 0; }

std::span<const double> Tensor::values() const {
    if (!node_) {
        return {};
    }
    return {node_->data->data(), node_->data->size()};
}

std::span<double> Tensor::mutable_values() {
    if (!is_leaf()) {
        throw Error("only leaf tensors may be written in place");
    }
    return {node_->data->data(), node_->data->size()};
}

double Tensor::item() const {
    if (size() != 1) {
        throw DimensionError("item() on tensor of shape " + to_string(shape()));
    }
    return (*node_->data)[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
    const Shape& s = shape();
    if (s.size() != 2 || row >= s[0] || col >= s[1]) {
        throw DimensionError("at(" + std::to_string(row) + "," + std::to_string(col) +
                             ") on " + to_string(s));
    }
    return (*node_->data)[row * s[1] + col];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::is_leaf() const { return node_ && !node_->backward; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!node_) {
        return {};
    }
    return {node_->grad.data(), node_->grad.size()};
}

std::span<double> Tensor::mutable_grad() {
    auto& g = node_->grad_buffer();
    return {g.data(), g.size()};
}

void Tensor::zero_grad() {
    if (node_ && !node_->grad.empty()) {
        std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }
}

Tensor Tensor::view() const {
    auto n = std::make_shared<detail::Node>();
    n->shape = shape();
    n->data = node_->data;
    n->requires_grad = true;
    return Tensor(std::move(n));
}

Tensor Tensor::clone(bool requires_grad) const {
    return Tensor(shape(), std::vector<double>(values().begin(), values().end()), requires_grad);
}

GradTape::GradTape() : previous_(t_current_tape) { t_current_tape = this; }

GradTape::~GradTape() { t_current_tape = previous_; }

GradTape* GradTape::current() noexcept { return t_current_tape; }

void GradTape::record(std::shared_ptr<detail::Node> node) { nodes_.push_back(std::move(node)); }

void GradTape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw DimensionError("backward() needs a single-valued loss");
    }
    if (!loss.requires_grad()) {
        return;
    }
    loss.node()->grad_buffer()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        detail::Node& node = **it;
        if (!node.grad.empty() && node.backward) {
            node.backward(node);
        }
    }
}

Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> parents, std::function<void(detail::Node&)> backward) {
    Tensor out(std::move(shape), std::move(values));
    GradTape* tape = GradTape::current();
    if (tape == nullptr) {
        return out;
    }
    bool any = false;
    for (const Tensor& p : parents) {
        any = any || p.requires_grad();
    }
    if (!any) {
        return out;
    }
    auto& node = *out.node();
    node.requires_grad = true;
    node.backward = std::move(backward);
    node.parents.reserve(parents.size());
    for (const Tensor& p : parents) {
        node.parents.push_back(p.node());
    }
    tape->record(out.node());
    return out;
}

}  // namespace ecglink::numerics
