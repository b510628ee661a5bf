#include "fbev/diff/value.hpp"

#include <sstream>
#include <unordered_set>

namespace fbev::diff {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

void shape_fail(const std::string& op, const Shape& a, const Shape& b, const std::string& detail) {
    std::string msg = op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b);
    if (!detail.empty()) {
        msg += " (" + detail + ")";
    }
    throw ShapeError(msg);
}

std::vector<double>& Node::grad_buffer() {
    if (grad.empty()) {
        grad.assign(data.size(), 0.0);
    }
    return grad;
}

Value Value::constant(Shape shape, std::vector<double> data) {
    if (numel(shape) != data.size()) {
        throw ShapeError("constant: shape " + shape_str(shape) + " does not hold " +
                         std::to_string(data.size()) + " values");
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->op = "constant";
    return Value(std::move(n));
}

Value Value::zeros(Shape shape, bool requires_grad) {
    auto n = numel(shape);
    Value v = constant(std::move(shape), std::vector<double>(n, 0.0));
    v.node_->requires_grad = requires_grad;
    if (requires_grad) {
        v.node_->op = "parameter";
    }
    return v;
}

Value Value::full(Shape shape, double value) {
    auto n = numel(shape);
    return constant(std::move(shape), std::vector<double>(n, value));
}

Value Value::scalar(double v) { return constant({1}, {v}); }

Value Value::parameter(Shape shape, std::vector<double> data) {
    Value v = constant(std::move(shape), std::move(data));
    v.node_->requires_grad = true;
    v.node_->op = "parameter";
    return v;
}

int Value::dim(int axis) const {
    if (axis < 0) {
        axis += rank();
    }
    if (axis < 0 || axis >= rank()) {
        throw ShapeError("dim: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape()));
    }
    return node_->shape[static_cast<std::size_t>(axis)];
}

double Value::item() const {
    if (node_->data.size() != 1) {
        throw ShapeError("item: expected a single element, got " + shape_str(shape()));
    }
    return node_->data[0];
}

std::vector<double> Value::grad() const {
    if (node_->grad.empty()) {
        return std::vector<double>(node_->data.size(), 0.0);
    }
    return node_->grad;
}

Value Value::detach() const {
    auto n = std::make_shared<Node>();
    n->shape = node_->shape;
    n->data = node_->data;
    n->op = "detach";
    return Value(std::move(n));
}

void Value::backward() const {
    if (node_->data.size() != 1) {
        throw ShapeError("backward: root must be a scalar, got " + shape_str(shape()));
    }
    if (!node_->requires_grad) {
        return;
    }
    // Iterative post-order DFS; each node appears once.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) {
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    for (Node* n : order) {
        if (n->backward_fn) {
            n->grad.assign(n->data.size(), 0.0);
        }
    }
    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) {
            (*it)->backward_fn(**it);
        }
    }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Value make_result(const std::string& op, Shape shape, std::vector<double> data,
                  std::vector<Value> parents, std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->op = op;
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) {
            needs = needs || p.requires_grad();
        }
    }
    if (needs) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (auto& p : parents) {
            n->parents.push_back(p.node_ptr());
        }
        n->backward_fn = std::move(backward_fn);
    }
    return Value(std::move(n));
}

}  // namespace fbev::diff
