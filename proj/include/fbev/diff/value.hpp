#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbev::diff {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Throws ShapeError naming the operation and both shapes.
[[noreturn]] void shape_fail(const std::string& op, const Shape& a, const Shape& b,
                             const std::string& detail = {});

struct Node {
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    Shape shape;
    bool requires_grad = false;
    std::string op;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    // Returns the gradient buffer, allocating zeros on first use.
    std::vector<double>& grad_buffer();
};

// Handle to a node of the computation graph. Copies share the node.
class Value {
  public:
    Value() = default;
    explicit Value(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Value constant(Shape shape, std::vector<double> data);
    static Value zeros(Shape shape, bool requires_grad = false);
    static Value full(Shape shape, double v);
    static Value scalar(double v);
    static Value parameter(Shape shape, std::vector<double> data);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    int dim(int axis) const;
    int rank() const { return static_cast<int>(node_->shape.size()); }
    std::size_t size() const { return node_->data.size(); }

    const std::vector<double>& data() const { return node_->data; }
    std::vector<double>& mutable_data() { return node_->data; }
    double item() const;
    double at(std::size_t i) const { return node_->data[i]; }

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    // Gradient; zeros when nothing has been accumulated.
    std::vector<double> grad() const;
    const std::vector<double>& grad_ref() const { return node_->grad; }
    void zero_grad() { node_->grad.clear(); }

    const std::string& op() const { return node_->op; }
    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

    // Copy of the data with no graph history and requires_grad = false.
    Value detach() const;

    // Reverse sweep from a scalar. Interior gradients are reset first so a
    // second call adds the same contribution to leaves again.
    void backward() const;

  private:
    std::shared_ptr<Node> node_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

bool grad_enabled();

// Builds a result node; records parents and the backward rule only when
// recording is on and some parent requires a gradient.
Value make_result(const std::string& op, Shape shape, std::vector<double> data,
                  std::vector<Value> parents, std::function<void(Node&)> backward_fn);

}  // namespace fbev::diff
