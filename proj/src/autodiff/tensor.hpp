#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pdistill {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  // Empty until something accumulates into it.
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  // 1-based position on the tape; 0 for leaves and untracked values.
  std::size_t id = 0;
  // Reads this node's grad and accumulates into its inputs' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Dense row-major array of doubles. Copies share the underlying node, so a
// Tensor behaves like a handle; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor from_node(std::shared_ptr<detail::Node> node);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> data() const;
  // Only valid on values that are not part of a recorded graph.
  std::span<double> mutable_data();
  std::span<const double> grad() const;
  bool has_grad() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  void zero_grad();

  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  Tensor detach() const;
  Tensor clone() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Append-only record of the operations performed while it is active. Nodes are
// appended in creation order, which is a topological order of the graph.
class Tape {
 public:
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* active();

  void record(const std::shared_ptr<detail::Node>& node);
  // Seeds d(loss)/d(loss) = 1 and propagates to every tracked input.
  void backward(const Tensor& loss);
  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

struct Parameter {
  std::string name;
  Tensor tensor;
};

// Named, insertion-ordered collection of trainable leaves.
class ParameterSet {
 public:
  Tensor& add(const std::string& name, Shape shape, std::vector<double> values);
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  std::vector<std::string> names() const;

  std::vector<Parameter>::iterator begin() { return params_.begin(); }
  std::vector<Parameter>::iterator end() { return params_.end(); }
  std::vector<Parameter>::const_iterator begin() const { return params_.begin(); }
  std::vector<Parameter>::const_iterator end() const { return params_.end(); }

  void zero_grad();
  void set_requires_grad(bool on);

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

using GradientMap = std::map<std::string, Tensor>;

// Runs the active tape backwards from a scalar loss and collects the gradient
// of every parameter (zeros for parameters the loss does not reach).
GradientMap backward(const Tensor& loss, const ParameterSet& params);

}  // namespace pdistill
