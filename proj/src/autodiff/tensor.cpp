#include "autodiff/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "core/error.hpp"

namespace pdistill {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<detail::Node>()) {
  node_->value.assign(shape_size(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : node_(std::make_shared<detail::Node>()) {
  if (shape_size(shape) != values.size()) {
    fail(ErrorCode::kShapeMismatch, "tensor shape " + shape_string(shape) + " does not hold " +
                                        std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const {
  if (!node_) fail(ErrorCode::kInvalidArgument, "use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    fail(ErrorCode::kShapeMismatch,
         "axis " + std::to_string(axis) + " out of range for shape " + shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::size() const { return node_ ? node_->value.size() : 0; }

std::span<const double> Tensor::data() const {
  if (!node_) return {};
  return node_->value;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) fail(ErrorCode::kInvalidArgument, "use of undefined tensor");
  if (node_->id != 0) fail(ErrorCode::kInvalidArgument, "cannot mutate a recorded tensor");
  return node_->value;
}

std::span<const double> Tensor::grad() const {
  if (!node_) return {};
  return node_->grad;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!node_) fail(ErrorCode::kInvalidArgument, "use of undefined tensor");
  node_->requires_grad = on;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

double Tensor::item() const {
  if (size() != 1) {
    fail(ErrorCode::kShapeMismatch, "item() on tensor of shape " + shape_string(shape()));
  }
  return node_->value[0];
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->value); }

Tensor Tensor::clone() const {
  Tensor t(shape(), node_->value);
  t.node_->requires_grad = node_->requires_grad;
  return t;
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(const std::shared_ptr<detail::Node>& node) {
  nodes_.push_back(node);
  node->id = nodes_.size();
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    fail(ErrorCode::kShapeMismatch,
         "backward() needs a scalar loss, got shape " +
             (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (nodes_.empty()) fail(ErrorCode::kInvalidArgument, "backward() on an empty tape");
  if (!std::isfinite(loss.item())) {
    for (const auto& n : nodes_) {
      for (const double v : n->value) {
        if (!std::isfinite(v)) {
          fail(ErrorCode::kNonFinite, "non-finite loss; first non-finite value at node " +
                                          std::to_string(n->id) + " (" + n->op + ")");
        }
      }
    }
    fail(ErrorCode::kNonFinite, "non-finite loss");
  }
  auto& root = *loss.node();
  root.ensure_grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::Node& n = **it;
    if (n.backward && !n.grad.empty()) n.backward(n);
  }
}

Tensor& ParameterSet::add(const std::string& name, Shape shape, std::vector<double> values) {
  if (index_.contains(name)) fail(ErrorCode::kInvalidArgument, "duplicate parameter " + name);
  Tensor t(std::move(shape), std::move(values));
  t.set_requires_grad(true);
  index_.emplace(name, params_.size());
  params_.push_back({name, std::move(t)});
  return params_.back().tensor;
}

Tensor& ParameterSet::at(std::string_view name) {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorCode::kInvalidArgument, "unknown parameter " + std::string(name));
  return params_[it->second].tensor;
}

const Tensor& ParameterSet::at(std::string_view name) const {
  return const_cast<ParameterSet*>(this)->at(name);
}

bool ParameterSet::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.name);
  return out;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void ParameterSet::set_requires_grad(bool on) {
  for (auto& p : params_) p.tensor.set_requires_grad(on);
}

GradientMap backward(const Tensor& loss, const ParameterSet& params) {
  Tape* tape = Tape::active();
  if (!tape) fail(ErrorCode::kInvalidArgument, "backward() without an active tape");
  tape->backward(loss);
  GradientMap grads;
  for (const auto& p : params) {
    if (p.tensor.has_grad()) {
      grads.emplace(p.name, Tensor(p.tensor.shape(), std::vector<double>(p.tensor.grad().begin(),
                                                                         p.tensor.grad().end())));
    } else {
      grads.emplace(p.name, Tensor(p.tensor.shape(), 0.0));
    }
  }
  return grads;
}

}  // namespace pdistill
