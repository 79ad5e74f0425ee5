#pragma once

// Dense row-major tensor (up to 4-D, NCHW) and a reverse-mode autograd tape.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "freqsp/error.hpp"

namespace freqsp::nn {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream o;
    o << '[';
    for (size_t i = 0; i < s.size(); ++i) o << (i ? "," : "") << s[i];
    o << ']';
    return o.str();
}

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
        detail::require(shape_.size() <= 4, "tensor rank above 4");
        for (int d : shape_) detail::require(d > 0, "tensor dims must be positive: " + shape_str(shape_));
        data_.assign(count(shape_), fill);
    }
    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        detail::require(data_.size() == count(shape_), "tensor data does not match shape " + shape_str(shape_));
    }

    static size_t count(const Shape& s) {
        return std::accumulate(s.begin(), s.end(), size_t{1},
                               [](size_t a, int d) { return a * static_cast<size_t>(d); });
    }

    const Shape& shape() const noexcept { return shape_; }
    int dim(size_t i) const { return shape_.at(i); }
    size_t rank() const noexcept { return shape_.size(); }
    size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    // NCHW accessors for rank-4 tensors.
    double& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
    const double& at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }
    double* ptr() noexcept { return data_.data(); }
    const double* ptr() const noexcept { return data_.data(); }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    size_t offset(int n, int c, int h, int w) const noexcept {
        return ((static_cast<size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
    }

    Shape shape_;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Autograd

struct Node {
    Tensor value;
    Tensor grad; // allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    Tensor& grad_buffer() {
        if (grad.empty()) grad = Tensor(value.shape());
        return grad;
    }
};

class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false) : node_(std::make_shared<Node>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }

    // Result of an op; tracks gradients iff any parent does.
    static Var from_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
        Var v(std::move(value));
        for (auto& p : parents) {
            v.node_->requires_grad = v.node_->requires_grad || p.requires_grad();
            v.node_->parents.push_back(p.node_);
        }
        if (v.node_->requires_grad) v.node_->backward = std::move(backward);
        else v.node_->parents.clear();
        return v;
    }

    bool valid() const noexcept { return static_cast<bool>(node_); }
    const Tensor& value() const { return node_->value; }
    Tensor& value() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    Tensor& grad() { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    const Shape& shape() const { return node_->value.shape(); }
    Node& node() { return *node_; }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

    void zero_grad() {
        if (!node_->grad.empty()) node_->grad.fill(0.0);
    }

    // Reverse pass from a scalar.
    void backward() {
        detail::require(node_->value.size() == 1, "backward() needs a scalar output");
        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        std::vector<std::pair<Node*, size_t>> stack{{node_.get(), 0}};
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, i] = stack.back();
            if (i < n->parents.size()) {
                Node* p = n->parents[i++].get();
                if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        node_->grad_buffer()[0] += 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it)
            if ((*it)->backward && !(*it)->grad.empty()) (*it)->backward(**it);
    }

    // Sum of value sizes over the graph reachable from this node.
    size_t graph_elements() const {
        size_t total = 0;
        std::unordered_set<const Node*> seen;
        std::vector<const Node*> stack{node_.get()};
        while (!stack.empty()) {
            const Node* n = stack.back();
            stack.pop_back();
            if (!seen.insert(n).second) continue;
            total += n->value.size();
            for (const auto& p : n->parents) stack.push_back(p.get());
        }
        return total;
    }

private:
    std::shared_ptr<Node> node_;
};

inline Var parameter(Tensor t) { return Var(std::move(t), true); }
inline Var constant(Tensor t) { return Var(std::move(t), false); }

} // namespace freqsp::nn
