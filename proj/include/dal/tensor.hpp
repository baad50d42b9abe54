#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dal::ad {

struct Shape {
    std::vector<int> d;

    Shape() = default;
    Shape(std::initializer_list<int> dims) : d(dims) {}
    explicit Shape(std::vector<int> dims) : d(std::move(dims)) {}

    int ndim() const { return static_cast<int>(d.size()); }
    int operator[](int i) const { return d[static_cast<size_t>(i)]; }

    int64_t numel() const {
        int64_t n = 1;
        for (int v : d) n *= v;
        return n;
    }

    bool operator==(const Shape& o) const { return d == o.d; }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < d.size(); ++i) os << (i ? "," : "") << d[i];
        os << "]";
        return os.str();
    }
};

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Enables/disables graph construction; forward passes in eval code paths
// wrap themselves in NoGradGuard.
bool grad_enabled();

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    bool prev;
};

template <class T>
struct Node {
    const char* op = "leaf";
    Shape shape;
    bool leaf = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::vector<T> grad; // allocated on demand; freed after backward unless leaf
    std::function<void(const std::vector<T>&)> backward_fn;

    void ensure_grad() {
        if (grad.empty()) grad.assign(static_cast<size_t>(shape.numel()), T(0));
    }
};

// N-dimensional row-major tensor. Data is shared (cheap copies); an attached
// Node records the operation graph when gradients are being tracked.
template <class T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape s, bool requires_grad = false) {
        Tensor t;
        t.shape_ = std::move(s);
        t.data_ = std::make_shared<std::vector<T>>(static_cast<size_t>(t.shape_.numel()), T(0));
        if (requires_grad) t.make_leaf();
        return t;
    }

    static Tensor full(Shape s, T value, bool requires_grad = false) {
        Tensor t = zeros(std::move(s), requires_grad);
        for (auto& v : *t.data_) v = value;
        return t;
    }

    static Tensor from(Shape s, std::vector<T> values, bool requires_grad = false) {
        Tensor t;
        t.shape_ = std::move(s);
        check(static_cast<int64_t>(values.size()) == t.shape_.numel(),
              "tensor data length " + std::to_string(values.size()) +
                  " does not match shape " + t.shape_.str());
        t.data_ = std::make_shared<std::vector<T>>(std::move(values));
        if (requires_grad) t.make_leaf();
        return t;
    }

    static Tensor scalar(T value) { return from(Shape{}, {value}); }

    // View sharing an existing buffer (row-major reinterpretation).
    static Tensor share(Shape s, std::shared_ptr<std::vector<T>> buf) {
        Tensor t;
        t.shape_ = std::move(s);
        check(buf && static_cast<int64_t>(buf->size()) == t.shape_.numel(),
              "shared buffer length does not match shape " + t.shape_.str());
        t.data_ = std::move(buf);
        return t;
    }

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return shape_; }
    int64_t numel() const { return shape_.numel(); }

    std::span<T> data() { return {data_->data(), data_->size()}; }
    std::span<const T> data() const { return {data_->data(), data_->size()}; }
    T* ptr() { return data_->data(); }
    const T* ptr() const { return data_->data(); }

    T item() const {
        check(numel() == 1, "item() requires a scalar tensor, got " + shape_.str());
        return (*data_)[0];
    }

    bool requires_grad() const { return node_ != nullptr; }
    bool has_grad() const { return node_ && !node_->grad.empty(); }

    std::span<const T> grad() const {
        check(has_grad(), "tensor has no gradient buffer");
        return {node_->grad.data(), node_->grad.size()};
    }

    void zero_grad() {
        if (node_) {
            node_->ensure_grad();
            std::fill(node_->grad.begin(), node_->grad.end(), T(0));
        }
    }

    Tensor detach() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = data_;
        return t;
    }

    // Deep copy of the values only.
    Tensor clone_data() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = std::make_shared<std::vector<T>>(*data_);
        return t;
    }

    bool all_finite() const {
        for (const T v : *data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    const std::shared_ptr<Node<T>>& node() const { return node_; }
    void set_node(std::shared_ptr<Node<T>> n) { node_ = std::move(n); }
    const std::shared_ptr<std::vector<T>>& buffer() const { return data_; }

    template <class U>
    Tensor<U> cast() const {
        std::vector<U> out(data_->size());
        for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>((*data_)[i]);
        return Tensor<U>::from(Shape{shape_.d}, std::move(out));
    }

private:
    void make_leaf() {
        node_ = std::make_shared<Node<T>>();
        node_->leaf = true;
        node_->shape = shape_;
    }

    Shape shape_;
    std::shared_ptr<std::vector<T>> data_;
    std::shared_ptr<Node<T>> node_;
};

// Attach a freshly built op node to `out` when grad tracking is active and at
// least one parent participates in the graph.
template <class T, class Fn>
void attach_node(Tensor<T>& out, const char* op,
                 std::vector<std::shared_ptr<Node<T>>> parents, Fn&& backward) {
    if (!grad_enabled()) return;
    bool any = false;
    for (const auto& p : parents)
        if (p) any = true;
    if (!any) return;
    auto n = std::make_shared<Node<T>>();
    n->op = op;
    n->shape = out.shape();
    for (auto& p : parents)
        if (p) n->parents.push_back(p);
    n->backward_fn = std::forward<Fn>(backward);
    out.set_node(std::move(n));
}

// Reverse-mode sweep from a scalar root. Gradients accumulate into leaf
// buffers; running it twice on a live graph doubles them. Non-leaf gradient
// buffers are released as the sweep retires them.
template <class T>
void backward(const Tensor<T>& loss) {
    check(loss.numel() == 1, "backward() requires a scalar loss, got " + loss.shape().str());
    if (!loss.node()) return;

    // Iterative post-order DFS for the topological order.
    std::vector<Node<T>*> order;
    std::vector<std::pair<Node<T>*, size_t>> stack;
    std::vector<Node<T>*> seen;
    auto visited = [&](Node<T>* n) {
        for (auto* v : seen)
            if (v == n) return true;
        return false;
    };
    stack.push_back({loss.node().get(), 0});
    seen.push_back(loss.node().get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Node<T>* p = n->parents[idx++].get();
            if (!visited(p)) {
                seen.push_back(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad[0] += T(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->grad.empty()) continue; // not actually on a path to the root
        if (n->backward_fn) n->backward_fn(n->grad);
        if (!n->leaf) {
            n->grad.clear();
            n->grad.shrink_to_fit();
        }
    }
}

} // namespace dal::ad
