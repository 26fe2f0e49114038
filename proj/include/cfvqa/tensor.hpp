#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cfvqa::tensor {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape &shape);
std::size_t shape_numel(const Shape &shape);

// Lower bound applied before taking a logarithm.
inline constexpr float kLogFloor = 1e-12f;
// exp() inputs are clamped to this range so float32 never overflows.
inline constexpr float kExpMax = 88.0f;
inline constexpr float kExpMin = -103.0f;

struct Node {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until first accumulation
    bool requires_grad = false;
    const char *op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node &)> backward;

    bool is_leaf() const { return parents.empty(); }
    std::vector<float> &ensure_grad();
};

// Dense row-major float32 tensor. Copies share the underlying node, so a
// Tensor behaves like a handle; shape never changes after creation.
class Tensor {
  public:
    Tensor() = default;

    static Tensor from(Shape shape, std::vector<float> data, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);
    static Tensor vector(std::vector<float> values, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape &shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }

    std::span<const float> data() const { return node_->data; }
    // In-place parameter updates only; never used on graph interior nodes.
    std::span<float> mutable_data() { return node_->data; }
    float operator[](std::size_t i) const { return node_->data[i]; }
    float item() const;
    std::vector<float> to_vector() const { return node_->data; }

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    // Zero-filled view if no gradient was accumulated yet.
    std::span<const float> grad() const;
    std::span<float> mutable_grad() { return node_->ensure_grad(); }
    void zero_grad();

    const Node *id() const { return node_.get(); }
    const std::shared_ptr<Node> &node() const { return node_; }

  private:
    friend Tensor make_result(Shape, std::vector<float>, std::vector<Tensor>, const char *,
                              std::function<void(Node &)>);
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    std::shared_ptr<Node> node_;
};

// While alive, ops on this thread record no graph (inference).
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard &) = delete;
    NoGradGuard &operator=(const NoGradGuard &) = delete;
};
bool grad_enabled();

// Builds an op output. The parents and backward closure are kept only when
// some input requires a gradient, so inference never grows a graph.
Tensor make_result(Shape shape, std::vector<float> data, std::vector<Tensor> inputs, const char *op,
                   std::function<void(Node &)> backward);

// Ordered record of the operations reachable from a root, inputs before
// outputs. backward() walks it once in reverse.
class Tape {
  public:
    static Tape record(const Tensor &root);

    std::size_t size() const { return order_.size(); }
    std::vector<std::string> op_names() const;
    void backward();

  private:
    std::shared_ptr<Node> root_;
    std::vector<Node *> order_;
};

// Seeds d(loss)/d(loss) = 1 and accumulates into every reachable leaf that
// requires a gradient. Interior gradients are reset first, so repeated calls
// on overlapping graphs add up linearly.
void backward(const Tensor &loss);

Tensor matmul(const Tensor &a, const Tensor &b);
Tensor add(const Tensor &a, const Tensor &b);
Tensor sub(const Tensor &a, const Tensor &b);
Tensor mul(const Tensor &a, const Tensor &b);
Tensor scale(const Tensor &a, float factor);
Tensor relu(const Tensor &x);
Tensor sigmoid(const Tensor &x);
Tensor log(const Tensor &x);
Tensor exp(const Tensor &x);
Tensor softmax(const Tensor &z);
Tensor cross_entropy(const Tensor &logits, std::size_t target);
Tensor sum(const Tensor &x);
Tensor concat(const Tensor &a, const Tensor &b);
// Mean of the selected rows of a [V x d] table. Indices are summed in sorted
// order, which makes the result exactly invariant to their permutation.
Tensor embedding_bag_mean(const Tensor &table, std::vector<std::size_t> indices);
// Same values, cut from the graph.
Tensor detach(const Tensor &x);

inline Tensor operator+(const Tensor &a, const Tensor &b) { return add(a, b); }
inline Tensor operator-(const Tensor &a, const Tensor &b) { return sub(a, b); }
inline Tensor operator*(const Tensor &a, const Tensor &b) { return mul(a, b); }

}  // namespace cfvqa::tensor
