#include "cfvqa/tensor.hpp"

#include "cfvqa/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace cfvqa::tensor {

std::string shape_to_string(const Shape &shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i != 0) {
            out << 'x';
        }
        out << shape[i];
    }
    out << ']';
    return out.str();
}

std::size_t shape_numel(const Shape &shape) {
    std::size_t n = 1;
    for (const std::size_t d : shape) {
        n *= d;
    }
    return n;
}

std::vector<float> &Node::ensure_grad() {
    if (grad.empty()) {
        grad.assign(data.size(), 0.0f);
    }
    return grad;
}

Tensor Tensor::from(Shape shape, std::vector<float> data, bool requires_grad) {
    for (const std::size_t d : shape) {
        if (d == 0) {
            throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape));
        }
    }
    if (data.size() != shape_numel(shape)) {
        throw ShapeError("shape " + shape_to_string(shape) + " needs " + std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(data.size()));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<float>(n, 0.0f), requires_grad);
}

Tensor Tensor::scalar(float value, bool requires_grad) { return from({}, {value}, requires_grad); }

Tensor Tensor::vector(std::vector<float> values, bool requires_grad) {
    const std::size_t n = values.size();
    return from({n}, std::move(values), requires_grad);
}

float Tensor::item() const {
    if (numel() != 1) {
        throw ShapeError("item() needs a single-element tensor, got " + shape_to_string(shape()));
    }
    return node_->data[0];
}

std::span<const float> Tensor::grad() const {
    return node_->ensure_grad();
}

void Tensor::zero_grad() {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

namespace {
thread_local int no_grad_depth = 0;
}  // namespace

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }
bool grad_enabled() { return no_grad_depth == 0; }

Tensor make_result(Shape shape, std::vector<float> data, std::vector<Tensor> inputs, const char *op,
                   std::function<void(Node &)> backward) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = op;
    const bool needs_grad = no_grad_depth == 0 &&
        std::any_of(inputs.begin(), inputs.end(), [](const Tensor &t) { return t.requires_grad(); });
    if (needs_grad) {
        node->requires_grad = true;
        node->parents.reserve(inputs.size());
        for (const Tensor &t : inputs) {
            node->parents.push_back(t.node());
        }
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

Tape Tape::record(const Tensor &root) {
    Tape tape;
    tape.root_ = root.node();
    // Iterative post-order DFS; post-order of a DAG is a topological order.
    std::unordered_set<const Node *> visited;
    std::vector<std::pair<Node *, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto &[node, next_parent] = stack.back();
        if (next_parent < node->parents.size()) {
            Node *parent = node->parents[next_parent++].get();
            if (parent->requires_grad && visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
            continue;
        }
        tape.order_.push_back(node);
        stack.pop_back();
    }
    return tape;
}

std::vector<std::string> Tape::op_names() const {
    std::vector<std::string> names;
    names.reserve(order_.size());
    for (const Node *n : order_) {
        names.emplace_back(n->op);
    }
    return names;
}

void Tape::backward() {
    if (root_->data.size() != 1) {
        throw ShapeError("backward() needs a scalar loss, got " + shape_to_string(root_->shape));
    }
    if (!root_->requires_grad) {
        return;
    }
    for (Node *n : order_) {
        if (!n->is_leaf()) {
            n->grad.assign(n->data.size(), 0.0f);
        }
    }
    root_->ensure_grad()[0] += 1.0f;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        Node *n = *it;
        if (!n->is_leaf() && n->backward) {
            n->backward(*n);
        }
    }
}

void backward(const Tensor &loss) { Tape::record(loss).backward(); }

namespace {

enum class Broadcast { same, lhs_scalar, rhs_scalar };

Broadcast broadcast_kind(const Tensor &a, const Tensor &b, const char *op) {
    if (a.shape() == b.shape()) {
        return Broadcast::same;
    }
    if (a.numel() == 1 && a.rank() <= 1) {
        return Broadcast::lhs_scalar;
    }
    if (b.numel() == 1 && b.rank() <= 1) {
        return Broadcast::rhs_scalar;
    }
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()));
}

Shape broadcast_shape(const Tensor &a, const Tensor &b, Broadcast kind) {
    return kind == Broadcast::lhs_scalar ? b.shape() : a.shape();
}

// Applies f elementwise; the scalar side is read at index 0.
template <typename F>
std::vector<float> binary_map(const Tensor &a, const Tensor &b, Broadcast kind, F f) {
    const std::size_t n = std::max(a.numel(), b.numel());
    std::vector<float> out(n);
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        const float x = kind == Broadcast::lhs_scalar ? ad[0] : ad[i];
        const float y = kind == Broadcast::rhs_scalar ? bd[0] : bd[i];
        out[i] = f(x, y);
    }
    return out;
}

// Accumulates upstream*local into a parent, reducing when that parent was
// broadcast from a scalar.
void accumulate(Node &parent, bool parent_is_scalar, const std::vector<float> &contrib) {
    if (!parent.requires_grad) {
        return;
    }
    auto &g = parent.ensure_grad();
    if (parent_is_scalar && contrib.size() != g.size()) {
        float total = 0.0f;
        for (const float c : contrib) {
            total += c;
        }
        g[0] += total;
        return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += contrib[i];
    }
}

template <typename F, typename DF>
Tensor unary(const Tensor &x, const char *op, F f, DF local_grad) {
    std::vector<float> out(x.numel());
    const auto xd = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = f(xd[i]);
    }
    return make_result(x.shape(), std::move(out), {x}, op, [local_grad](Node &self) {
        Node &in = *self.parents[0];
        if (!in.requires_grad) {
            return;
        }
        auto &g = in.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i] * local_grad(in.data[i], self.data[i]);
        }
    });
}

}  // namespace

Tensor add(const Tensor &a, const Tensor &b) {
    const Broadcast kind = broadcast_kind(a, b, "add");
    auto out = binary_map(a, b, kind, [](float x, float y) { return x + y; });
    return make_result(broadcast_shape(a, b, kind), std::move(out), {a, b}, "add", [kind](Node &self) {
        accumulate(*self.parents[0], kind == Broadcast::lhs_scalar, self.grad);
        accumulate(*self.parents[1], kind == Broadcast::rhs_scalar, self.grad);
    });
}

Tensor sub(const Tensor &a, const Tensor &b) {
    const Broadcast kind = broadcast_kind(a, b, "sub");
    auto out = binary_map(a, b, kind, [](float x, float y) { return x - y; });
    return make_result(broadcast_shape(a, b, kind), std::move(out), {a, b}, "sub", [kind](Node &self) {
        accumulate(*self.parents[0], kind == Broadcast::lhs_scalar, self.grad);
        std::vector<float> neg(self.grad.size());
        for (std::size_t i = 0; i < neg.size(); ++i) {
            neg[i] = -self.grad[i];
        }
        accumulate(*self.parents[1], kind == Broadcast::rhs_scalar, neg);
    });
}

Tensor mul(const Tensor &a, const Tensor &b) {
    const Broadcast kind = broadcast_kind(a, b, "mul");
    auto out = binary_map(a, b, kind, [](float x, float y) { return x * y; });
    return make_result(broadcast_shape(a, b, kind), std::move(out), {a, b}, "mul", [kind](Node &self) {
        const Node &lhs = *self.parents[0];
        const Node &rhs = *self.parents[1];
        const std::size_t n = self.grad.size();
        std::vector<float> da(n);
        std::vector<float> db(n);
        for (std::size_t i = 0; i < n; ++i) {
            const float x = kind == Broadcast::lhs_scalar ? lhs.data[0] : lhs.data[i];
            const float y = kind == Broadcast::rhs_scalar ? rhs.data[0] : rhs.data[i];
            da[i] = self.grad[i] * y;
            db[i] = self.grad[i] * x;
        }
        accumulate(*self.parents[0], kind == Broadcast::lhs_scalar, da);
        accumulate(*self.parents[1], kind == Broadcast::rhs_scalar, db);
    });
}

Tensor scale(const Tensor &a, float factor) {
    return unary(
        a, "scale", [factor](float x) { return x * factor; }, [factor](float, float) { return factor; });
}

Tensor relu(const Tensor &x) {
    return unary(
        x, "relu", [](float v) { return v > 0.0f ? v : 0.0f; },
        [](float in, float) { return in > 0.0f ? 1.0f : 0.0f; });
}

Tensor sigmoid(const Tensor &x) {
    return unary(
        x, "sigmoid",
        [](float v) {
            if (v >= 0.0f) {
                return 1.0f / (1.0f + std::exp(-v));
            }
            const float e = std::exp(v);
            return e / (1.0f + e);
        },
        [](float, float out) { return out * (1.0f - out); });
}

Tensor log(const Tensor &x) {
    return unary(
        x, "log", [](float v) { return std::log(std::max(v, kLogFloor)); },
        [](float in, float) { return in > kLogFloor ? 1.0f / in : 0.0f; });
}

Tensor exp(const Tensor &x) {
    return unary(
        x, "exp", [](float v) { return std::exp(std::clamp(v, kExpMin, kExpMax)); },
        [](float in, float out) { return (in > kExpMax || in < kExpMin) ? 0.0f : out; });
}

Tensor softmax(const Tensor &z) {
    if (z.rank() != 1) {
        throw ShapeError("softmax expects a vector, got " + shape_to_string(z.shape()));
    }
    const auto zd = z.data();
    const float peak = *std::max_element(zd.begin(), zd.end());
    std::vector<float> out(zd.size());
    double total = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::exp(zd[i] - peak);
        total += out[i];
    }
    for (float &o : out) {
        o = static_cast<float>(o / total);
    }
    return make_result(z.shape(), std::move(out), {z}, "softmax", [](Node &self) {
        Node &in = *self.parents[0];
        if (!in.requires_grad) {
            return;
        }
        // dz_i = y_i * (g_i - sum_j g_j y_j)
        double dot = 0.0;
        for (std::size_t j = 0; j < self.data.size(); ++j) {
            dot += static_cast<double>(self.grad[j]) * self.data[j];
        }
        auto &g = in.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.data[i] * (self.grad[i] - static_cast<float>(dot));
        }
    });
}

Tensor cross_entropy(const Tensor &logits, std::size_t target) {
    if (logits.rank() != 1) {
        throw ShapeError("cross_entropy expects a logit vector, got " + shape_to_string(logits.shape()));
    }
    if (target >= logits.numel()) {
        throw IndexError("cross_entropy target " + std::to_string(target) + " out of range for " +
                         std::to_string(logits.numel()) + " classes");
    }
    const auto zd = logits.data();
    const float peak = *std::max_element(zd.begin(), zd.end());
    double total = 0.0;
    for (const float z : zd) {
        total += std::exp(static_cast<double>(z - peak));
    }
    const double log_norm = static_cast<double>(peak) + std::log(total);
    const float loss = static_cast<float>(std::max(0.0, log_norm - zd[target]));
    return make_result({}, {loss}, {logits}, "cross_entropy", [target, log_norm](Node &self) {
        Node &in = *self.parents[0];
        if (!in.requires_grad) {
            return;
        }
        auto &g = in.ensure_grad();
        const float upstream = self.grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double p = std::exp(static_cast<double>(in.data[i]) - log_norm);
            g[i] += upstream * static_cast<float>(p - (i == target ? 1.0 : 0.0));
        }
    });
}

Tensor sum(const Tensor &x) {
    double total = 0.0;
    for (const float v : x.data()) {
        total += v;
    }
    return make_result({}, {static_cast<float>(total)}, {x}, "sum", [](Node &self) {
        Node &in = *self.parents[0];
        if (!in.requires_grad) {
            return;
        }
        for (float &g : in.ensure_grad()) {
            g += self.grad[0];
        }
    });
}

Tensor matmul(const Tensor &a, const Tensor &b) {
    // A vector on the left is treated as a single row and yields a vector.
    const bool vector_lhs = a.rank() == 1;
    if ((a.rank() != 2 && !vector_lhs) || b.rank() != 2) {
        throw ShapeError("matmul: unsupported shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
    }
    const std::size_t m = vector_lhs ? 1 : a.shape()[0];
    const std::size_t k = vector_lhs ? a.shape()[0] : a.shape()[1];
    const std::size_t n = b.shape()[1];
    if (b.shape()[0] != k) {
        throw ShapeError("matmul: inner dimensions differ for " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
    }
    const auto ad = a.data();
    const auto bd = b.data();
    // Double accumulators, rounded once to float32 per output element.
    std::vector<double> acc(n);
    std::vector<float> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ad[i * k + p];
            const float *brow = bd.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                acc[j] += av * brow[j];
            }
        }
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = static_cast<float>(acc[j]);
        }
    }
    Shape shape = vector_lhs ? Shape{n} : Shape{m, n};
    return make_result(std::move(shape), std::move(out), {a, b}, "matmul", [m, k, n](Node &self) {
        Node &lhs = *self.parents[0];
        Node &rhs = *self.parents[1];
        const float *dy = self.grad.data();
        if (lhs.requires_grad) {
            // dA = dY * B^T
            auto &ga = lhs.ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const float *brow = rhs.data.data() + p * n;
                    float acc = 0.0f;
                    for (std::size_t j = 0; j < n; ++j) {
                        acc += dy[i * n + j] * brow[j];
                    }
                    ga[i * k + p] += acc;
                }
            }
        }
        if (rhs.requires_grad) {
            // dB = A^T * dY
            auto &gb = rhs.ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const float av = lhs.data[i * k + p];
                    if (av == 0.0f) {
                        continue;
                    }
                    float *grow = gb.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) {
                        grow[j] += av * dy[i * n + j];
                    }
                }
            }
        }
    });
}

Tensor concat(const Tensor &a, const Tensor &b) {
    if (a.rank() != 1 || b.rank() != 1) {
        throw ShapeError("concat expects two vectors, got " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
    }
    std::vector<float> out(a.data().begin(), a.data().end());
    out.insert(out.end(), b.data().begin(), b.data().end());
    const std::size_t split = a.numel();
    Shape shape{out.size()};
    return make_result(std::move(shape), std::move(out), {a, b}, "concat", [split](Node &self) {
        Node &lhs = *self.parents[0];
        Node &rhs = *self.parents[1];
        if (lhs.requires_grad) {
            auto &g = lhs.ensure_grad();
            for (std::size_t i = 0; i < split; ++i) {
                g[i] += self.grad[i];
            }
        }
        if (rhs.requires_grad) {
            auto &g = rhs.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[split + i];
            }
        }
    });
}

Tensor embedding_bag_mean(const Tensor &table, std::vector<std::size_t> indices) {
    if (table.rank() != 2) {
        throw ShapeError("embedding table must be a matrix, got " + shape_to_string(table.shape()));
    }
    if (indices.empty()) {
        throw ShapeError("embedding_bag_mean needs at least one index");
    }
    const std::size_t rows = table.shape()[0];
    const std::size_t dim = table.shape()[1];
    for (const std::size_t idx : indices) {
        if (idx >= rows) {
            throw IndexError("embedding index " + std::to_string(idx) + " out of range for " +
                             std::to_string(rows) + " rows");
        }
    }
    std::sort(indices.begin(), indices.end());
    const auto td = table.data();
    std::vector<float> out(dim, 0.0f);
    for (const std::size_t idx : indices) {
        for (std::size_t j = 0; j < dim; ++j) {
            out[j] += td[idx * dim + j];
        }
    }
    const float inv = 1.0f / static_cast<float>(indices.size());
    for (float &v : out) {
        v *= inv;
    }
    return make_result({dim}, std::move(out), {table}, "embedding_bag_mean",
                       [indices = std::move(indices), dim, inv](Node &self) {
                           Node &in = *self.parents[0];
                           if (!in.requires_grad) {
                               return;
                           }
                           auto &g = in.ensure_grad();
                           for (const std::size_t idx : indices) {
                               for (std::size_t j = 0; j < dim; ++j) {
                                   g[idx * dim + j] += self.grad[j] * inv;
                               }
                           }
                       });
}

Tensor detach(const Tensor &x) {
    return Tensor::from(x.shape(), x.to_vector(), false);
}

}  // namespace cfvqa::tensor
