#pragma once

#include "cfvqa/tensor.hpp"

#include <string>
#include <vector>

namespace cfvqa::tensor {

struct NamedParameter {
    std::string name;
    Tensor value;
};

// Ordered parameter registry; order fixes checkpoint layout and update order.
class ParameterList {
  public:
    void add(std::string name, Tensor value);
    void zero_grad();

    const Tensor &at(const std::string &name) const;
    bool contains(const std::string &name) const;

    std::vector<NamedParameter> &items() { return items_; }
    const std::vector<NamedParameter> &items() const { return items_; }
    std::size_t size() const { return items_.size(); }
    std::size_t scalar_count() const;

  private:
    std::vector<NamedParameter> items_;
};

// Throws TrainingError naming the first parameter with a NaN/inf gradient.
void check_finite_gradients(const ParameterList &params);

void step_sgd(ParameterList &params, float lr);

class Adam {
  public:
    Adam(float lr = 1e-3f, float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f);

    void step(ParameterList &params);
    long steps_taken() const { return t_; }

  private:
    float lr_;
    float beta1_;
    float beta2_;
    float eps_;
    long t_ = 0;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
};

}  // namespace cfvqa::tensor
