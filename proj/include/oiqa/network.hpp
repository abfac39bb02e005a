#pragma once

#include <map>
#include <string>
#include <vector>

#include "oiqa/cayley.hpp"
#include "oiqa/model.hpp"

namespace oiqa {

struct Gradients {
    std::map<std::string, Tensor> by_param;
    Tensor by_input;
};

/// A validated model prepared for repeated evaluation: the shape pass is done
/// once and each robust block's per-frequency Cayley operators are built up
/// front. Holds a reference to the model, which must outlive it and stay
/// unmodified. All evaluation methods are const and reentrant.
class Network {
public:
    explicit Network(const ModelGraph& model);

    const ModelGraph& model() const noexcept { return *model_; }
    const std::vector<Shape>& shapes() const noexcept { return shapes_; }
    const CayleyOperator& cayley(std::size_t layer) const;

    double forward(const Tensor& x) const;

    /// Score plus gradients w.r.t. the input and (optionally) every parameter.
    double backward(const Tensor& x, Gradients& grads, bool want_params = true) const;
    Gradients backward(const Tensor& x, bool want_params = true) const;

private:
    struct Trace;
    Tensor run(const Tensor& x, Trace* trace) const;

    const ModelGraph* model_;
    std::vector<Shape> shapes_;
    std::vector<CayleyOperator> cayley_;
};

double forward(const ModelGraph& model, const Tensor& x);
Gradients backward(const ModelGraph& model, const Tensor& x);

}  // namespace oiqa
