#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "conseg/errors.hpp"
#include "conseg/rng.hpp"

namespace conseg::ad {

using Shape = std::vector<int>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// A trainable value that persists across tapes. Gradients accumulate here
// after Tape::backward; m/v are the optimizer's moment accumulators.
struct Parameter {
    std::string name;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<double> m;
    std::vector<double> v;

    Parameter(std::string n, Shape s);
    int64_t size() const { return static_cast<int64_t>(value.size()); }
};

class Tape;

// Lightweight handle to a tape node. Values are immutable once created.
class Tensor {
  public:
    Tensor() = default;

    const Shape& shape() const;
    const std::vector<double>& value() const;
    double scalar() const;
    int64_t size() const;
    bool valid() const { return tape_ != nullptr; }

  private:
    friend class Tape;
    Tensor(Tape* tape, int node) : tape_(tape), node_(node) {}
    Tape* tape_ = nullptr;
    int node_ = -1;
};

// Define-by-run tape. Nodes are appended in creation order, which is a
// topological order; backward replays them in reverse. A tape is built per
// forward pass and discarded afterwards.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // --- leaves ---
    Tensor constant(Shape shape, std::vector<double> data);
    Tensor zeros(Shape shape);
    Tensor scalar_const(double v);
    Tensor param(Parameter& p);  // same Parameter maps to one node per tape

    // --- linear algebra ---
    Tensor matmul(const Tensor& a, const Tensor& b);
    Tensor transpose(const Tensor& a);

    // --- elementwise / broadcasting (trailing-shape broadcast only) ---
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor scale(const Tensor& a, double c);
    Tensor add_scalar(const Tensor& a, double c);
    Tensor tanh(const Tensor& a);
    Tensor exp(const Tensor& a);
    Tensor log(const Tensor& a);  // domain error on non-positive entries
    Tensor sigmoid(const Tensor& a);
    Tensor softplus(const Tensor& a);
    Tensor gelu(const Tensor& a);
    Tensor relu(const Tensor& a);

    // --- shape ops ---
    Tensor concat_last_dim(const std::vector<Tensor>& parts);
    Tensor slice_rows(const Tensor& a, int row0, int row1);  // [row0, row1)
    Tensor reshape(const Tensor& a, Shape shape);

    // --- reductions / normalizations ---
    Tensor mean_all(const Tensor& a);
    Tensor softmax_rows(const Tensor& a);  // over the last dimension
    Tensor scale_rows(const Tensor& a, const Tensor& s);  // a[m,n] * s[m] per row

    // Row-stochastic Gaussian neighbor weights from per-position scales:
    // G[i,j] proportional to exp(-(j-i)^2 / (2 sigma_i^2)) / (sqrt(2 pi) sigma_i),
    // rows normalized to sum 1. sigma must be strictly positive.
    Tensor gaussian_rows(const Tensor& sigma, int len);

    // --- nn blocks ---
    Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride);
    Tensor mean_axis1(const Tensor& x);  // [B,T,C] -> [B,C]
    Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      double eps = 1e-5);
    Tensor pairwise_concat(const Tensor& c);  // [L,d] -> [L*L, 2d]
    Tensor dropout(const Tensor& x, double rate, Rng& rng);

    // --- losses ---
    // Mean over rows of -sum_c target * log(pred + eps); pred rows are
    // probability vectors. eps guards one-hot outputs against log(0).
    Tensor cross_entropy(const Tensor& pred, const std::vector<double>& targets,
                         double eps = 1e-12);
    Tensor mse(const Tensor& a, const Tensor& b);

    // Reverse pass from a scalar loss; parameter gradients accumulate into
    // their Parameter::grad.
    void backward(const Tensor& loss);

    const std::vector<double>& value_of(const Tensor& t) const;
    const std::vector<double>& grad_of(const Tensor& t) const;
    const Shape& shape_of(const Tensor& t) const;
    size_t node_count() const { return nodes_.size(); }

  private:
    struct Node {
        Shape shape;
        std::vector<double> val;
        std::vector<double> grad;
        std::function<void()> backprop;  // may be empty (leaves)
        Parameter* param = nullptr;
    };

    Tensor make_node(Shape shape, std::vector<double> val);
    Node& node(const Tensor& t);
    const Node& node(const Tensor& t) const;
    void check_owned(const Tensor& t) const;

    std::vector<Node> nodes_;
    std::unordered_map<Parameter*, int> param_nodes_;
};

// Finiteness probe used at module boundaries; throws NumericError naming
// the offending context.
void check_finite(const std::vector<double>& v, const std::string& context);

}  // namespace conseg::ad
