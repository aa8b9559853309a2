#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "trialsent/random.hpp"

namespace trialsent::nn {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

/// A trainable tensor and its accumulated gradient, same shape.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;

    Parameter() = default;
    Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
        : name(std::move(n)), value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

    void zero_grad() { grad.setZero(); }
    Eigen::Index size() const { return value.size(); }
};

using ParameterRefs = std::vector<Parameter*>;

void zero_grads(const ParameterRefs& params);

struct AdamOptions {
    double learning_rate = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adaptive-moment gradient descent with bias correction.
class Adam {
public:
    Adam(ParameterRefs params, AdamOptions options);
    void step();
    std::size_t steps() const { return t_; }

private:
    ParameterRefs params_;
    AdamOptions options_;
    std::vector<Matrix> m_, v_;
    std::size_t t_ = 0;
};

/// y = x W^T + b with W stored as [out, in] (the usual checkpoint layout).
class Linear {
public:
    Linear() = default;
    Linear(const std::string& name, Eigen::Index in, Eigen::Index out);

    /// Uniform(-1/sqrt(in), 1/sqrt(in)) for weight and bias.
    void init(Rng& rng);

    Matrix forward(const Matrix& x) const;
    /// Returns dL/dx; adds dL/dW, dL/db into the gradients when `accumulate`.
    Matrix backward(const Matrix& x, const Matrix& grad_y, bool accumulate);

    Eigen::Index in() const { return weight.value.cols(); }
    Eigen::Index out() const { return weight.value.rows(); }
    ParameterRefs parameters() { return {&weight, &bias}; }

    Parameter weight;
    Parameter bias;  // [1, out]
};

Matrix leaky_relu(const Matrix& x, double slope);
Matrix leaky_relu_backward(const Matrix& pre, const Matrix& grad, double slope);

/// Inverted dropout. With `rng == nullptr` (evaluation) the mask is all ones.
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng* rng);

Matrix softmax_rows(const Matrix& logits);

Matrix gelu(const Matrix& x);
Matrix gelu_backward(const Matrix& x, const Matrix& grad);

struct LayerNormCache {
    Matrix normalized;       // x_hat
    Eigen::VectorXd inv_std;  // per row
};

Matrix layer_norm(const Matrix& x, const Parameter& gamma, const Parameter& beta, double eps,
                  LayerNormCache* cache);
Matrix layer_norm_backward(const LayerNormCache& cache, Parameter& gamma, Parameter& beta,
                           const Matrix& grad, bool accumulate);

/// Multi-layer perceptron: [input dropout] -> (Linear, LeakyReLU, Dropout)*
/// -> Linear. The last hidden activation is exposed as the feature vector.
class Mlp {
public:
    struct Options {
        Eigen::Index input_dim = 0;
        std::vector<Eigen::Index> hidden;
        Eigen::Index output_dim = 0;
        double dropout = 0.1;
        double leaky_slope = 0.2;
        bool input_dropout = false;
    };

    struct Tape {
        Matrix input_mask;
        std::vector<Matrix> inputs;  // input to each Linear, in order
        std::vector<Matrix> pre;     // pre-activation of each hidden layer
        std::vector<Matrix> masks;   // dropout mask of each hidden layer
    };

    struct Output {
        Matrix out;
        Matrix features;  // last hidden activation (the input itself with no hidden layers)
    };

    Mlp() = default;
    Mlp(const std::string& name, Options options, Rng& init_rng);

    Output forward(const Matrix& x, Tape* tape, Rng* dropout_rng) const;
    /// grad_features may be empty (0x0). Returns dL/dx.
    Matrix backward(const Tape& tape, const Matrix& grad_out, const Matrix& grad_features,
                    bool accumulate);

    ParameterRefs parameters();
    const Options& options() const { return options_; }
    std::vector<Linear>& layers() { return layers_; }

private:
    Options options_;
    std::vector<Linear> layers_;  // hidden layers then the output layer
};

// ---------------------------------------------------------------------------
// safetensors

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;  // row-major
};

enum class StorageType { F32, F64 };

/// Reads F16/BF16/F32/F64 tensors, converting to double. Throws LoadError
/// naming the path on any structural problem.
std::map<std::string, Tensor> load_safetensors(const std::filesystem::path& path);

/// Writes tensors in name order; output is byte-stable for equal inputs.
void save_safetensors(const std::filesystem::path& path, const std::map<std::string, Tensor>& tensors,
                      StorageType storage);

Tensor to_tensor(const Matrix& m);
/// Interprets a 1-D tensor as a row vector and a 2-D tensor as a matrix.
Matrix to_matrix(const Tensor& t);

}  // namespace trialsent::nn
