#include <cmath>

#include "trialsent/error.hpp"
#include "trialsent/nn.hpp"

namespace trialsent::nn {

void zero_grads(const ParameterRefs& params) {
    for (auto* p : params) p->zero_grad();
}

Adam::Adam(ParameterRefs params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
    for (auto* p : params_) {
        m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
}

void Adam::step() {
    ++t_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const double lr = options_.learning_rate;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = *params_[i];
        m_[i] = b1 * m_[i] + (1.0 - b1) * p.grad;
        v_[i] = b2 * v_[i] + (1.0 - b2) * p.grad.cwiseProduct(p.grad);
        p.value.array() -= lr * (m_[i].array() / correction1) /
                           ((v_[i].array() / correction2).sqrt() + options_.epsilon);
    }
}

Linear::Linear(const std::string& name, Eigen::Index in, Eigen::Index out)
    : weight(name + ".weight", out, in), bias(name + ".bias", 1, out) {}

void Linear::init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < weight.value.size(); ++i) weight.value.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < bias.value.size(); ++i) bias.value.data()[i] = u(rng);
}

Matrix Linear::forward(const Matrix& x) const {
    if (x.cols() != in())
        throw ShapeError(weight.name + ": expected input width " + std::to_string(in()) + ", got " +
                         std::to_string(x.cols()));
    Matrix y = x * weight.value.transpose();
    y.rowwise() += bias.value.row(0);
    return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& grad_y, bool accumulate) {
    if (accumulate) {
        weight.grad.noalias() += grad_y.transpose() * x;
        bias.grad += grad_y.colwise().sum();
    }
    return grad_y * weight.value;
}

Matrix leaky_relu(const Matrix& x, double slope) {
    return x.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
}

Matrix leaky_relu_backward(const Matrix& pre, const Matrix& grad, double slope) {
    return grad.binaryExpr(pre, [slope](double g, double v) { return v > 0.0 ? g : slope * g; });
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng* rng) {
    Matrix mask = Matrix::Ones(rows, cols);
    if (!rng || rate <= 0.0) return mask;
    std::bernoulli_distribution keep(1.0 - rate);
    const double scale = 1.0 / (1.0 - rate);
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng) ? scale : 0.0;
    return mask;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double mx = logits.row(r).maxCoeff();
        p.row(r) = (logits.row(r).array() - mx).exp().matrix();
        p.row(r) /= p.row(r).sum();
    }
    return p;
}

Matrix gelu(const Matrix& x) {
    return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); });
}

Matrix gelu_backward(const Matrix& x, const Matrix& grad) {
    static const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * M_PI);
    return grad.binaryExpr(x, [](double g, double v) {
        const double cdf = 0.5 * (1.0 + std::erf(v / std::sqrt(2.0)));
        return g * (cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v));
    });
}

Matrix layer_norm(const Matrix& x, const Parameter& gamma, const Parameter& beta, double eps,
                  LayerNormCache* cache) {
    const auto n = static_cast<double>(x.cols());
    Matrix xhat(x.rows(), x.cols());
    Eigen::VectorXd inv_std(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).mean();
        const double var = (x.row(r).array() - mean).square().sum() / n;
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (x.row(r).array() - mean) * inv_std(r);
    }
    Matrix y = xhat.array().rowwise() * gamma.value.row(0).array();
    y.rowwise() += beta.value.row(0);
    if (cache) {
        cache->normalized = std::move(xhat);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

Matrix layer_norm_backward(const LayerNormCache& cache, Parameter& gamma, Parameter& beta,
                           const Matrix& grad, bool accumulate) {
    const auto& xhat = cache.normalized;
    if (accumulate) {
        gamma.grad += grad.cwiseProduct(xhat).colwise().sum();
        beta.grad += grad.colwise().sum();
    }
    const Matrix dxhat = grad.array().rowwise() * gamma.value.row(0).array();
    const auto n = static_cast<double>(grad.cols());
    Matrix dx(grad.rows(), grad.cols());
    for (Eigen::Index r = 0; r < grad.rows(); ++r) {
        const double sum = dxhat.row(r).sum();
        const double dot = dxhat.row(r).dot(xhat.row(r));
        dx.row(r) = (cache.inv_std(r) / n) *
                    (n * dxhat.row(r).array() - sum - xhat.row(r).array() * dot).matrix();
    }
    return dx;
}

Mlp::Mlp(const std::string& name, Options options, Rng& init_rng) : options_(std::move(options)) {
    if (options_.input_dim <= 0 || options_.output_dim <= 0)
        throw ConfigError(name + ": input and output dimensions must be positive");
    if (options_.dropout < 0.0 || options_.dropout >= 1.0)
        throw ConfigError(name + ": dropout must lie in [0, 1)");
    Eigen::Index width = options_.input_dim;
    for (std::size_t i = 0; i < options_.hidden.size(); ++i) {
        if (options_.hidden[i] <= 0) throw ConfigError(name + ": hidden sizes must be positive");
        layers_.emplace_back(name + ".hidden." + std::to_string(i), width, options_.hidden[i]);
        width = options_.hidden[i];
    }
    layers_.emplace_back(name + ".output", width, options_.output_dim);
    for (auto& layer : layers_) layer.init(init_rng);
}

Mlp::Output Mlp::forward(const Matrix& x, Tape* tape, Rng* dropout_rng) const {
    if (x.cols() != options_.input_dim)
        throw ShapeError("mlp: expected input width " + std::to_string(options_.input_dim) +
                         ", got " + std::to_string(x.cols()));
    Matrix h = x;
    if (options_.input_dropout) {
        Matrix mask = dropout_mask(x.rows(), x.cols(), options_.dropout, dropout_rng);
        h = h.cwiseProduct(mask);
        if (tape) tape->input_mask = std::move(mask);
    }
    if (tape) {
        tape->inputs.clear();
        tape->pre.clear();
        tape->masks.clear();
    }
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
        if (tape) tape->inputs.push_back(h);
        Matrix pre = layers_[i].forward(h);
        Matrix mask = dropout_mask(pre.rows(), pre.cols(), options_.dropout, dropout_rng);
        h = leaky_relu(pre, options_.leaky_slope).cwiseProduct(mask);
        if (tape) {
            tape->pre.push_back(std::move(pre));
            tape->masks.push_back(std::move(mask));
        }
    }
    if (tape) tape->inputs.push_back(h);
    Output out;
    out.out = layers_.back().forward(h);
    out.features = std::move(h);
    return out;
}

Matrix Mlp::backward(const Tape& tape, const Matrix& grad_out, const Matrix& grad_features,
                     bool accumulate) {
    Matrix g = layers_.back().backward(tape.inputs.back(), grad_out, accumulate);
    if (grad_features.size() > 0) g += grad_features;
    for (std::size_t i = layers_.size() - 1; i-- > 0;) {
        g = g.cwiseProduct(tape.masks[i]);
        g = leaky_relu_backward(tape.pre[i], g, options_.leaky_slope);
        g = layers_[i].backward(tape.inputs[i], g, accumulate);
    }
    if (options_.input_dropout && tape.input_mask.size() > 0) g = g.cwiseProduct(tape.input_mask);
    return g;
}

ParameterRefs Mlp::parameters() {
    ParameterRefs refs;
    for (auto& layer : layers_)
        for (auto* p : layer.parameters()) refs.push_back(p);
    return refs;
}

}  // namespace trialsent::nn
