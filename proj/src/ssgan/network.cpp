#include "trialsent/error.hpp"
#include "trialsent/ssgan.hpp"

namespace trialsent::ssgan {

namespace {

std::vector<Eigen::Index> widths(const std::vector<std::size_t>& sizes) {
    return {sizes.begin(), sizes.end()};
}

}  // namespace

Generator::Generator(const GanConfig& config, Rng& init_rng)
    : mlp_("generator",
           nn::Mlp::Options{static_cast<Eigen::Index>(config.noise_dim), widths(config.generator_hidden),
                            static_cast<Eigen::Index>(config.d), config.dropout_rate, config.leaky_slope,
                            false},
           init_rng) {}

Matrix Generator::generate(const Matrix& noise, nn::Mlp::Tape* tape, Rng* dropout_rng) const {
    if (noise.cols() != mlp_.options().input_dim)
        throw ShapeError("generator expects noise of dimension " + std::to_string(mlp_.options().input_dim) +
                         ", got " + std::to_string(noise.cols()));
    return mlp_.forward(noise, tape, dropout_rng).out;
}

Matrix Generator::backward(const nn::Mlp::Tape& tape, const Matrix& grad, bool accumulate) {
    return mlp_.backward(tape, grad, Matrix(), accumulate);
}

Discriminator::Discriminator(const GanConfig& config, Rng& init_rng)
    : mlp_("discriminator",
           nn::Mlp::Options{static_cast<Eigen::Index>(config.d), widths(config.discriminator_hidden),
                            static_cast<Eigen::Index>(config.k + 1), config.dropout_rate, config.leaky_slope,
                            true},
           init_rng) {}

DiscriminatorOutput Discriminator::discriminate(const Matrix& h, nn::Mlp::Tape* tape, Rng* dropout_rng) const {
    auto out = mlp_.forward(h, tape, dropout_rng);
    DiscriminatorOutput result;
    result.probabilities = nn::softmax_rows(out.out);
    result.logits = std::move(out.out);
    result.features = std::move(out.features);
    return result;
}

Matrix Discriminator::backward(const nn::Mlp::Tape& tape, const Matrix& grad_logits, const Matrix& grad_features,
                               bool accumulate) {
    return mlp_.backward(tape, grad_logits, grad_features, accumulate);
}

std::map<std::string, nn::Tensor> Discriminator::state_dict() const {
    std::map<std::string, nn::Tensor> out;
    for (auto* p : const_cast<nn::Mlp&>(mlp_).parameters()) out[p->name] = nn::to_tensor(p->value);
    return out;
}

void Discriminator::load_state_dict(const std::map<std::string, nn::Tensor>& tensors) {
    for (auto* p : mlp_.parameters()) {
        const auto it = tensors.find(p->name);
        if (it == tensors.end()) throw LoadError("saved discriminator lacks tensor " + p->name);
        auto m = nn::to_matrix(it->second);
        if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
            throw LoadError("saved discriminator tensor " + p->name + " has the wrong shape");
        p->value = std::move(m);
    }
}

GanNetwork::GanNetwork(std::unique_ptr<encoder::Encoder> enc, const GanConfig& config)
    : config_(config.resolved(enc->dim())),
      init_rng_(derive_seed(config_.seed, 1)),
      encoder_(std::move(enc)),
      generator_(config_, init_rng_),
      discriminator_(config_, init_rng_) {}

nn::ParameterRefs GanNetwork::all_parameters() {
    auto refs = encoder_parameters();
    for (auto* p : discriminator_parameters()) refs.push_back(p);
    for (auto* p : generator_parameters()) refs.push_back(p);
    return refs;
}

LossBreakdown GanNetwork::forward(const GanBatch& batch, Tape* tape, Rng* dropout_rng) const {
    const auto n_real = batch.real.size();
    const auto n_fake = static_cast<std::size_t>(batch.noise.rows());
    if (batch.provenance.size() != n_real || batch.labels.size() != n_real)
        throw ShapeError("batch: provenance and labels must match the real rows");
    if (n_real + n_fake == 0) throw InputError("empty batch");

    const auto d = static_cast<Eigen::Index>(config_.d);
    Matrix h(static_cast<Eigen::Index>(n_real + n_fake), d);
    if (n_real)
        h.topRows(static_cast<Eigen::Index>(n_real)) =
            encoder_->forward(batch.real, tape ? &tape->encoder : nullptr, dropout_rng);
    if (n_fake)
        h.bottomRows(static_cast<Eigen::Index>(n_fake)) =
            generator_.generate(batch.noise, tape ? &tape->generator : nullptr, dropout_rng);

    auto output = discriminator_.discriminate(h, tape ? &tape->discriminator : nullptr, dropout_rng);
    std::vector<Provenance> provenance = batch.provenance;
    std::vector<SentimentLabel> labels = batch.labels;
    provenance.resize(n_real + n_fake, Provenance::Fake);
    labels.resize(n_real + n_fake, SentimentLabel::Unlabeled);
    const auto losses = compute_losses(output, provenance, labels, config_.log_epsilon);
    if (tape) {
        tape->output = std::move(output);
        tape->provenance = std::move(provenance);
        tape->labels = std::move(labels);
        tape->n_real = n_real;
        tape->n_fake = n_fake;
    }
    return losses;
}

void GanNetwork::backward(const Tape& tape, const LossWeights& weights, Targets targets) {
    Matrix grad_logits, grad_features;
    compute_losses(tape.output, tape.provenance, tape.labels, config_.log_epsilon, &weights, &grad_logits,
                   &grad_features);
    const Matrix grad_h =
        discriminator_.backward(tape.discriminator, grad_logits, grad_features, targets.discriminator);
    const auto n_real = static_cast<Eigen::Index>(tape.n_real);
    const auto n_fake = static_cast<Eigen::Index>(tape.n_fake);
    if (targets.encoder && n_real > 0 && tape.encoder) encoder_->backward(*tape.encoder, grad_h.topRows(n_real));
    if (targets.generator && n_fake > 0) generator_.backward(tape.generator, grad_h.bottomRows(n_fake), true);
}

}  // namespace trialsent::ssgan
