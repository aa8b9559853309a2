#include "gan_cases.hpp"

#include <random>

#include "oracles.hpp"

namespace trialsent::testing {

GanCase random_gan_case(std::uint64_t seed, bool all_kinds) {
    Rng rng(seed);
    auto pick = [&](std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    };
    const std::size_t vocab = 12, length = 5;
    const auto d = pick(2, 8);

    ssgan::GanConfig config;
    config.noise_dim = pick(2, 6);
    config.generator_hidden = {pick(2, 8)};
    config.discriminator_hidden = {pick(2, 8)};
    config.seed = seed;

    GanCase c;
    c.net = std::make_unique<ssgan::GanNetwork>(
        std::make_unique<encoder::TinyEncoder>(vocab, d, seed ^ 0x5eed), config);

    const auto n_labeled = pick(all_kinds ? 1 : 0, 4);
    const auto n_unlabeled = pick(all_kinds ? 1 : 0, 3);
    const auto n_fake = pick(1, 4);
    std::uniform_int_distribution<std::int32_t> token(4, static_cast<std::int32_t>(vocab) - 1);
    for (std::size_t i = 0; i < n_labeled + n_unlabeled; ++i) {
        TokenSequence seq;
        const auto content = pick(1, length - 2);
        seq.ids.push_back(2);
        for (std::size_t t = 0; t < content; ++t) seq.ids.push_back(token(rng));
        seq.ids.push_back(3);
        seq.mask.assign(seq.ids.size(), 1);
        seq.ids.resize(length, 0);
        seq.mask.resize(length, 0);
        c.batch.real.push_back(seq);
        if (i < n_labeled) {
            c.batch.provenance.push_back(ssgan::Provenance::Labeled);
            c.batch.labels.push_back(kRealClasses[pick(0, 2)]);
        } else {
            c.batch.provenance.push_back(ssgan::Provenance::Unlabeled);
            c.batch.labels.push_back(SentimentLabel::Unlabeled);
        }
    }
    std::normal_distribution<double> noise(0.0, 1.0);
    c.batch.noise = nn::Matrix(static_cast<Eigen::Index>(n_fake), static_cast<Eigen::Index>(config.noise_dim));
    for (Eigen::Index i = 0; i < c.batch.noise.size(); ++i) c.batch.noise.data()[i] = noise(rng);
    return c;
}

double loss_term(const ssgan::LossBreakdown& l, std::size_t term) {
    switch (term) {
        case 0: return l.d_sup;
        case 1: return l.d_unsup;
        case 2: return l.g_fm;
        default: return l.g_unsup;
    }
}

ssgan::LossWeights term_weights(std::size_t term) {
    ssgan::LossWeights w;
    (term == 0 ? w.d_sup : term == 1 ? w.d_unsup : term == 2 ? w.g_fm : w.g_unsup) = 1.0;
    return w;
}

std::array<double, 4> gradient_errors(GanCase& c, double step) {
    auto params = c.net->all_parameters();
    std::array<double, 4> out{};
    for (std::size_t term = 0; term < 4; ++term) {
        nn::zero_grads(params);
        ssgan::GanNetwork::Tape tape;
        c.net->forward(c.batch, &tape, nullptr);
        c.net->backward(tape, term_weights(term), {});
        out[term] = gradient_relative_error(
            params, [&] { return loss_term(c.net->forward(c.batch, nullptr, nullptr), term); }, step);
    }
    return out;
}

Eigen::VectorXd flat_gradients(GanCase& c, const ssgan::LossWeights& weights) {
    auto params = c.net->all_parameters();
    nn::zero_grads(params);
    ssgan::GanNetwork::Tape tape;
    c.net->forward(c.batch, &tape, nullptr);
    c.net->backward(tape, weights, {});
    Eigen::Index n = 0;
    for (auto* p : params) n += p->size();
    Eigen::VectorXd flat(n);
    Eigen::Index at = 0;
    for (auto* p : params) {
        flat.segment(at, p->size()) = Eigen::Map<const Eigen::VectorXd>(p->grad.data(), p->size());
        at += p->size();
    }
    return flat;
}

}  // namespace trialsent::testing
