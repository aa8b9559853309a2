#include <algorithm>
#include <cmath>

#include "trialsent/error.hpp"
#include "trialsent/ssgan.hpp"

namespace trialsent::ssgan {

namespace {

struct Clamped {
    double value;
    bool active;  // derivative passes through
};

Clamped clamp(double p, double eps) {
    if (p < eps) return {eps, false};
    if (p > 1.0 - eps) return {1.0 - eps, false};
    return {p, true};
}

}  // namespace

bool LossBreakdown::finite() const {
    return std::isfinite(d_sup) && std::isfinite(d_unsup) && std::isfinite(d_total) && std::isfinite(g_fm) &&
           std::isfinite(g_unsup) && std::isfinite(g_total);
}

Json LossBreakdown::to_json() const {
    return Json{{"L_D_sup", d_sup}, {"L_D_unsup", d_unsup}, {"L_D", d_total},
                {"L_G_fm", g_fm},   {"L_G_unsup", g_unsup}, {"L_G", g_total}};
}

LossBreakdown compute_losses(const DiscriminatorOutput& output, std::span<const Provenance> provenance,
                             std::span<const SentimentLabel> labels, double eps, const LossWeights* weights,
                             Matrix* grad_logits, Matrix* grad_features) {
    const auto& p = output.probabilities;
    const auto rows = p.rows();
    if (rows == 0) throw InputError("loss over an empty batch");
    if (static_cast<std::size_t>(rows) != provenance.size() || provenance.size() != labels.size())
        throw ShapeError("losses: provenance/labels must have one entry per row");
    if (p.cols() != static_cast<Eigen::Index>(kFakeIndex + 1))
        throw ShapeError("losses: expected k+1 probability columns");
    const auto fake_col = static_cast<Eigen::Index>(kFakeIndex);

    std::size_t n_labeled = 0, n_real = 0, n_fake = 0;
    for (auto prov : provenance) {
        if (prov == Provenance::Labeled) ++n_labeled;
        if (prov == Provenance::Fake)
            ++n_fake;
        else
            ++n_real;
    }

    const bool want_grad = weights && (grad_logits || grad_features);
    if (grad_logits) *grad_logits = Matrix::Zero(rows, p.cols());
    if (grad_features) *grad_features = Matrix::Zero(output.features.rows(), output.features.cols());

    double sup = 0.0, unsup_real = 0.0, unsup_fake = 0.0, g_unsup = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto prov = provenance[static_cast<std::size_t>(i)];
        const Eigen::RowVectorXd pi = p.row(i);
        const double real_mass = pi.head(fake_col).sum();
        const auto q = clamp(real_mass, eps);
        // d(-log q)/dz_j = p_j - [j < k] p_j / q
        auto real_mass_grad = [&] {
            Eigen::RowVectorXd g = pi;
            g.head(fake_col) -= pi.head(fake_col) / q.value;
            return g;
        };

        if (prov == Provenance::Labeled) {
            const auto y = class_index(labels[static_cast<std::size_t>(i)]);
            if (y >= kNumClasses) throw InputError("labeled row carries UNK_UNK");
            const auto py = clamp(pi(static_cast<Eigen::Index>(y)), eps);
            sup -= std::log(py.value);
            if (want_grad && grad_logits && py.active && weights->d_sup != 0.0) {
                Eigen::RowVectorXd g = pi;
                g(static_cast<Eigen::Index>(y)) -= 1.0;
                grad_logits->row(i) += weights->d_sup / static_cast<double>(n_labeled) * g;
            }
        }
        if (prov != Provenance::Fake) {
            unsup_real -= std::log(q.value);
            if (want_grad && grad_logits && q.active && weights->d_unsup != 0.0)
                grad_logits->row(i) += weights->d_unsup / static_cast<double>(n_real) * real_mass_grad();
        } else {
            const auto pf = clamp(pi(fake_col), eps);
            unsup_fake -= std::log(pf.value);
            g_unsup -= std::log(q.value);
            if (want_grad && grad_logits) {
                if (pf.active && weights->d_unsup != 0.0) {
                    Eigen::RowVectorXd g = pi;
                    g(fake_col) -= 1.0;
                    grad_logits->row(i) += weights->d_unsup / static_cast<double>(n_fake) * g;
                }
                if (q.active && weights->g_unsup != 0.0)
                    grad_logits->row(i) += weights->g_unsup / static_cast<double>(n_fake) * real_mass_grad();
            }
        }
    }

    LossBreakdown out;
    out.d_sup = n_labeled ? sup / static_cast<double>(n_labeled) : 0.0;
    out.d_unsup = (n_real ? unsup_real / static_cast<double>(n_real) : 0.0) +
                  (n_fake ? unsup_fake / static_cast<double>(n_fake) : 0.0);
    out.g_unsup = n_fake ? g_unsup / static_cast<double>(n_fake) : 0.0;

    if (n_real && n_fake) {
        const auto& f = output.features;
        Eigen::RowVectorXd mean_real = Eigen::RowVectorXd::Zero(f.cols());
        Eigen::RowVectorXd mean_fake = Eigen::RowVectorXd::Zero(f.cols());
        for (Eigen::Index i = 0; i < rows; ++i)
            (provenance[static_cast<std::size_t>(i)] == Provenance::Fake ? mean_fake : mean_real) += f.row(i);
        mean_real /= static_cast<double>(n_real);
        mean_fake /= static_cast<double>(n_fake);
        const Eigen::RowVectorXd diff = mean_real - mean_fake;
        out.g_fm = diff.squaredNorm();
        if (want_grad && grad_features && weights->g_fm != 0.0) {
            for (Eigen::Index i = 0; i < rows; ++i) {
                const bool fake = provenance[static_cast<std::size_t>(i)] == Provenance::Fake;
                const double scale = fake ? -2.0 / static_cast<double>(n_fake) : 2.0 / static_cast<double>(n_real);
                grad_features->row(i) += weights->g_fm * scale * diff;
            }
        }
    }
    out.d_total = out.d_sup + out.d_unsup;
    out.g_total = out.g_fm + out.g_unsup;
    return out;
}

LossBreakdown loss_discriminator(const DiscriminatorOutput& output, std::span<const Provenance> provenance,
                                 std::span<const SentimentLabel> labels, double eps) {
    auto full = compute_losses(output, provenance, labels, eps);
    full.g_fm = full.g_unsup = full.g_total = 0.0;
    return full;
}

LossBreakdown loss_generator(const Matrix& real_features, const Matrix& fake_features,
                             const DiscriminatorOutput& fake_outputs, double eps) {
    if (real_features.rows() == 0 || fake_features.rows() == 0)
        throw InputError("generator loss needs non-empty real and fake feature batches");
    if (real_features.cols() != fake_features.cols())
        throw ShapeError("generator loss: real and fake features differ in dimension");
    if (fake_outputs.probabilities.rows() != fake_features.rows())
        throw ShapeError("generator loss: one discriminator output per fake row required");
    LossBreakdown out;
    const Eigen::RowVectorXd diff = real_features.colwise().mean() - fake_features.colwise().mean();
    out.g_fm = diff.squaredNorm();
    double sum = 0.0;
    const auto fake_col = static_cast<Eigen::Index>(kFakeIndex);
    for (Eigen::Index i = 0; i < fake_outputs.probabilities.rows(); ++i) {
        const double pf = std::clamp(fake_outputs.probabilities(i, fake_col), eps, 1.0 - eps);
        sum -= std::log(1.0 - pf);
    }
    out.g_unsup = sum / static_cast<double>(fake_outputs.probabilities.rows());
    out.g_total = out.g_fm + out.g_unsup;
    return out;
}

Prediction predict_from_probabilities(std::span<const double> p) {
    if (p.size() != kNumClasses + 1) throw ShapeError("expected k+1 probabilities");
    double real = 0.0;
    for (std::size_t c = 0; c < kNumClasses; ++c) real += p[c];
    Prediction out;
    std::size_t best = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        out.probs[c] = real > 0.0 ? p[c] / real : 1.0 / static_cast<double>(kNumClasses);
        if (out.probs[c] > out.probs[best]) best = c;
    }
    out.label = kRealClasses[best];
    return out;
}

}  // namespace trialsent::ssgan
