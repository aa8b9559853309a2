#pragma once

// Small random GAN configurations shared by the unit and acceptance suites.

#include <array>
#include <cstdint>
#include <memory>

#include "trialsent/ssgan.hpp"

namespace trialsent::testing {

struct GanCase {
    std::unique_ptr<ssgan::GanNetwork> net;
    ssgan::GanBatch batch;
};

/// Tiny encoder with d <= 8, hidden <= 8 and a batch mixing labeled,
/// unlabeled and generated rows (at least one of each when `all_kinds`).
GanCase random_gan_case(std::uint64_t seed, bool all_kinds = true);

/// Loss value of one term by name index: 0 d_sup, 1 d_unsup, 2 g_fm, 3 g_unsup.
double loss_term(const ssgan::LossBreakdown& l, std::size_t term);
ssgan::LossWeights term_weights(std::size_t term);

/// Relative error between analytic and central-difference gradients of
/// each term with respect to every encoder, generator and discriminator
/// parameter (evaluation mode, no dropout).
std::array<double, 4> gradient_errors(GanCase& c, double step = 1e-5);

/// Flattened gradients of `weights` after one forward/backward.
Eigen::VectorXd flat_gradients(GanCase& c, const ssgan::LossWeights& weights);

}  // namespace trialsent::testing
