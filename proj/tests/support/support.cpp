#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"

namespace trialsent::testing {

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::path(TRIALSENT_SCRATCH_DIR) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

OracleMetrics oracle_metrics(const eval::ConfusionMatrix& m) {
    OracleMetrics out;
    double total = 0.0, correct = 0.0;
    for (std::size_t g = 0; g < kNumClasses; ++g)
        for (std::size_t p = 0; p < kNumClasses; ++p) {
            total += static_cast<double>(m.counts[g][p]);
            if (g == p) correct += static_cast<double>(m.counts[g][p]);
        }
    out.accuracy = correct / total;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        double fp = 0.0, fn = 0.0;
        const double tp = static_cast<double>(m.counts[c][c]);
        for (std::size_t o = 0; o < kNumClasses; ++o) {
            if (o == c) continue;
            fp += static_cast<double>(m.counts[o][c]);
            fn += static_cast<double>(m.counts[c][o]);
        }
        const double denom = 2.0 * tp + fp + fn;
        out.f1[c] = denom == 0.0 ? 0.0 : 2.0 * tp / denom;
    }
    out.macro_f1 = (out.f1[0] + out.f1[1] + out.f1[2]) / 3.0;
    return out;
}

double gradient_relative_error(const nn::ParameterRefs& params, const std::function<double()>& f, double step) {
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (auto* p : params) {
        for (Eigen::Index i = 0; i < p->value.size(); ++i) {
            double& x = p->value.data()[i];
            const double saved = x;
            x = saved + step;
            const double up = f();
            x = saved - step;
            const double down = f();
            x = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double analytic = p->grad.data()[i];
            diff2 += (analytic - numeric) * (analytic - numeric);
            a2 += analytic * analytic;
            n2 += numeric * numeric;
        }
    }
    const double denom = std::sqrt(a2) + std::sqrt(n2);
    return denom == 0.0 ? 0.0 : std::sqrt(diff2) / denom;
}

}  // namespace trialsent::testing
