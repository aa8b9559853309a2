#include "trialsent/error.hpp"
#include "trialsent/ssgan.hpp"

namespace trialsent::ssgan {

void GanConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError("gan config: " + field + " " + why);
    };
    if (noise_dim == 0) fail("noise_dim", "must be positive");
    if (!(noise_std > 0.0)) fail("noise_std", "must be positive");
    if (k != kNumClasses) fail("k", "must be 3");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) fail("dropout_rate", "must lie in [0, 1)");
    if (!(learning_rate_g > 0.0)) fail("learning_rate_g", "must be positive");
    if (!(learning_rate_d > 0.0)) fail("learning_rate_d", "must be positive");
    if (epochs == 0) fail("epochs", "must be positive");
    if (batch_size == 0) fail("batch_size", "must be positive");
    if (unlabeled_per_batch < -1) fail("unlabeled_per_batch", "must be -1 (auto) or >= 0");
    if (fake_per_real < 0.0) fail("fake_per_real", "must be non-negative");
    if (!(log_epsilon > 0.0 && log_epsilon < 0.5)) fail("log_epsilon", "must lie in (0, 0.5)");
    for (auto h : generator_hidden)
        if (h == 0) fail("generator_hidden", "sizes must be positive");
    for (auto h : discriminator_hidden)
        if (h == 0) fail("discriminator_hidden", "sizes must be positive");
}

GanConfig GanConfig::resolved(std::size_t encoder_dim) const {
    validate();
    GanConfig c = *this;
    if (c.d == 0) c.d = encoder_dim;
    if (c.d != encoder_dim)
        throw ConfigError("gan config: d = " + std::to_string(c.d) + " but the encoder emits " +
                          std::to_string(encoder_dim));
    if (c.generator_hidden.empty()) c.generator_hidden = {c.d};
    if (c.discriminator_hidden.empty()) c.discriminator_hidden = {c.d};
    return c;
}

Json GanConfig::to_json() const {
    return Json{{"noise_dim", noise_dim},
                {"noise_mean", noise_mean},
                {"noise_std", noise_std},
                {"d", d},
                {"k", k},
                {"generator_hidden", generator_hidden},
                {"discriminator_hidden", discriminator_hidden},
                {"dropout_rate", dropout_rate},
                {"leaky_slope", leaky_slope},
                {"learning_rate_g", learning_rate_g},
                {"learning_rate_d", learning_rate_d},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"unlabeled_per_batch", unlabeled_per_batch},
                {"fake_per_real", fake_per_real},
                {"gan_enabled", gan_enabled},
                {"track_train_accuracy", track_train_accuracy},
                {"seed", seed},
                {"log_epsilon", log_epsilon}};
}

GanConfig GanConfig::from_json(const Json& doc) {
    GanConfig c;
    static const std::set<std::string> known{
        "noise_dim",     "noise_mean",      "noise_std",       "d",          "k",
        "generator_hidden", "discriminator_hidden", "dropout_rate", "leaky_slope", "learning_rate_g",
        "learning_rate_d", "epochs",        "batch_size",      "unlabeled_per_batch", "fake_per_real",
        "gan_enabled",   "track_train_accuracy", "seed",      "log_epsilon"};
    for (const auto& [key, value] : doc.items())
        if (!known.count(key)) throw ConfigError("gan config: unknown field '" + key + "'");
    try {
        c.noise_dim = doc.value("noise_dim", c.noise_dim);
        c.noise_mean = doc.value("noise_mean", c.noise_mean);
        c.noise_std = doc.value("noise_std", c.noise_std);
        c.d = doc.value("d", c.d);
        c.k = doc.value("k", c.k);
        c.generator_hidden = doc.value("generator_hidden", c.generator_hidden);
        c.discriminator_hidden = doc.value("discriminator_hidden", c.discriminator_hidden);
        c.dropout_rate = doc.value("dropout_rate", c.dropout_rate);
        c.leaky_slope = doc.value("leaky_slope", c.leaky_slope);
        c.learning_rate_g = doc.value("learning_rate_g", c.learning_rate_g);
        c.learning_rate_d = doc.value("learning_rate_d", c.learning_rate_d);
        c.epochs = doc.value("epochs", c.epochs);
        c.batch_size = doc.value("batch_size", c.batch_size);
        c.unlabeled_per_batch = doc.value("unlabeled_per_batch", c.unlabeled_per_batch);
        c.fake_per_real = doc.value("fake_per_real", c.fake_per_real);
        c.gan_enabled = doc.value("gan_enabled", c.gan_enabled);
        c.track_train_accuracy = doc.value("track_train_accuracy", c.track_train_accuracy);
        c.seed = doc.value("seed", c.seed);
        c.log_epsilon = doc.value("log_epsilon", c.log_epsilon);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("gan config: ") + e.what());
    }
    c.validate();
    return c;
}

}  // namespace trialsent::ssgan
