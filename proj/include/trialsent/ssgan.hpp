#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "trialsent/corpus.hpp"
#include "trialsent/encoder.hpp"
#include "trialsent/eval.hpp"
#include "trialsent/nn.hpp"

namespace trialsent::ssgan {

using nn::Matrix;

/// Column of the FAKE class in the discriminator output.
inline constexpr std::size_t kFakeIndex = kNumClasses;

struct GanConfig {
    std::size_t noise_dim = 100;
    double noise_mean = 0.0;
    double noise_std = 1.0;
    std::size_t d = 0;  // representation dim; 0 takes the encoder's
    std::size_t k = kNumClasses;
    std::vector<std::size_t> generator_hidden;      // empty: one layer of width d
    std::vector<std::size_t> discriminator_hidden;  // empty: one layer of width d
    double dropout_rate = 0.1;
    double leaky_slope = 0.2;
    double learning_rate_g = 5e-5;
    double learning_rate_d = 5e-5;
    std::size_t epochs = 10;
    std::size_t batch_size = 8;          // labeled rows per batch
    long unlabeled_per_batch = -1;       // -1: spread the unlabeled pool evenly over an epoch
    double fake_per_real = 1.0;          // generated rows per real row in a batch
    bool gan_enabled = true;             // false: supervised-only baseline
    bool track_train_accuracy = true;
    std::uint64_t seed = 42;
    double log_epsilon = 1e-8;

    void validate() const;
    /// Copy with d and the default hidden sizes filled in.
    GanConfig resolved(std::size_t encoder_dim) const;
    Json to_json() const;
    static GanConfig from_json(const Json& doc);
};

enum class Provenance { Labeled, Unlabeled, Fake };

struct DiscriminatorOutput {
    Matrix logits;         // rows x (k+1)
    Matrix probabilities;  // softmax of logits
    Matrix features;       // last hidden activation f(x)
};

struct LossBreakdown {
    double d_sup = 0.0;
    double d_unsup = 0.0;
    double d_total = 0.0;
    double g_fm = 0.0;
    double g_unsup = 0.0;
    double g_total = 0.0;

    bool finite() const;
    Json to_json() const;
    bool operator==(const LossBreakdown&) const = default;
};

/// Coefficients of the four loss terms when back-propagating.
struct LossWeights {
    double d_sup = 0.0;
    double d_unsup = 0.0;
    double g_fm = 0.0;
    double g_unsup = 0.0;

    static LossWeights discriminator() { return {1.0, 1.0, 0.0, 0.0}; }
    static LossWeights generator() { return {0.0, 0.0, 1.0, 1.0}; }
};

/// All four terms over one discriminator pass whose rows are tagged by
/// `provenance`. Labels are read only for LABELED rows. When the gradient
/// outputs are non-null they receive d(sum of weighted terms)/d(logits) and
/// /d(features).
///
///   d_sup   = mean_LABELED  -log p(gold)
///   d_unsup = mean_REAL     -log(1 - p_fake) + mean_FAKE -log p_fake
///   g_fm    = || mean_REAL f(x) - mean_FAKE f(x) ||^2
///   g_unsup = mean_FAKE     -log(1 - p_fake)
///
/// Probabilities are clamped to [eps, 1 - eps] before every log.
LossBreakdown compute_losses(const DiscriminatorOutput& output, std::span<const Provenance> provenance,
                             std::span<const SentimentLabel> labels, double eps,
                             const LossWeights* weights = nullptr, Matrix* grad_logits = nullptr,
                             Matrix* grad_features = nullptr);

/// Discriminator-side terms only (g_* left at zero).
LossBreakdown loss_discriminator(const DiscriminatorOutput& output, std::span<const Provenance> provenance,
                                 std::span<const SentimentLabel> labels, double eps = 1e-8);

/// Generator-side terms from separate real/fake passes (d_* left at zero).
LossBreakdown loss_generator(const Matrix& real_features, const Matrix& fake_features,
                             const DiscriminatorOutput& fake_outputs, double eps = 1e-8);

/// Noise -> fake representation MLP.
class Generator {
public:
    Generator(const GanConfig& config, Rng& init_rng);

    Matrix generate(const Matrix& noise, nn::Mlp::Tape* tape = nullptr, Rng* dropout_rng = nullptr) const;
    Matrix backward(const nn::Mlp::Tape& tape, const Matrix& grad, bool accumulate);
    nn::ParameterRefs parameters() { return mlp_.parameters(); }
    std::size_t noise_dim() const { return static_cast<std::size_t>(mlp_.options().input_dim); }

private:
    nn::Mlp mlp_;
};

/// Representation -> (k+1)-way logits MLP; its last hidden activation is f(x).
class Discriminator {
public:
    Discriminator(const GanConfig& config, Rng& init_rng);

    DiscriminatorOutput discriminate(const Matrix& h, nn::Mlp::Tape* tape = nullptr,
                                     Rng* dropout_rng = nullptr) const;
    Matrix backward(const nn::Mlp::Tape& tape, const Matrix& grad_logits, const Matrix& grad_features,
                    bool accumulate);
    nn::ParameterRefs parameters() { return mlp_.parameters(); }

    std::map<std::string, nn::Tensor> state_dict() const;
    void load_state_dict(const std::map<std::string, nn::Tensor>& tensors);

private:
    nn::Mlp mlp_;
};

/// One training batch: real rows (labeled or unlabeled) plus noise rows
/// for the generator.
struct GanBatch {
    std::vector<TokenSequence> real;
    std::vector<Provenance> provenance;  // per real row
    std::vector<SentimentLabel> labels;  // per real row
    Matrix noise;                        // fake rows x noise_dim
};

/// Encoder + generator + discriminator wired for joint forward/backward.
class GanNetwork {
public:
    GanNetwork(std::unique_ptr<encoder::Encoder> enc, const GanConfig& config);

    struct Tape {
        std::unique_ptr<encoder::EncoderTape> encoder;
        nn::Mlp::Tape generator;
        nn::Mlp::Tape discriminator;
        DiscriminatorOutput output;
        std::vector<Provenance> provenance;
        std::vector<SentimentLabel> labels;
        std::size_t n_real = 0;
        std::size_t n_fake = 0;
    };

    struct Targets {
        bool encoder = true;
        bool discriminator = true;
        bool generator = true;
    };

    LossBreakdown forward(const GanBatch& batch, Tape* tape, Rng* dropout_rng) const;
    /// Accumulates gradients of the weighted loss into the selected modules.
    void backward(const Tape& tape, const LossWeights& weights, Targets targets);

    nn::ParameterRefs encoder_parameters() { return encoder_->parameters(); }
    nn::ParameterRefs generator_parameters() { return generator_.parameters(); }
    nn::ParameterRefs discriminator_parameters() { return discriminator_.parameters(); }
    nn::ParameterRefs all_parameters();

    const GanConfig& config() const { return config_; }
    encoder::Encoder& encoder() { return *encoder_; }
    Discriminator& discriminator() { return discriminator_; }
    Generator& generator() { return generator_; }

    std::unique_ptr<encoder::Encoder> release_encoder() { return std::move(encoder_); }

private:
    GanConfig config_;
    Rng init_rng_;
    std::unique_ptr<encoder::Encoder> encoder_;
    Generator generator_;
    Discriminator discriminator_;
};

struct Prediction {
    SentimentLabel label = SentimentLabel::Positive;
    std::array<double, kNumClasses> probs{};
};

/// Drops the FAKE column, renormalises, argmax with ties resolved in class
/// order (POSITIVE, NEGATIVE, NEUTRAL).
Prediction predict_from_probabilities(std::span<const double> probabilities_with_fake);

struct EpochRecord {
    std::size_t epoch = 0;
    LossBreakdown losses;  // mean over the epoch's batches
    std::optional<double> train_accuracy;
    std::optional<eval::EvalReport> validation;

    Json to_json() const;
};

/// Encoder + discriminator after training; the generator is not kept.
class TrainedModel {
public:
    TrainedModel(std::unique_ptr<encoder::Encoder> enc, Discriminator disc, GanConfig config,
                 std::vector<EpochRecord> history);

    Prediction predict(const TokenSequence& tokens) const;
    std::vector<Prediction> predict(std::span<const TokenSequence> batch) const;

    /// Writes encoder/, discriminator.safetensors, config.json, labels.json
    /// and run.json into `dir`.
    void save(const std::filesystem::path& dir, const Json& run_metadata = Json::object()) const;
    static TrainedModel load(const std::filesystem::path& dir);

    const GanConfig& config() const { return config_; }
    const std::vector<EpochRecord>& history() const { return history_; }
    const encoder::Encoder& encoder() const { return *encoder_; }

private:
    std::unique_ptr<encoder::Encoder> encoder_;
    Discriminator discriminator_;
    GanConfig config_;
    std::vector<EpochRecord> history_;
};

struct TrainHooks {
    std::function<void(std::size_t epoch, std::size_t step, const LossBreakdown&)> on_step;
    std::function<void(const EpochRecord&)> on_epoch;
};

/// Adversarial fine-tuning. Per batch: encode real rows, generate as many
/// fake rows as configured, run the discriminator over both, step
/// discriminator (+ encoder when trainable) on d_sup + d_unsup and the
/// generator on g_fm + g_unsup. Deterministic for a fixed seed.
TrainedModel train(const corpus::TrainingCorpus& corpus, std::unique_ptr<encoder::Encoder> enc,
                   const GanConfig& config, const std::vector<Example>* validation = nullptr,
                   const TrainHooks& hooks = {});

/// Accuracy of `model` on labeled examples.
eval::EvalReport evaluate(const TrainedModel& model, const std::vector<Example>& examples);

}  // namespace trialsent::ssgan
