#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trialsent/jsonl.hpp"
#include "trialsent/nn.hpp"
#include "trialsent/tokens.hpp"

namespace trialsent::encoder {

using nn::Matrix;

enum class EncoderKind { PretrainedCheckpoint, TinyTest };

std::string_view to_string(EncoderKind kind);
EncoderKind parse_encoder_kind(std::string_view text);

struct EncoderConfig {
    EncoderKind kind = EncoderKind::TinyTest;
    std::optional<std::filesystem::path> checkpoint_path;
    /// Output dimension d. For checkpoints, 0 accepts the checkpoint's own
    /// hidden size; any other value must match it.
    std::size_t output_dim = 16;
    bool trainable = true;
    // TINY_TEST only
    std::size_t vocab_size = 64;
    std::uint64_t seed = 7;
    // Checkpoint only: dropout used in training mode (eval is always off).
    std::optional<double> dropout;

    Json to_json() const;
    static EncoderConfig from_json(const Json& doc);
};

/// Opaque per-batch forward state consumed by backward().
struct EncoderTape {
    virtual ~EncoderTape() = default;
};

/// Maps token sequences to d-dimensional representations. forward() with a
/// null dropout RNG runs in evaluation mode and is safe to call
/// concurrently; backward() mutates parameter gradients and belongs to the
/// single training loop.
class Encoder {
public:
    virtual ~Encoder() = default;

    virtual EncoderKind kind() const = 0;
    virtual std::size_t dim() const = 0;

    /// One row per sequence. Throws ShapeError on ragged batches.
    virtual Matrix forward(std::span<const TokenSequence> batch, std::unique_ptr<EncoderTape>* tape,
                           Rng* dropout_rng) const = 0;
    virtual void backward(const EncoderTape& tape, const Matrix& grad_output) = 0;
    virtual nn::ParameterRefs parameters() = 0;

    /// Writes weights plus an `encoder.json` descriptor into `dir`.
    virtual void save(const std::filesystem::path& dir) const = 0;

    Matrix encode(std::span<const TokenSequence> batch) const { return forward(batch, nullptr, nullptr); }

    bool trainable() const { return trainable_; }
    void set_trainable(bool on) { trainable_ = on; }

protected:
    bool trainable_ = true;
};

std::unique_ptr<Encoder> load(const EncoderConfig& config);

/// Reloads an encoder written by Encoder::save.
std::unique_ptr<Encoder> load_saved(const std::filesystem::path& dir);

/// Embedding table + mask-aware mean pooling + one tanh layer. Small
/// enough for exhaustive finite-difference checks.
class TinyEncoder final : public Encoder {
public:
    TinyEncoder(std::size_t vocab_size, std::size_t dim, std::uint64_t seed);

    EncoderKind kind() const override { return EncoderKind::TinyTest; }
    std::size_t dim() const override { return static_cast<std::size_t>(projection_.out()); }
    Matrix forward(std::span<const TokenSequence> batch, std::unique_ptr<EncoderTape>* tape,
                   Rng* dropout_rng) const override;
    void backward(const EncoderTape& tape, const Matrix& grad_output) override;
    nn::ParameterRefs parameters() override;
    void save(const std::filesystem::path& dir) const override;

    static std::unique_ptr<TinyEncoder> load_saved(const std::filesystem::path& dir);

private:
    nn::Parameter embedding_;  // [vocab, dim]
    nn::Linear projection_;
};

/// Architecture descriptor of a bidirectional transformer checkpoint.
struct TransformerConfig {
    std::size_t vocab_size = 0;
    std::size_t hidden_size = 768;
    std::size_t num_layers = 12;
    std::size_t num_heads = 12;
    std::size_t intermediate_size = 3072;
    std::size_t max_position = 512;
    std::size_t type_vocab_size = 2;
    double layer_norm_eps = 1e-12;
    double hidden_dropout = 0.1;
    double attention_dropout = 0.1;
    std::string hidden_act = "gelu";
    double initializer_range = 0.02;

    static TransformerConfig from_json(const Json& doc);
    Json to_json() const;
};

/// Post-LayerNorm transformer encoder with learned absolute positions,
/// loaded from the usual checkpoint directory (config.json +
/// model.safetensors). The representation is the start-token hidden state,
/// passed through the checkpoint's tanh pooler when one is present.
class TransformerEncoder final : public Encoder {
public:
    /// Random initialisation (tests and from-scratch runs).
    TransformerEncoder(TransformerConfig config, bool with_pooler, std::uint64_t seed);

    static std::unique_ptr<TransformerEncoder> from_checkpoint(const std::filesystem::path& dir);

    EncoderKind kind() const override { return EncoderKind::PretrainedCheckpoint; }
    std::size_t dim() const override { return config_.hidden_size; }
    const TransformerConfig& config() const { return config_; }
    bool has_pooler() const { return with_pooler_; }
    void set_dropout(double rate);

    Matrix forward(std::span<const TokenSequence> batch, std::unique_ptr<EncoderTape>* tape,
                   Rng* dropout_rng) const override;
    void backward(const EncoderTape& tape, const Matrix& grad_output) override;
    nn::ParameterRefs parameters() override;
    void save(const std::filesystem::path& dir) const override;

    /// Checkpoint-style tensor names ("embeddings.word_embeddings.weight", ...).
    std::map<std::string, nn::Tensor> state_dict() const;
    void load_state_dict(const std::map<std::string, nn::Tensor>& tensors, const std::string& prefix);

    struct Layer {
        nn::Linear query, key, value, attn_out;
        nn::Parameter ln1_gamma, ln1_beta;
        nn::Linear intermediate, output;
        nn::Parameter ln2_gamma, ln2_beta;
    };

private:
    struct SequenceTape;
    struct BatchTape;

    Matrix forward_sequence(const TokenSequence& seq, SequenceTape* tape, Rng* rng) const;
    void backward_sequence(const SequenceTape& tape, const Eigen::RowVectorXd& grad);

    TransformerConfig config_;
    bool with_pooler_;
    nn::Parameter word_embeddings_, position_embeddings_, token_type_embeddings_;
    nn::Parameter emb_ln_gamma_, emb_ln_beta_;
    std::vector<Layer> layers_;
    nn::Linear pooler_;
};

}  // namespace trialsent::encoder
