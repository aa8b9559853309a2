#include "trialsent/encoder.hpp"

#include <cmath>

#include "trialsent/error.hpp"

namespace trialsent::encoder {

std::string_view to_string(EncoderKind kind) {
    return kind == EncoderKind::TinyTest ? "TINY_TEST" : "PRETRAINED_CHECKPOINT";
}

EncoderKind parse_encoder_kind(std::string_view text) {
    if (text == "TINY_TEST") return EncoderKind::TinyTest;
    if (text == "PRETRAINED_CHECKPOINT") return EncoderKind::PretrainedCheckpoint;
    throw ConfigError("unknown encoder kind '" + std::string(text) + "'");
}

Json EncoderConfig::to_json() const {
    Json doc{{"kind", to_string(kind)},
             {"output_dim", output_dim},
             {"trainable", trainable},
             {"vocab_size", vocab_size},
             {"seed", seed}};
    doc["checkpoint_path"] = checkpoint_path ? Json(checkpoint_path->string()) : Json(nullptr);
    doc["dropout"] = dropout ? Json(*dropout) : Json(nullptr);
    return doc;
}

EncoderConfig EncoderConfig::from_json(const Json& doc) {
    EncoderConfig c;
    try {
        c.kind = parse_encoder_kind(doc.value("kind", "TINY_TEST"));
        if (doc.contains("checkpoint_path") && !doc["checkpoint_path"].is_null())
            c.checkpoint_path = doc["checkpoint_path"].get<std::string>();
        c.output_dim = doc.value("output_dim", c.output_dim);
        c.trainable = doc.value("trainable", c.trainable);
        c.vocab_size = doc.value("vocab_size", c.vocab_size);
        c.seed = doc.value("seed", c.seed);
        if (doc.contains("dropout") && !doc["dropout"].is_null()) c.dropout = doc["dropout"].get<double>();
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("encoder config: ") + e.what());
    }
    return c;
}

std::unique_ptr<Encoder> load(const EncoderConfig& config) {
    std::unique_ptr<Encoder> enc;
    if (config.kind == EncoderKind::TinyTest) {
        if (config.output_dim == 0 || config.vocab_size == 0)
            throw ConfigError("TINY_TEST encoder needs positive output_dim and vocab_size");
        enc = std::make_unique<TinyEncoder>(config.vocab_size, config.output_dim, config.seed);
    } else {
        if (!config.checkpoint_path)
            throw ConfigError("PRETRAINED_CHECKPOINT encoder requires checkpoint_path");
        auto t = TransformerEncoder::from_checkpoint(*config.checkpoint_path);
        if (config.output_dim != 0 && config.output_dim != t->dim())
            throw ConfigError("encoder output_dim " + std::to_string(config.output_dim) +
                              " does not match checkpoint hidden size " + std::to_string(t->dim()) +
                              " (" + config.checkpoint_path->string() + ")");
        if (config.dropout) t->set_dropout(*config.dropout);
        enc = std::move(t);
    }
    enc->set_trainable(config.trainable);
    return enc;
}

std::unique_ptr<Encoder> load_saved(const std::filesystem::path& dir) {
    const auto desc_path = dir / "encoder.json";
    if (!std::filesystem::exists(desc_path)) throw LoadError("missing encoder descriptor " + desc_path.string());
    const auto desc = read_json(desc_path);
    const auto kind = parse_encoder_kind(desc.value("kind", ""));
    if (kind == EncoderKind::TinyTest) return TinyEncoder::load_saved(dir);
    return TransformerEncoder::from_checkpoint(dir);
}

// ---------------------------------------------------------------------------

namespace {

struct TinyTape final : EncoderTape {
    std::vector<TokenSequence> batch;
    Matrix pooled;
    Matrix output;
};

void check_uniform(std::span<const TokenSequence> batch) {
    for (const auto& s : batch) {
        if (s.ids.size() != batch.front().ids.size() || s.mask.size() != s.ids.size())
            throw ShapeError("ragged batch: all sequences must share one length");
    }
}

}  // namespace

TinyEncoder::TinyEncoder(std::size_t vocab_size, std::size_t dim, std::uint64_t seed)
    : embedding_("embedding", static_cast<Eigen::Index>(vocab_size), static_cast<Eigen::Index>(dim)),
      projection_("projection", static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < embedding_.value.size(); ++i) embedding_.value.data()[i] = normal(rng);
    projection_.init(rng);
}

Matrix TinyEncoder::forward(std::span<const TokenSequence> batch, std::unique_ptr<EncoderTape>* tape,
                            Rng*) const {
    check_uniform(batch);
    const auto d = embedding_.value.cols();
    Matrix pooled = Matrix::Zero(static_cast<Eigen::Index>(batch.size()), d);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& seq = batch[i];
        std::size_t count = 0;
        for (std::size_t t = 0; t < seq.ids.size(); ++t) {
            if (!seq.mask[t]) continue;
            const auto id = seq.ids[t];
            if (id < 0 || id >= embedding_.value.rows())
                throw ShapeError("token id " + std::to_string(id) + " outside encoder vocabulary of " +
                                 std::to_string(embedding_.value.rows()));
            pooled.row(static_cast<Eigen::Index>(i)) += embedding_.value.row(id);
            ++count;
        }
        if (count > 0) pooled.row(static_cast<Eigen::Index>(i)) /= static_cast<double>(count);
    }
    Matrix out = projection_.forward(pooled).array().tanh().matrix();
    if (tape) {
        auto t = std::make_unique<TinyTape>();
        t->batch.assign(batch.begin(), batch.end());
        t->pooled = pooled;
        t->output = out;
        *tape = std::move(t);
    }
    return out;
}

void TinyEncoder::backward(const EncoderTape& base, const Matrix& grad_output) {
    const auto& tape = dynamic_cast<const TinyTape&>(base);
    const Matrix g_pre = grad_output.cwiseProduct((1.0 - tape.output.array().square()).matrix());
    const Matrix g_pooled = projection_.backward(tape.pooled, g_pre, true);
    for (std::size_t i = 0; i < tape.batch.size(); ++i) {
        const auto& seq = tape.batch[i];
        const auto count = seq.content_length();
        if (count == 0) continue;
        const double scale = 1.0 / static_cast<double>(count);
        for (std::size_t t = 0; t < seq.ids.size(); ++t)
            if (seq.mask[t]) embedding_.grad.row(seq.ids[t]) += scale * g_pooled.row(static_cast<Eigen::Index>(i));
    }
}

nn::ParameterRefs TinyEncoder::parameters() {
    return {&embedding_, &projection_.weight, &projection_.bias};
}

void TinyEncoder::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    write_json(dir / "encoder.json", Json{{"kind", "TINY_TEST"},
                                          {"vocab_size", embedding_.value.rows()},
                                          {"dim", embedding_.value.cols()}});
    nn::save_safetensors(dir / "encoder.safetensors",
                         {{"embedding", nn::to_tensor(embedding_.value)},
                          {"projection.weight", nn::to_tensor(projection_.weight.value)},
                          {"projection.bias", nn::to_tensor(projection_.bias.value)}},
                         nn::StorageType::F64);
}

std::unique_ptr<TinyEncoder> TinyEncoder::load_saved(const std::filesystem::path& dir) {
    const auto desc = read_json(dir / "encoder.json");
    auto enc = std::make_unique<TinyEncoder>(desc.at("vocab_size").get<std::size_t>(),
                                             desc.at("dim").get<std::size_t>(), 0);
    const auto tensors = nn::load_safetensors(dir / "encoder.safetensors");
    auto assign = [&](const char* name, nn::Parameter& p) {
        const auto it = tensors.find(name);
        if (it == tensors.end()) throw LoadError(std::string("saved encoder lacks tensor ") + name);
        auto m = nn::to_matrix(it->second);
        if (m.rows() != p.value.rows() || m.cols() != p.value.cols())
            throw LoadError(std::string("saved encoder tensor ") + name + " has the wrong shape");
        p.value = std::move(m);
    };
    assign("embedding", enc->embedding_);
    assign("projection.weight", enc->projection_.weight);
    assign("projection.bias", enc->projection_.bias);
    return enc;
}

}  // namespace trialsent::encoder
