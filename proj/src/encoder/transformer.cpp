#include <cmath>

#include "trialsent/encoder.hpp"
#include "trialsent/error.hpp"

namespace trialsent::encoder {

using nn::LayerNormCache;
using nn::Parameter;

TransformerConfig TransformerConfig::from_json(const Json& doc) {
    TransformerConfig c;
    try {
        c.vocab_size = doc.at("vocab_size").get<std::size_t>();
        c.hidden_size = doc.at("hidden_size").get<std::size_t>();
        c.num_layers = doc.at("num_hidden_layers").get<std::size_t>();
        c.num_heads = doc.at("num_attention_heads").get<std::size_t>();
        c.intermediate_size = doc.at("intermediate_size").get<std::size_t>();
        c.max_position = doc.value("max_position_embeddings", c.max_position);
        c.type_vocab_size = doc.value("type_vocab_size", c.type_vocab_size);
        c.layer_norm_eps = doc.value("layer_norm_eps", c.layer_norm_eps);
        c.hidden_dropout = doc.value("hidden_dropout_prob", c.hidden_dropout);
        c.attention_dropout = doc.value("attention_probs_dropout_prob", c.attention_dropout);
        c.hidden_act = doc.value("hidden_act", c.hidden_act);
        c.initializer_range = doc.value("initializer_range", c.initializer_range);
    } catch (const Json::exception& e) {
        throw LoadError(std::string("checkpoint config: ") + e.what());
    }
    if (c.num_heads == 0 || c.hidden_size % c.num_heads != 0)
        throw LoadError("checkpoint config: hidden_size must be divisible by num_attention_heads");
    if (c.hidden_act != "gelu")
        throw LoadError("checkpoint config: unsupported hidden_act '" + c.hidden_act + "'");
    return c;
}

Json TransformerConfig::to_json() const {
    return Json{{"model_type", "bert"},
                {"vocab_size", vocab_size},
                {"hidden_size", hidden_size},
                {"num_hidden_layers", num_layers},
                {"num_attention_heads", num_heads},
                {"intermediate_size", intermediate_size},
                {"max_position_embeddings", max_position},
                {"type_vocab_size", type_vocab_size},
                {"layer_norm_eps", layer_norm_eps},
                {"hidden_dropout_prob", hidden_dropout},
                {"attention_probs_dropout_prob", attention_dropout},
                {"hidden_act", hidden_act},
                {"initializer_range", initializer_range}};
}

namespace {

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

std::string layer_name(std::size_t i, const std::string& suffix) {
    return "encoder.layer." + std::to_string(i) + "." + suffix;
}

}  // namespace

struct TransformerEncoder::SequenceTape {
    struct LayerTape {
        Matrix input, q, k, v;
        std::vector<Matrix> probs, attn_masks;
        Matrix context, attn_out_mask;
        LayerNormCache ln1;
        Matrix y1, h_pre, h_act, out_mask;
        LayerNormCache ln2;
    };
    std::vector<std::int32_t> ids;
    std::vector<std::size_t> positions;
    LayerNormCache emb_ln;
    Matrix emb_mask;
    std::vector<LayerTape> layers;
    Eigen::RowVectorXd cls, pooled;
};

struct TransformerEncoder::BatchTape final : EncoderTape {
    std::vector<SequenceTape> sequences;
};

TransformerEncoder::TransformerEncoder(TransformerConfig config, bool with_pooler, std::uint64_t seed)
    : config_(std::move(config)), with_pooler_(with_pooler) {
    const auto h = idx(config_.hidden_size);
    const auto inter = idx(config_.intermediate_size);
    word_embeddings_ = Parameter("embeddings.word_embeddings.weight", idx(config_.vocab_size), h);
    position_embeddings_ = Parameter("embeddings.position_embeddings.weight", idx(config_.max_position), h);
    token_type_embeddings_ = Parameter("embeddings.token_type_embeddings.weight", idx(config_.type_vocab_size), h);
    emb_ln_gamma_ = Parameter("embeddings.LayerNorm.weight", 1, h);
    emb_ln_beta_ = Parameter("embeddings.LayerNorm.bias", 1, h);
    for (std::size_t i = 0; i < config_.num_layers; ++i) {
        layers_.push_back(Layer{nn::Linear(layer_name(i, "attention.self.query"), h, h),
                                nn::Linear(layer_name(i, "attention.self.key"), h, h),
                                nn::Linear(layer_name(i, "attention.self.value"), h, h),
                                nn::Linear(layer_name(i, "attention.output.dense"), h, h),
                                Parameter(layer_name(i, "attention.output.LayerNorm.weight"), 1, h),
                                Parameter(layer_name(i, "attention.output.LayerNorm.bias"), 1, h),
                                nn::Linear(layer_name(i, "intermediate.dense"), h, inter),
                                nn::Linear(layer_name(i, "output.dense"), inter, h),
                                Parameter(layer_name(i, "output.LayerNorm.weight"), 1, h),
                                Parameter(layer_name(i, "output.LayerNorm.bias"), 1, h)});
    }
    pooler_ = nn::Linear("pooler.dense", h, h);

    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, config_.initializer_range);
    for (auto* p : parameters()) {
        const bool is_gamma = p->name.find("LayerNorm.weight") != std::string::npos;
        const bool is_bias = p->name.size() > 5 && p->name.compare(p->name.size() - 5, 5, ".bias") == 0;
        if (is_gamma)
            p->value.setOnes();
        else if (is_bias)
            p->value.setZero();
        else
            for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = normal(rng);
    }
}

void TransformerEncoder::set_dropout(double rate) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
    config_.hidden_dropout = rate;
    config_.attention_dropout = rate;
}

nn::ParameterRefs TransformerEncoder::parameters() {
    nn::ParameterRefs refs{&word_embeddings_, &position_embeddings_, &token_type_embeddings_,
                           &emb_ln_gamma_, &emb_ln_beta_};
    for (auto& l : layers_) {
        for (auto* lin : {&l.query, &l.key, &l.value, &l.attn_out}) {
            refs.push_back(&lin->weight);
            refs.push_back(&lin->bias);
        }
        refs.push_back(&l.ln1_gamma);
        refs.push_back(&l.ln1_beta);
        for (auto* lin : {&l.intermediate, &l.output}) {
            refs.push_back(&lin->weight);
            refs.push_back(&lin->bias);
        }
        refs.push_back(&l.ln2_gamma);
        refs.push_back(&l.ln2_beta);
    }
    if (with_pooler_) {
        refs.push_back(&pooler_.weight);
        refs.push_back(&pooler_.bias);
    }
    return refs;
}

std::map<std::string, nn::Tensor> TransformerEncoder::state_dict() const {
    std::map<std::string, nn::Tensor> out;
    for (auto* p : const_cast<TransformerEncoder*>(this)->parameters()) out[p->name] = nn::to_tensor(p->value);
    return out;
}

void TransformerEncoder::load_state_dict(const std::map<std::string, nn::Tensor>& tensors,
                                         const std::string& prefix) {
    for (auto* p : parameters()) {
        auto it = tensors.find(prefix + p->name);
        if (it == tensors.end()) {
            // Older checkpoints name LayerNorm parameters gamma/beta.
            auto alt = p->name;
            if (const auto pos = alt.find("LayerNorm.weight"); pos != std::string::npos)
                alt.replace(pos, 16, "LayerNorm.gamma");
            else if (const auto pos2 = alt.find("LayerNorm.bias"); pos2 != std::string::npos)
                alt.replace(pos2, 14, "LayerNorm.beta");
            it = tensors.find(prefix + alt);
        }
        if (it == tensors.end()) throw LoadError("checkpoint lacks tensor " + prefix + p->name);
        auto m = nn::to_matrix(it->second);
        if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
            throw LoadError("checkpoint tensor " + prefix + p->name + " has shape [" +
                            std::to_string(m.rows()) + "," + std::to_string(m.cols()) + "], expected [" +
                            std::to_string(p->value.rows()) + "," + std::to_string(p->value.cols()) + "]");
        p->value = std::move(m);
    }
}

std::unique_ptr<TransformerEncoder> TransformerEncoder::from_checkpoint(const std::filesystem::path& dir) {
    const auto config_path = dir / "config.json";
    const auto weights_path = dir / "model.safetensors";
    if (!std::filesystem::exists(config_path))
        throw LoadError("checkpoint descriptor not found: " + config_path.string());
    if (!std::filesystem::exists(weights_path))
        throw LoadError("checkpoint weights not found: " + weights_path.string() +
                        " (convert other weight formats to safetensors first)");
    Json doc;
    try {
        doc = read_json(config_path);
    } catch (const Error& e) {
        throw LoadError(std::string("unreadable checkpoint descriptor: ") + e.what());
    }
    const auto config = TransformerConfig::from_json(doc);
    const auto tensors = nn::load_safetensors(weights_path);
    std::string prefix;
    if (tensors.count("bert.embeddings.word_embeddings.weight")) prefix = "bert.";
    const bool pooler = tensors.count(prefix + "pooler.dense.weight") > 0;
    auto enc = std::make_unique<TransformerEncoder>(config, pooler, 0);
    enc->load_state_dict(tensors, prefix);
    return enc;
}

void TransformerEncoder::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    write_json(dir / "config.json", config_.to_json());
    write_json(dir / "encoder.json", Json{{"kind", "PRETRAINED_CHECKPOINT"}});
    nn::save_safetensors(dir / "model.safetensors", state_dict(), nn::StorageType::F32);
}

Matrix TransformerEncoder::forward_sequence(const TokenSequence& seq, SequenceTape* tape, Rng* rng) const {
    std::vector<std::size_t> positions;
    for (std::size_t t = 0; t < seq.ids.size(); ++t)
        if (seq.mask[t]) positions.push_back(t);
    if (positions.empty()) throw ShapeError("sequence has no unmasked tokens");
    if (positions.back() >= config_.max_position)
        throw ShapeError("sequence longer than the checkpoint's " + std::to_string(config_.max_position) +
                         " positions");

    const auto n = idx(positions.size());
    const auto h = idx(config_.hidden_size);
    const auto heads = idx(config_.num_heads);
    const auto dh = h / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const double eps = config_.layer_norm_eps;

    Matrix x(n, h);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto id = seq.ids[positions[static_cast<std::size_t>(i)]];
        if (id < 0 || id >= word_embeddings_.value.rows())
            throw ShapeError("token id " + std::to_string(id) + " outside checkpoint vocabulary");
        x.row(i) = word_embeddings_.value.row(id) +
                   position_embeddings_.value.row(idx(positions[static_cast<std::size_t>(i)])) +
                   token_type_embeddings_.value.row(0);
    }
    if (tape) {
        tape->ids.clear();
        for (auto p : positions) tape->ids.push_back(seq.ids[p]);
        tape->positions = positions;
        tape->layers.clear();
    }
    x = nn::layer_norm(x, emb_ln_gamma_, emb_ln_beta_, eps, tape ? &tape->emb_ln : nullptr);
    {
        Matrix m = nn::dropout_mask(n, h, config_.hidden_dropout, rng);
        x = x.cwiseProduct(m);
        if (tape) tape->emb_mask = std::move(m);
    }

    for (const auto& layer : layers_) {
        SequenceTape::LayerTape lt;
        const Matrix q = layer.query.forward(x);
        const Matrix k = layer.key.forward(x);
        const Matrix v = layer.value.forward(x);
        Matrix context(n, h);
        for (Eigen::Index hd = 0; hd < heads; ++hd) {
            const Matrix scores = q.middleCols(hd * dh, dh) * k.middleCols(hd * dh, dh).transpose() * scale;
            Matrix probs = nn::softmax_rows(scores);
            Matrix mask = nn::dropout_mask(n, n, config_.attention_dropout, rng);
            context.middleCols(hd * dh, dh) = probs.cwiseProduct(mask) * v.middleCols(hd * dh, dh);
            if (tape) {
                lt.probs.push_back(std::move(probs));
                lt.attn_masks.push_back(std::move(mask));
            }
        }
        Matrix attn = layer.attn_out.forward(context);
        Matrix attn_mask = nn::dropout_mask(n, h, config_.hidden_dropout, rng);
        attn = attn.cwiseProduct(attn_mask);
        Matrix y1 = nn::layer_norm(x + attn, layer.ln1_gamma, layer.ln1_beta, eps, tape ? &lt.ln1 : nullptr);
        Matrix h_pre = layer.intermediate.forward(y1);
        Matrix h_act = nn::gelu(h_pre);
        Matrix out = layer.output.forward(h_act);
        Matrix out_mask = nn::dropout_mask(n, h, config_.hidden_dropout, rng);
        out = out.cwiseProduct(out_mask);
        Matrix next = nn::layer_norm(y1 + out, layer.ln2_gamma, layer.ln2_beta, eps, tape ? &lt.ln2 : nullptr);
        if (tape) {
            lt.input = std::move(x);
            lt.q = q;
            lt.k = k;
            lt.v = v;
            lt.context = std::move(context);
            lt.attn_out_mask = std::move(attn_mask);
            lt.y1 = std::move(y1);
            lt.h_pre = std::move(h_pre);
            lt.h_act = std::move(h_act);
            lt.out_mask = std::move(out_mask);
            tape->layers.push_back(std::move(lt));
        }
        x = std::move(next);
    }

    Eigen::RowVectorXd cls = x.row(0);
    Eigen::RowVectorXd rep = cls;
    if (with_pooler_) rep = pooler_.forward(cls).array().tanh().matrix();
    if (tape) {
        tape->cls = cls;
        tape->pooled = rep;
    }
    return rep;
}

Matrix TransformerEncoder::forward(std::span<const TokenSequence> batch, std::unique_ptr<EncoderTape>* tape,
                                   Rng* dropout_rng) const {
    for (const auto& s : batch)
        if (s.ids.size() != batch.front().ids.size() || s.mask.size() != s.ids.size())
            throw ShapeError("ragged batch: all sequences must share one length");
    Matrix out(idx(batch.size()), idx(config_.hidden_size));
    std::unique_ptr<BatchTape> bt;
    if (tape) {
        bt = std::make_unique<BatchTape>();
        bt->sequences.resize(batch.size());
    }
    for (std::size_t i = 0; i < batch.size(); ++i)
        out.row(idx(i)) = forward_sequence(batch[i], bt ? &bt->sequences[i] : nullptr, dropout_rng);
    if (tape) *tape = std::move(bt);
    return out;
}

void TransformerEncoder::backward_sequence(const SequenceTape& tape, const Eigen::RowVectorXd& grad) {
    const auto n = idx(tape.positions.size());
    const auto h = idx(config_.hidden_size);
    const auto heads = idx(config_.num_heads);
    const auto dh = h / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Eigen::RowVectorXd g_cls = grad;
    if (with_pooler_) {
        const Matrix g_pre = grad.cwiseProduct((1.0 - tape.pooled.array().square()).matrix());
        g_cls = pooler_.backward(tape.cls, g_pre, true);
    }
    Matrix g = Matrix::Zero(n, h);
    g.row(0) = g_cls;

    for (std::size_t li = layers_.size(); li-- > 0;) {
        auto& layer = layers_[li];
        const auto& lt = tape.layers[li];
        const Matrix g_sum2 = nn::layer_norm_backward(lt.ln2, layer.ln2_gamma, layer.ln2_beta, g, true);
        const Matrix g_out = g_sum2.cwiseProduct(lt.out_mask);
        const Matrix g_act = layer.output.backward(lt.h_act, g_out, true);
        const Matrix g_hpre = nn::gelu_backward(lt.h_pre, g_act);
        const Matrix g_y1 = layer.intermediate.backward(lt.y1, g_hpre, true) + g_sum2;
        const Matrix g_sum1 = nn::layer_norm_backward(lt.ln1, layer.ln1_gamma, layer.ln1_beta, g_y1, true);
        const Matrix g_attn = g_sum1.cwiseProduct(lt.attn_out_mask);
        const Matrix g_ctx = layer.attn_out.backward(lt.context, g_attn, true);

        Matrix g_q(n, h), g_k(n, h), g_v(n, h);
        for (Eigen::Index hd = 0; hd < heads; ++hd) {
            const auto& probs = lt.probs[static_cast<std::size_t>(hd)];
            const auto& mask = lt.attn_masks[static_cast<std::size_t>(hd)];
            const Matrix dropped = probs.cwiseProduct(mask);
            const Matrix g_ctx_h = g_ctx.middleCols(hd * dh, dh);
            g_v.middleCols(hd * dh, dh) = dropped.transpose() * g_ctx_h;
            const Matrix g_probs = (g_ctx_h * lt.v.middleCols(hd * dh, dh).transpose()).cwiseProduct(mask);
            const Eigen::VectorXd row_dot = g_probs.cwiseProduct(probs).rowwise().sum();
            const Matrix g_scores =
                (probs.array() * (g_probs.colwise() - row_dot).array()).matrix() * scale;
            g_q.middleCols(hd * dh, dh) = g_scores * lt.k.middleCols(hd * dh, dh);
            g_k.middleCols(hd * dh, dh) = g_scores.transpose() * lt.q.middleCols(hd * dh, dh);
        }
        g = g_sum1 + layer.query.backward(lt.input, g_q, true) + layer.key.backward(lt.input, g_k, true) +
            layer.value.backward(lt.input, g_v, true);
    }

    g = g.cwiseProduct(tape.emb_mask);
    const Matrix g_emb = nn::layer_norm_backward(tape.emb_ln, emb_ln_gamma_, emb_ln_beta_, g, true);
    for (Eigen::Index i = 0; i < n; ++i) {
        word_embeddings_.grad.row(tape.ids[static_cast<std::size_t>(i)]) += g_emb.row(i);
        position_embeddings_.grad.row(idx(tape.positions[static_cast<std::size_t>(i)])) += g_emb.row(i);
        token_type_embeddings_.grad.row(0) += g_emb.row(i);
    }
}

void TransformerEncoder::backward(const EncoderTape& base, const Matrix& grad_output) {
    const auto& tape = dynamic_cast<const BatchTape&>(base);
    for (std::size_t i = 0; i < tape.sequences.size(); ++i)
        backward_sequence(tape.sequences[i], grad_output.row(idx(i)));
}

}  // namespace trialsent::encoder
