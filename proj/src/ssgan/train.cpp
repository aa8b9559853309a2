#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "trialsent/error.hpp"
#include "trialsent/ssgan.hpp"

namespace trialsent::ssgan {

namespace {

constexpr std::size_t kPredictChunk = 64;

std::vector<Prediction> predict_with(const encoder::Encoder& enc, const Discriminator& disc,
                                     std::span<const TokenSequence> batch) {
    std::vector<Prediction> out;
    out.reserve(batch.size());
    for (std::size_t start = 0; start < batch.size(); start += kPredictChunk) {
        const auto chunk = batch.subspan(start, std::min(kPredictChunk, batch.size() - start));
        const auto probs = disc.discriminate(enc.encode(chunk)).probabilities;
        for (Eigen::Index i = 0; i < probs.rows(); ++i) {
            const Eigen::RowVectorXd row = probs.row(i);
            out.push_back(predict_from_probabilities(std::span<const double>(row.data(), row.size())));
        }
    }
    return out;
}

eval::EvalReport score(const encoder::Encoder& enc, const Discriminator& disc,
                       const std::vector<Example>& examples) {
    std::vector<TokenSequence> seqs;
    seqs.reserve(examples.size());
    for (const auto& ex : examples) {
        if (!is_real(ex.label)) throw InputError("cannot score example " + ex.pmid + ": it is unlabeled");
        seqs.push_back(ex.tokens);
    }
    const auto preds = predict_with(enc, disc, seqs);
    std::vector<eval::LabelPair> pairs;
    pairs.reserve(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) pairs.emplace_back(examples[i].label, preds[i].label);
    return eval::metrics(eval::confusion(pairs));
}

LossBreakdown& operator+=(LossBreakdown& a, const LossBreakdown& b) {
    a.d_sup += b.d_sup;
    a.d_unsup += b.d_unsup;
    a.d_total += b.d_total;
    a.g_fm += b.g_fm;
    a.g_unsup += b.g_unsup;
    a.g_total += b.g_total;
    return a;
}

LossBreakdown scaled(LossBreakdown a, double s) {
    a.d_sup *= s;
    a.d_unsup *= s;
    a.d_total *= s;
    a.g_fm *= s;
    a.g_unsup *= s;
    a.g_total *= s;
    return a;
}

}  // namespace

Json EpochRecord::to_json() const {
    Json doc{{"epoch", epoch}, {"losses", losses.to_json()}};
    doc["train_accuracy"] = train_accuracy ? Json(*train_accuracy) : Json(nullptr);
    doc["validation"] = validation ? eval::to_json(*validation) : Json(nullptr);
    return doc;
}

TrainedModel train(const corpus::TrainingCorpus& corpus, std::unique_ptr<encoder::Encoder> enc,
                   const GanConfig& config, const std::vector<Example>* validation, const TrainHooks& hooks) {
    if (!enc) throw ConfigError("train: no encoder");
    if (corpus.labeled.empty()) throw InputError("train: the corpus has no labeled rows");
    for (const auto& ex : corpus.labeled)
        if (!is_real(ex.label)) throw InputError("train: labeled row " + ex.pmid + " carries UNK_UNK");
    const auto counts = corpus::class_counts(corpus.labeled);
    for (std::size_t c = 0; c < kNumClasses; ++c)
        if (counts[c] == 0)
            spdlog::warn("train: no labeled rows of class {}", to_string(static_cast<SentimentLabel>(c)));

    GanNetwork net(std::move(enc), config);
    const auto& cfg = net.config();
    const bool encoder_trainable = net.encoder().trainable();

    Rng shuffle_rng(derive_seed(cfg.seed, 2));
    Rng noise_rng(derive_seed(cfg.seed, 3));
    Rng dropout_rng(derive_seed(cfg.seed, 4));
    std::normal_distribution<double> noise_dist(cfg.noise_mean, cfg.noise_std);

    auto d_params = net.discriminator_parameters();
    if (encoder_trainable)
        for (auto* p : net.encoder_parameters()) d_params.push_back(p);
    const auto g_params = net.generator_parameters();
    const auto all_params = net.all_parameters();
    nn::Adam d_opt(d_params, nn::AdamOptions{cfg.learning_rate_d});
    nn::Adam g_opt(g_params, nn::AdamOptions{cfg.learning_rate_g});

    const std::size_t n_labeled = corpus.labeled.size();
    const std::size_t steps = (n_labeled + cfg.batch_size - 1) / cfg.batch_size;
    const bool use_unlabeled = cfg.gan_enabled && !corpus.unlabeled.empty();
    std::size_t unlabeled_per_batch = 0;
    if (use_unlabeled)
        unlabeled_per_batch = cfg.unlabeled_per_batch < 0
                                  ? (corpus.unlabeled.size() + steps - 1) / steps
                                  : static_cast<std::size_t>(cfg.unlabeled_per_batch);

    std::vector<std::size_t> labeled_order(n_labeled);
    std::vector<std::size_t> unlabeled_order(corpus.unlabeled.size());
    std::iota(labeled_order.begin(), labeled_order.end(), 0);
    std::iota(unlabeled_order.begin(), unlabeled_order.end(), 0);
    std::size_t unlabeled_cursor = unlabeled_order.size();

    const LossWeights d_weights = cfg.gan_enabled ? LossWeights::discriminator() : LossWeights{1.0, 0.0, 0.0, 0.0};
    std::vector<EpochRecord> history;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(labeled_order.begin(), labeled_order.end(), shuffle_rng);
        LossBreakdown sum;
        for (std::size_t step = 0; step < steps; ++step) {
            GanBatch batch;
            const auto begin = step * cfg.batch_size;
            const auto end = std::min(n_labeled, begin + cfg.batch_size);
            for (auto i = begin; i < end; ++i) {
                const auto& ex = corpus.labeled[labeled_order[i]];
                batch.real.push_back(ex.tokens);
                batch.provenance.push_back(Provenance::Labeled);
                batch.labels.push_back(ex.label);
            }
            for (std::size_t u = 0; u < unlabeled_per_batch; ++u) {
                if (unlabeled_cursor >= unlabeled_order.size()) {
                    std::shuffle(unlabeled_order.begin(), unlabeled_order.end(), shuffle_rng);
                    unlabeled_cursor = 0;
                }
                batch.real.push_back(corpus.unlabeled[unlabeled_order[unlabeled_cursor++]].tokens);
                batch.provenance.push_back(Provenance::Unlabeled);
                batch.labels.push_back(SentimentLabel::Unlabeled);
            }
            std::size_t n_fake = 0;
            if (cfg.gan_enabled)
                n_fake = std::max<std::size_t>(
                    1, static_cast<std::size_t>(std::llround(cfg.fake_per_real * static_cast<double>(batch.real.size()))));
            batch.noise.resize(static_cast<Eigen::Index>(n_fake), static_cast<Eigen::Index>(cfg.noise_dim));
            for (Eigen::Index r = 0; r < batch.noise.rows(); ++r)
                for (Eigen::Index c = 0; c < batch.noise.cols(); ++c) batch.noise(r, c) = noise_dist(noise_rng);

            GanNetwork::Tape tape;
            const auto losses = net.forward(batch, &tape, &dropout_rng);
            if (!losses.finite())
                throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(step + 1));

            nn::zero_grads(all_params);
            net.backward(tape, d_weights, {encoder_trainable, true, false});
            if (cfg.gan_enabled) net.backward(tape, LossWeights::generator(), {false, false, true});
            d_opt.step();
            if (cfg.gan_enabled) g_opt.step();

            sum += losses;
            if (hooks.on_step) hooks.on_step(epoch, step + 1, losses);
        }

        EpochRecord record;
        record.epoch = epoch;
        record.losses = scaled(sum, 1.0 / static_cast<double>(steps));
        if (cfg.track_train_accuracy)
            record.train_accuracy = score(net.encoder(), net.discriminator(), corpus.labeled).accuracy;
        if (validation && !validation->empty())
            record.validation = score(net.encoder(), net.discriminator(), *validation);
        spdlog::debug("epoch {}: L_D={:.6f} L_G={:.6f}", epoch, record.losses.d_total, record.losses.g_total);
        if (hooks.on_epoch) hooks.on_epoch(record);
        history.push_back(std::move(record));
    }

    Discriminator disc = net.discriminator();
    return TrainedModel(net.release_encoder(), std::move(disc), cfg, std::move(history));
}

TrainedModel::TrainedModel(std::unique_ptr<encoder::Encoder> enc, Discriminator disc, GanConfig config,
                           std::vector<EpochRecord> history)
    : encoder_(std::move(enc)),
      discriminator_(std::move(disc)),
      config_(std::move(config)),
      history_(std::move(history)) {}

Prediction TrainedModel::predict(const TokenSequence& tokens) const {
    return predict(std::span<const TokenSequence>(&tokens, 1)).front();
}

std::vector<Prediction> TrainedModel::predict(std::span<const TokenSequence> batch) const {
    return predict_with(*encoder_, discriminator_, batch);
}

void TrainedModel::save(const std::filesystem::path& dir, const Json& run_metadata) const {
    std::filesystem::create_directories(dir);
    encoder_->save(dir / "encoder");
    nn::save_safetensors(dir / "discriminator.safetensors", discriminator_.state_dict(), nn::StorageType::F64);
    write_json(dir / "config.json", config_.to_json());
    write_json(dir / "labels.json", Json::array({"POSITIVE", "NEGATIVE", "NEUTRAL", "FAKE"}));
    Json run = run_metadata;
    Json hist = Json::array();
    for (const auto& rec : history_) hist.push_back(rec.to_json());
    run["history"] = std::move(hist);
    write_json(dir / "run.json", run);
}

TrainedModel TrainedModel::load(const std::filesystem::path& dir) {
    for (const char* name : {"config.json", "discriminator.safetensors", "encoder"})
        if (!std::filesystem::exists(dir / name))
            throw MissingArtifactError("model directory " + dir.string() + " lacks " + name + "; run train first");
    auto enc = encoder::load_saved(dir / "encoder");
    const auto config = GanConfig::from_json(read_json(dir / "config.json")).resolved(enc->dim());
    Rng init(derive_seed(config.seed, 1));
    Discriminator disc(config, init);
    disc.load_state_dict(nn::load_safetensors(dir / "discriminator.safetensors"));
    return TrainedModel(std::move(enc), std::move(disc), config, {});
}

eval::EvalReport evaluate(const TrainedModel& model, const std::vector<Example>& examples) {
    if (examples.empty()) throw InputError("evaluate: no examples");
    std::vector<TokenSequence> seqs;
    for (const auto& ex : examples) seqs.push_back(ex.tokens);
    const auto preds = model.predict(seqs);
    std::vector<eval::LabelPair> pairs;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (!is_real(examples[i].label)) throw InputError("evaluate: example " + examples[i].pmid + " is unlabeled");
        pairs.emplace_back(examples[i].label, preds[i].label);
    }
    return eval::metrics(eval::confusion(pairs));
}

}  // namespace trialsent::ssgan
