#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "mage/common.hpp"
#include "mage/corpus.hpp"
#include "mage/rng.hpp"
#include "mage/schedule.hpp"

namespace mage {

/// Windowed linear-softmax masked-token predictor.
///
/// Position t sees u(s) = E[masked(s)] + cond(s) for every s in [t-r, t+r]
/// (zero outside the sequence); the window is concatenated into a feature
/// vector of size D(2r+1), the global embedding is added to the centre
/// block, and logits = W^T h + b.
struct PredictorModel {
    static constexpr std::uint32_t kFormatVersion = 1;

    int vocab_size = 0;
    int embed_dim = 0;
    int radius = 0;
    std::vector<double> embedding; ///< (V+1) x D, row V is the mask token
    std::vector<double> weights;   ///< F x V, row-major, F = D(2r+1)
    std::vector<double> bias;      ///< V
    double final_loss = 0.0;       ///< Summed masked CE per sequence, last epoch

    static PredictorModel zeros(int vocab_size, int embed_dim, int radius);
    static PredictorModel random(int vocab_size, int embed_dim, int radius, Rng& rng, double scale);

    int window() const { return 2 * radius + 1; }
    int feature_dim() const { return embed_dim * window(); }
    Token mask_token() const { return vocab_size; }
    std::span<const double> embed(Token tok) const;

    /// Embedding, weights, bias in checkpoint order.
    std::array<std::span<double>, 3> blocks();
    std::array<std::span<const double>, 3> blocks() const;

    void validate() const;
};

/// Per-position conditioning plus one global vector (mean of the per-position ones).
struct ConditioningContext {
    int dim = 0;
    std::vector<double> cond; ///< T x D
    std::vector<double> global_embed;

    std::size_t length() const { return dim == 0 ? 0 : cond.size() / static_cast<std::size_t>(dim); }
    std::span<const double> at(std::size_t t) const { return {cond.data() + t * dim, static_cast<std::size_t>(dim)}; }
};

struct PredictionOutput {
    int vocab_size = 0;
    std::vector<double> probs; ///< T x V
    std::vector<double> confidence;

    std::size_t length() const { return confidence.size(); }
    std::span<const double> row(std::size_t t) const {
        return {probs.data() + t * vocab_size, static_cast<std::size_t>(vocab_size)};
    }
};

ConditioningContext build_conditioning(std::span<const Token> distorted, const PredictorModel& model);

/// `masked` may contain the mask token V. Throws UsageError on ids > V or a length mismatch.
PredictionOutput forward(const PredictorModel& model, std::span<const Token> masked, const ConditioningContext& ctx);

struct MaskedLoss {
    double loss = 0.0;              ///< -sum over masked t of ln P(target(t))
    std::size_t masked_count = 0;
    std::size_t correct = 0;        ///< masked positions whose argmax equals the target
    std::vector<double> logit_grad; ///< T x V; rows of unmasked positions are exactly zero
};

MaskedLoss masked_ce_loss(const PredictionOutput& pred, std::span<const Token> target, const MaskVector& mask);

/// Loss and the exact gradient for every parameter block, treating the
/// conditioning as a function of the embedding table (it is built from
/// `distorted` with the same model). The gradient is added into `grad`,
/// which must have the model's shape.
MaskedLoss accumulate_gradient(const PredictorModel& model, std::span<const Token> masked,
                               std::span<const Token> distorted, std::span<const Token> target,
                               const MaskVector& mask, PredictorModel& grad);

struct TrainHyper {
    double lr = 0.5;
    int epochs = 10;
    int batch = 16;
    double rho = 0.3; ///< conditioning corruption rate
    std::uint64_t seed = 0;
    int embed_dim = 16;
    int radius = 1;
    double init_scale = 0.1;
};

struct EpochStats {
    int epoch = 0;
    double loss = 0.0;           ///< summed masked CE per sequence, averaged over the epoch
    double loss_per_token = 0.0; ///< same total divided by the masked count
    double masked_acc = 0.0;
};

struct TrainResult {
    PredictorModel model;
    std::vector<EpochStats> curve;
};

/// Parameters a training run with these hyperparameters starts from.
PredictorModel initial_predictor(int vocab_size, const TrainHyper& hyper);

/// Single-threaded SGD on the masked CE objective. Deterministic in hyper.seed.
/// `freq` supplies p_base in CTF mode. Throws NumericError on a non-finite loss.
TrainResult train(const Corpus& corpus, const FrequencyTable& freq, const ScheduleConfig& sched,
                  const TrainHyper& hyper);

/// CSV `epoch,loss,masked_acc`.
void write_learning_curve(std::ostream& out, std::span<const EpochStats> curve, std::uint64_t config_hash);

/// Binary layout: magic "MAGEPRED", u32 version, u32 V, u32 D, u32 r, then
/// little-endian f64 blocks (embedding, weights, bias) and the final loss.
void write_predictor(std::ostream& out, const PredictorModel& model);
PredictorModel read_predictor(std::istream& in);
void save_predictor(const std::filesystem::path& path, const PredictorModel& model);
PredictorModel load_predictor(const std::filesystem::path& path);

} // namespace mage
