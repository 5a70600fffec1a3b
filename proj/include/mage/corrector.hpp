#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "mage/common.hpp"
#include "mage/corpus.hpp"
#include "mage/decoder.hpp"
#include "mage/predictor.hpp"
#include "mage/rng.hpp"
#include "mage/schedule.hpp"

namespace mage {

/// Windowed linear scorer: logit(t) = b + sum_k w_k . E[x(t+k)] over k in [-r, r].
/// Stands in for a recurrent corrector; trained to flag substituted tokens.
struct CorrectorModel {
    static constexpr std::uint32_t kFormatVersion = 1;

    int vocab_size = 0;
    int embed_dim = 0;
    int radius = 0;
    std::vector<double> embedding; ///< V x D
    std::vector<double> weights;   ///< D(2r+1)
    double bias = 0.0;

    static CorrectorModel zeros(int vocab_size, int embed_dim, int radius);
    static CorrectorModel random(int vocab_size, int embed_dim, int radius, Rng& rng, double scale);

    int window() const { return 2 * radius + 1; }
    int feature_dim() const { return embed_dim * window(); }
    std::size_t parameter_count() const { return embedding.size() + weights.size() + 1; }

    /// Flat parameter access in checkpoint order: embedding, weights, bias.
    double& parameter(std::size_t index);
    double parameter(std::size_t index) const;

    void validate() const;
};

struct CorrectorVerdict {
    std::vector<double> suspicion; ///< in (0, 1)
    double threshold = 0.5;
    BitVector remask;              ///< remask(t) = 1 iff suspicion(t) > threshold

    std::size_t count() const;
};

struct CorruptedExample {
    TokenSequence tokens;
    BitVector labels; ///< 1 where the token was substituted
    double rate = 0.0;
};

inline constexpr double kCorrectorMaxRate = 0.30;

/// Draws u ~ Uniform(0, max_rate) once, then substitutes each position with probability u.
CorruptedExample corrupt_for_training(std::span<const Token> clean, int vocab_size, double max_rate, Rng& rng);

/// Same as above with the rate fixed to `rate`.
CorruptedExample corrupt_at_rate(std::span<const Token> clean, int vocab_size, double rate, Rng& rng);

std::vector<double> corrector_logits(const CorrectorModel& model, std::span<const Token> seq);

CorrectorVerdict detect_and_remask(std::span<const Token> seq, const CorrectorModel& model, double threshold);

struct BceLoss {
    double loss = 0.0; ///< summed binary cross-entropy over positions
    std::size_t positions = 0;
};

/// Summed BCE on the substitution labels; the exact gradient is added into `grad`.
BceLoss accumulate_corrector_gradient(const CorrectorModel& model, std::span<const Token> seq,
                                      std::span<const std::uint8_t> labels, CorrectorModel& grad);

/// Loss only, for finite-difference checks.
double corrector_loss(const CorrectorModel& model, std::span<const Token> seq, std::span<const std::uint8_t> labels);

struct CorrectorHyper {
    double lr = 0.5;
    int epochs = 5;
    int batch = 16;
    std::uint64_t seed = 0;
    double max_rate = kCorrectorMaxRate;
    int embed_dim = 8;
    int radius = 2;
    double init_scale = 0.1;
};

struct CorrectorEpoch {
    int epoch = 0;
    double loss = 0.0; ///< mean BCE per position
};

struct CorrectorTrainResult {
    CorrectorModel model;
    std::vector<CorrectorEpoch> curve;
};

CorrectorModel initial_corrector(int vocab_size, const CorrectorHyper& hyper);

/// Single-threaded SGD with the mean per-position BCE gradient. Deterministic in hyper.seed.
CorrectorTrainResult train_corrector(const Corpus& corpus, const CorrectorHyper& hyper);

enum class Refill { single_step_argmax, full_decode };

struct CorrectOptions {
    double threshold = 0.5;
    int rounds = 1;
    Refill refill = Refill::single_step_argmax;
    /// Schedule for the full-decode refill; only its step count and mode matter.
    ScheduleConfig refill_schedule{};
    const FrequencyTable* freq = nullptr;
};

struct CorrectionResult {
    TokenSequence tokens;
    int rounds_run = 0;
    BitVector touched; ///< union of the re-mask sets
};

/// Re-masks suspicious positions and refills them with the predictor, at most
/// `rounds` times, stopping early once the re-mask set is empty.
CorrectionResult correct(std::span<const Token> decoded, const PredictorModel& predictor,
                         const ConditioningContext& ctx, const CorrectorModel& corrector,
                         const CorrectOptions& options, Rng& rng);

void write_corrector(std::ostream& out, const CorrectorModel& model);
CorrectorModel read_corrector(std::istream& in);
void save_corrector(const std::filesystem::path& path, const CorrectorModel& model);
CorrectorModel load_corrector(const std::filesystem::path& path);

} // namespace mage
