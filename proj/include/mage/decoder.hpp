#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "mage/common.hpp"
#include "mage/corpus.hpp"
#include "mage/predictor.hpp"
#include "mage/rng.hpp"
#include "mage/schedule.hpp"

namespace mage {

enum class Selection { greedy_confidence, sample_temperature };

/// Temperature anneals linearly from `temperature` at step 0 to 0 at step N.
struct SelectionRule {
    Selection kind = Selection::greedy_confidence;
    double temperature = 1.0;
};

struct DecodeState {
    TokenSequence current;          ///< mask token at open positions
    BitVector committed;
    int step = 0;
    std::vector<double> confidences; ///< confidence at commit time, 0 while open
    std::vector<std::size_t> target_open_counts;

    std::size_t open_count() const;
};

struct DecodeStep {
    int step = 0;
    std::size_t open_count = 0; ///< open positions entering this step
    double mean_confidence = 0.0;
};

struct DecodeOptions {
    SelectionRule selection;
    /// Needed in CTF mode: commit priority is confidence * (1 - p_base) of the
    /// hypothesised token, so frequent-token positions commit first.
    const FrequencyTable* freq = nullptr;
    /// Pre-committed tokens; positions holding the mask token stay open.
    std::optional<TokenSequence> initial;
};

struct DecodeResult {
    TokenSequence tokens;
    std::vector<DecodeStep> trace;
    int forward_passes = 0;
};

/// Open-position targets for steps 0..N. count(0) = T, count(N) = 0, and the
/// list strictly decreases while N <= T. In CTF mode with `p_base` the expected
/// count is the sum of the clipped CTF probabilities.
std::vector<std::size_t> plan_open_counts(const ScheduleConfig& sched, std::size_t seq_len,
                                          std::span<const double> p_base = {});

struct Choice {
    Token token = 0;
    double probability = 0.0;
};

/// Argmax with ties going to the lower token id.
Choice greedy_choice(std::span<const double> row);

/// Probability of the greedy choice at an open position; UsageError on a committed one.
double confidence(const PredictionOutput& pred, const DecodeState& state, std::size_t position);

/// Iterative confidence-ranked decoding in exactly `sched.n_steps` forward passes.
DecodeResult decode(const PredictorModel& model, const ConditioningContext& ctx, const ScheduleConfig& sched,
                    const DecodeOptions& options, Rng& rng);

/// CSV `step,open_count,mean_confidence`.
void write_decode_trace(std::ostream& out, std::span<const DecodeStep> trace, std::uint64_t config_hash);

} // namespace mage
