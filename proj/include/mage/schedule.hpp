#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mage/common.hpp"
#include "mage/rng.hpp"

namespace mage {

enum class MaskMode { uniform_cosine, ctf };

/// How the expected masked count at step i is evaluated.
/// cos_consistent: T cos(pi i / 2N), matching the per-token cosine schedule.
/// paper_sin: T sin(pi i / 2N), the increasing variant.
enum class ExpectationConvention { cos_consistent, paper_sin };

struct ScheduleConfig {
    int n_steps = 20;
    MaskMode mode = MaskMode::uniform_cosine;
    ExpectationConvention convention = ExpectationConvention::cos_consistent;
    Token mask_token_id = 0;

    /// Throws UsageError unless n_steps >= 1 and the mask id lies outside [0, V).
    void validate(int vocab_size) const;
};

/// Mask bits together with the probabilities they were drawn from.
struct MaskVector {
    BitVector m;
    std::vector<double> probs;
    int step = 0;

    std::size_t size() const { return m.size(); }
    std::size_t count() const;
};

/// cos(pi/2 * i/N); exactly 1 at i = 0 and exactly 0 at i = N.
double cosine_probability(int step, int n_steps);

double expected_masked_cosine(int step, int n_steps, std::size_t seq_len, ExpectationConvention convention);

/// min(E_cos / E_base * p_base, 1) with E_base = sum(p_base).
std::vector<double> ctf_probabilities(std::span<const double> p_base, double expected_masked);

std::vector<double> ctf_probabilities(std::span<const double> p_base, int step, int n_steps,
                                      ExpectationConvention convention);

/// Per-position probabilities for one training example under `sched.mode`.
/// `p_base` is ignored in uniform mode.
std::vector<double> masking_probabilities(const ScheduleConfig& sched, int step, std::span<const double> p_base);

/// Independent Bernoulli draw per position.
MaskVector sample_mask(std::span<const double> probs, Rng& rng, int step = 0);

/// Writes `mask_token` wherever m(t) = 1.
TokenSequence apply_mask(std::span<const Token> x, const MaskVector& mask, Token mask_token);

/// Training step index: uniform over {1, ..., N-1}; 0 when N < 2.
int sample_training_step(int n_steps, Rng& rng);

std::string_view to_string(MaskMode mode);
std::string_view to_string(ExpectationConvention convention);
MaskMode parse_mask_mode(std::string_view text);
ExpectationConvention parse_convention(std::string_view text);

} // namespace mage
