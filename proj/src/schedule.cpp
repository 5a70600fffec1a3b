#include "mage/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace mage {

void ScheduleConfig::validate(int vocab_size) const {
    if (n_steps < 1) {
        throw UsageError("n_steps must be >= 1");
    }
    if (mask_token_id >= 0 && mask_token_id < vocab_size) {
        throw UsageError("mask token id must lie outside the vocabulary");
    }
}

std::size_t MaskVector::count() const {
    return static_cast<std::size_t>(std::count(m.begin(), m.end(), std::uint8_t{1}));
}

double cosine_probability(int step, int n_steps) {
    if (n_steps < 1 || step < 0 || step > n_steps) {
        throw UsageError("step must satisfy 0 <= i <= N with N >= 1");
    }
    if (step == n_steps) {
        return 0.0;
    }
    return std::cos(std::numbers::pi / 2.0 * static_cast<double>(step) / static_cast<double>(n_steps));
}

double expected_masked_cosine(int step, int n_steps, std::size_t seq_len, ExpectationConvention convention) {
    const double T = static_cast<double>(seq_len);
    if (convention == ExpectationConvention::cos_consistent) {
        return T * cosine_probability(step, n_steps);
    }
    if (n_steps < 1 || step < 0 || step > n_steps) {
        throw UsageError("step must satisfy 0 <= i <= N with N >= 1");
    }
    if (step == n_steps) {
        return T;
    }
    return T * std::sin(std::numbers::pi * static_cast<double>(step) / (2.0 * static_cast<double>(n_steps)));
}

std::vector<double> ctf_probabilities(std::span<const double> p_base, double expected_masked) {
    double e_base = 0.0;
    for (const double p : p_base) {
        if (!(p > 0.0 && p <= 1.0)) {
            throw UsageError("p_base entries must lie in (0, 1]");
        }
        e_base += p;
    }
    if (!(e_base > 0.0)) {
        throw UsageError("sum of p_base must be positive");
    }
    const double ratio = expected_masked / e_base;
    std::vector<double> out(p_base.size());
    std::transform(p_base.begin(), p_base.end(), out.begin(),
                   [ratio](double p) { return std::min(ratio * p, 1.0); });
    return out;
}

std::vector<double> ctf_probabilities(std::span<const double> p_base, int step, int n_steps,
                                      ExpectationConvention convention) {
    return ctf_probabilities(p_base, expected_masked_cosine(step, n_steps, p_base.size(), convention));
}

std::vector<double> masking_probabilities(const ScheduleConfig& sched, int step, std::span<const double> p_base) {
    if (sched.mode == MaskMode::ctf) {
        return ctf_probabilities(p_base, step, sched.n_steps, sched.convention);
    }
    // the uniform schedule follows the same convention as CTF so that the
    // two modes share the expected masked count at every step
    const double T = static_cast<double>(p_base.size());
    const double p = T > 0 ? expected_masked_cosine(step, sched.n_steps, p_base.size(), sched.convention) / T : 0.0;
    return std::vector<double>(p_base.size(), p);
}

MaskVector sample_mask(std::span<const double> probs, Rng& rng, int step) {
    MaskVector mask;
    mask.step = step;
    mask.probs.assign(probs.begin(), probs.end());
    mask.m.resize(probs.size());
    for (std::size_t t = 0; t < probs.size(); ++t) {
        mask.m[t] = rng.bernoulli(probs[t]) ? 1 : 0;
    }
    return mask;
}

TokenSequence apply_mask(std::span<const Token> x, const MaskVector& mask, Token mask_token) {
    if (x.size() != mask.size()) {
        throw UsageError("sequence and mask lengths differ");
    }
    TokenSequence out(x.begin(), x.end());
    for (std::size_t t = 0; t < out.size(); ++t) {
        if (mask.m[t]) {
            out[t] = mask_token;
        }
    }
    return out;
}

int sample_training_step(int n_steps, Rng& rng) {
    if (n_steps < 2) {
        return 0;
    }
    return 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n_steps - 1)));
}

std::string_view to_string(MaskMode mode) {
    return mode == MaskMode::ctf ? "ctf" : "uniform";
}

std::string_view to_string(ExpectationConvention convention) {
    return convention == ExpectationConvention::paper_sin ? "sin" : "cos";
}

MaskMode parse_mask_mode(std::string_view text) {
    if (text == "uniform") {
        return MaskMode::uniform_cosine;
    }
    if (text == "ctf") {
        return MaskMode::ctf;
    }
    throw UsageError("mask mode must be 'uniform' or 'ctf'");
}

ExpectationConvention parse_convention(std::string_view text) {
    if (text == "cos") {
        return ExpectationConvention::cos_consistent;
    }
    if (text == "sin") {
        return ExpectationConvention::paper_sin;
    }
    throw UsageError("convention must be 'cos' or 'sin'");
}

} // namespace mage
