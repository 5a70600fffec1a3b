#include "mage/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "mage/csv.hpp"

namespace mage {

namespace {

std::size_t round_half_up(double x) {
    return x <= 0.0 ? 0 : static_cast<std::size_t>(std::floor(x + 0.5));
}

Choice sample_choice(std::span<const double> row, double temperature, Rng& rng) {
    if (temperature <= 0.0) {
        return greedy_choice(row);
    }
    std::vector<double> w(row.size());
    double mx = -INFINITY;
    for (std::size_t v = 0; v < row.size(); ++v) {
        w[v] = row[v] > 0.0 ? std::log(row[v]) / temperature : -INFINITY;
        mx = std::max(mx, w[v]);
    }
    double total = 0.0;
    for (double& x : w) {
        x = std::exp(x - mx);
        total += x;
    }
    const double u = rng.uniform() * total;
    double acc = 0.0;
    for (std::size_t v = 0; v < w.size(); ++v) {
        acc += w[v];
        if (u < acc) {
            return {static_cast<Token>(v), row[v]};
        }
    }
    const auto last = static_cast<Token>(row.size() - 1);
    return {last, row[last]};
}

} // namespace

std::size_t DecodeState::open_count() const {
    return static_cast<std::size_t>(std::count(committed.begin(), committed.end(), std::uint8_t{0}));
}

std::vector<std::size_t> plan_open_counts(const ScheduleConfig& sched, std::size_t seq_len,
                                          std::span<const double> p_base) {
    const int N = sched.n_steps;
    if (N < 1) {
        throw UsageError("n_steps must be >= 1");
    }
    const bool use_ctf = sched.mode == MaskMode::ctf && !p_base.empty();
    if (use_ctf && p_base.size() != seq_len) {
        throw UsageError("p_base length must equal the sequence length");
    }
    std::vector<std::size_t> counts(static_cast<std::size_t>(N) + 1, 0);
    counts[0] = seq_len;
    for (int i = 1; i < N; ++i) {
        // decoding runs from fully masked (i = 0) to fully observed (i = N);
        // the sin form counts masked tokens from the observed end
        const int index = sched.convention == ExpectationConvention::paper_sin ? N - i : i;
        double expected = expected_masked_cosine(index, N, seq_len, sched.convention);
        if (use_ctf) {
            const auto p = ctf_probabilities(p_base, expected);
            expected = std::accumulate(p.begin(), p.end(), 0.0);
        }
        const std::size_t prev_cap = counts[i - 1] > 0 ? counts[i - 1] - 1 : 0;
        const std::size_t floor_room = std::min(static_cast<std::size_t>(N - i), prev_cap);
        counts[i] = std::max(std::min(round_half_up(expected), prev_cap), floor_room);
    }
    counts[N] = 0;
    return counts;
}

Choice greedy_choice(std::span<const double> row) {
    const auto it = std::max_element(row.begin(), row.end());
    return {static_cast<Token>(it - row.begin()), *it};
}

double confidence(const PredictionOutput& pred, const DecodeState& state, std::size_t position) {
    if (position >= state.committed.size() || state.committed[position]) {
        throw UsageError("confidence requested for a committed position");
    }
    return greedy_choice(pred.row(position)).probability;
}

DecodeResult decode(const PredictorModel& model, const ConditioningContext& ctx, const ScheduleConfig& sched,
                    const DecodeOptions& options, Rng& rng) {
    const std::size_t T = ctx.length();
    const Token M = model.mask_token();
    sched.validate(model.vocab_size);
    if (sched.mode == MaskMode::ctf && options.freq == nullptr) {
        throw UsageError("CTF decoding needs a frequency table");
    }

    DecodeState state;
    if (options.initial) {
        if (options.initial->size() != T) {
            throw UsageError("pre-committed sequence length differs from the conditioning");
        }
        state.current = *options.initial;
    } else {
        state.current.assign(T, M);
    }
    state.committed.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        state.committed[t] = state.current[t] == M ? 0 : 1;
    }
    state.confidences.assign(T, 0.0);
    const std::size_t initially_open = state.open_count();
    state.target_open_counts = plan_open_counts(sched, T);
    for (auto& c : state.target_open_counts) {
        c = std::min(c, initially_open);
    }

    DecodeResult result;
    const int N = sched.n_steps;
    std::vector<std::size_t> open;
    std::vector<Choice> choices(T);
    std::vector<double> priority(T, 0.0);
    for (int i = 0; i < N; ++i) {
        state.step = i;
        const auto pred = forward(model, state.current, ctx);
        ++result.forward_passes;

        open.clear();
        for (std::size_t t = 0; t < T; ++t) {
            if (!state.committed[t]) {
                open.push_back(t);
            }
        }
        DecodeStep trace{i, open.size(), 0.0};
        if (open.empty()) {
            result.trace.push_back(trace);
            continue;
        }

        const double temperature =
            options.selection.temperature * (1.0 - static_cast<double>(i) / static_cast<double>(N));
        for (const std::size_t t : open) {
            choices[t] = options.selection.kind == Selection::sample_temperature
                             ? sample_choice(pred.row(t), temperature, rng)
                             : greedy_choice(pred.row(t));
            priority[t] = choices[t].probability;
            trace.mean_confidence += choices[t].probability;
        }
        trace.mean_confidence /= static_cast<double>(open.size());

        if (sched.mode == MaskMode::ctf) {
            TokenSequence hypothesis = state.current;
            for (const std::size_t t : open) {
                hypothesis[t] = choices[t].token;
            }
            const auto p_base = sequence_base_probabilities(*options.freq, hypothesis);
            for (const std::size_t t : open) {
                priority[t] *= 1.0 - p_base[t];
            }
        }

        const std::size_t keep_open = std::min(state.target_open_counts[i + 1], open.size());
        const std::size_t n_commit = open.size() - keep_open;
        std::stable_sort(open.begin(), open.end(),
                         [&](std::size_t a, std::size_t b) { return priority[a] > priority[b]; });
        for (std::size_t k = 0; k < n_commit; ++k) {
            const std::size_t t = open[k];
            state.current[t] = choices[t].token;
            state.committed[t] = 1;
            state.confidences[t] = choices[t].probability;
        }
        result.trace.push_back(trace);
    }
    result.tokens = std::move(state.current);
    return result;
}

void write_decode_trace(std::ostream& out, std::span<const DecodeStep> trace, std::uint64_t config_hash) {
    write_csv_preamble(out, config_hash, "step,open_count,mean_confidence");
    for (const auto& s : trace) {
        out << s.step << ',' << s.open_count << ',' << format_real(s.mean_confidence) << '\n';
    }
}

} // namespace mage
