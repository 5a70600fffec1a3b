#include "mage/evaluation.hpp"

#include <exception>

namespace mage {

namespace {

struct SequenceOutcome {
    TokenSequence decoded;
    std::vector<DecodeStep> trace;
};

SequenceOutcome evaluate_one(const PredictorModel& model, const TokenSequence& clean, const FrequencyTable& freq,
                             const ScheduleConfig& sched, const EvalSettings& settings, std::size_t index) {
    Rng rng = Rng::stream(settings.seed, index);
    const auto distorted = corrupt_sequence(clean, model.vocab_size, settings.rho, rng);
    const auto ctx = build_conditioning(distorted, model);
    DecodeOptions options;
    options.selection = settings.selection;
    options.freq = &freq;
    auto result = decode(model, ctx, sched, options, rng);
    SequenceOutcome out{std::move(result.tokens), std::move(result.trace)};
    if (settings.corrector != nullptr) {
        CorrectOptions copts = settings.correct;
        copts.freq = &freq;
        out.decoded = correct(out.decoded, model, ctx, *settings.corrector, copts, rng).tokens;
    }
    return out;
}

} // namespace

EvalOutcome evaluate(const PredictorModel& model, const Corpus& test, const FrequencyTable& train_freq,
                     const EvalSettings& settings, Execution exec) {
    test.validate();
    if (test.vocab_size != model.vocab_size || train_freq.vocab_size() != model.vocab_size) {
        throw UsageError("model, test corpus and frequency table disagree on the vocabulary");
    }
    ScheduleConfig sched = settings.schedule;
    sched.mask_token_id = model.mask_token();
    sched.validate(model.vocab_size);

    const auto n = static_cast<std::int64_t>(test.num_docs());
    std::vector<SequenceOutcome> outcomes(static_cast<std::size_t>(n));
    if (exec == Execution::parallel) {
        std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 4)
        for (std::int64_t k = 0; k < n; ++k) {
            try {
                outcomes[k] = evaluate_one(model, test.sequences[k], train_freq, sched, settings, static_cast<std::size_t>(k));
            } catch (...) {
#pragma omp critical
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        }
        if (failure) {
            std::rethrow_exception(failure);
        }
    } else {
        for (std::int64_t k = 0; k < n; ++k) {
            outcomes[k] = evaluate_one(model, test.sequences[k], train_freq, sched, settings, static_cast<std::size_t>(k));
        }
    }

    MetricsAccumulator acc(frequency_deciles(train_freq));
    EvalOutcome out;
    out.decoded.reserve(outcomes.size());
    for (std::size_t k = 0; k < outcomes.size(); ++k) {
        acc.add(test.sequences[k], outcomes[k].decoded, outcomes[k].trace);
        out.decoded.push_back(std::move(outcomes[k].decoded));
    }
    out.report = acc.finish();
    return out;
}

} // namespace mage
