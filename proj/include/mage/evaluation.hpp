#pragma once

#include <cstdint>
#include <vector>

#include "mage/corpus.hpp"
#include "mage/corrector.hpp"
#include "mage/decoder.hpp"
#include "mage/metrics.hpp"
#include "mage/parallel.hpp"
#include "mage/predictor.hpp"

namespace mage {

struct EvalSettings {
    ScheduleConfig schedule;      ///< decode schedule; mask id is taken from the model
    SelectionRule selection;
    double rho = 0.3;             ///< corruption rate of the conditioning observation
    std::uint64_t seed = 0;
    const CorrectorModel* corrector = nullptr;
    CorrectOptions correct;
};

struct EvalOutcome {
    MetricsReport report;
    std::vector<TokenSequence> decoded;
};

/// Enhancement evaluation over held-out clean sequences.
///
/// Sequence k draws from stream k of `settings.seed`: its clean tokens are
/// corrupted at rate rho to form the conditioning, then decoded (and
/// optionally corrected) and scored against the clean tokens. Streams are
/// per sequence and the report is reduced in sequence order, so serial and
/// parallel runs give identical results for any thread count.
EvalOutcome evaluate(const PredictorModel& model, const Corpus& test, const FrequencyTable& train_freq,
                     const EvalSettings& settings, Execution exec = Execution::parallel);

} // namespace mage
