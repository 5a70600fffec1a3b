#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mage/config.hpp"
#include "mage/corpus.hpp"
#include "mage/corrector.hpp"
#include "mage/evaluation.hpp"
#include "mage/metrics.hpp"
#include "mage/predictor.hpp"

namespace mage {

struct PreparedData {
    Corpus train;
    Corpus test;
    FrequencyTable freq; ///< over the training split
};

/// Generated (or loaded) corpus split into train / held-out, with train statistics.
PreparedData prepare_data(const ExperimentConfig& cfg);

ScheduleConfig training_schedule(const ExperimentConfig& cfg, MaskMode mode);
TrainHyper predictor_hyper(const ExperimentConfig& cfg);
CorrectorHyper corrector_hyper(const ExperimentConfig& cfg);
EvalSettings eval_settings(const ExperimentConfig& cfg, int decode_steps, MaskMode mode,
                           const CorrectorModel* corrector);

struct ExperimentResult {
    MetricsReport report;
    std::vector<EpochStats> curve;
};

/// Full pipeline. Writes frequency.csv, learning_curve.csv, predictor.bin,
/// metrics.csv, deciles.csv and decode_trace.csv (plus corrector.bin and
/// corrector_curve.csv with the corrector on) into cfg.output_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

struct AblationRow {
    int n_steps = 0;
    MetricsReport report;
};

/// One predictor, one evaluation per step count. Writes ablation.csv
/// (`n_steps,accuracy,edit_distance`).
std::vector<AblationRow> ablate_steps(const ExperimentConfig& cfg, std::span<const int> steps);

struct ComparisonCell {
    std::string name;
    MaskMode mode = MaskMode::uniform_cosine;
    bool corrector = false;
    MetricsReport report;
};

/// uniform / ctf x corrector off / on, all sharing the corpus, seeds and
/// corrector. Writes compare.csv and compare_deciles.csv.
std::vector<ComparisonCell> compare_masking_modes(const ExperimentConfig& cfg);

/// CSV `metric,value`.
void write_metrics_csv(std::ostream& out, const MetricsReport& report, std::uint64_t config_hash);
/// CSV `decile,positions,correct,accuracy`.
void write_deciles_csv(std::ostream& out, const MetricsReport& report, std::uint64_t config_hash);

} // namespace mage
