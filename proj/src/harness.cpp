#include "mage/harness.hpp"

#include <fstream>
#include <optional>
#include <ostream>

#include "mage/csv.hpp"
#include "mage/parallel.hpp"

namespace mage {

namespace {

std::filesystem::path prepare_output(const ExperimentConfig& cfg) {
    std::filesystem::path dir(cfg.output_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw ConfigError("output_dir", "cannot create " + dir.string() + ": " + ec.message());
    }
    return dir;
}

std::ofstream open_artifact(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ConfigError("output_dir", "cannot write " + path.string());
    }
    return out;
}

void begin(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.threads > 0) {
        set_threads(cfg.threads);
    }
}

} // namespace

PreparedData prepare_data(const ExperimentConfig& cfg) {
    Corpus all;
    std::size_t num_train = static_cast<std::size_t>(cfg.num_train);
    if (!cfg.corpus_file.empty()) {
        all = load_corpus(cfg.corpus_file);
        if (num_train >= all.num_docs()) {
            throw ConfigError("num_train", "corpus file has only " + std::to_string(all.num_docs()) + " sequences");
        }
    } else {
        CorpusParams params;
        params.vocab_size = cfg.vocab_size;
        params.seq_len = cfg.seq_len;
        params.num_docs = cfg.num_train + cfg.num_test;
        params.zipf_exponent = cfg.zipf_exponent;
        params.markov_order = cfg.markov_order;
        params.seed = stage_seed(cfg.require_seed(), SeedStage::corpus);
        all = generate_corpus(params);
    }
    auto [train, test] = split_corpus(all, num_train);
    PreparedData data{std::move(train), std::move(test), {}};
    data.freq = build_frequency_table(data.train);
    return data;
}

ScheduleConfig training_schedule(const ExperimentConfig& cfg, MaskMode mode) {
    ScheduleConfig sched;
    sched.n_steps = cfg.train_steps;
    sched.mode = mode;
    sched.convention = cfg.convention;
    sched.mask_token_id = cfg.vocab_size;
    return sched;
}

TrainHyper predictor_hyper(const ExperimentConfig& cfg) {
    TrainHyper h;
    h.lr = cfg.lr;
    h.epochs = cfg.epochs;
    h.batch = cfg.batch;
    h.rho = cfg.rho;
    h.seed = stage_seed(cfg.require_seed(), SeedStage::predictor);
    h.embed_dim = cfg.embed_dim;
    h.radius = cfg.radius;
    h.init_scale = cfg.init_scale;
    return h;
}

CorrectorHyper corrector_hyper(const ExperimentConfig& cfg) {
    CorrectorHyper h;
    h.lr = cfg.corr_lr;
    h.epochs = cfg.corr_epochs;
    h.batch = cfg.corr_batch;
    h.seed = stage_seed(cfg.require_seed(), SeedStage::corrector);
    h.max_rate = cfg.corr_max_rate;
    h.embed_dim = cfg.corr_embed_dim;
    h.radius = cfg.corr_radius;
    h.init_scale = cfg.init_scale;
    return h;
}

EvalSettings eval_settings(const ExperimentConfig& cfg, int decode_steps, MaskMode mode,
                           const CorrectorModel* corrector) {
    EvalSettings s;
    s.schedule.n_steps = decode_steps;
    s.schedule.mode = mode;
    s.schedule.convention = cfg.convention;
    s.schedule.mask_token_id = cfg.vocab_size;
    s.selection = {cfg.selection, cfg.temperature};
    s.rho = cfg.rho;
    s.seed = stage_seed(cfg.require_seed(), SeedStage::evaluation);
    s.corrector = corrector;
    s.correct.threshold = cfg.theta;
    s.correct.rounds = cfg.rounds;
    s.correct.refill = cfg.refill;
    s.correct.refill_schedule = s.schedule;
    return s;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    begin(cfg);
    const auto dir = prepare_output(cfg);
    const auto hash = config_hash(cfg);
    const auto data = prepare_data(cfg);
    {
        auto out = open_artifact(dir / "frequency.csv");
        write_frequency_csv(out, data.freq, hash);
    }

    const auto trained = train(data.train, data.freq, training_schedule(cfg, cfg.mask_mode), predictor_hyper(cfg));
    save_predictor(dir / "predictor.bin", trained.model);
    {
        auto out = open_artifact(dir / "learning_curve.csv");
        write_learning_curve(out, trained.curve, hash);
    }

    std::optional<CorrectorModel> corrector;
    if (cfg.use_corrector) {
        auto ct = train_corrector(data.train, corrector_hyper(cfg));
        save_corrector(dir / "corrector.bin", ct.model);
        auto out = open_artifact(dir / "corrector_curve.csv");
        write_csv_preamble(out, hash, "epoch,loss");
        for (const auto& e : ct.curve) {
            out << e.epoch << ',' << format_real(e.loss) << '\n';
        }
        corrector = std::move(ct.model);
    }

    const auto settings = eval_settings(cfg, cfg.decode_steps, cfg.mask_mode, corrector ? &*corrector : nullptr);
    const auto outcome = evaluate(trained.model, data.test, data.freq, settings);
    {
        auto out = open_artifact(dir / "metrics.csv");
        write_metrics_csv(out, outcome.report, hash);
    }
    {
        auto out = open_artifact(dir / "deciles.csv");
        write_deciles_csv(out, outcome.report, hash);
    }
    {
        auto out = open_artifact(dir / "decode_trace.csv");
        write_decode_trace(out, outcome.report.trace, hash);
    }
    return {outcome.report, trained.curve};
}

std::vector<AblationRow> ablate_steps(const ExperimentConfig& cfg, std::span<const int> steps) {
    begin(cfg);
    if (steps.empty()) {
        throw ConfigError("ablation_steps", "must not be empty");
    }
    for (const int n : steps) {
        if (n < 1) {
            throw ConfigError("ablation_steps", "every entry must be >= 1");
        }
    }
    const auto dir = prepare_output(cfg);
    const auto hash = config_hash(cfg);
    const auto data = prepare_data(cfg);
    const auto trained = train(data.train, data.freq, training_schedule(cfg, cfg.mask_mode), predictor_hyper(cfg));

    std::optional<CorrectorModel> corrector;
    if (cfg.use_corrector) {
        corrector = train_corrector(data.train, corrector_hyper(cfg)).model;
    }

    std::vector<AblationRow> rows;
    for (const int n : steps) {
        const auto settings = eval_settings(cfg, n, cfg.mask_mode, corrector ? &*corrector : nullptr);
        rows.push_back({n, evaluate(trained.model, data.test, data.freq, settings).report});
    }
    auto out = open_artifact(dir / "ablation.csv");
    write_csv_preamble(out, hash, "n_steps,accuracy,edit_distance");
    for (const auto& r : rows) {
        out << r.n_steps << ',' << format_real(r.report.token_accuracy) << ','
            << format_real(r.report.mean_edit_distance) << '\n';
    }
    return rows;
}

std::vector<ComparisonCell> compare_masking_modes(const ExperimentConfig& cfg) {
    begin(cfg);
    const auto dir = prepare_output(cfg);
    const auto hash = config_hash(cfg);
    const auto data = prepare_data(cfg);
    const auto hyper = predictor_hyper(cfg);
    const auto uniform_model = train(data.train, data.freq, training_schedule(cfg, MaskMode::uniform_cosine), hyper).model;
    const auto ctf_model = train(data.train, data.freq, training_schedule(cfg, MaskMode::ctf), hyper).model;
    const auto corrector = train_corrector(data.train, corrector_hyper(cfg)).model;

    std::vector<ComparisonCell> cells;
    for (const MaskMode mode : {MaskMode::uniform_cosine, MaskMode::ctf}) {
        const auto& model = mode == MaskMode::ctf ? ctf_model : uniform_model;
        for (const bool with_corrector : {false, true}) {
            ComparisonCell cell;
            cell.mode = mode;
            cell.corrector = with_corrector;
            cell.name = std::string(to_string(mode)) + (with_corrector ? "+corrector" : "");
            const auto settings = eval_settings(cfg, cfg.decode_steps, mode, with_corrector ? &corrector : nullptr);
            cell.report = evaluate(model, data.test, data.freq, settings).report;
            cells.push_back(std::move(cell));
        }
    }

    {
        auto out = open_artifact(dir / "compare.csv");
        write_csv_preamble(out, hash,
                           "cell,mask_mode,corrector,token_accuracy,bottom_decile_accuracy,exact_match,mean_edit_distance");
        for (const auto& c : cells) {
            out << c.name << ',' << to_string(c.mode) << ',' << (c.corrector ? 1 : 0) << ','
                << format_real(c.report.token_accuracy) << ',' << format_real(c.report.bottom_decile_accuracy()) << ','
                << format_real(c.report.exact_match) << ',' << format_real(c.report.mean_edit_distance) << '\n';
        }
    }
    {
        auto out = open_artifact(dir / "compare_deciles.csv");
        write_csv_preamble(out, hash, "cell,decile,positions,correct,accuracy");
        for (const auto& c : cells) {
            for (std::size_t k = 0; k < c.report.decile_positions.size(); ++k) {
                out << c.name << ',' << k << ',' << c.report.decile_positions[k] << ',' << c.report.decile_correct[k]
                    << ',' << format_real(c.report.decile_accuracy[k]) << '\n';
            }
        }
    }
    return cells;
}

void write_metrics_csv(std::ostream& out, const MetricsReport& report, std::uint64_t config_hash) {
    write_csv_preamble(out, config_hash, "metric,value");
    out << "token_accuracy," << format_real(report.token_accuracy) << '\n'
        << "exact_match," << format_real(report.exact_match) << '\n'
        << "mean_edit_distance," << format_real(report.mean_edit_distance) << '\n'
        << "bottom_decile_accuracy," << format_real(report.bottom_decile_accuracy()) << '\n'
        << "sequences," << report.sequences << '\n'
        << "positions," << report.positions << '\n';
}

void write_deciles_csv(std::ostream& out, const MetricsReport& report, std::uint64_t config_hash) {
    write_csv_preamble(out, config_hash, "decile,positions,correct,accuracy");
    for (std::size_t k = 0; k < report.decile_positions.size(); ++k) {
        out << k << ',' << report.decile_positions[k] << ',' << report.decile_correct[k] << ','
            << format_real(report.decile_accuracy[k]) << '\n';
    }
}

} // namespace mage
