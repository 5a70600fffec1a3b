// Command-line front end: corpus generation, training, decoding and the
// experiment harness. Exit codes: 0 ok, 2 config/usage error, 3 numeric failure.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

#include "mage/config.hpp"
#include "mage/corpus.hpp"
#include "mage/corrector.hpp"
#include "mage/csv.hpp"
#include "mage/decoder.hpp"
#include "mage/harness.hpp"
#include "mage/predictor.hpp"
#include "mage/schedule.hpp"

namespace {

using namespace mage;

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

/// Raw `--key value` strings for every config key, applied over --config.
struct ConfigFlags {
    std::string config_path;
    std::map<std::string, std::string> values;

    void attach(CLI::App* app, bool seed_required) {
        app->add_option("--config", config_path, "key = value experiment config file");
        for (const auto& key : config_keys()) {
            auto* opt = app->add_option("--" + key.name, values[key.name], key.help);
            if (key.name == "seed" && seed_required) {
                opt->required();
            }
        }
    }

    ExperimentConfig build(const CLI::App* app) const {
        ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
        for (const auto& key : config_keys()) {
            if (app->count("--" + key.name) > 0) {
                apply_setting(cfg, key.name, values.at(key.name), "--" + key.name);
            }
        }
        return cfg;
    }
};

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw UsageError("cannot write " + path);
    }
    return out;
}

void print_report(const MetricsReport& r) {
    std::printf("token_accuracy %.6f\nexact_match %.6f\nmean_edit_distance %.4f\nbottom_decile_accuracy %.6f\n",
                r.token_accuracy, r.exact_match, r.mean_edit_distance, r.bottom_decile_accuracy());
    for (std::size_t k = 0; k < r.decile_accuracy.size(); ++k) {
        std::printf("decile %zu: %zu positions, accuracy %.6f\n", k, r.decile_positions[k], r.decile_accuracy[k]);
    }
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        ExperimentConfig probe;
        apply_setting(probe, "seed", item, "--seed");
        seeds.push_back(*probe.seed);
    }
    if (seeds.empty()) {
        throw ConfigError("--seed", "no seeds given");
    }
    return seeds;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Masked generative sequence enhancement toolkit"};
    app.require_subcommand(1);

    // gen-corpus
    CorpusParams corpus_params;
    std::string corpus_out;
    std::string freq_csv;
    auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic Zipf/Markov token corpus");
    gen->add_option("--vocab_size", corpus_params.vocab_size, "vocabulary size V")->capture_default_str();
    gen->add_option("--num_docs", corpus_params.num_docs, "number of sequences")->capture_default_str();
    gen->add_option("--seq_len", corpus_params.seq_len, "sequence length T")->capture_default_str();
    gen->add_option("--zipf_exponent", corpus_params.zipf_exponent, "Zipf exponent s")->capture_default_str();
    gen->add_option("--markov_order", corpus_params.markov_order, "0 or 1")->capture_default_str();
    gen->add_option("--seed", corpus_params.seed, "generator seed")->required();
    gen->add_option("--out", corpus_out, "corpus text file")->required();
    gen->add_option("--freq-csv", freq_csv, "also write token,f,z,p_base");

    // train
    ConfigFlags train_flags;
    std::string train_corpus, model_out, curve_out;
    auto* train_cmd = app.add_subcommand("train", "train the masked-token predictor");
    train_flags.attach(train_cmd, true);
    train_cmd->add_option("--corpus", train_corpus, "training corpus file")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--out", model_out, "predictor checkpoint")->required();
    train_cmd->add_option("--curve", curve_out, "learning curve CSV");

    // train-corrector
    ConfigFlags corr_flags;
    std::string corr_corpus, corr_out, corr_curve;
    auto* corr_cmd = app.add_subcommand("train-corrector", "train the substitution detector");
    corr_flags.attach(corr_cmd, true);
    corr_cmd->add_option("--corpus", corr_corpus, "training corpus file")->required()->check(CLI::ExistingFile);
    corr_cmd->add_option("--out", corr_out, "corrector checkpoint")->required();
    corr_cmd->add_option("--curve", corr_curve, "loss curve CSV");

    // decode
    ConfigFlags dec_flags;
    std::string dec_model, dec_input, dec_out, dec_trace, dec_freq_corpus, dec_corrector;
    auto* dec_cmd = app.add_subcommand("decode", "enhance distorted sequences by iterative decoding");
    dec_flags.attach(dec_cmd, true);
    dec_cmd->add_option("--model", dec_model, "predictor checkpoint")->required()->check(CLI::ExistingFile);
    dec_cmd->add_option("--input", dec_input, "distorted sequences (corpus format)")->required()->check(CLI::ExistingFile);
    dec_cmd->add_option("--out", dec_out, "decoded sequences (corpus format)")->required();
    dec_cmd->add_option("--trace", dec_trace, "per-step CSV step,open_count,mean_confidence");
    dec_cmd->add_option("--train-corpus", dec_freq_corpus, "corpus for document frequencies (needed for ctf)")
        ->check(CLI::ExistingFile);
    dec_cmd->add_option("--corrector", dec_corrector, "corrector checkpoint")->check(CLI::ExistingFile);

    // eval / ablate-steps / compare-modes
    ConfigFlags eval_flags;
    auto* eval_cmd = app.add_subcommand("eval", "run the full pipeline and report metrics");
    eval_flags.attach(eval_cmd, true);

    ConfigFlags ablate_flags;
    std::string ablate_steps_text;
    auto* ablate_cmd = app.add_subcommand("ablate-steps", "accuracy versus number of decoding steps");
    ablate_flags.attach(ablate_cmd, true);
    ablate_cmd->add_option("--steps", ablate_steps_text, "comma-separated step counts (default: ablation_steps)");

    ConfigFlags compare_flags;
    auto* compare_cmd = app.add_subcommand("compare-modes", "uniform vs ctf masking, corrector off/on");
    compare_flags.attach(compare_cmd, true);

    // dump-schedule
    int dump_steps = 20;
    int dump_len = 64;
    std::string dump_conv = "both";
    std::string dump_out;
    auto* dump_cmd = app.add_subcommand("dump-schedule", "CSV of the expected masked count per step");
    dump_cmd->add_option("--steps", dump_steps, "N")->capture_default_str();
    dump_cmd->add_option("--seq_len", dump_len, "T")->capture_default_str();
    dump_cmd->add_option("--convention", dump_conv, "cos | sin | both")->capture_default_str();
    dump_cmd->add_option("--out", dump_out, "output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*gen) {
            const auto corpus = generate_corpus(corpus_params);
            save_corpus(corpus_out, corpus);
            if (!freq_csv.empty()) {
                std::ostringstream key;
                key << "gen-corpus " << corpus_params.vocab_size << ' ' << corpus_params.num_docs << ' '
                    << corpus_params.seq_len << ' ' << format_real(corpus_params.zipf_exponent) << ' '
                    << corpus_params.markov_order << ' ' << corpus_params.seed;
                auto out = open_out(freq_csv);
                write_frequency_csv(out, build_frequency_table(corpus), fnv1a64(key.str()));
            }
        } else if (*train_cmd) {
            const auto cfg = train_flags.build(train_cmd);
            const auto corpus = load_corpus(train_corpus);
            ExperimentConfig scoped = cfg;
            scoped.vocab_size = corpus.vocab_size;
            scoped.validate();
            const auto freq = build_frequency_table(corpus);
            const auto result = train(corpus, freq, training_schedule(scoped, scoped.mask_mode), predictor_hyper(scoped));
            save_predictor(model_out, result.model);
            if (!curve_out.empty()) {
                auto out = open_out(curve_out);
                write_learning_curve(out, result.curve, config_hash(scoped));
            }
            std::printf("final loss %.6f, masked accuracy %.6f\n", result.model.final_loss,
                        result.curve.empty() ? 0.0 : result.curve.back().masked_acc);
        } else if (*corr_cmd) {
            auto cfg = corr_flags.build(corr_cmd);
            const auto corpus = load_corpus(corr_corpus);
            cfg.vocab_size = corpus.vocab_size;
            cfg.validate();
            const auto result = train_corrector(corpus, corrector_hyper(cfg));
            save_corrector(corr_out, result.model);
            if (!corr_curve.empty()) {
                auto out = open_out(corr_curve);
                write_csv_preamble(out, config_hash(cfg), "epoch,loss");
                for (const auto& e : result.curve) {
                    out << e.epoch << ',' << format_real(e.loss) << '\n';
                }
            }
        } else if (*dec_cmd) {
            auto cfg = dec_flags.build(dec_cmd);
            const auto model = load_predictor(dec_model);
            const auto input = load_corpus(dec_input);
            if (input.vocab_size != model.vocab_size) {
                throw UsageError("input vocabulary differs from the model's");
            }
            cfg.vocab_size = model.vocab_size;
            cfg.validate();
            FrequencyTable freq;
            if (!dec_freq_corpus.empty()) {
                freq = build_frequency_table(load_corpus(dec_freq_corpus));
            } else if (cfg.mask_mode == MaskMode::ctf) {
                throw ConfigError("--train-corpus", "ctf decoding needs document frequencies");
            }
            std::optional<CorrectorModel> corrector;
            if (!dec_corrector.empty()) {
                corrector = load_corrector(dec_corrector);
            }
            const auto settings = eval_settings(cfg, cfg.decode_steps, cfg.mask_mode, corrector ? &*corrector : nullptr);
            ScheduleConfig sched = settings.schedule;
            sched.mask_token_id = model.mask_token();

            Corpus decoded{{}, input.vocab_size, input.seq_len, input.seed};
            std::vector<DecodeStep> mean_trace;
            for (std::size_t k = 0; k < input.num_docs(); ++k) {
                Rng rng = Rng::stream(settings.seed, k);
                const auto ctx = build_conditioning(input.sequences[k], model);
                DecodeOptions options;
                options.selection = settings.selection;
                options.freq = dec_freq_corpus.empty() ? nullptr : &freq;
                auto result = decode(model, ctx, sched, options, rng);
                auto tokens = std::move(result.tokens);
                if (corrector) {
                    CorrectOptions copts = settings.correct;
                    copts.freq = options.freq;
                    tokens = correct(tokens, model, ctx, *corrector, copts, rng).tokens;
                }
                decoded.sequences.push_back(std::move(tokens));
                mean_trace.resize(result.trace.size());
                for (std::size_t i = 0; i < result.trace.size(); ++i) {
                    mean_trace[i].step = result.trace[i].step;
                    mean_trace[i].open_count += result.trace[i].open_count;
                    mean_trace[i].mean_confidence += result.trace[i].mean_confidence;
                }
            }
            save_corpus(dec_out, decoded);
            if (!dec_trace.empty()) {
                const double n = static_cast<double>(std::max<std::size_t>(input.num_docs(), 1));
                for (auto& s : mean_trace) {
                    s.open_count = static_cast<std::size_t>(static_cast<double>(s.open_count) / n + 0.5);
                    s.mean_confidence /= n;
                }
                auto out = open_out(dec_trace);
                write_decode_trace(out, mean_trace, config_hash(cfg));
            }
        } else if (*eval_cmd) {
            const auto cfg = eval_flags.build(eval_cmd);
            print_report(run_experiment(cfg).report);
        } else if (*ablate_cmd) {
            auto cfg = ablate_flags.build(ablate_cmd);
            if (!ablate_steps_text.empty()) {
                apply_setting(cfg, "ablation_steps", ablate_steps_text, "--steps");
            }
            for (const auto& row : ablate_steps(cfg, cfg.ablation_steps)) {
                std::printf("n_steps %d accuracy %.6f edit_distance %.4f\n", row.n_steps, row.report.token_accuracy,
                            row.report.mean_edit_distance);
            }
        } else if (*compare_cmd) {
            const auto seeds = parse_seed_list(compare_flags.values.at("seed"));
            compare_flags.values["seed"] = std::to_string(seeds.front());
            auto cfg = compare_flags.build(compare_cmd);
            const std::string base_dir = cfg.output_dir;
            for (const auto seed : seeds) {
                cfg.seed = seed;
                cfg.output_dir = seeds.size() > 1 ? base_dir + "/seed_" + std::to_string(seed) : base_dir;
                const auto cells = compare_masking_modes(cfg);
                std::printf("seed %llu\n", static_cast<unsigned long long>(seed));
                for (const auto& c : cells) {
                    std::printf("  %-18s accuracy %.6f bottom_decile %.6f exact %.6f\n", c.name.c_str(),
                                c.report.token_accuracy, c.report.bottom_decile_accuracy(), c.report.exact_match);
                }
                std::printf("  ctf - uniform bottom-decile margin %+.6f\n",
                            cells[2].report.bottom_decile_accuracy() - cells[0].report.bottom_decile_accuracy());
            }
        } else if (*dump_cmd) {
            if (dump_conv != "cos" && dump_conv != "sin" && dump_conv != "both") {
                throw ConfigError("--convention", "must be cos, sin or both");
            }
            if (dump_steps < 1 || dump_len < 1) {
                throw ConfigError("--steps", "steps and seq_len must be >= 1");
            }
            std::ostringstream csv;
            const std::string key = "dump-schedule " + std::to_string(dump_steps) + ' ' + std::to_string(dump_len) + ' ' + dump_conv;
            write_csv_preamble(csv, fnv1a64(key), "step,expected_masked,convention");
            for (const auto conv : {ExpectationConvention::cos_consistent, ExpectationConvention::paper_sin}) {
                if (dump_conv != "both" && dump_conv != to_string(conv)) {
                    continue;
                }
                for (int i = 0; i <= dump_steps; ++i) {
                    csv << i << ',' << format_real(expected_masked_cosine(i, dump_steps, static_cast<std::size_t>(dump_len), conv))
                        << ',' << to_string(conv) << '\n';
                }
            }
            if (dump_out.empty()) {
                std::cout << csv.str();
            } else {
                auto out = open_out(dump_out);
                out << csv.str();
            }
        }
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return kExitNumeric;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitConfig;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kExitConfig;
    }
    return 0;
}
