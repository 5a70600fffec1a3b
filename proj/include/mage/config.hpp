#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mage/corrector.hpp"
#include "mage/decoder.hpp"
#include "mage/schedule.hpp"

namespace mage {

/// Everything an experiment run depends on. Text form is one `key = value`
/// per line; `#` starts a comment. See `config_keys()` for the key list.
struct ExperimentConfig {
    // corpus
    int vocab_size = 64;
    int seq_len = 64;
    int num_train = 2000;
    int num_test = 200;
    double zipf_exponent = 1.2;
    int markov_order = 1;
    std::string corpus_file; ///< optional; overrides generation when set

    // schedule and decoding
    MaskMode mask_mode = MaskMode::uniform_cosine;
    ExpectationConvention convention = ExpectationConvention::cos_consistent;
    int train_steps = 20;
    int decode_steps = 20;
    std::vector<int> ablation_steps{1, 2, 5, 10, 20, 40};
    Selection selection = Selection::greedy_confidence;
    double temperature = 1.0;

    // predictor
    int embed_dim = 16;
    int radius = 1;
    double lr = 0.5;
    int epochs = 10;
    int batch = 16;
    double rho = 0.3;
    double init_scale = 0.1;

    // corrector
    bool use_corrector = false;
    int corr_embed_dim = 8;
    int corr_radius = 2;
    double corr_lr = 0.5;
    int corr_epochs = 5;
    int corr_batch = 16;
    double corr_max_rate = kCorrectorMaxRate;
    double theta = 0.5;
    int rounds = 1;
    Refill refill = Refill::single_step_argmax;

    std::optional<std::uint64_t> seed;

    // not part of the reproducibility hash
    std::string output_dir = "mage_out";
    int threads = 0;

    /// Throws ConfigError naming the first invalid key.
    void validate() const;

    std::uint64_t require_seed() const;
};

struct ConfigKey {
    std::string name;
    std::string help;
    bool hashed = true;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<ConfigKey>& config_keys();

/// Sets one key from its text value; errors name `where` (file:line or flag).
void apply_setting(ExperimentConfig& cfg, std::string_view key, const std::string& value, const std::string& where = {});

ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// `key=value` lines for every hashed key, in registry order.
std::string canonical_config(const ExperimentConfig& cfg);
std::uint64_t config_hash(const ExperimentConfig& cfg);

/// Independent seed for a named pipeline stage.
enum class SeedStage : std::uint64_t { corpus = 0, predictor = 1, corrector = 2, evaluation = 3 };
std::uint64_t stage_seed(std::uint64_t master, SeedStage stage);

} // namespace mage
