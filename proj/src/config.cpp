#include "mage/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

#include "mage/csv.hpp"
#include "mage/rng.hpp"

namespace mage {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <typename Int>
Int parse_int(const std::string& v) {
    Int out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw UsageError("expected an integer, got '" + v + "'");
    }
    return out;
}

double parse_real(const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty() || !std::isfinite(out)) {
        throw UsageError("expected a finite real number, got '" + v + "'");
    }
    return out;
}

bool parse_bool(const std::string& v) {
    if (v == "1" || v == "true" || v == "on" || v == "yes") {
        return true;
    }
    if (v == "0" || v == "false" || v == "off" || v == "no") {
        return false;
    }
    throw UsageError("expected a boolean, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& v) {
    std::vector<int> out;
    std::string item;
    std::istringstream ss(v);
    while (std::getline(ss, item, ',')) {
        out.push_back(parse_int<int>(trim(item)));
    }
    if (out.empty()) {
        throw UsageError("expected a comma-separated list of integers");
    }
    return out;
}

std::string join(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out += (i ? "," : "") + std::to_string(v[i]);
    }
    return out;
}

template <typename Field>
ConfigKey int_key(const char* name, const char* help, Field field) {
    return {name, help, true,
            [field](ExperimentConfig& c, const std::string& v) { c.*field = parse_int<int>(v); },
            [field](const ExperimentConfig& c) { return std::to_string(c.*field); }};
}

template <typename Field>
ConfigKey real_key(const char* name, const char* help, Field field) {
    return {name, help, true,
            [field](ExperimentConfig& c, const std::string& v) { c.*field = parse_real(v); },
            [field](const ExperimentConfig& c) { return format_real(c.*field); }};
}

std::vector<ConfigKey> make_keys() {
    using C = ExperimentConfig;
    std::vector<ConfigKey> keys;
    keys.push_back(int_key("vocab_size", "vocabulary size V", &C::vocab_size));
    keys.push_back(int_key("seq_len", "sequence length T", &C::seq_len));
    keys.push_back(int_key("num_train", "training sequences", &C::num_train));
    keys.push_back(int_key("num_test", "held-out sequences", &C::num_test));
    keys.push_back(real_key("zipf_exponent", "Zipf exponent s of the token marginal", &C::zipf_exponent));
    keys.push_back(int_key("markov_order", "0 = iid tokens, 1 = clustered Markov chain", &C::markov_order));
    keys.push_back({"corpus_file", "load the corpus instead of generating it", true,
                    [](C& c, const std::string& v) { c.corpus_file = v; },
                    [](const C& c) { return c.corpus_file; }});
    keys.push_back({"mask_mode", "uniform | ctf", true,
                    [](C& c, const std::string& v) { c.mask_mode = parse_mask_mode(v); },
                    [](const C& c) { return std::string(to_string(c.mask_mode)); }});
    keys.push_back({"convention", "cos | sin expected-count convention", true,
                    [](C& c, const std::string& v) { c.convention = parse_convention(v); },
                    [](const C& c) { return std::string(to_string(c.convention)); }});
    keys.push_back(int_key("train_steps", "schedule steps N used to draw training mask ratios", &C::train_steps));
    keys.push_back(int_key("decode_steps", "decoding steps N", &C::decode_steps));
    keys.push_back({"ablation_steps", "comma-separated step counts for ablate-steps", true,
                    [](C& c, const std::string& v) { c.ablation_steps = parse_int_list(v); },
                    [](const C& c) { return join(c.ablation_steps); }});
    keys.push_back({"selection", "greedy | sample", true,
                    [](C& c, const std::string& v) {
                        if (v == "greedy") {
                            c.selection = Selection::greedy_confidence;
                        } else if (v == "sample") {
                            c.selection = Selection::sample_temperature;
                        } else {
                            throw UsageError("selection must be 'greedy' or 'sample'");
                        }
                    },
                    [](const C& c) {
                        return std::string(c.selection == Selection::sample_temperature ? "sample" : "greedy");
                    }});
    keys.push_back(real_key("temperature", "initial sampling temperature", &C::temperature));
    keys.push_back(int_key("embed_dim", "predictor embedding size D", &C::embed_dim));
    keys.push_back(int_key("radius", "predictor window radius r", &C::radius));
    keys.push_back(real_key("lr", "predictor learning rate", &C::lr));
    keys.push_back(int_key("epochs", "predictor epochs", &C::epochs));
    keys.push_back(int_key("batch", "predictor batch size", &C::batch));
    keys.push_back(real_key("rho", "conditioning corruption rate", &C::rho));
    keys.push_back(real_key("init_scale", "uniform init half-width", &C::init_scale));
    keys.push_back({"use_corrector", "run the corrector after decoding", true,
                    [](C& c, const std::string& v) { c.use_corrector = parse_bool(v); },
                    [](const C& c) { return std::string(c.use_corrector ? "true" : "false"); }});
    keys.push_back(int_key("corr_embed_dim", "corrector embedding size", &C::corr_embed_dim));
    keys.push_back(int_key("corr_radius", "corrector window radius", &C::corr_radius));
    keys.push_back(real_key("corr_lr", "corrector learning rate", &C::corr_lr));
    keys.push_back(int_key("corr_epochs", "corrector epochs", &C::corr_epochs));
    keys.push_back(int_key("corr_batch", "corrector batch size", &C::corr_batch));
    keys.push_back(real_key("corr_max_rate", "upper bound of the corrector corruption rate", &C::corr_max_rate));
    keys.push_back(real_key("theta", "suspicion threshold", &C::theta));
    keys.push_back(int_key("rounds", "correction rounds", &C::rounds));
    keys.push_back({"refill", "argmax | decode", true,
                    [](C& c, const std::string& v) {
                        if (v == "argmax") {
                            c.refill = Refill::single_step_argmax;
                        } else if (v == "decode") {
                            c.refill = Refill::full_decode;
                        } else {
                            throw UsageError("refill must be 'argmax' or 'decode'");
                        }
                    },
                    [](const C& c) { return std::string(c.refill == Refill::full_decode ? "decode" : "argmax"); }});
    keys.push_back({"seed", "master seed", true,
                    [](C& c, const std::string& v) { c.seed = parse_int<std::uint64_t>(v); },
                    [](const C& c) { return c.seed ? std::to_string(*c.seed) : std::string("unset"); }});
    keys.push_back({"output_dir", "artifact directory", false,
                    [](C& c, const std::string& v) { c.output_dir = v; },
                    [](const C& c) { return c.output_dir; }});
    keys.push_back({"threads", "OpenMP threads (0 = runtime default)", false,
                    [](C& c, const std::string& v) { c.threads = parse_int<int>(v); },
                    [](const C& c) { return std::to_string(c.threads); }});
    return keys;
}

} // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = make_keys();
    return keys;
}

void apply_setting(ExperimentConfig& cfg, std::string_view key, const std::string& value, const std::string& where) {
    const std::string field = where.empty() ? std::string(key) : where + ": " + std::string(key);
    for (const auto& k : config_keys()) {
        if (k.name == key) {
            try {
                k.set(cfg, value);
            } catch (const UsageError& e) {
                throw ConfigError(field, e.what());
            }
            return;
        }
    }
    throw ConfigError(field, "unknown key");
}

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        const std::string body = trim(std::string_view(line).substr(0, hash));
        if (body.empty()) {
            continue;
        }
        const auto eq = body.find('=');
        const std::string where = source + ":" + std::to_string(lineno);
        if (eq == std::string::npos) {
            throw ConfigError(where, "expected 'key = value'");
        }
        apply_setting(cfg, trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)), where);
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("config", "cannot open " + path.string());
    }
    return parse_config(in, path.string());
}

void ExperimentConfig::validate() const {
    const auto need = [](bool ok, const char* key, const char* msg) {
        if (!ok) {
            throw ConfigError(key, msg);
        }
    };
    need(vocab_size >= 2, "vocab_size", "must be >= 2");
    need(seq_len >= 1, "seq_len", "must be >= 1");
    need(num_train >= 1, "num_train", "must be >= 1");
    need(num_test >= 0, "num_test", "must be >= 0");
    need(zipf_exponent >= 0.0, "zipf_exponent", "must be >= 0");
    need(markov_order == 0 || markov_order == 1, "markov_order", "must be 0 or 1");
    need(corpus_file.empty() || std::filesystem::exists(corpus_file), "corpus_file", "file does not exist");
    need(train_steps >= 1, "train_steps", "must be >= 1");
    need(decode_steps >= 1, "decode_steps", "must be >= 1");
    need(!ablation_steps.empty(), "ablation_steps", "must not be empty");
    for (const int n : ablation_steps) {
        need(n >= 1, "ablation_steps", "every entry must be >= 1");
    }
    need(temperature >= 0.0, "temperature", "must be >= 0");
    need(embed_dim >= 1, "embed_dim", "must be >= 1");
    need(radius >= 0, "radius", "must be >= 0");
    need(lr >= 0.0, "lr", "must be >= 0");
    need(epochs >= 0, "epochs", "must be >= 0");
    need(batch >= 1, "batch", "must be >= 1");
    need(rho >= 0.0 && rho <= 1.0, "rho", "must lie in [0, 1]");
    need(init_scale >= 0.0, "init_scale", "must be >= 0");
    need(corr_embed_dim >= 1, "corr_embed_dim", "must be >= 1");
    need(corr_radius >= 0, "corr_radius", "must be >= 0");
    need(corr_lr >= 0.0, "corr_lr", "must be >= 0");
    need(corr_epochs >= 0, "corr_epochs", "must be >= 0");
    need(corr_batch >= 1, "corr_batch", "must be >= 1");
    need(corr_max_rate > 0.0 && corr_max_rate <= 1.0, "corr_max_rate", "must lie in (0, 1]");
    need(theta >= 0.0 && theta <= 1.0, "theta", "must lie in [0, 1]");
    need(rounds >= 0, "rounds", "must be >= 0");
    need(threads >= 0, "threads", "must be >= 0");
    need(seed.has_value(), "seed", "an explicit seed is required");
}

std::uint64_t ExperimentConfig::require_seed() const {
    if (!seed) {
        throw ConfigError("seed", "an explicit seed is required");
    }
    return *seed;
}

std::string canonical_config(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& k : config_keys()) {
        if (k.hashed) {
            out += k.name + "=" + k.get(cfg) + "\n";
        }
    }
    return out;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    return fnv1a64(canonical_config(cfg));
}

std::uint64_t stage_seed(std::uint64_t master, SeedStage stage) {
    if (stage == SeedStage::corpus) {
        return master;
    }
    return splitmix64(master ^ splitmix64(static_cast<std::uint64_t>(stage)));
}

} // namespace mage
