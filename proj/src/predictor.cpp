#include "mage/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "binary_io.hpp"
#include "mage/csv.hpp"

namespace mage {

namespace {

constexpr std::string_view kPredictorMagic = "MAGEPRED";

std::vector<double> window_features(const PredictorModel& model, std::span<const double> inputs,
                                    std::span<const double> global, std::size_t T) {
    const int D = model.embed_dim;
    const int F = model.feature_dim();
    std::vector<double> h(T * F, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        double* row = h.data() + t * F;
        for (int k = 0; k < model.window(); ++k) {
            const auto s = static_cast<std::ptrdiff_t>(t) + k - model.radius;
            if (s < 0 || s >= static_cast<std::ptrdiff_t>(T)) {
                continue;
            }
            std::copy_n(inputs.data() + s * D, D, row + k * D);
        }
        for (int d = 0; d < D; ++d) {
            row[model.radius * D + d] += global[d];
        }
    }
    return h;
}

// Summed inputs u(t) = E[masked(t)] + cond(t).
std::vector<double> position_inputs(const PredictorModel& model, std::span<const Token> masked,
                                    const ConditioningContext& ctx) {
    const int D = model.embed_dim;
    std::vector<double> u(masked.size() * D);
    for (std::size_t t = 0; t < masked.size(); ++t) {
        const auto e = model.embed(masked[t]);
        const auto c = ctx.at(t);
        for (int d = 0; d < D; ++d) {
            u[t * D + d] = e[d] + c[d];
        }
    }
    return u;
}

void softmax_rows(std::vector<double>& logits, std::size_t T, int V, std::vector<double>& confidence) {
    confidence.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        double* row = logits.data() + t * V;
        const double mx = *std::max_element(row, row + V);
        double total = 0.0;
        for (int v = 0; v < V; ++v) {
            row[v] = std::exp(row[v] - mx);
            total += row[v];
        }
        double best = 0.0;
        for (int v = 0; v < V; ++v) {
            row[v] /= total;
            best = std::max(best, row[v]);
        }
        confidence[t] = best;
    }
}

void check_tokens(std::span<const Token> tokens, int upper_inclusive, const char* what) {
    for (const Token t : tokens) {
        if (t < 0 || t > upper_inclusive) {
            throw UsageError(std::string(what) + " token id " + std::to_string(t) + " out of range");
        }
    }
}

} // namespace

PredictorModel PredictorModel::zeros(int vocab_size, int embed_dim, int radius) {
    if (vocab_size < 1 || embed_dim < 1 || radius < 0) {
        throw ParameterError("predictor needs V >= 1, D >= 1, r >= 0");
    }
    PredictorModel m;
    m.vocab_size = vocab_size;
    m.embed_dim = embed_dim;
    m.radius = radius;
    m.embedding.assign(static_cast<std::size_t>(vocab_size + 1) * embed_dim, 0.0);
    m.weights.assign(static_cast<std::size_t>(m.feature_dim()) * vocab_size, 0.0);
    m.bias.assign(vocab_size, 0.0);
    return m;
}

PredictorModel PredictorModel::random(int vocab_size, int embed_dim, int radius, Rng& rng, double scale) {
    auto m = zeros(vocab_size, embed_dim, radius);
    for (double& v : m.embedding) {
        v = rng.uniform(-scale, scale);
    }
    for (double& v : m.weights) {
        v = rng.uniform(-scale, scale);
    }
    return m;
}

std::span<const double> PredictorModel::embed(Token tok) const {
    return {embedding.data() + static_cast<std::size_t>(tok) * embed_dim, static_cast<std::size_t>(embed_dim)};
}

std::array<std::span<double>, 3> PredictorModel::blocks() {
    return {std::span<double>(embedding), std::span<double>(weights), std::span<double>(bias)};
}

std::array<std::span<const double>, 3> PredictorModel::blocks() const {
    return {std::span<const double>(embedding), std::span<const double>(weights), std::span<const double>(bias)};
}

void PredictorModel::validate() const {
    if (vocab_size < 1 || embed_dim < 1 || radius < 0 ||
        embedding.size() != static_cast<std::size_t>(vocab_size + 1) * embed_dim ||
        weights.size() != static_cast<std::size_t>(feature_dim()) * vocab_size ||
        bias.size() != static_cast<std::size_t>(vocab_size)) {
        throw UsageError("predictor dimensions are inconsistent");
    }
    for (const auto block : blocks()) {
        if (!std::all_of(block.begin(), block.end(), [](double v) { return std::isfinite(v); })) {
            throw NumericError("predictor holds non-finite parameters");
        }
    }
}

ConditioningContext build_conditioning(std::span<const Token> distorted, const PredictorModel& model) {
    check_tokens(distorted, model.vocab_size - 1, "distorted");
    const int D = model.embed_dim;
    ConditioningContext ctx;
    ctx.dim = D;
    ctx.cond.resize(distorted.size() * D);
    ctx.global_embed.assign(D, 0.0);
    for (std::size_t t = 0; t < distorted.size(); ++t) {
        const auto e = model.embed(distorted[t]);
        std::copy(e.begin(), e.end(), ctx.cond.begin() + static_cast<std::ptrdiff_t>(t * D));
        for (int d = 0; d < D; ++d) {
            ctx.global_embed[d] += e[d];
        }
    }
    if (!distorted.empty()) {
        for (double& v : ctx.global_embed) {
            v /= static_cast<double>(distorted.size());
        }
    }
    return ctx;
}

PredictionOutput forward(const PredictorModel& model, std::span<const Token> masked, const ConditioningContext& ctx) {
    check_tokens(masked, model.vocab_size, "masked");
    if (ctx.length() != masked.size() || ctx.dim != model.embed_dim) {
        throw UsageError("conditioning does not match the masked sequence");
    }
    const std::size_t T = masked.size();
    const int V = model.vocab_size;
    const int F = model.feature_dim();
    const auto h = window_features(model, position_inputs(model, masked, ctx), ctx.global_embed, T);

    PredictionOutput out;
    out.vocab_size = V;
    out.probs.resize(T * V);
    for (std::size_t t = 0; t < T; ++t) {
        double* logits = out.probs.data() + t * V;
        std::copy(model.bias.begin(), model.bias.end(), logits);
        const double* row = h.data() + t * F;
        for (int f = 0; f < F; ++f) {
            const double hf = row[f];
            if (hf == 0.0) {
                continue;
            }
            const double* w = model.weights.data() + static_cast<std::size_t>(f) * V;
            for (int v = 0; v < V; ++v) {
                logits[v] += hf * w[v];
            }
        }
    }
    softmax_rows(out.probs, T, V, out.confidence);
    return out;
}

MaskedLoss masked_ce_loss(const PredictionOutput& pred, std::span<const Token> target, const MaskVector& mask) {
    const std::size_t T = pred.length();
    if (target.size() != T || mask.size() != T) {
        throw UsageError("prediction, target and mask lengths differ");
    }
    check_tokens(target, pred.vocab_size - 1, "target");
    const int V = pred.vocab_size;
    MaskedLoss out;
    out.logit_grad.assign(T * V, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        if (!mask.m[t]) {
            continue;
        }
        const auto row = pred.row(t);
        out.loss -= std::log(row[target[t]]);
        ++out.masked_count;
        const auto best = static_cast<Token>(std::max_element(row.begin(), row.end()) - row.begin());
        if (best == target[t]) {
            ++out.correct;
        }
        double* g = out.logit_grad.data() + t * V;
        for (int v = 0; v < V; ++v) {
            g[v] = row[v];
        }
        g[target[t]] -= 1.0;
    }
    return out;
}

MaskedLoss accumulate_gradient(const PredictorModel& model, std::span<const Token> masked,
                               std::span<const Token> distorted, std::span<const Token> target,
                               const MaskVector& mask, PredictorModel& grad) {
    if (distorted.size() != masked.size()) {
        throw UsageError("distorted and masked lengths differ");
    }
    const auto ctx = build_conditioning(distorted, model);
    const auto pred = forward(model, masked, ctx);
    auto loss = masked_ce_loss(pred, target, mask);
    if (loss.masked_count == 0) {
        return loss;
    }

    const std::size_t T = masked.size();
    const int V = model.vocab_size;
    const int D = model.embed_dim;
    const int F = model.feature_dim();
    const auto h = window_features(model, position_inputs(model, masked, ctx), ctx.global_embed, T);

    std::vector<double> du(T * D, 0.0);
    std::vector<double> dg(D, 0.0);
    std::vector<double> dh(F);
    for (std::size_t t = 0; t < T; ++t) {
        if (!mask.m[t]) {
            continue;
        }
        const double* dl = loss.logit_grad.data() + t * V;
        const double* row = h.data() + t * F;
        for (int v = 0; v < V; ++v) {
            grad.bias[v] += dl[v];
        }
        for (int f = 0; f < F; ++f) {
            const double* w = model.weights.data() + static_cast<std::size_t>(f) * V;
            double* gw = grad.weights.data() + static_cast<std::size_t>(f) * V;
            const double hf = row[f];
            double acc = 0.0;
            for (int v = 0; v < V; ++v) {
                gw[v] += hf * dl[v];
                acc += w[v] * dl[v];
            }
            dh[f] = acc;
        }
        for (int k = 0; k < model.window(); ++k) {
            const auto s = static_cast<std::ptrdiff_t>(t) + k - model.radius;
            if (s < 0 || s >= static_cast<std::ptrdiff_t>(T)) {
                continue;
            }
            for (int d = 0; d < D; ++d) {
                du[s * D + d] += dh[k * D + d];
            }
        }
        for (int d = 0; d < D; ++d) {
            dg[d] += dh[model.radius * D + d];
        }
    }

    const double inv_t = 1.0 / static_cast<double>(T);
    for (std::size_t s = 0; s < T; ++s) {
        double* e_masked = grad.embedding.data() + static_cast<std::size_t>(masked[s]) * D;
        double* e_cond = grad.embedding.data() + static_cast<std::size_t>(distorted[s]) * D;
        for (int d = 0; d < D; ++d) {
            e_masked[d] += du[s * D + d];
            e_cond[d] += du[s * D + d] + dg[d] * inv_t;
        }
    }
    return loss;
}

PredictorModel initial_predictor(int vocab_size, const TrainHyper& hyper) {
    Rng rng = Rng::stream(hyper.seed, 0);
    return PredictorModel::random(vocab_size, hyper.embed_dim, hyper.radius, rng, hyper.init_scale);
}

TrainResult train(const Corpus& corpus, const FrequencyTable& freq, const ScheduleConfig& sched,
                  const TrainHyper& hyper) {
    corpus.validate();
    if (corpus.sequences.empty()) {
        throw UsageError("training corpus is empty");
    }
    const int V = corpus.vocab_size;
    sched.validate(V);
    if (sched.mask_token_id != V) {
        throw UsageError("mask token id must equal the vocabulary size");
    }
    if (sched.mode == MaskMode::ctf && freq.vocab_size() != V) {
        throw UsageError("CTF training needs a frequency table over the corpus vocabulary");
    }
    if (hyper.epochs < 0 || hyper.batch < 1 || !(hyper.lr >= 0.0)) {
        throw ParameterError("training needs epochs >= 0, batch >= 1, lr >= 0");
    }

    TrainResult result;
    result.model = initial_predictor(V, hyper);
    PredictorModel& model = result.model;
    PredictorModel grad = PredictorModel::zeros(V, hyper.embed_dim, hyper.radius);
    Rng rng = Rng::stream(hyper.seed, 1);

    const std::size_t n = corpus.num_docs();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const std::vector<double> flat(static_cast<std::size_t>(corpus.seq_len), 0.5);

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        for (std::size_t i = n - 1; i > 0; --i) {
            std::swap(order[i], order[rng.below(i + 1)]);
        }
        double epoch_loss = 0.0;
        std::size_t epoch_masked = 0;
        std::size_t epoch_correct = 0;

        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(hyper.batch)) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(hyper.batch));
            for (auto block : grad.blocks()) {
                std::fill(block.begin(), block.end(), 0.0);
            }
            std::size_t batch_masked = 0;
            for (std::size_t b = start; b < stop; ++b) {
                const auto& clean = corpus.sequences[order[b]];
                const auto distorted = V > 1 ? corrupt_sequence(clean, V, hyper.rho, rng) : clean;
                const int step = sample_training_step(sched.n_steps, rng);
                const auto probs = sched.mode == MaskMode::ctf
                                       ? masking_probabilities(sched, step, sequence_base_probabilities(freq, clean))
                                       : masking_probabilities(sched, step, flat);
                const auto mask = sample_mask(probs, rng, step);
                const auto masked = apply_mask(clean, mask, model.mask_token());
                const auto loss = accumulate_gradient(model, masked, distorted, clean, mask, grad);
                if (!std::isfinite(loss.loss)) {
                    std::ostringstream msg;
                    msg << "non-finite masked loss at epoch " << epoch << ", sequence " << order[b]
                        << ", step " << step << ", masked " << loss.masked_count << ": " << loss.loss;
                    throw NumericError(msg.str());
                }
                epoch_loss += loss.loss;
                epoch_masked += loss.masked_count;
                epoch_correct += loss.correct;
                batch_masked += loss.masked_count;
            }
            if (batch_masked == 0 || hyper.lr == 0.0) {
                continue;
            }
            const double scale = hyper.lr / static_cast<double>(batch_masked);
            auto params = model.blocks();
            const auto grads = std::as_const(grad).blocks();
            for (std::size_t k = 0; k < params.size(); ++k) {
                for (std::size_t j = 0; j < params[k].size(); ++j) {
                    params[k][j] -= scale * grads[k][j];
                }
            }
        }

        EpochStats stats;
        stats.epoch = epoch + 1;
        stats.loss = epoch_loss / static_cast<double>(n);
        stats.loss_per_token = epoch_masked ? epoch_loss / static_cast<double>(epoch_masked) : 0.0;
        stats.masked_acc = epoch_masked ? static_cast<double>(epoch_correct) / static_cast<double>(epoch_masked) : 0.0;
        result.curve.push_back(stats);
        model.final_loss = stats.loss;
    }
    return result;
}

void write_learning_curve(std::ostream& out, std::span<const EpochStats> curve, std::uint64_t config_hash) {
    write_csv_preamble(out, config_hash, "epoch,loss,masked_acc");
    for (const auto& e : curve) {
        out << e.epoch << ',' << format_real(e.loss) << ',' << format_real(e.masked_acc) << '\n';
    }
}

void write_predictor(std::ostream& out, const PredictorModel& model) {
    model.validate();
    detail::put_magic(out, kPredictorMagic);
    detail::put_u32(out, PredictorModel::kFormatVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(model.vocab_size));
    detail::put_u32(out, static_cast<std::uint32_t>(model.embed_dim));
    detail::put_u32(out, static_cast<std::uint32_t>(model.radius));
    for (const auto block : model.blocks()) {
        detail::put_block(out, block);
    }
    detail::put_f64(out, model.final_loss);
}

PredictorModel read_predictor(std::istream& in) {
    detail::expect_magic(in, kPredictorMagic);
    const auto version = detail::get_u32(in);
    if (version != PredictorModel::kFormatVersion) {
        throw UsageError("unsupported predictor checkpoint version " + std::to_string(version));
    }
    const auto V = static_cast<int>(detail::get_u32(in));
    const auto D = static_cast<int>(detail::get_u32(in));
    const auto r = static_cast<int>(detail::get_u32(in));
    auto model = PredictorModel::zeros(V, D, r);
    for (auto block : model.blocks()) {
        detail::get_block(in, block);
    }
    model.final_loss = detail::get_f64(in);
    model.validate();
    return model;
}

void save_predictor(const std::filesystem::path& path, const PredictorModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw UsageError("cannot write predictor checkpoint " + path.string());
    }
    write_predictor(out, model);
}

PredictorModel load_predictor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw UsageError("cannot open predictor checkpoint " + path.string());
    }
    return read_predictor(in);
}

} // namespace mage
