#include "mage/corrector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"

namespace mage {

namespace {

constexpr std::string_view kCorrectorMagic = "MAGECORR";

double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void check_sequence(const CorrectorModel& model, std::span<const Token> seq) {
    for (const Token t : seq) {
        if (t < 0 || t >= model.vocab_size) {
            throw UsageError("corrector input token " + std::to_string(t) + " out of range");
        }
    }
}

} // namespace

CorrectorModel CorrectorModel::zeros(int vocab_size, int embed_dim, int radius) {
    if (vocab_size < 1 || embed_dim < 1 || radius < 0) {
        throw ParameterError("corrector needs V >= 1, D >= 1, r >= 0");
    }
    CorrectorModel m;
    m.vocab_size = vocab_size;
    m.embed_dim = embed_dim;
    m.radius = radius;
    m.embedding.assign(static_cast<std::size_t>(vocab_size) * embed_dim, 0.0);
    m.weights.assign(static_cast<std::size_t>(m.feature_dim()), 0.0);
    return m;
}

CorrectorModel CorrectorModel::random(int vocab_size, int embed_dim, int radius, Rng& rng, double scale) {
    auto m = zeros(vocab_size, embed_dim, radius);
    for (double& v : m.embedding) {
        v = rng.uniform(-scale, scale);
    }
    for (double& v : m.weights) {
        v = rng.uniform(-scale, scale);
    }
    return m;
}

double& CorrectorModel::parameter(std::size_t index) {
    if (index < embedding.size()) {
        return embedding[index];
    }
    index -= embedding.size();
    if (index < weights.size()) {
        return weights[index];
    }
    if (index == weights.size()) {
        return bias;
    }
    throw UsageError("corrector parameter index out of range");
}

double CorrectorModel::parameter(std::size_t index) const {
    return const_cast<CorrectorModel&>(*this).parameter(index);
}

void CorrectorModel::validate() const {
    if (vocab_size < 1 || embed_dim < 1 || radius < 0 ||
        embedding.size() != static_cast<std::size_t>(vocab_size) * embed_dim ||
        weights.size() != static_cast<std::size_t>(feature_dim())) {
        throw UsageError("corrector dimensions are inconsistent");
    }
    const auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(embedding.begin(), embedding.end(), finite) ||
        !std::all_of(weights.begin(), weights.end(), finite) || !std::isfinite(bias)) {
        throw NumericError("corrector holds non-finite parameters");
    }
}

std::size_t CorrectorVerdict::count() const {
    return static_cast<std::size_t>(std::count(remask.begin(), remask.end(), std::uint8_t{1}));
}

CorruptedExample corrupt_at_rate(std::span<const Token> clean, int vocab_size, double rate, Rng& rng) {
    CorruptedExample ex;
    ex.rate = rate;
    ex.tokens = corrupt_sequence(clean, vocab_size, rate, rng);
    ex.labels.resize(clean.size());
    for (std::size_t t = 0; t < clean.size(); ++t) {
        ex.labels[t] = ex.tokens[t] != clean[t] ? 1 : 0;
    }
    return ex;
}

CorruptedExample corrupt_for_training(std::span<const Token> clean, int vocab_size, double max_rate, Rng& rng) {
    if (!(max_rate > 0.0 && max_rate <= 1.0)) {
        throw UsageError("max corruption rate must lie in (0, 1]");
    }
    const double rate = max_rate * (1.0 - rng.uniform());
    return corrupt_at_rate(clean, vocab_size, rate, rng);
}

std::vector<double> corrector_logits(const CorrectorModel& model, std::span<const Token> seq) {
    check_sequence(model, seq);
    const int D = model.embed_dim;
    const auto T = static_cast<std::ptrdiff_t>(seq.size());
    std::vector<double> logits(seq.size(), model.bias);
    for (std::ptrdiff_t t = 0; t < T; ++t) {
        for (int k = 0; k < model.window(); ++k) {
            const auto s = t + k - model.radius;
            if (s < 0 || s >= T) {
                continue;
            }
            const double* e = model.embedding.data() + static_cast<std::size_t>(seq[s]) * D;
            const double* w = model.weights.data() + static_cast<std::size_t>(k) * D;
            for (int d = 0; d < D; ++d) {
                logits[t] += w[d] * e[d];
            }
        }
    }
    return logits;
}

CorrectorVerdict detect_and_remask(std::span<const Token> seq, const CorrectorModel& model, double threshold) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
        throw UsageError("threshold must lie in [0, 1]");
    }
    // keep suspicion strictly inside (0, 1) even where the sigmoid saturates
    constexpr double lo = std::numeric_limits<double>::denorm_min();
    const double hi = std::nextafter(1.0, 0.0);
    CorrectorVerdict verdict;
    verdict.threshold = threshold;
    const auto logits = corrector_logits(model, seq);
    verdict.suspicion.resize(seq.size());
    verdict.remask.resize(seq.size());
    for (std::size_t t = 0; t < seq.size(); ++t) {
        verdict.suspicion[t] = std::clamp(sigmoid(logits[t]), lo, hi);
        verdict.remask[t] = verdict.suspicion[t] > threshold ? 1 : 0;
    }
    return verdict;
}

double corrector_loss(const CorrectorModel& model, std::span<const Token> seq, std::span<const std::uint8_t> labels) {
    if (labels.size() != seq.size()) {
        throw UsageError("label and sequence lengths differ");
    }
    const auto logits = corrector_logits(model, seq);
    double loss = 0.0;
    for (std::size_t t = 0; t < seq.size(); ++t) {
        loss += softplus(logits[t]) - (labels[t] ? logits[t] : 0.0);
    }
    return loss;
}

BceLoss accumulate_corrector_gradient(const CorrectorModel& model, std::span<const Token> seq,
                                      std::span<const std::uint8_t> labels, CorrectorModel& grad) {
    if (labels.size() != seq.size()) {
        throw UsageError("label and sequence lengths differ");
    }
    const auto logits = corrector_logits(model, seq);
    const int D = model.embed_dim;
    const auto T = static_cast<std::ptrdiff_t>(seq.size());
    BceLoss out;
    out.positions = seq.size();
    for (std::ptrdiff_t t = 0; t < T; ++t) {
        const double y = labels[t] ? 1.0 : 0.0;
        out.loss += softplus(logits[t]) - y * logits[t];
        const double dl = sigmoid(logits[t]) - y;
        grad.bias += dl;
        for (int k = 0; k < model.window(); ++k) {
            const auto s = t + k - model.radius;
            if (s < 0 || s >= T) {
                continue;
            }
            const std::size_t row = static_cast<std::size_t>(seq[s]) * D;
            const std::size_t col = static_cast<std::size_t>(k) * D;
            for (int d = 0; d < D; ++d) {
                grad.weights[col + d] += dl * model.embedding[row + d];
                grad.embedding[row + d] += dl * model.weights[col + d];
            }
        }
    }
    return out;
}

CorrectorModel initial_corrector(int vocab_size, const CorrectorHyper& hyper) {
    Rng rng = Rng::stream(hyper.seed, 0);
    return CorrectorModel::random(vocab_size, hyper.embed_dim, hyper.radius, rng, hyper.init_scale);
}

CorrectorTrainResult train_corrector(const Corpus& corpus, const CorrectorHyper& hyper) {
    corpus.validate();
    if (corpus.sequences.empty()) {
        throw UsageError("corrector training corpus is empty");
    }
    if (corpus.vocab_size < 2) {
        throw ParameterError("corrector training needs at least two tokens");
    }
    if (hyper.epochs < 0 || hyper.batch < 1 || !(hyper.lr >= 0.0)) {
        throw ParameterError("corrector training needs epochs >= 0, batch >= 1, lr >= 0");
    }
    const int V = corpus.vocab_size;
    CorrectorTrainResult result;
    result.model = initial_corrector(V, hyper);
    CorrectorModel& model = result.model;
    CorrectorModel grad = CorrectorModel::zeros(V, hyper.embed_dim, hyper.radius);
    Rng rng = Rng::stream(hyper.seed, 1);

    const std::size_t n = corpus.num_docs();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        for (std::size_t i = n - 1; i > 0; --i) {
            std::swap(order[i], order[rng.below(i + 1)]);
        }
        double epoch_loss = 0.0;
        std::size_t epoch_positions = 0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(hyper.batch)) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(hyper.batch));
            std::fill(grad.embedding.begin(), grad.embedding.end(), 0.0);
            std::fill(grad.weights.begin(), grad.weights.end(), 0.0);
            grad.bias = 0.0;
            std::size_t batch_positions = 0;
            for (std::size_t b = start; b < stop; ++b) {
                const auto ex = corrupt_for_training(corpus.sequences[order[b]], V, hyper.max_rate, rng);
                const auto loss = accumulate_corrector_gradient(model, ex.tokens, ex.labels, grad);
                if (!std::isfinite(loss.loss)) {
                    std::ostringstream msg;
                    msg << "non-finite corrector loss at epoch " << epoch << ", sequence " << order[b] << ": "
                        << loss.loss;
                    throw NumericError(msg.str());
                }
                epoch_loss += loss.loss;
                epoch_positions += loss.positions;
                batch_positions += loss.positions;
            }
            if (batch_positions == 0 || hyper.lr == 0.0) {
                continue;
            }
            const double scale = hyper.lr / static_cast<double>(batch_positions);
            for (std::size_t j = 0; j < model.embedding.size(); ++j) {
                model.embedding[j] -= scale * grad.embedding[j];
            }
            for (std::size_t j = 0; j < model.weights.size(); ++j) {
                model.weights[j] -= scale * grad.weights[j];
            }
            model.bias -= scale * grad.bias;
        }
        result.curve.push_back({epoch + 1, epoch_positions ? epoch_loss / static_cast<double>(epoch_positions) : 0.0});
    }
    return result;
}

CorrectionResult correct(std::span<const Token> decoded, const PredictorModel& predictor,
                         const ConditioningContext& ctx, const CorrectorModel& corrector,
                         const CorrectOptions& options, Rng& rng) {
    if (options.rounds < 0) {
        throw UsageError("correction rounds must be >= 0");
    }
    if (ctx.length() != decoded.size()) {
        throw UsageError("conditioning does not match the decoded sequence");
    }
    CorrectionResult result;
    result.tokens.assign(decoded.begin(), decoded.end());
    result.touched.assign(decoded.size(), 0);
    const Token M = predictor.mask_token();
    for (int round = 0; round < options.rounds; ++round) {
        const auto verdict = detect_and_remask(result.tokens, corrector, options.threshold);
        if (verdict.count() == 0) {
            break;
        }
        TokenSequence masked = result.tokens;
        for (std::size_t t = 0; t < masked.size(); ++t) {
            if (verdict.remask[t]) {
                masked[t] = M;
                result.touched[t] = 1;
            }
        }
        if (options.refill == Refill::full_decode) {
            ScheduleConfig sched = options.refill_schedule;
            sched.mask_token_id = M;
            DecodeOptions dopts;
            dopts.freq = options.freq;
            dopts.initial = std::move(masked);
            result.tokens = decode(predictor, ctx, sched, dopts, rng).tokens;
        } else {
            const auto pred = forward(predictor, masked, ctx);
            for (std::size_t t = 0; t < masked.size(); ++t) {
                if (verdict.remask[t]) {
                    result.tokens[t] = greedy_choice(pred.row(t)).token;
                }
            }
        }
        ++result.rounds_run;
    }
    return result;
}

void write_corrector(std::ostream& out, const CorrectorModel& model) {
    model.validate();
    detail::put_magic(out, kCorrectorMagic);
    detail::put_u32(out, CorrectorModel::kFormatVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(model.vocab_size));
    detail::put_u32(out, static_cast<std::uint32_t>(model.embed_dim));
    detail::put_u32(out, static_cast<std::uint32_t>(model.radius));
    detail::put_block(out, model.embedding);
    detail::put_block(out, model.weights);
    detail::put_f64(out, model.bias);
}

CorrectorModel read_corrector(std::istream& in) {
    detail::expect_magic(in, kCorrectorMagic);
    const auto version = detail::get_u32(in);
    if (version != CorrectorModel::kFormatVersion) {
        throw UsageError("unsupported corrector checkpoint version " + std::to_string(version));
    }
    const auto V = static_cast<int>(detail::get_u32(in));
    const auto D = static_cast<int>(detail::get_u32(in));
    const auto r = static_cast<int>(detail::get_u32(in));
    auto model = CorrectorModel::zeros(V, D, r);
    detail::get_block(in, model.embedding);
    detail::get_block(in, model.weights);
    model.bias = detail::get_f64(in);
    model.validate();
    return model;
}

void save_corrector(const std::filesystem::path& path, const CorrectorModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw UsageError("cannot write corrector checkpoint " + path.string());
    }
    write_corrector(out, model);
}

CorrectorModel load_corrector(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw UsageError("cannot open corrector checkpoint " + path.string());
    }
    return read_corrector(in);
}

} // namespace mage
