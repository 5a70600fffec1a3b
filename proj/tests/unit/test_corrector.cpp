#include <doctest.h>

#include <cmath>
#include <sstream>

#include "gradcheck.hpp"
#include "mage/corrector.hpp"
#include "reference.hpp"

using namespace mage;

namespace {

CorrectorModel tiny_corrector() {
    auto m = CorrectorModel::zeros(3, 1, 1);
    m.embedding = {0.5, -1.0, 2.0};
    m.weights = {0.3, 1.0, -0.4};
    m.bias = -0.2;
    return m;
}

double corrupted_fraction(const CorruptedExample& ex) {
    double n = 0.0;
    for (const auto l : ex.labels) {
        n += l;
    }
    return n / static_cast<double>(ex.labels.size());
}

} // namespace

TEST_CASE("suspicion on the hand-set corrector") {
    const auto verdict = detect_and_remask(TokenSequence{2, 0, 1}, tiny_corrector(), 0.5);
    // tests/oracles/oracles.py
    CHECK(verdict.suspicion[0] == doctest::Approx(0.8320183851339245).epsilon(1e-12));
    CHECK(verdict.suspicion[1] == doctest::Approx(0.7858349830425586).epsilon(1e-12));
    CHECK(verdict.suspicion[2] == doctest::Approx(0.259225100817846).epsilon(1e-12));
    CHECK(verdict.remask == BitVector{1, 1, 0});
    CHECK(verdict.count() == 2);
}

TEST_CASE("threshold extremes") {
    Rng rng(2);
    auto m = CorrectorModel::random(5, 3, 2, rng, 5.0);
    m.bias = 40.0; // saturated sigmoid
    TokenSequence seq(20);
    for (auto& t : seq) {
        t = static_cast<Token>(rng.below(5));
    }
    const auto all = detect_and_remask(seq, m, 0.0);
    CHECK(all.count() == 20);
    const auto none = detect_and_remask(seq, m, 1.0);
    CHECK(none.count() == 0);
    for (const double s : none.suspicion) {
        CHECK(s > 0.0);
        CHECK(s < 1.0);
    }
    m.bias = -800.0;
    CHECK(detect_and_remask(seq, m, 0.0).count() == 20);
    CHECK_THROWS_AS(detect_and_remask(seq, m, 1.5), UsageError);
}

TEST_CASE("training corruption draws a rate in (0, max_rate]") {
    Rng rng(10);
    const TokenSequence clean(64, 3);
    constexpr int kExamples = 4000;
    double total = 0.0;
    for (int k = 0; k < kExamples; ++k) {
        const auto ex = corrupt_for_training(clean, 8, kCorrectorMaxRate, rng);
        REQUIRE(ex.rate > 0.0);
        REQUIRE(ex.rate <= kCorrectorMaxRate);
        for (std::size_t t = 0; t < clean.size(); ++t) {
            REQUIRE((ex.tokens[t] != clean[t]) == (ex.labels[t] == 1));
        }
        total += corrupted_fraction(ex);
    }
    // per example: Var(u) + E[u(1-u)] / T with u ~ U(0, 0.3)
    const double var_u = 0.3 * 0.3 / 12.0;
    const double per_example = var_u + (0.15 - (var_u + 0.15 * 0.15)) / 64.0;
    const double sigma = std::sqrt(per_example / kExamples);
    CHECK(std::abs(total / kExamples - 0.15) <= 3.0 * sigma);

    const auto fixed = corrupt_at_rate(clean, 8, 0.0, rng);
    CHECK(fixed.tokens == clean);
    CHECK(corrupted_fraction(corrupt_at_rate(clean, 8, 1.0, rng)) == 1.0);
}

TEST_CASE("corrector gradients match finite differences") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        INFO("seed " << seed);
        REQUIRE(test::corrector_gradcheck(seed).rel_error < 1e-5);
    }
}

TEST_CASE("corrector logits agree with the reference") {
    Rng rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        auto m = CorrectorModel::random(6, 2, static_cast<int>(rng.below(3)), rng, 1.0);
        m.bias = rng.uniform(-1.0, 1.0);
        TokenSequence seq(1 + rng.below(10));
        for (auto& t : seq) {
            t = static_cast<Token>(rng.below(6));
        }
        const auto want = ref::corrector_suspicion(m, seq);
        const auto got = detect_and_remask(seq, m, 0.5);
        for (std::size_t t = 0; t < seq.size(); ++t) {
            REQUIRE(got.suspicion[t] == doctest::Approx(want[t]).epsilon(1e-12));
        }
    }
}

TEST_CASE("correct") {
    Rng rng(21);
    auto predictor = PredictorModel::random(5, 3, 1, rng, 1.5);
    auto corrector = CorrectorModel::random(5, 2, 1, rng, 1.5);
    TokenSequence distorted(12), decoded(12);
    for (std::size_t t = 0; t < 12; ++t) {
        distorted[t] = static_cast<Token>(rng.below(5));
        decoded[t] = static_cast<Token>(rng.below(5));
    }
    const auto ctx = build_conditioning(distorted, predictor);

    SUBCASE("threshold 1 is the identity") {
        CorrectOptions opts;
        opts.threshold = 1.0;
        opts.rounds = 3;
        const auto out = correct(decoded, predictor, ctx, corrector, opts, rng);
        CHECK(out.tokens == decoded);
        CHECK(out.rounds_run == 0);
    }

    SUBCASE("zero rounds is the identity") {
        CorrectOptions opts;
        opts.threshold = 0.0;
        opts.rounds = 0;
        CHECK(correct(decoded, predictor, ctx, corrector, opts, rng).tokens == decoded);
    }

    SUBCASE("rounds follow the re-mask and argmax refill procedure") {
        for (const double theta : {0.2, 0.5, 0.7}) {
            for (int rounds = 1; rounds <= 3; ++rounds) {
                CorrectOptions opts;
                opts.threshold = theta;
                opts.rounds = rounds;
                const auto out = correct(decoded, predictor, ctx, corrector, opts, rng);

                TokenSequence cur = decoded;
                for (int k = 0; k < rounds; ++k) {
                    const auto s = ref::corrector_suspicion(corrector, cur);
                    TokenSequence masked = cur;
                    bool any = false;
                    for (std::size_t t = 0; t < cur.size(); ++t) {
                        if (s[t] > theta) {
                            masked[t] = 5;
                            any = true;
                        }
                    }
                    if (!any) {
                        break;
                    }
                    const auto probs = ref::predictor_probs(predictor, masked, distorted);
                    for (std::size_t t = 0; t < cur.size(); ++t) {
                        if (masked[t] == 5) {
                            cur[t] = greedy_choice(probs[t]).token;
                        }
                    }
                }
                REQUIRE(out.tokens == cur);
            }
        }
    }

    SUBCASE("full-decode refill keeps unflagged positions") {
        CorrectOptions opts;
        opts.threshold = 0.5;
        opts.refill = Refill::full_decode;
        opts.refill_schedule.n_steps = 4;
        const auto out = correct(decoded, predictor, ctx, corrector, opts, rng);
        const auto verdict = detect_and_remask(decoded, corrector, 0.5);
        for (std::size_t t = 0; t < decoded.size(); ++t) {
            if (!verdict.remask[t]) {
                CHECK(out.tokens[t] == decoded[t]);
            }
            CHECK(out.touched[t] == verdict.remask[t]);
        }
    }

    CorrectOptions bad;
    bad.rounds = -1;
    CHECK_THROWS_AS(correct(decoded, predictor, ctx, corrector, bad, rng), UsageError);
}

TEST_CASE("trained corrector flags substitutions") {
    const auto corpus = generate_corpus({32, 600, 32, 1.2, 1, 4});
    const auto [train, held] = split_corpus(corpus, 500);
    CorrectorHyper h;
    h.seed = 3;
    const auto result = train_corrector(train, h);
    REQUIRE(result.curve.size() == static_cast<std::size_t>(h.epochs));
    CHECK(result.curve.back().loss < result.curve.front().loss);

    Rng rng(99);
    double sum_bad = 0.0, sum_good = 0.0;
    double n_bad = 0.0, n_good = 0.0;
    for (const auto& clean : held.sequences) {
        const auto ex = corrupt_at_rate(clean, 32, 0.15, rng);
        const auto v = detect_and_remask(ex.tokens, result.model, 0.5);
        for (std::size_t t = 0; t < clean.size(); ++t) {
            (ex.labels[t] ? sum_bad : sum_good) += v.suspicion[t];
            (ex.labels[t] ? n_bad : n_good) += 1.0;
        }
    }
    CHECK(sum_bad / n_bad > sum_good / n_good);

    const auto again = train_corrector(train, h);
    CHECK(again.model.weights == result.model.weights);
}

TEST_CASE("corrector checkpoint round trip") {
    Rng rng(1);
    auto m = CorrectorModel::random(7, 3, 2, rng, 0.5);
    m.bias = -0.375;
    std::stringstream ss;
    write_corrector(ss, m);
    const auto back = read_corrector(ss);
    CHECK(back.embedding == m.embedding);
    CHECK(back.weights == m.weights);
    CHECK(back.bias == m.bias);
    std::stringstream wrong("MAGEPRED" + ss.str().substr(8));
    CHECK_THROWS_AS(read_corrector(wrong), UsageError);
}
