#include <doctest.h>

#include <cmath>
#include <sstream>

#include "gradcheck.hpp"
#include "mage/predictor.hpp"
#include "reference.hpp"

using namespace mage;

namespace {

// V=3, D=2, r=0 with the values used by tests/oracles/oracles.py.
PredictorModel tiny_model() {
    auto m = PredictorModel::zeros(3, 2, 0);
    m.embedding = {1, 0, 0, 1, 1, 1, 0.5, -0.5};
    m.weights = {1, -1, 0.5, 0, 2, -1};
    m.bias = {0.1, 0.0, -0.1};
    return m;
}

ScheduleConfig schedule_for(int V, int steps = 10) {
    ScheduleConfig s;
    s.n_steps = steps;
    s.mask_token_id = V;
    return s;
}

} // namespace

TEST_CASE("zero parameters predict the uniform distribution") {
    const auto m = PredictorModel::zeros(7, 3, 2);
    const TokenSequence seq{0, 7, 3, 7, 6};
    const auto out = forward(m, seq, build_conditioning(TokenSequence{0, 1, 3, 2, 6}, m));
    for (const double p : out.probs) {
        CHECK(p == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
    }
    for (const double c : out.confidence) {
        CHECK(c == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
    }
}

TEST_CASE("forward on the hand-set model") {
    const auto m = tiny_model();
    const TokenSequence distorted{0, 2};
    const TokenSequence masked{3, 1};
    const auto out = forward(m, masked, build_conditioning(distorted, m));
    const double t0[] = {0.8060180306754097, 0.004914087660263982, 0.18906788166432623};
    const double t1[] = {0.28699949918615175, 0.7059048610987453, 0.0070956397151029724};
    for (int v = 0; v < 3; ++v) {
        CHECK(out.row(0)[v] == doctest::Approx(t0[v]).epsilon(1e-12));
        CHECK(out.row(1)[v] == doctest::Approx(t1[v]).epsilon(1e-12));
    }
    CHECK(out.confidence[0] == doctest::Approx(t0[0]).epsilon(1e-12));
    CHECK(out.confidence[1] == doctest::Approx(t1[1]).epsilon(1e-12));
}

TEST_CASE("forward agrees with the reference on random models") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const int V = 2 + static_cast<int>(rng.below(6));
        const int r = static_cast<int>(rng.below(4));
        auto m = PredictorModel::random(V, 3, r, rng, 1.0);
        for (double& b : m.bias) {
            b = rng.uniform(-1.0, 1.0);
        }
        const std::size_t T = 1 + rng.below(9);
        TokenSequence masked(T), distorted(T);
        for (std::size_t t = 0; t < T; ++t) {
            masked[t] = static_cast<Token>(rng.below(V + 1));
            distorted[t] = static_cast<Token>(rng.below(V));
        }
        const auto out = forward(m, masked, build_conditioning(distorted, m));
        const auto expect = ref::predictor_probs(m, masked, distorted);
        for (std::size_t t = 0; t < T; ++t) {
            for (int v = 0; v < V; ++v) {
                REQUIRE(out.row(t)[v] == doctest::Approx(expect[t][v]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("forward rejects malformed input") {
    const auto m = tiny_model();
    const auto ctx = build_conditioning(TokenSequence{0, 1}, m);
    CHECK_THROWS_AS(forward(m, TokenSequence{4, 0}, ctx), UsageError);
    CHECK_THROWS_AS(forward(m, TokenSequence{0}, ctx), UsageError);
    CHECK_THROWS_AS(build_conditioning(TokenSequence{3}, m), UsageError);
}

TEST_CASE("analytic gradients match finite differences") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const auto check = test::predictor_gradcheck(seed);
        INFO("seed " << seed);
        REQUIRE(check.unmasked_rows_zero);
        REQUIRE(check.rel_error < 1e-5);
    }
}

TEST_CASE("gradient vanishes when nothing is masked") {
    auto m = tiny_model();
    auto grad = PredictorModel::zeros(3, 2, 0);
    MaskVector none;
    none.m.assign(2, 0);
    const auto loss = accumulate_gradient(m, TokenSequence{0, 1}, TokenSequence{0, 2}, TokenSequence{0, 1}, none, grad);
    CHECK(loss.loss == 0.0);
    CHECK(loss.masked_count == 0);
    for (const auto block : grad.blocks()) {
        for (const double g : block) {
            CHECK(g == 0.0);
        }
    }
}

TEST_CASE("window radius decides permutation equivariance") {
    Rng rng(12);
    const TokenSequence masked{5, 0, 5, 3, 1, 5};
    const TokenSequence distorted{2, 0, 4, 3, 1, 1};
    const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
    TokenSequence pm(6), pd(6);
    for (std::size_t t = 0; t < 6; ++t) {
        pm[t] = masked[perm[t]];
        pd[t] = distorted[perm[t]];
    }

    auto rows_match = [&](const PredictorModel& m) {
        const auto a = forward(m, masked, build_conditioning(distorted, m));
        const auto b = forward(m, pm, build_conditioning(pd, m));
        for (std::size_t t = 0; t < 6; ++t) {
            for (int v = 0; v < 5; ++v) {
                if (std::abs(b.row(t)[v] - a.row(perm[t])[v]) > 1e-12) {
                    return false;
                }
            }
        }
        return true;
    };
    CHECK(rows_match(PredictorModel::random(5, 3, 0, rng, 1.0)));
    CHECK_FALSE(rows_match(PredictorModel::random(5, 3, 1, rng, 1.0)));
}

TEST_CASE("training") {
    const auto corpus = generate_corpus({16, 200, 24, 1.2, 1, 3});
    const auto freq = build_frequency_table(corpus);

    SUBCASE("zero learning rate leaves the initial parameters") {
        TrainHyper h;
        h.lr = 0.0;
        h.epochs = 2;
        h.seed = 9;
        const auto result = train(corpus, freq, schedule_for(16), h);
        const auto init = initial_predictor(16, h);
        CHECK(result.model.embedding == init.embedding);
        CHECK(result.model.weights == init.weights);
        CHECK(result.model.bias == init.bias);
        CHECK(result.curve.size() == 2);
    }

    SUBCASE("single-token vocabulary has zero loss") {
        const auto one = generate_corpus({2, 20, 8, 0.0, 0, 1});
        Corpus flat = one;
        flat.vocab_size = 1;
        for (auto& s : flat.sequences) {
            std::fill(s.begin(), s.end(), 0);
        }
        TrainHyper h;
        h.epochs = 2;
        h.seed = 1;
        const auto result = train(flat, build_frequency_table(flat), schedule_for(1), h);
        for (const auto& e : result.curve) {
            CHECK(e.loss == 0.0);
        }
    }

    SUBCASE("loss falls and accuracy beats chance") {
        TrainHyper h;
        h.epochs = 5;
        h.seed = 2;
        const auto result = train(corpus, freq, schedule_for(16), h);
        REQUIRE(result.curve.size() == 5);
        CHECK(result.curve.back().loss < result.curve.front().loss);
        CHECK(result.curve.back().masked_acc > 5.0 / 16.0);
        CHECK(result.model.final_loss == result.curve.back().loss);
    }

    SUBCASE("same seed, same model; CTF mode trains too") {
        TrainHyper h;
        h.epochs = 1;
        h.seed = 5;
        auto sched = schedule_for(16);
        sched.mode = MaskMode::ctf;
        const auto a = train(corpus, freq, sched, h);
        const auto b = train(corpus, freq, sched, h);
        CHECK(a.model.weights == b.model.weights);
        CHECK(std::isfinite(a.curve.back().loss));
    }

    SUBCASE("bad inputs") {
        TrainHyper h;
        h.seed = 1;
        CHECK_THROWS_AS(train(corpus, freq, schedule_for(17), h), UsageError);
        CHECK_THROWS_AS(train(Corpus{{}, 16, 24, 0}, freq, schedule_for(16), h), UsageError);
        h.batch = 0;
        CHECK_THROWS_AS(train(corpus, freq, schedule_for(16), h), ParameterError);
    }

    SUBCASE("diverging step raises NumericError") {
        TrainHyper h;
        h.lr = 1e200;
        h.epochs = 3;
        h.seed = 1;
        CHECK_THROWS_AS(train(corpus, freq, schedule_for(16), h), NumericError);
    }
}

TEST_CASE("predictor checkpoint round trip") {
    Rng rng(3);
    auto m = PredictorModel::random(6, 4, 2, rng, 0.3);
    m.bias = {0.1, -0.2, 0.3, 1e-300, -0.0, 5.5};
    m.final_loss = 12.25;
    std::stringstream ss;
    write_predictor(ss, m);
    const std::string bytes = ss.str();
    CHECK(bytes.substr(0, 8) == "MAGEPRED");
    const auto back = read_predictor(ss);
    CHECK(back.embedding == m.embedding);
    CHECK(back.weights == m.weights);
    CHECK(back.bias == m.bias);
    CHECK(back.radius == 2);
    CHECK(back.final_loss == 12.25);

    std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(read_predictor(truncated), UsageError);
    std::stringstream wrong("MAGECORR" + bytes.substr(8));
    CHECK_THROWS_AS(read_predictor(wrong), UsageError);
}

TEST_CASE("learning curve CSV") {
    std::vector<EpochStats> curve{{1, 30.5, 0.5, 0.25}, {2, 20.0, 0.4, 0.5}};
    std::stringstream ss;
    write_learning_curve(ss, curve, 1);
    CHECK(ss.str() == "# config_hash=0000000000000001\nepoch,loss,masked_acc\n1,30.5,0.25\n2,20,0.5\n");
}
