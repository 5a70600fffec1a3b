#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mage/corpus.hpp"

using namespace mage;

namespace {

// Upper 0.9999 quantile of chi-square with 63 degrees of freedom
// (scipy.stats.chi2.ppf(0.9999, 63), tests/oracles/oracles.py).
constexpr double kChi2Critical63 = 113.50499285105408;

double chi_square(const std::vector<std::size_t>& counts, const std::vector<double>& probs, std::size_t n) {
    double stat = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        const double expected = probs[k] * static_cast<double>(n);
        stat += (static_cast<double>(counts[k]) - expected) * (static_cast<double>(counts[k]) - expected) / expected;
    }
    return stat;
}

Corpus three_docs() {
    return Corpus{{{1, 1, 2}, {2, 3}, {3}}, 4, 0, 0};
}

} // namespace

TEST_CASE("uniform two-token corpus is balanced") {
    CorpusParams p{2, 400, 50, 0.0, 0, 123};
    const auto corpus = generate_corpus(p);
    std::size_t ones = 0;
    for (const auto& s : corpus.sequences) {
        ones += static_cast<std::size_t>(std::count(s.begin(), s.end(), 1));
    }
    const double n = 400.0 * 50.0;
    CHECK(std::abs(static_cast<double>(ones) / n - 0.5) <= 3.0 * std::sqrt(0.25 / n));
}

TEST_CASE("generation is a pure function of parameters and seed") {
    CorpusParams p{64, 1000, 128, 1.2, 0, 7};
    const auto a = generate_corpus(p);
    const auto b = generate_corpus(p);
    CHECK(a.sequences == b.sequences);
    CHECK(a.num_docs() == 1000);
    a.validate();

    p.markov_order = 1;
    CHECK(generate_corpus(p).sequences == generate_corpus(p).sequences);
    p.seed = 8;
    CHECK(generate_corpus(p).sequences != a.sequences);
}

TEST_CASE("iid marginal passes a chi-square test against Zipf(1.2)") {
    CorpusParams p{64, 1000, 128, 1.2, 0, 7};
    const auto corpus = generate_corpus(p);
    std::vector<std::size_t> counts(64, 0);
    for (const auto& s : corpus.sequences) {
        for (const Token t : s) {
            ++counts[t];
        }
    }
    const auto probs = zipf_weights(64, 1.2);
    CHECK(chi_square(counts, probs, 1000 * 128) < kChi2Critical63);
    CHECK(counts[0] == *std::max_element(counts.begin(), counts.end()));
}

TEST_CASE("order-1 chain keeps the Zipf marginal") {
    // last position of independent documents: one draw per document
    CorpusParams p{64, 20000, 32, 1.2, 1, 99};
    const auto corpus = generate_corpus(p);
    std::vector<std::size_t> counts(64, 0);
    for (const auto& s : corpus.sequences) {
        ++counts[s.back()];
    }
    CHECK(chi_square(counts, zipf_weights(64, 1.2), 20000) < kChi2Critical63);
}

TEST_CASE("order-1 chain is locally predictive") {
    CorpusParams p{64, 500, 64, 1.2, 1, 5};
    const auto corpus = generate_corpus(p);
    const auto cluster = markov_clusters(64, 5);
    std::size_t same = 0;
    std::size_t pairs = 0;
    for (const auto& s : corpus.sequences) {
        for (std::size_t t = 1; t < s.size(); ++t) {
            same += cluster[s[t]] == cluster[s[t - 1]] ? 1 : 0;
            ++pairs;
        }
    }
    // at least the stay probability; an iid chain would give ~ sum of squared cluster masses
    CHECK(static_cast<double>(same) / static_cast<double>(pairs) > kMarkovStay - 0.02);
}

TEST_CASE("generator rejects invalid parameters") {
    CHECK_THROWS_AS(generate_corpus({1, 10, 10, 1.0, 0, 1}), ParameterError);
    CHECK_THROWS_AS(generate_corpus({8, 0, 10, 1.0, 0, 1}), ParameterError);
    CHECK_THROWS_AS(generate_corpus({8, 10, 0, 1.0, 0, 1}), ParameterError);
    CHECK_THROWS_AS(generate_corpus({8, 10, 10, -0.5, 0, 1}), ParameterError);
    CHECK_THROWS_AS(generate_corpus({8, 10, 10, 1.0, 2, 1}), ParameterError);
}

TEST_CASE("corrupt_sequence") {
    Rng rng(42);
    TokenSequence clean(10000);
    for (std::size_t i = 0; i < clean.size(); ++i) {
        clean[i] = static_cast<Token>(i % 16);
    }

    SUBCASE("rate 0 is the identity") { CHECK(corrupt_sequence(clean, 16, 0.0, rng) == clean); }

    SUBCASE("rate 1 changes every position") {
        const auto out = corrupt_sequence(clean, 16, 1.0, rng);
        for (std::size_t i = 0; i < clean.size(); ++i) {
            REQUIRE(out[i] != clean[i]);
            REQUIRE(out[i] >= 0);
            REQUIRE(out[i] < 16);
        }
    }

    SUBCASE("rate 0.3 within a 3-sigma binomial bound") {
        const auto out = corrupt_sequence(clean, 16, 0.3, rng);
        std::size_t changed = 0;
        for (std::size_t i = 0; i < clean.size(); ++i) {
            changed += out[i] != clean[i] ? 1 : 0;
        }
        const double n = static_cast<double>(clean.size());
        CHECK(std::abs(static_cast<double>(changed) / n - 0.3) <= 3.0 * std::sqrt(0.3 * 0.7 / n));
    }

    SUBCASE("substitutes are uniform over the other tokens") {
        TokenSequence zeros(40000, 0);
        const auto out = corrupt_sequence(zeros, 5, 1.0, rng);
        std::vector<double> counts(5, 0.0);
        for (const Token t : out) {
            counts[t] += 1.0;
        }
        CHECK(counts[0] == 0.0);
        for (int k = 1; k < 5; ++k) {
            CHECK(std::abs(counts[k] / 40000.0 - 0.25) < 3.0 * std::sqrt(0.25 * 0.75 / 40000.0));
        }
    }

    CHECK_THROWS_AS(corrupt_sequence(clean, 16, 1.5, rng), UsageError);
    CHECK_THROWS_AS(corrupt_sequence(clean, 16, -0.1, rng), UsageError);
}

TEST_CASE("document_frequency counts documents, not occurrences") {
    const auto table = document_frequency(three_docs());
    CHECK(table.num_docs == 3);
    CHECK(table.doc_freq == std::vector<std::int64_t>{0, 1, 2, 2});

    Corpus everywhere{{{0, 1}, {1, 1}, {2, 1}}, 3, 2, 0};
    CHECK(document_frequency(everywhere).doc_freq[1] == 3);

    CHECK_THROWS_AS(document_frequency(Corpus{{}, 4, 3, 0}), UsageError);
}

TEST_CASE("document_frequency is permutation invariant") {
    auto corpus = generate_corpus({32, 200, 20, 1.0, 1, 3});
    const auto base = document_frequency(corpus).doc_freq;
    Rng rng(17);
    for (auto& s : corpus.sequences) {
        for (std::size_t i = s.size() - 1; i > 0; --i) {
            std::swap(s[i], s[rng.below(i + 1)]);
        }
    }
    std::reverse(corpus.sequences.begin(), corpus.sequences.end());
    CHECK(document_frequency(corpus).doc_freq == base);
}

TEST_CASE("idf scores") {
    FrequencyTable table;
    table.num_docs = 9;
    table.doc_freq = {9, 0, 4};
    table = idf_scores(table);
    CHECK(table.idf[0] == 0.0);
    CHECK(table.idf[1] == doctest::Approx(std::log(10.0)).epsilon(1e-15));
    CHECK(table.idf[2] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("base mask probabilities") {
    SUBCASE("population-std standardization of [0, 1, 2]") {
        const std::vector<double> z{0.0, 1.0, 2.0};
        const auto p = base_mask_probabilities(std::span<const double>(z));
        // tests/oracles/oracles.py
        CHECK(p[0] == doctest::Approx(0.22710251943568419).epsilon(1e-12));
        CHECK(p[1] == 0.5);
        CHECK(p[2] == doctest::Approx(0.7728974805643157).epsilon(1e-12));
    }
    SUBCASE("zero spread maps to one half") {
        const std::vector<double> z(5, 0.1);
        for (const double p : base_mask_probabilities(std::span<const double>(z))) {
            CHECK(p == 0.5);
        }
    }
    SUBCASE("single position") {
        const std::vector<double> z{3.0};
        CHECK(base_mask_probabilities(std::span<const double>(z))[0] == 0.5);
    }
    SUBCASE("three-document example") {
        const auto table = build_frequency_table(three_docs());
        CHECK(table.idf[1] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        CHECK(table.idf[2] == doctest::Approx(std::log(4.0 / 3.0)).epsilon(1e-12));
        CHECK(table.p_base[0] == doctest::Approx(0.8334048210512831).epsilon(1e-12));
        CHECK(table.p_base[1] == doctest::Approx(0.5163955667959835).epsilon(1e-12));
        CHECK(table.p_base[2] == doctest::Approx(0.3020027055854541).epsilon(1e-12));
        const TokenSequence seq{1, 1, 2};
        const auto p = sequence_base_probabilities(table, seq);
        CHECK(p[0] == doctest::Approx(0.6697615493266569).epsilon(1e-12));
        CHECK(p[2] == doctest::Approx(0.19557031749304313).epsilon(1e-12));
    }
}

TEST_CASE("scarcer tokens always get higher idf and p_base") {
    Rng rng(2024);
    for (int trial = 0; trial < 2000; ++trial) {
        FrequencyTable table;
        table.num_docs = 1 + static_cast<std::int64_t>(rng.below(100));
        const int V = 2 + static_cast<int>(rng.below(30));
        for (int t = 0; t < V; ++t) {
            table.doc_freq.push_back(static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(table.num_docs) + 1)));
        }
        table = base_mask_probabilities(idf_scores(table));
        for (int a = 0; a < V; ++a) {
            for (int b = 0; b < V; ++b) {
                if (table.doc_freq[a] < table.doc_freq[b]) {
                    REQUIRE(table.idf[a] > table.idf[b]);
                    REQUIRE(table.p_base[a] > table.p_base[b]);
                }
            }
            REQUIRE(table.p_base[a] > 0.0);
            REQUIRE(table.p_base[a] < 1.0);
        }
    }
}

TEST_CASE("corpus text format") {
    const auto corpus = generate_corpus({10, 5, 7, 1.0, 1, 77});
    std::stringstream ss;
    write_corpus(ss, corpus);
    const std::string text = ss.str();
    CHECK(text.rfind("10 7 5 77\n", 0) == 0);
    const auto back = read_corpus(ss);
    CHECK(back.sequences == corpus.sequences);
    CHECK(back.seed == 77);

    std::stringstream bad_id("3 2 1 0\n0 5\n");
    CHECK_THROWS_AS(read_corpus(bad_id), UsageError);
    std::stringstream short_file("3 2 2 0\n0 1\n");
    CHECK_THROWS_AS(read_corpus(short_file), UsageError);
    std::stringstream wrong_len("3 2 1 0\n0 1 2\n");
    CHECK_THROWS_AS(read_corpus(wrong_len), UsageError);
    std::stringstream junk("3 2 1 0\n0 x\n");
    CHECK_THROWS_AS(read_corpus(junk), UsageError);
}

TEST_CASE("frequency CSV") {
    std::stringstream ss;
    write_frequency_csv(ss, build_frequency_table(three_docs()), 0xabc);
    std::string line;
    std::getline(ss, line);
    CHECK(line == "# config_hash=0000000000000abc");
    std::getline(ss, line);
    CHECK(line == "token,f,z,p_base");
    std::getline(ss, line);
    CHECK(line.rfind("0,0,", 0) == 0);
}

TEST_CASE("split keeps order") {
    const auto corpus = generate_corpus({8, 10, 4, 1.0, 0, 2});
    const auto [train, held] = split_corpus(corpus, 7);
    CHECK(train.num_docs() == 7);
    CHECK(held.num_docs() == 3);
    CHECK(held.sequences.front() == corpus.sequences[7]);
    CHECK_THROWS_AS(split_corpus(corpus, 11), UsageError);
}
