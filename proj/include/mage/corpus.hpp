#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mage/common.hpp"
#include "mage/parallel.hpp"
#include "mage/rng.hpp"

namespace mage {

struct CorpusParams {
    int vocab_size = 64;
    int num_docs = 1000;
    int seq_len = 64;
    double zipf_exponent = 1.2;
    int markov_order = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Fixed-length token sequences over a vocabulary of size V.
struct Corpus {
    std::vector<TokenSequence> sequences;
    int vocab_size = 0;
    int seq_len = 0;
    std::uint64_t seed = 0;

    std::size_t num_docs() const { return sequences.size(); }

    /// Throws UsageError if any sequence has the wrong length or an id outside [0, V).
    void validate() const;
};

/// Normalized Zipf weights over ids 0..V-1: w(k) proportional to (k+1)^-s.
std::vector<double> zipf_weights(int vocab_size, double exponent);

/// Order-1 chains keep the Zipf marginal exactly: with probability
/// `kMarkovStay` the next token is drawn from the Zipf law restricted to the
/// current token's cluster, otherwise from the full Zipf law. Clusters are a
/// seeded random partition of the vocabulary into groups of `kMarkovCluster`.
inline constexpr double kMarkovStay = 0.95;
inline constexpr int kMarkovCluster = 4;

/// Deterministic in (params). Each sequence draws from its own stream of the
/// master seed, so the serial and parallel paths agree bit for bit.
Corpus generate_corpus(const CorpusParams& params, Execution exec = Execution::parallel);

/// Cluster id of every token for an order-1 corpus with this seed.
std::vector<int> markov_clusters(int vocab_size, std::uint64_t seed);

/// Replaces each position with probability `rate` by a uniformly chosen different token.
TokenSequence corrupt_sequence(std::span<const Token> clean, int vocab_size, double rate, Rng& rng);

/// Splits off the first `num_train` sequences; the remainder is the held-out part.
std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, std::size_t num_train);

void write_corpus(std::ostream& out, const Corpus& corpus);
Corpus read_corpus(std::istream& in);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& path);

/// Per-token corpus statistics. `doc_freq` counts documents, not occurrences.
struct FrequencyTable {
    std::vector<std::int64_t> doc_freq;
    std::int64_t num_docs = 0;
    std::vector<double> idf;
    std::vector<double> p_base;

    int vocab_size() const { return static_cast<int>(doc_freq.size()); }
};

FrequencyTable document_frequency(const Corpus& corpus, Execution exec = Execution::parallel);

/// z(t) = ln((N_docs + 1) / (f(t) + 1)).
FrequencyTable idf_scores(FrequencyTable table);

/// sigmoid((z - mean(z)) / std(z)) with the population std. A zero std maps
/// every score to 0.5.
std::vector<double> base_mask_probabilities(std::span<const double> z);

/// Vocabulary-level p_base, standardized over the idf of all V tokens.
FrequencyTable base_mask_probabilities(FrequencyTable table);

/// p_base for one sequence, standardized over the z values at its positions.
std::vector<double> sequence_base_probabilities(const FrequencyTable& table,
                                                std::span<const Token> tokens);

/// document_frequency, idf_scores and base_mask_probabilities in one go.
FrequencyTable build_frequency_table(const Corpus& corpus, Execution exec = Execution::parallel);

/// CSV `token,f,z,p_base`, preceded by a `# config_hash=` line.
void write_frequency_csv(std::ostream& out, const FrequencyTable& table, std::uint64_t config_hash);

} // namespace mage
