#include "mage/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mage/csv.hpp"

namespace mage {

namespace {

// Inverse-CDF draw from unnormalized cumulative weights.
std::size_t draw_cumulative(std::span<const double> cdf, Rng& rng) {
    const double u = rng.uniform() * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto idx = static_cast<std::size_t>(it - cdf.begin());
    return std::min(idx, cdf.size() - 1);
}

std::vector<double> cumulative(std::span<const double> weights) {
    std::vector<double> cdf(weights.size());
    std::partial_sum(weights.begin(), weights.end(), cdf.begin());
    return cdf;
}

struct MarkovTable {
    std::vector<int> cluster_of;
    std::vector<std::vector<Token>> members;
    std::vector<std::vector<double>> cdf;
};

MarkovTable build_markov_table(int vocab_size, std::uint64_t seed, std::span<const double> zipf) {
    MarkovTable table;
    table.cluster_of = markov_clusters(vocab_size, seed);
    const int num_clusters = *std::max_element(table.cluster_of.begin(), table.cluster_of.end()) + 1;
    table.members.resize(num_clusters);
    for (Token t = 0; t < vocab_size; ++t) {
        table.members[table.cluster_of[t]].push_back(t);
    }
    table.cdf.resize(num_clusters);
    for (int c = 0; c < num_clusters; ++c) {
        std::vector<double> w;
        for (const Token t : table.members[c]) {
            w.push_back(zipf[t]);
        }
        table.cdf[c] = cumulative(w);
    }
    return table;
}

TokenSequence generate_sequence(const CorpusParams& params, std::span<const double> zipf_cdf,
                                const MarkovTable* markov, std::size_t doc) {
    Rng rng = Rng::stream(params.seed, doc);
    TokenSequence seq(params.seq_len);
    for (int t = 0; t < params.seq_len; ++t) {
        if (markov == nullptr || t == 0) {
            seq[t] = static_cast<Token>(draw_cumulative(zipf_cdf, rng));
            continue;
        }
        const bool stay = rng.uniform() < kMarkovStay;
        if (stay) {
            const int c = markov->cluster_of[seq[t - 1]];
            seq[t] = markov->members[c][draw_cumulative(markov->cdf[c], rng)];
        } else {
            seq[t] = static_cast<Token>(draw_cumulative(zipf_cdf, rng));
        }
    }
    return seq;
}

} // namespace

void CorpusParams::validate() const {
    if (vocab_size < 2) {
        throw ParameterError("vocab_size must be >= 2");
    }
    if (seq_len < 1) {
        throw ParameterError("seq_len must be >= 1");
    }
    if (num_docs < 1) {
        throw ParameterError("num_docs must be >= 1");
    }
    if (!(zipf_exponent >= 0.0) || !std::isfinite(zipf_exponent)) {
        throw ParameterError("zipf_exponent must be a finite value >= 0");
    }
    if (markov_order != 0 && markov_order != 1) {
        throw ParameterError("markov_order must be 0 or 1");
    }
}

void Corpus::validate() const {
    if (vocab_size < 1 || seq_len < 1) {
        throw UsageError("corpus has invalid vocab_size or seq_len");
    }
    for (std::size_t d = 0; d < sequences.size(); ++d) {
        const auto& seq = sequences[d];
        if (static_cast<int>(seq.size()) != seq_len) {
            throw UsageError("sequence " + std::to_string(d) + " has length " +
                             std::to_string(seq.size()) + ", expected " + std::to_string(seq_len));
        }
        for (const Token t : seq) {
            if (t < 0 || t >= vocab_size) {
                throw UsageError("sequence " + std::to_string(d) + " holds token " +
                                 std::to_string(t) + " outside [0, " + std::to_string(vocab_size) + ")");
            }
        }
    }
}

std::vector<double> zipf_weights(int vocab_size, double exponent) {
    std::vector<double> w(vocab_size);
    for (int k = 0; k < vocab_size; ++k) {
        w[k] = std::pow(static_cast<double>(k + 1), -exponent);
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& v : w) {
        v /= total;
    }
    return w;
}

std::vector<int> markov_clusters(int vocab_size, std::uint64_t seed) {
    std::vector<Token> perm(vocab_size);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng = Rng::stream(seed, ~std::uint64_t{0});
    for (int i = vocab_size - 1; i > 0; --i) {
        const auto j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
        std::swap(perm[i], perm[j]);
    }
    std::vector<int> cluster(vocab_size);
    for (int j = 0; j < vocab_size; ++j) {
        cluster[perm[j]] = j / kMarkovCluster;
    }
    return cluster;
}

Corpus generate_corpus(const CorpusParams& params, Execution exec) {
    params.validate();
    const auto zipf = zipf_weights(params.vocab_size, params.zipf_exponent);
    const auto zipf_cdf = cumulative(zipf);
    MarkovTable markov;
    const MarkovTable* chain = nullptr;
    if (params.markov_order == 1) {
        markov = build_markov_table(params.vocab_size, params.seed, zipf);
        chain = &markov;
    }

    Corpus corpus;
    corpus.vocab_size = params.vocab_size;
    corpus.seq_len = params.seq_len;
    corpus.seed = params.seed;
    corpus.sequences.resize(params.num_docs);

    const auto n = static_cast<std::int64_t>(params.num_docs);
    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t d = 0; d < n; ++d) {
            corpus.sequences[d] = generate_sequence(params, zipf_cdf, chain, static_cast<std::size_t>(d));
        }
    } else {
        for (std::int64_t d = 0; d < n; ++d) {
            corpus.sequences[d] = generate_sequence(params, zipf_cdf, chain, static_cast<std::size_t>(d));
        }
    }
    return corpus;
}

TokenSequence corrupt_sequence(std::span<const Token> clean, int vocab_size, double rate, Rng& rng) {
    if (!(rate >= 0.0 && rate <= 1.0)) {
        throw UsageError("substitution rate must lie in [0, 1]");
    }
    if (vocab_size < 2 && rate > 0.0) {
        throw UsageError("substitution needs at least two tokens");
    }
    TokenSequence out(clean.begin(), clean.end());
    for (Token& tok : out) {
        if (rng.uniform() < rate) {
            // uniform over the V-1 tokens different from the original
            const auto k = static_cast<Token>(rng.below(static_cast<std::uint64_t>(vocab_size - 1)));
            tok = k >= tok ? k + 1 : k;
        }
    }
    return out;
}

std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, std::size_t num_train) {
    if (num_train > corpus.num_docs()) {
        throw UsageError("split point beyond corpus size");
    }
    Corpus train{{}, corpus.vocab_size, corpus.seq_len, corpus.seed};
    Corpus held{{}, corpus.vocab_size, corpus.seq_len, corpus.seed};
    train.sequences.assign(corpus.sequences.begin(), corpus.sequences.begin() + static_cast<std::ptrdiff_t>(num_train));
    held.sequences.assign(corpus.sequences.begin() + static_cast<std::ptrdiff_t>(num_train), corpus.sequences.end());
    return {std::move(train), std::move(held)};
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
    out << corpus.vocab_size << ' ' << corpus.seq_len << ' ' << corpus.num_docs() << ' ' << corpus.seed << '\n';
    for (const auto& seq : corpus.sequences) {
        for (std::size_t t = 0; t < seq.size(); ++t) {
            if (t != 0) {
                out << ' ';
            }
            out << seq[t];
        }
        out << '\n';
    }
}

Corpus read_corpus(std::istream& in) {
    Corpus corpus;
    std::size_t num_docs = 0;
    std::string header;
    if (!std::getline(in, header)) {
        throw UsageError("corpus file is empty");
    }
    std::istringstream hs(header);
    if (!(hs >> corpus.vocab_size >> corpus.seq_len >> num_docs >> corpus.seed)) {
        throw UsageError("corpus header must be 'V T N_docs seed'");
    }
    corpus.sequences.reserve(num_docs);
    std::string line;
    while (corpus.sequences.size() < num_docs && std::getline(in, line)) {
        std::istringstream ls(line);
        TokenSequence seq;
        Token tok = 0;
        while (ls >> tok) {
            seq.push_back(tok);
        }
        if (!ls.eof()) {
            throw UsageError("corpus line " + std::to_string(corpus.sequences.size() + 2) + " is not numeric");
        }
        corpus.sequences.push_back(std::move(seq));
    }
    if (corpus.sequences.size() != num_docs) {
        throw UsageError("corpus header declares " + std::to_string(num_docs) + " sequences, found " +
                         std::to_string(corpus.sequences.size()));
    }
    corpus.validate();
    return corpus;
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw UsageError("cannot write corpus file " + path.string());
    }
    write_corpus(out, corpus);
}

Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw UsageError("cannot open corpus file " + path.string());
    }
    return read_corpus(in);
}

FrequencyTable document_frequency(const Corpus& corpus, Execution exec) {
    if (corpus.sequences.empty()) {
        throw UsageError("document_frequency needs a non-empty corpus");
    }
    const int V = corpus.vocab_size;
    FrequencyTable table;
    table.num_docs = static_cast<std::int64_t>(corpus.num_docs());
    table.doc_freq.assign(V, 0);

    auto count_doc = [V](const TokenSequence& seq, std::vector<std::int64_t>& counts, std::vector<std::uint8_t>& seen) {
        for (const Token t : seq) {
            if (t < 0 || t >= V) {
                throw UsageError("token id outside vocabulary");
            }
            if (!seen[t]) {
                seen[t] = 1;
                ++counts[t];
            }
        }
        for (const Token t : seq) {
            seen[t] = 0;
        }
    };

    const auto n = static_cast<std::int64_t>(corpus.num_docs());
    if (exec == Execution::serial) {
        std::vector<std::uint8_t> seen(V, 0);
        for (std::int64_t d = 0; d < n; ++d) {
            count_doc(corpus.sequences[d], table.doc_freq, seen);
        }
        return table;
    }

    // Check ids up front: exceptions may not escape an OpenMP region.
    for (const auto& seq : corpus.sequences) {
        if (std::any_of(seq.begin(), seq.end(), [V](Token t) { return t < 0 || t >= V; })) {
            throw UsageError("token id outside vocabulary");
        }
    }
#pragma omp parallel
    {
        std::vector<std::int64_t> local(V, 0);
        std::vector<std::uint8_t> seen(V, 0);
#pragma omp for schedule(static) nowait
        for (std::int64_t d = 0; d < n; ++d) {
            count_doc(corpus.sequences[d], local, seen);
        }
#pragma omp critical
        for (int t = 0; t < V; ++t) {
            table.doc_freq[t] += local[t];
        }
    }
    return table;
}

FrequencyTable idf_scores(FrequencyTable table) {
    const double n1 = static_cast<double>(table.num_docs) + 1.0;
    table.idf.resize(table.doc_freq.size());
    for (std::size_t t = 0; t < table.doc_freq.size(); ++t) {
        table.idf[t] = std::log(n1 / (static_cast<double>(table.doc_freq[t]) + 1.0));
    }
    return table;
}

std::vector<double> base_mask_probabilities(std::span<const double> z) {
    std::vector<double> p(z.size(), 0.5);
    if (z.empty() || std::all_of(z.begin(), z.end(), [&](double v) { return v == z.front(); })) {
        return p;
    }
    const double n = static_cast<double>(z.size());
    const double mean = std::accumulate(z.begin(), z.end(), 0.0) / n;
    double var = 0.0;
    for (const double v : z) {
        var += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(var / n);
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = 1.0 / (1.0 + std::exp(-(z[i] - mean) / sd));
    }
    return p;
}

FrequencyTable base_mask_probabilities(FrequencyTable table) {
    if (table.idf.size() != table.doc_freq.size()) {
        throw UsageError("idf scores must be computed before base probabilities");
    }
    table.p_base = base_mask_probabilities(std::span<const double>(table.idf));
    return table;
}

std::vector<double> sequence_base_probabilities(const FrequencyTable& table, std::span<const Token> tokens) {
    std::vector<double> z(tokens.size());
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        const Token tok = tokens[t];
        if (tok < 0 || tok >= table.vocab_size()) {
            throw UsageError("token id outside frequency table");
        }
        z[t] = table.idf.at(tok);
    }
    return base_mask_probabilities(std::span<const double>(z));
}

FrequencyTable build_frequency_table(const Corpus& corpus, Execution exec) {
    return base_mask_probabilities(idf_scores(document_frequency(corpus, exec)));
}

void write_frequency_csv(std::ostream& out, const FrequencyTable& table, std::uint64_t config_hash) {
    write_csv_preamble(out, config_hash, "token,f,z,p_base");
    for (int t = 0; t < table.vocab_size(); ++t) {
        out << t << ',' << table.doc_freq[t] << ',' << format_real(table.idf.at(t)) << ','
            << format_real(table.p_base.at(t)) << '\n';
    }
}

} // namespace mage
