#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mage/common.hpp"
#include "mage/corpus.hpp"
#include "mage/decoder.hpp"

namespace mage {

inline constexpr int kNumDeciles = 10;

/// Bucket of every token by document-frequency rank: bucket 0 holds the most
/// frequent tenth of the vocabulary, the last bucket the rarest. Ties in f
/// rank the lower id first.
std::vector<int> frequency_deciles(const FrequencyTable& table, int buckets = kNumDeciles);

/// Levenshtein distance.
std::size_t edit_distance(std::span<const Token> a, std::span<const Token> b);

struct MetricsReport {
    std::size_t sequences = 0;
    std::size_t positions = 0;
    std::size_t correct = 0;
    std::size_t exact = 0;
    std::size_t total_edit = 0;
    double token_accuracy = 0.0;
    double exact_match = 0.0;
    double mean_edit_distance = 0.0;
    std::vector<std::size_t> decile_positions; ///< positions whose reference token falls in the bucket
    std::vector<std::size_t> decile_correct;
    std::vector<double> decile_accuracy;       ///< 0 for empty buckets
    std::vector<DecodeStep> trace;             ///< per-step means over sequences

    /// Accuracy of the rarest non-empty bucket.
    double bottom_decile_accuracy() const;
};

/// Order-sensitive accumulator; feed sequences in a fixed order for reproducible reports.
class MetricsAccumulator {
public:
    explicit MetricsAccumulator(std::vector<int> deciles, int buckets = kNumDeciles);

    void add(std::span<const Token> reference, std::span<const Token> decoded, std::span<const DecodeStep> trace = {});
    MetricsReport finish() const;

private:
    std::vector<int> deciles_;
    MetricsReport report_;
    std::vector<double> trace_conf_;
    std::vector<double> trace_open_;
    std::vector<std::size_t> trace_n_;
};

} // namespace mage
