#include "mage/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace mage {

std::vector<int> frequency_deciles(const FrequencyTable& table, int buckets) {
    const int V = table.vocab_size();
    if (buckets < 1) {
        throw UsageError("need at least one frequency bucket");
    }
    std::vector<Token> order(V);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Token a, Token b) { return table.doc_freq[a] > table.doc_freq[b]; });
    std::vector<int> bucket(V);
    for (int rank = 0; rank < V; ++rank) {
        bucket[order[rank]] = static_cast<int>(static_cast<long long>(rank) * buckets / V);
    }
    return bucket;
}

std::size_t edit_distance(std::span<const Token> a, std::span<const Token> b) {
    std::vector<std::size_t> prev(b.size() + 1);
    std::vector<std::size_t> cur(b.size() + 1);
    std::iota(prev.begin(), prev.end(), std::size_t{0});
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double MetricsReport::bottom_decile_accuracy() const {
    for (std::size_t k = decile_positions.size(); k-- > 0;) {
        if (decile_positions[k] > 0) {
            return decile_accuracy[k];
        }
    }
    return 0.0;
}

MetricsAccumulator::MetricsAccumulator(std::vector<int> deciles, int buckets) : deciles_(std::move(deciles)) {
    report_.decile_positions.assign(buckets, 0);
    report_.decile_correct.assign(buckets, 0);
}

void MetricsAccumulator::add(std::span<const Token> reference, std::span<const Token> decoded,
                             std::span<const DecodeStep> trace) {
    if (reference.size() != decoded.size()) {
        throw UsageError("reference and decoded lengths differ");
    }
    ++report_.sequences;
    bool exact = true;
    for (std::size_t t = 0; t < reference.size(); ++t) {
        const int bucket = deciles_.at(static_cast<std::size_t>(reference[t]));
        const bool hit = reference[t] == decoded[t];
        ++report_.positions;
        ++report_.decile_positions[bucket];
        if (hit) {
            ++report_.correct;
            ++report_.decile_correct[bucket];
        } else {
            exact = false;
        }
    }
    report_.exact += exact ? 1 : 0;
    report_.total_edit += edit_distance(reference, decoded);
    if (trace_n_.size() < trace.size()) {
        trace_n_.resize(trace.size(), 0);
        trace_conf_.resize(trace.size(), 0.0);
        trace_open_.resize(trace.size(), 0.0);
    }
    for (std::size_t i = 0; i < trace.size(); ++i) {
        ++trace_n_[i];
        trace_conf_[i] += trace[i].mean_confidence;
        trace_open_[i] += static_cast<double>(trace[i].open_count);
    }
}

MetricsReport MetricsAccumulator::finish() const {
    MetricsReport r = report_;
    const auto ratio = [](std::size_t num, std::size_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    r.token_accuracy = ratio(r.correct, r.positions);
    r.exact_match = ratio(r.exact, r.sequences);
    r.mean_edit_distance = ratio(r.total_edit, r.sequences);
    r.decile_accuracy.resize(r.decile_positions.size());
    for (std::size_t k = 0; k < r.decile_positions.size(); ++k) {
        r.decile_accuracy[k] = ratio(r.decile_correct[k], r.decile_positions[k]);
    }
    r.trace.clear();
    for (std::size_t i = 0; i < trace_n_.size(); ++i) {
        const double n = static_cast<double>(trace_n_[i]);
        // open_count is reported rounded to the nearest whole position
        r.trace.push_back({static_cast<int>(i), static_cast<std::size_t>(trace_open_[i] / n + 0.5), trace_conf_[i] / n});
    }
    return r;
}

} // namespace mage
