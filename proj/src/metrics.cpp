#include "dualeval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dualeval/errors.hpp"

namespace dualeval {

namespace {

void check_paired(std::span<const double> x, std::span<const double> y, std::size_t min_n) {
    if (x.size() != y.size()) {
        throw DimensionMismatch("paired samples differ in length: " + std::to_string(x.size()) + " vs " +
                                std::to_string(y.size()));
    }
    if (x.size() < min_n) throw DataError("need at least " + std::to_string(min_n) + " paired samples");
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
            throw DataError("non-finite sample at index " + std::to_string(i));
        }
    }
}

double mean_of(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && values[order[j]] == values[order[i]]) ++j;
        // positions i..j-1 hold ranks i+1..j
        const double rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
        i = j;
    }
    return ranks;
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
    check_paired(x, y, 2);
    const double mx = mean_of(x);
    const double my = mean_of(y);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelation("correlation undefined: constant input vector");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
    check_paired(x, y, 2);
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson_r(rx, ry);
}

double rmse(std::span<const double> x, std::span<const double> y) {
    check_paired(x, y, 1);
    double ss = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(x.size()));
}

double mean_abs_spearman(const std::map<std::string, double>& per_dataset) {
    if (per_dataset.empty()) throw DataError("mean |rho| needs at least one dataset");
    double sum = 0;
    for (const auto& [id, rho] : per_dataset) sum += std::abs(rho);
    return sum / static_cast<double>(per_dataset.size());
}

double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw DataError("quantile of an empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw DataError("quantile level outside [0, 1]");
    const double h = static_cast<double>(sorted.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Summary summarize(std::span<const double> values) {
    Summary s;
    s.count = values.size();
    if (values.empty()) return s;
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    s.mean = mean_of(sorted);
    s.median = quantile_sorted(sorted, 0.5);
    s.q1 = quantile_sorted(sorted, 0.25);
    s.q3 = quantile_sorted(sorted, 0.75);
    s.min = sorted.front();
    s.max = sorted.back();
    return s;
}

nlohmann::json to_json(const Summary& s) {
    return nlohmann::json{{"count", s.count}, {"mean", s.mean}, {"median", s.median}, {"q1", s.q1},
                          {"q3", s.q3},       {"min", s.min},   {"max", s.max}};
}

std::map<std::string, Summary> GroupedDistribution::summaries() const {
    std::map<std::string, Summary> out;
    for (const auto& [key, values] : groups) out.emplace(key, summarize(values));
    return out;
}

void GroupedDistribution::merge(const GroupedDistribution& other) {
    if (other.rank != rank) throw DataError("cannot merge groupings at different ranks");
    for (const auto& [key, values] : other.groups) {
        auto& dst = groups[key];
        dst.insert(dst.end(), values.begin(), values.end());
    }
}

nlohmann::json GroupedDistribution::to_json() const {
    nlohmann::json j;
    j["rank"] = std::string(dualeval::to_string(rank));
    j["quantile_rule"] = std::string(kQuantileRule);
    nlohmann::json g = nlohmann::json::object();
    for (const auto& [key, summary] : summaries()) g[key] = dualeval::to_json(summary);
    j["groups"] = std::move(g);
    return j;
}

GroupedDistribution group_perplexities(std::span<const ScoredRecord> records, TaxonRank rank) {
    GroupedDistribution out{rank, {}};
    for (const auto& r : records) {
        const auto& value = lineage_at(r.lineage, rank);
        const std::string key = (value && !value->empty()) ? *value : std::string(kUnassignedGroup);
        out.groups[key].push_back(r.perplexity);
    }
    return out;
}

nlohmann::json metric_fragment(std::string_view name, double value, std::size_t n) {
    return nlohmann::json{{"metric", name},
                          {"value", value},
                          {"n", n},
                          {"tie_policy", kTiePolicy},
                          {"quantile_rule", kQuantileRule}};
}

}  // namespace dualeval
