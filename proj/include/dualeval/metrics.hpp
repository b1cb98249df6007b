#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualeval/seqcore.hpp"

namespace dualeval {

// Conventions stamped into every metric fragment.
inline constexpr std::string_view kTiePolicy = "average_rank";
inline constexpr std::string_view kQuantileRule = "linear_interpolation_between_order_statistics";
inline constexpr std::string_view kUnassignedGroup = "unassigned";

/// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation of x and y. Requires equal length n >= 2, finite
/// entries, and neither vector constant (UndefinedCorrelation otherwise).
double pearson_r(std::span<const double> x, std::span<const double> y);

/// Pearson correlation of the average-rank vectors.
double spearman_rho(std::span<const double> x, std::span<const double> y);

/// sqrt(mean((x - y)^2)); n >= 1.
double rmse(std::span<const double> x, std::span<const double> y);

/// Unweighted mean of |rho| across datasets.
double mean_abs_spearman(const std::map<std::string, double>& per_dataset);

/// q in [0, 1] over an ascending vector: h = (n-1)q, interpolate between
/// floor(h) and floor(h)+1.
double quantile_sorted(std::span<const double> sorted, double q);

struct Summary {
    std::size_t count = 0;
    double mean = 0;
    double median = 0;
    double q1 = 0;
    double q3 = 0;
    double min = 0;
    double max = 0;
};

Summary summarize(std::span<const double> values);
nlohmann::json to_json(const Summary& s);

struct ScoredRecord {
    std::string id;
    TaxonLineage lineage;
    double perplexity;
};

/// Perplexities bucketed by the value at one taxon rank.
struct GroupedDistribution {
    TaxonRank rank;
    std::map<std::string, std::vector<double>> groups;

    std::map<std::string, Summary> summaries() const;
    /// Associative merge of two groupings at the same rank.
    void merge(const GroupedDistribution& other);
    nlohmann::json to_json() const;
};

/// Records lacking the rank land in the "unassigned" group.
GroupedDistribution group_perplexities(std::span<const ScoredRecord> records, TaxonRank rank);

/// {metric, value, n, tie_policy, quantile_rule}
nlohmann::json metric_fragment(std::string_view name, double value, std::size_t n);

}  // namespace dualeval
