#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualeval/backtranslate.hpp"
#include "dualeval/seqcore.hpp"

namespace dualeval {

inline constexpr std::string_view kRcSuffix = "/rc";

/// Originals first, then their reverse complements (id + "/rc") in the same
/// order. Records that already are, or already have, an rc companion are not
/// augmented again. With `is_dna` false the input is returned unchanged.
std::vector<SequenceRecord> augment_reverse_complement(std::span<const SequenceRecord> records, bool is_dna = true);

struct TrainValSplit {
    std::vector<SequenceRecord> train;
    std::vector<SequenceRecord> val;
};

/// |val| = round(val_fraction * n). Membership is keyed on (seed, record id) so
/// it does not move when the input is reordered; each side keeps input order.
TrainValSplit split_train_val(std::span<const SequenceRecord> records, double val_fraction, std::uint64_t seed);

struct SegmentSource {
    std::string id;
    std::size_t offset;  // start in the concatenated stream
    std::size_t length;
};

struct Partition {
    std::vector<std::string> segments;
    std::vector<SegmentSource> sources;
    std::size_t total_tokens = 0;
};

/// Concatenates in input order (no separator) and cuts into fixed-length segments;
/// only the last may be short.
Partition concat_and_partition(std::span<const SequenceRecord> records, std::size_t segment_length);

struct LongestPerTaxon {
    std::vector<SequenceRecord> records;
    std::size_t dropped_missing_rank = 0;
};

/// Longest record per distinct value at `rank` (ties: smallest id). Output keeps
/// the input order of the winners.
LongestPerTaxon select_longest_per_taxon(std::span<const SequenceRecord> records, TaxonRank rank);

/// Removes records whose sequence contains `motif`. Throws ConfigError on empty motif.
std::vector<SequenceRecord> filter_ambiguous(std::span<const SequenceRecord> records, std::string_view motif);

/// Conjunction of `rank=value` / `rank!=value` clauses joined by '&', e.g.
///   family=Orthoherpesviridae & genus!=Simplexvirus
/// A `!=` clause matches records whose rank value is absent.
class LineageFilter {
public:
    static LineageFilter parse(std::string_view expr);
    bool matches(const TaxonLineage& lineage) const;
    bool empty() const noexcept { return clauses_.empty(); }
    const std::string& text() const noexcept { return text_; }

private:
    struct Clause {
        TaxonRank rank;
        std::string value;
        bool negate;
    };
    std::vector<Clause> clauses_;
    std::string text_;
};

std::vector<SequenceRecord> filter_lineage(std::span<const SequenceRecord> records, const LineageFilter& filter);

// ---------------------------------------------------------------------------
// Stratified sampling

struct Stratum {
    double lo;
    double hi;  // half-open [lo, hi) except the last, which is closed
    std::size_t population = 0;
    std::size_t quota = 0;
};

/// Strata over one score distribution with their draw quotas.
struct StratifiedPlan {
    std::vector<Stratum> strata;
    std::size_t total = 0;
    std::size_t train = 0;
    std::size_t val = 0;
};

/// Interval edges at the empirical quantiles k/n_strata (linear interpolation).
/// Quotas start as an even share of `total` and any share a stratum cannot fill
/// moves to the nearest strata with room; each move appends to `warnings`.
StratifiedPlan make_quantile_plan(std::span<const double> scores, std::size_t total, std::size_t val,
                                  std::size_t n_strata, std::vector<std::string>* warnings);

/// Which stratum a score falls in.
std::size_t stratum_of(const StratifiedPlan& plan, double score);

struct StratifiedDraw {
    std::vector<std::size_t> train;  // indices into the scored items, ascending
    std::vector<std::size_t> val;
    std::vector<std::size_t> rest;
};

/// Draws plan.total items by stratum quota. Within a stratum items are ranked
/// by a key hashed from (seed, keys[i]); val takes a proportional share of each
/// stratum's draw.
StratifiedDraw stratified_draw(std::span<const double> scores, std::span<const std::string> keys,
                               const StratifiedPlan& plan, std::uint64_t seed);

struct SamplingPreset {
    std::string name;
    std::size_t per_dataset_total;
    std::size_t val;            // val count at full size
    bool allow_smaller = false; // false: datasets below the total are excluded
    std::size_t n_strata = 10;

    /// 500 drawn per dataset, 400 train / 100 val, rest is test.
    static SamplingPreset probe_main();
    /// 624 per dataset (or all, if fewer), 80/20 split of the draw.
    static SamplingPreset probe_balanced_624();
    static SamplingPreset by_name(std::string_view name);
};

struct DatasetSplitCounts {
    std::size_t available = 0;
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
    bool excluded = false;
};

struct MutantSplit {
    std::vector<MutantEntry> train;
    std::vector<MutantEntry> val;
    std::vector<MutantEntry> test;
    std::map<std::string, DatasetSplitCounts> per_dataset;
    std::vector<std::string> warnings;
};

/// Per dataset: stratify on DMS score deciles and draw the preset's quota;
/// everything not drawn is test. Datasets are visited in first-appearance order.
MutantSplit stratified_sample(std::span<const MutantEntry> entries, const SamplingPreset& preset, std::uint64_t seed);

struct RecordSample {
    std::vector<SequenceRecord> selected;
    std::vector<SequenceRecord> rest;
};

/// Length-stratified draw of `count` records (the influenza fine-tuning preset).
RecordSample stratified_by_length(std::span<const SequenceRecord> records, std::size_t count, std::uint64_t seed,
                                  std::size_t n_strata = 10);

// ---------------------------------------------------------------------------
// Pipeline

struct CurationConfig {
    bool add_rc = true;
    double val_fraction = 0.10;
    std::size_t segment_length = 32000;
    std::optional<std::string> drop_ambiguous_run = std::string("NNN");
    bool require_genus = false;
    bool dedup = true;
    std::optional<std::string> lineage_filter;
    std::optional<TaxonRank> longest_per;
    std::uint64_t seed = 0;

    /// Throws ConfigError on violated invariants.
    void validate() const;
    nlohmann::json to_json() const;
    static CurationConfig from_json(const nlohmann::json& j);
};

struct StageCount {
    std::string stage;
    std::size_t in = 0;
    std::size_t out = 0;
    std::optional<std::size_t> out_val;  // split stage only
    std::string note;
};

/// Per-stage record counts. Each stage's input equals the previous stage's output.
struct CurationManifest {
    std::uint64_t seed = 0;
    std::vector<StageCount> stages;
    std::vector<std::string> warnings;

    void add(std::string stage, std::size_t in, std::size_t out, std::string note = {});
    bool consistent() const;
    nlohmann::json to_json() const;
};

struct CurationResult {
    TrainValSplit split;
    Partition train_segments;
    Partition val_segments;
    CurationManifest manifest;
};

/// filter -> require genus -> ambiguity filter -> dedup -> longest-per-taxon ->
/// augment -> split -> partition (train and val separately).
CurationResult run_curation(std::span<const SequenceRecord> records, const CurationConfig& config);

}  // namespace dualeval
