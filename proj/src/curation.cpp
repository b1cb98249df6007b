#include "dualeval/curation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "dualeval/errors.hpp"
#include "dualeval/hashing.hpp"
#include "dualeval/metrics.hpp"

namespace dualeval {

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

// Indices ordered by their seeded key; equal keys fall back to input order.
std::vector<std::size_t> keyed_order(std::span<const std::size_t> indices, std::span<const std::string> keys,
                                     std::uint64_t seed) {
    std::vector<std::pair<std::uint64_t, std::size_t>> order;
    order.reserve(indices.size());
    for (auto i : indices) order.emplace_back(mix_key(seed, keys[i], 0), i);
    std::sort(order.begin(), order.end());
    std::vector<std::size_t> out;
    out.reserve(order.size());
    for (const auto& [key, i] : order) out.push_back(i);
    return out;
}

// Largest-remainder apportionment of `total` by `weights` (ties: lower index).
std::vector<std::size_t> apportion(std::size_t total, std::span<const std::size_t> weights) {
    std::vector<std::size_t> out(weights.size(), 0);
    const std::size_t sum = std::accumulate(weights.begin(), weights.end(), std::size_t{0});
    if (sum == 0 || total == 0) return out;
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = static_cast<double>(total) * static_cast<double>(weights[i]) / static_cast<double>(sum);
        out[i] = static_cast<std::size_t>(std::floor(exact));
        assigned += out[i];
        remainders.emplace_back(-(exact - std::floor(exact)), i);
    }
    std::sort(remainders.begin(), remainders.end());
    for (std::size_t k = 0; assigned < total; ++k, ++assigned) out[remainders[k % remainders.size()].second] += 1;
    return out;
}

}  // namespace

std::vector<SequenceRecord> augment_reverse_complement(std::span<const SequenceRecord> records, bool is_dna) {
    std::vector<SequenceRecord> out(records.begin(), records.end());
    if (!is_dna) return out;
    std::unordered_set<std::string_view> ids;
    for (const auto& r : records) ids.insert(r.id);
    for (const auto& r : records) {
        if (ends_with(r.id, kRcSuffix)) continue;
        const std::string rc_id = r.id + std::string(kRcSuffix);
        if (ids.contains(rc_id)) continue;
        out.push_back(SequenceRecord{rc_id, reverse_complement(r.seq), r.host, r.lineage});
    }
    return out;
}

TrainValSplit split_train_val(std::span<const SequenceRecord> records, double val_fraction, std::uint64_t seed) {
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
    const std::size_t n = records.size();
    const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));

    std::vector<std::string> keys;
    keys.reserve(n);
    for (const auto& r : records) keys.push_back(r.id);
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    const auto order = keyed_order(all, keys, seed);

    std::vector<bool> is_val(n, false);
    for (std::size_t k = n - n_val; k < n; ++k) is_val[order[k]] = true;

    TrainValSplit split;
    for (std::size_t i = 0; i < n; ++i) (is_val[i] ? split.val : split.train).push_back(records[i]);
    return split;
}

Partition concat_and_partition(std::span<const SequenceRecord> records, std::size_t segment_length) {
    if (segment_length == 0) throw ConfigError("segment_length must be >= 1");
    Partition p;
    std::string stream;
    for (const auto& r : records) {
        p.sources.push_back(SegmentSource{r.id, stream.size(), r.seq.size()});
        stream += r.seq.str();
    }
    p.total_tokens = stream.size();
    for (std::size_t off = 0; off < stream.size(); off += segment_length) {
        p.segments.push_back(stream.substr(off, segment_length));
    }
    return p;
}

LongestPerTaxon select_longest_per_taxon(std::span<const SequenceRecord> records, TaxonRank rank) {
    LongestPerTaxon result;
    std::unordered_map<std::string, std::size_t> best;
    std::vector<std::string> order;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& value = lineage_at(records[i].lineage, rank);
        if (!value || value->empty()) {
            ++result.dropped_missing_rank;
            continue;
        }
        auto [it, inserted] = best.try_emplace(*value, i);
        if (inserted) continue;
        const auto& cur = records[it->second];
        const auto& cand = records[i];
        if (cand.seq.size() > cur.seq.size() || (cand.seq.size() == cur.seq.size() && cand.id < cur.id)) {
            it->second = i;
        }
    }
    std::vector<std::size_t> winners;
    winners.reserve(best.size());
    for (const auto& [value, idx] : best) winners.push_back(idx);
    std::sort(winners.begin(), winners.end());
    for (auto i : winners) result.records.push_back(records[i]);
    return result;
}

std::vector<SequenceRecord> filter_ambiguous(std::span<const SequenceRecord> records, std::string_view motif) {
    if (motif.empty()) throw ConfigError("ambiguity motif must be non-empty");
    std::vector<SequenceRecord> out;
    for (const auto& r : records)
        if (r.seq.str().find(motif) == std::string::npos) out.push_back(r);
    return out;
}

LineageFilter LineageFilter::parse(std::string_view expr) {
    LineageFilter f;
    f.text_ = trim(expr);
    std::size_t start = 0;
    while (start <= expr.size()) {
        auto end = expr.find('&', start);
        if (end == std::string_view::npos) end = expr.size();
        const std::string clause = trim(expr.substr(start, end - start));
        start = end + 1;
        if (clause.empty()) {
            if (end == expr.size()) break;
            throw ConfigError("empty clause in lineage filter '" + std::string(expr) + "'");
        }
        bool negate = false;
        auto op = clause.find("!=");
        std::size_t op_len = 2;
        if (op != std::string::npos) {
            negate = true;
        } else {
            op = clause.find('=');
            op_len = 1;
        }
        if (op == std::string::npos) throw ConfigError("lineage clause without '=': " + clause);
        const std::string rank = trim(std::string_view(clause).substr(0, op));
        const std::string value = trim(std::string_view(clause).substr(op + op_len));
        if (value.empty()) throw ConfigError("lineage clause without value: " + clause);
        f.clauses_.push_back(Clause{parse_taxon_rank(rank), value, negate});
    }
    return f;
}

bool LineageFilter::matches(const TaxonLineage& lineage) const {
    for (const auto& c : clauses_) {
        const auto& v = lineage_at(lineage, c.rank);
        const bool equal = v && *v == c.value;
        if (equal == c.negate) return false;
    }
    return true;
}

std::vector<SequenceRecord> filter_lineage(std::span<const SequenceRecord> records, const LineageFilter& filter) {
    std::vector<SequenceRecord> out;
    for (const auto& r : records)
        if (filter.matches(r.lineage)) out.push_back(r);
    return out;
}

// ---------------------------------------------------------------------------

std::size_t stratum_of(const StratifiedPlan& plan, double score) {
    const auto& s = plan.strata;
    std::size_t k = 0;
    // Interior edges are strata[1..].lo; a score equal to an edge belongs above it.
    while (k + 1 < s.size() && score >= s[k + 1].lo) ++k;
    return k;
}

StratifiedPlan make_quantile_plan(std::span<const double> scores, std::size_t total, std::size_t val,
                                  std::size_t n_strata, std::vector<std::string>* warnings) {
    if (n_strata == 0) throw ConfigError("need at least one stratum");
    if (scores.size() < total) throw DataError("fewer items than the requested sample");
    if (val > total) throw ConfigError("val count exceeds sample size");
    StratifiedPlan plan;
    plan.total = total;
    plan.val = val;
    plan.train = total - val;
    if (scores.empty()) return plan;

    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 0; k < n_strata; ++k) {
        const double lo = quantile_sorted(sorted, static_cast<double>(k) / static_cast<double>(n_strata));
        const double hi = quantile_sorted(sorted, static_cast<double>(k + 1) / static_cast<double>(n_strata));
        plan.strata.push_back(Stratum{lo, hi, 0, 0});
    }
    for (double s : scores) ++plan.strata[stratum_of(plan, s)].population;

    for (std::size_t k = 0; k < n_strata; ++k) plan.strata[k].quota = total / n_strata + (k < total % n_strata ? 1 : 0);

    for (std::size_t k = 0; k < n_strata; ++k) {
        auto& st = plan.strata[k];
        if (st.quota <= st.population) continue;
        std::size_t excess = st.quota - st.population;
        st.quota = st.population;
        for (std::size_t d = 1; excess > 0 && d < n_strata; ++d) {
            for (int dir : {-1, +1}) {
                const auto j = static_cast<long long>(k) + dir * static_cast<long long>(d);
                if (j < 0 || j >= static_cast<long long>(n_strata) || excess == 0) continue;
                auto& other = plan.strata[static_cast<std::size_t>(j)];
                const std::size_t room = other.population > other.quota ? other.population - other.quota : 0;
                const std::size_t moved = std::min(room, excess);
                if (moved == 0) continue;
                other.quota += moved;
                excess -= moved;
                if (warnings) {
                    warnings->push_back("stratum " + std::to_string(k) + " holds " + std::to_string(st.population) +
                                        " items; moved " + std::to_string(moved) + " of its quota to stratum " +
                                        std::to_string(j));
                }
            }
        }
    }
    return plan;
}

StratifiedDraw stratified_draw(std::span<const double> scores, std::span<const std::string> keys,
                               const StratifiedPlan& plan, std::uint64_t seed) {
    if (scores.size() != keys.size()) throw DimensionMismatch("scores and keys differ in length");
    StratifiedDraw draw;
    if (plan.strata.empty()) {
        draw.rest.resize(scores.size());
        std::iota(draw.rest.begin(), draw.rest.end(), 0);
        return draw;
    }
    std::vector<std::vector<std::size_t>> members(plan.strata.size());
    for (std::size_t i = 0; i < scores.size(); ++i) members[stratum_of(plan, scores[i])].push_back(i);

    std::vector<std::size_t> quotas;
    for (const auto& s : plan.strata) quotas.push_back(s.quota);
    const auto val_quotas = apportion(plan.val, quotas);

    for (std::size_t k = 0; k < plan.strata.size(); ++k) {
        const auto order = keyed_order(members[k], keys, seed);
        const std::size_t take = std::min(plan.strata[k].quota, order.size());
        const std::size_t take_val = std::min(val_quotas[k], take);
        for (std::size_t r = 0; r < order.size(); ++r) {
            if (r < take_val) draw.val.push_back(order[r]);
            else if (r < take) draw.train.push_back(order[r]);
            else draw.rest.push_back(order[r]);
        }
    }
    std::sort(draw.train.begin(), draw.train.end());
    std::sort(draw.val.begin(), draw.val.end());
    std::sort(draw.rest.begin(), draw.rest.end());
    return draw;
}

SamplingPreset SamplingPreset::probe_main() { return SamplingPreset{"probe_500_400_100", 500, 100, false, 10}; }

SamplingPreset SamplingPreset::probe_balanced_624() { return SamplingPreset{"probe_624_80_20", 624, 125, true, 10}; }

SamplingPreset SamplingPreset::by_name(std::string_view name) {
    if (name == "probe_500_400_100") return probe_main();
    if (name == "probe_624_80_20") return probe_balanced_624();
    throw ConfigError("unknown sampling preset: " + std::string(name));
}

MutantSplit stratified_sample(std::span<const MutantEntry> entries, const SamplingPreset& preset, std::uint64_t seed) {
    MutantSplit out;
    std::vector<std::string> dataset_order;
    std::unordered_map<std::string, std::vector<std::size_t>> by_dataset;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto [it, inserted] = by_dataset.try_emplace(entries[i].dataset_id);
        if (inserted) dataset_order.push_back(entries[i].dataset_id);
        it->second.push_back(i);
    }

    for (const auto& ds : dataset_order) {
        const auto& idx = by_dataset[ds];
        auto& counts = out.per_dataset[ds];
        counts.available = idx.size();

        std::size_t total = preset.per_dataset_total;
        std::size_t val = preset.val;
        if (idx.size() < total) {
            if (!preset.allow_smaller) {
                counts.excluded = true;
                out.warnings.push_back("dataset " + ds + " excluded: " + std::to_string(idx.size()) + " < " +
                                       std::to_string(total) + " entries");
                continue;
            }
            val = static_cast<std::size_t>(std::llround(static_cast<double>(val) * static_cast<double>(idx.size()) /
                                                        static_cast<double>(total)));
            total = idx.size();
        }

        std::vector<double> scores;
        std::vector<std::string> keys;
        std::unordered_map<std::string, std::size_t> seen;
        for (auto i : idx) {
            scores.push_back(entries[i].dms_score);
            const auto occurrence = seen[entries[i].raw_label]++;
            keys.push_back(ds + '\t' + entries[i].raw_label + '#' + std::to_string(occurrence));
        }
        std::vector<std::string> plan_warnings;
        const auto plan = make_quantile_plan(scores, total, val, preset.n_strata, &plan_warnings);
        for (auto& w : plan_warnings) out.warnings.push_back("dataset " + ds + ": " + w);
        const auto draw = stratified_draw(scores, keys, plan, seed);

        for (auto k : draw.train) out.train.push_back(entries[idx[k]]);
        for (auto k : draw.val) out.val.push_back(entries[idx[k]]);
        for (auto k : draw.rest) out.test.push_back(entries[idx[k]]);
        counts.train = draw.train.size();
        counts.val = draw.val.size();
        counts.test = draw.rest.size();
    }
    return out;
}

RecordSample stratified_by_length(std::span<const SequenceRecord> records, std::size_t count, std::uint64_t seed,
                                  std::size_t n_strata) {
    count = std::min(count, records.size());
    std::vector<double> lengths;
    std::vector<std::string> keys;
    for (const auto& r : records) {
        lengths.push_back(static_cast<double>(r.seq.size()));
        keys.push_back(r.id);
    }
    const auto plan = make_quantile_plan(lengths, count, 0, n_strata, nullptr);
    const auto draw = stratified_draw(lengths, keys, plan, seed);
    RecordSample sample;
    for (auto i : draw.train) sample.selected.push_back(records[i]);
    for (auto i : draw.rest) sample.rest.push_back(records[i]);
    return sample;
}

// ---------------------------------------------------------------------------

void CurationConfig::validate() const {
    if (segment_length < 1) throw ConfigError("segment_length must be >= 1");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
    if (drop_ambiguous_run && drop_ambiguous_run->empty()) throw ConfigError("drop_ambiguous_run must be non-empty");
}

nlohmann::json CurationConfig::to_json() const {
    nlohmann::json j;
    j["add_rc"] = add_rc;
    j["val_fraction"] = val_fraction;
    j["segment_length"] = segment_length;
    j["drop_ambiguous_run"] = drop_ambiguous_run ? nlohmann::json(*drop_ambiguous_run) : nlohmann::json(nullptr);
    j["require_genus"] = require_genus;
    j["dedup"] = dedup;
    j["lineage_filter"] = lineage_filter ? nlohmann::json(*lineage_filter) : nlohmann::json(nullptr);
    j["longest_per"] = longest_per ? nlohmann::json(std::string(to_string(*longest_per))) : nlohmann::json(nullptr);
    j["seed"] = seed;
    return j;
}

CurationConfig CurationConfig::from_json(const nlohmann::json& j) {
    CurationConfig c;
    try {
        if (j.contains("add_rc")) c.add_rc = j.at("add_rc").get<bool>();
        if (j.contains("val_fraction")) c.val_fraction = j.at("val_fraction").get<double>();
        if (j.contains("segment_length")) c.segment_length = j.at("segment_length").get<std::size_t>();
        if (j.contains("drop_ambiguous_run")) {
            const auto& v = j.at("drop_ambiguous_run");
            c.drop_ambiguous_run = v.is_null() ? std::nullopt : std::optional<std::string>(v.get<std::string>());
        }
        if (j.contains("require_genus")) c.require_genus = j.at("require_genus").get<bool>();
        if (j.contains("dedup")) c.dedup = j.at("dedup").get<bool>();
        if (j.contains("lineage_filter") && !j.at("lineage_filter").is_null())
            c.lineage_filter = j.at("lineage_filter").get<std::string>();
        if (j.contains("longest_per") && !j.at("longest_per").is_null())
            c.longest_per = parse_taxon_rank(j.at("longest_per").get<std::string>());
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("curation config: ") + e.what());
    }
    c.validate();
    return c;
}

void CurationManifest::add(std::string stage, std::size_t in, std::size_t out, std::string note) {
    stages.push_back(StageCount{std::move(stage), in, out, std::nullopt, std::move(note)});
}

bool CurationManifest::consistent() const {
    for (std::size_t i = 1; i < stages.size(); ++i) {
        const auto& prev = stages[i - 1];
        const auto& cur = stages[i];
        if (prev.out_val) {
            // After the split, the two partition stages consume train and val respectively.
            if (cur.stage == "partition_train" && cur.in != prev.out) return false;
            if (cur.stage == "partition_val" && cur.in != *prev.out_val) return false;
            continue;
        }
        if (cur.stage == "partition_val") {
            const auto* split = i >= 2 ? &stages[i - 2] : nullptr;
            if (!split || !split->out_val || cur.in != *split->out_val) return false;
            continue;
        }
        if (cur.in != prev.out) return false;
    }
    return true;
}

nlohmann::json CurationManifest::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["stages"] = nlohmann::json::array();
    for (const auto& s : stages) {
        nlohmann::json e{{"stage", s.stage}, {"in", s.in}, {"out", s.out}};
        if (s.out_val) e["out_val"] = *s.out_val;
        if (!s.note.empty()) e["note"] = s.note;
        j["stages"].push_back(std::move(e));
    }
    j["warnings"] = warnings;
    j["consistent"] = consistent();
    return j;
}

CurationResult run_curation(std::span<const SequenceRecord> records, const CurationConfig& config) {
    config.validate();
    CurationResult result;
    auto& m = result.manifest;
    m.seed = config.seed;
    std::vector<SequenceRecord> cur(records.begin(), records.end());

    if (config.lineage_filter) {
        const auto filter = LineageFilter::parse(*config.lineage_filter);
        auto next = filter_lineage(cur, filter);
        m.add("lineage_filter", cur.size(), next.size(), filter.text());
        cur = std::move(next);
    }
    if (config.require_genus) {
        std::vector<SequenceRecord> next;
        for (auto& r : cur)
            if (r.lineage.genus && !r.lineage.genus->empty()) next.push_back(std::move(r));
        m.add("require_genus", cur.size(), next.size());
        cur = std::move(next);
    }
    if (config.drop_ambiguous_run) {
        auto next = filter_ambiguous(cur, *config.drop_ambiguous_run);
        m.add("drop_ambiguous", cur.size(), next.size(), "motif " + *config.drop_ambiguous_run);
        cur = std::move(next);
    }
    if (config.dedup) {
        auto next = dedup_exact(cur);
        m.add("dedup_exact", cur.size(), next.size());
        cur = std::move(next);
    }
    if (config.longest_per) {
        auto picked = select_longest_per_taxon(cur, *config.longest_per);
        m.add("longest_per_" + std::string(to_string(*config.longest_per)), cur.size(), picked.records.size(),
              std::to_string(picked.dropped_missing_rank) + " records lacked the rank");
        cur = std::move(picked.records);
    }
    {
        auto next = augment_reverse_complement(cur, config.add_rc);
        m.add("augment_reverse_complement", cur.size(), next.size(), config.add_rc ? "" : "skipped (not DNA)");
        cur = std::move(next);
    }
    result.split = split_train_val(cur, config.val_fraction, config.seed);
    m.stages.push_back(StageCount{"split_train_val", cur.size(), result.split.train.size(), result.split.val.size(), ""});

    result.train_segments = concat_and_partition(result.split.train, config.segment_length);
    m.add("partition_train", result.split.train.size(), result.train_segments.segments.size(),
          std::to_string(result.train_segments.total_tokens) + " tokens");
    result.val_segments = concat_and_partition(result.split.val, config.segment_length);
    m.add("partition_val", result.split.val.size(), result.val_segments.segments.size(),
          std::to_string(result.val_segments.total_tokens) + " tokens");
    return result;
}

}  // namespace dualeval
