#include "dualeval/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <set>

#include "dualeval/backtranslate.hpp"
#include "dualeval/errors.hpp"
#include "dualeval/hashing.hpp"
#include "dualeval/metrics.hpp"
#include "dualeval/probes.hpp"
#include "dualeval/text_io.hpp"

namespace dualeval {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(EvalKind kind) {
    switch (kind) {
        case EvalKind::gen: return "gen";
        case EvalKind::mut_ll: return "mut_ll";
        case EvalKind::mut_probe: return "mut_probe";
        case EvalKind::vir: return "vir";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Config

namespace {

void check_keys(const json& j, const std::string& section, std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) throw ConfigError(section + " must be an object");
    for (const auto& [key, _] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError("unknown key '" + key + "' in " + section);
        }
    }
}

template <class T>
void read_opt(const json& j, const char* key, T& target) {
    if (j.contains(key) && !j.at(key).is_null()) target = j.at(key).get<T>();
}

SamplingPreset sampling_from_json(const json& j) {
    if (j.is_string()) return SamplingPreset::by_name(j.get<std::string>());
    check_keys(j, "mut.sampling", {"name", "per_dataset_total", "val", "allow_smaller", "n_strata"});
    SamplingPreset p{"custom", 0, 0, false, 10};
    read_opt(j, "name", p.name);
    p.per_dataset_total = j.at("per_dataset_total").get<std::size_t>();
    p.val = j.at("val").get<std::size_t>();
    read_opt(j, "allow_smaller", p.allow_smaller);
    read_opt(j, "n_strata", p.n_strata);
    if (p.per_dataset_total == 0 || p.val >= p.per_dataset_total || p.n_strata == 0) {
        throw ConfigError("sampling: need 0 <= val < per_dataset_total and n_strata > 0");
    }
    return p;
}

json sampling_to_json(const SamplingPreset& p) {
    return {{"name", p.name},
            {"per_dataset_total", p.per_dataset_total},
            {"val", p.val},
            {"allow_smaller", p.allow_smaller},
            {"n_strata", p.n_strata}};
}

}  // namespace

EvalConfig EvalConfig::from_json(const json& j, fs::path base_dir) {
    EvalConfig c;
    c.base_dir = std::move(base_dir);
    try {
        check_keys(j, "config", {"seed", "out", "backend", "backends", "pooling", "layers", "ridge_lambda", "gen", "mut",
                                 "vir", "curation"});
        read_opt(j, "seed", c.seed);
        read_opt(j, "out", c.out);
        if (j.contains("backend")) c.backends.push_back({"default", j.at("backend").get<std::string>()});
        if (j.contains("backends")) {
            for (const auto& b : j.at("backends")) {
                if (b.is_string()) {
                    c.backends.push_back({"backend-" + std::to_string(c.backends.size()), b.get<std::string>()});
                } else {
                    check_keys(b, "backends[]", {"label", "endpoint"});
                    c.backends.push_back({b.at("label").get<std::string>(), b.at("endpoint").get<std::string>()});
                }
            }
        }
        if (j.contains("pooling")) c.pooling = parse_pooling(j.at("pooling").get<std::string>());
        read_opt(j, "layers", c.layers);
        if (j.contains("ridge_lambda")) {
            const auto& v = j.at("ridge_lambda");
            if (v.is_number()) {
                c.ridge_lambda = v.get<double>();
                if (!(*c.ridge_lambda >= 0) || !std::isfinite(*c.ridge_lambda)) {
                    throw ConfigError("ridge_lambda must be a finite value >= 0");
                }
            } else if (!(v.is_null() || (v.is_string() && v.get<std::string>() == "default"))) {
                throw ConfigError("ridge_lambda must be a number, \"default\" or null");
            }
        }

        if (j.contains("gen")) {
            const auto& g = j.at("gen");
            check_keys(g, "gen", {"corpus", "sidecar", "holdout", "group_ranks", "baseline_corpus", "baseline_sidecar",
                                  "baseline_sample"});
            read_opt(g, "corpus", c.gen.corpus);
            read_opt(g, "sidecar", c.gen.sidecar);
            read_opt(g, "holdout", c.gen.holdout);
            if (g.contains("group_ranks")) {
                c.gen.group_ranks.clear();
                for (const auto& r : g.at("group_ranks")) c.gen.group_ranks.push_back(parse_taxon_rank(r.get<std::string>()));
            }
            read_opt(g, "baseline_corpus", c.gen.baseline_corpus);
            read_opt(g, "baseline_sidecar", c.gen.baseline_sidecar);
            read_opt(g, "baseline_sample", c.gen.baseline_sample);
        }
        if (j.contains("mut")) {
            const auto& m = j.at("mut");
            check_keys(m, "mut", {"datasets", "wildtype_fasta", "reference_corpus", "scoring", "sampling"});
            if (m.contains("datasets")) {
                for (const auto& d : m.at("datasets")) {
                    check_keys(d, "mut.datasets[]", {"id", "table", "wildtype", "wildtype_id"});
                    DmsDatasetConfig ds;
                    ds.id = d.at("id").get<std::string>();
                    ds.table = d.at("table").get<std::string>();
                    if (d.contains("wildtype") && !d.at("wildtype").is_null()) ds.wildtype = d.at("wildtype").get<std::string>();
                    if (d.contains("wildtype_id") && !d.at("wildtype_id").is_null())
                        ds.wildtype_id = d.at("wildtype_id").get<std::string>();
                    c.mut.datasets.push_back(std::move(ds));
                }
            }
            read_opt(m, "wildtype_fasta", c.mut.wildtype_fasta);
            read_opt(m, "reference_corpus", c.mut.reference_corpus);
            read_opt(m, "scoring", c.mut.scoring);
            if (m.contains("sampling")) c.mut.sampling = sampling_from_json(m.at("sampling"));
        }
        if (j.contains("vir")) {
            const auto& v = j.at("vir");
            check_keys(v, "vir", {"ld50_table", "segments", "sidecar", "strain_column", "ld50_column", "label_scale",
                                  "train_fraction", "n_strata"});
            read_opt(v, "ld50_table", c.vir.ld50_table);
            read_opt(v, "segments", c.vir.segments);
            read_opt(v, "sidecar", c.vir.sidecar);
            read_opt(v, "strain_column", c.vir.strain_column);
            read_opt(v, "ld50_column", c.vir.ld50_column);
            read_opt(v, "label_scale", c.vir.label_scale);
            read_opt(v, "train_fraction", c.vir.train_fraction);
            read_opt(v, "n_strata", c.vir.n_strata);
        }
        if (j.contains("curation")) {
            json cur = j.at("curation");
            check_keys(cur, "curation", {"corpus", "sidecar", "add_rc", "val_fraction", "segment_length",
                                         "drop_ambiguous_run", "require_genus", "dedup", "lineage_filter",
                                         "longest_per", "seed"});
            read_opt(cur, "corpus", c.curation.corpus);
            read_opt(cur, "sidecar", c.curation.sidecar);
            if (!cur.contains("seed")) cur["seed"] = c.seed;
            c.curation.config = CurationConfig::from_json(cur);
        } else {
            c.curation.config.seed = c.seed;
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (c.mut.scoring != "auto" && c.mut.scoring != "ll" && c.mut.scoring != "mm") {
        throw ConfigError("mut.scoring must be auto, ll or mm");
    }
    if (c.vir.label_scale != "log10" && c.vir.label_scale != "raw") {
        throw ConfigError("vir.label_scale must be log10 or raw");
    }
    if (!(c.vir.train_fraction > 0 && c.vir.train_fraction < 1)) throw ConfigError("vir.train_fraction must lie in (0, 1)");
    if (c.vir.n_strata == 0) throw ConfigError("vir.n_strata must be positive");
    if (c.gen.baseline_sample == 0) throw ConfigError("gen.baseline_sample must be positive");
    if (!c.gen.holdout.empty()) LineageFilter::parse(c.gen.holdout);
    std::set<std::string> ids;
    for (const auto& d : c.mut.datasets)
        if (!ids.insert(d.id).second) throw ConfigError("duplicate dataset id " + d.id);
    std::set<std::string> labels;
    for (const auto& b : c.backends)
        if (!labels.insert(b.label).second) throw ConfigError("duplicate backend label " + b.label);
    return c;
}

EvalConfig EvalConfig::load(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read config " + file.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + file.string() + ": " + e.what());
    }
    auto dir = file.parent_path();
    return from_json(j, dir.empty() ? fs::path(".") : dir);
}

fs::path EvalConfig::resolve(const std::string& configured) const {
    fs::path p = configured;
    return p.is_absolute() ? p : base_dir / p;
}

void EvalConfig::validate(EvalKind kind) const {
    auto need = [&](const std::string& p, const std::string& what) {
        if (p.empty()) throw ConfigError(what + " is required");
        if (!fs::exists(resolve(p))) throw ConfigError(what + " not found: " + resolve(p).string());
    };
    auto maybe = [&](const std::string& p, const std::string& what) {
        if (!p.empty()) need(p, what);
    };
    if (backends.empty()) throw ConfigError("no backend endpoint configured");
    for (const auto& b : backends)
        if (b.endpoint.empty() || b.label.empty()) throw ConfigError("backend entries need a label and an endpoint");
    switch (kind) {
        case EvalKind::gen:
            need(gen.corpus, "gen.corpus");
            maybe(gen.sidecar, "gen.sidecar");
            maybe(gen.baseline_corpus, "gen.baseline_corpus");
            maybe(gen.baseline_sidecar, "gen.baseline_sidecar");
            break;
        case EvalKind::mut_ll:
        case EvalKind::mut_probe:
            if (mut.datasets.empty()) throw ConfigError("mut.datasets is empty");
            for (const auto& d : mut.datasets) need(d.table, "DMS table for " + d.id);
            maybe(mut.wildtype_fasta, "mut.wildtype_fasta");
            maybe(mut.reference_corpus, "mut.reference_corpus");
            break;
        case EvalKind::vir:
            need(vir.ld50_table, "vir.ld50_table");
            need(vir.segments, "vir.segments");
            maybe(vir.sidecar, "vir.sidecar");
            break;
    }
}

json EvalConfig::echo() const {
    json backends_json = json::array();
    for (const auto& b : backends) backends_json.push_back({{"label", b.label}, {"endpoint", b.endpoint}});
    json ranks = json::array();
    for (auto r : gen.group_ranks) ranks.push_back(std::string(to_string(r)));
    json datasets = json::array();
    for (const auto& d : mut.datasets) {
        json e = {{"id", d.id}, {"table", d.table}};
        if (d.wildtype) e["wildtype"] = *d.wildtype;
        if (d.wildtype_id) e["wildtype_id"] = *d.wildtype_id;
        datasets.push_back(std::move(e));
    }
    json cur = curation.config.to_json();
    cur["corpus"] = curation.corpus;
    cur["sidecar"] = curation.sidecar;
    return {{"seed", seed},
            {"backends", backends_json},
            {"pooling", std::string(to_string(pooling))},
            {"layers", layers},
            {"ridge_lambda", ridge_lambda ? json(*ridge_lambda) : json("default")},
            {"gen",
             {{"corpus", gen.corpus},
              {"sidecar", gen.sidecar},
              {"holdout", gen.holdout},
              {"group_ranks", ranks},
              {"baseline_corpus", gen.baseline_corpus},
              {"baseline_sidecar", gen.baseline_sidecar},
              {"baseline_sample", gen.baseline_sample}}},
            {"mut",
             {{"datasets", datasets},
              {"wildtype_fasta", mut.wildtype_fasta},
              {"reference_corpus", mut.reference_corpus},
              {"scoring", mut.scoring},
              {"sampling", sampling_to_json(mut.sampling)}}},
            {"vir",
             {{"ld50_table", vir.ld50_table},
              {"segments", vir.segments},
              {"sidecar", vir.sidecar},
              {"strain_column", vir.strain_column},
              {"ld50_column", vir.ld50_column},
              {"label_scale", vir.label_scale},
              {"train_fraction", vir.train_fraction},
              {"n_strata", vir.n_strata}}},
            {"curation", cur}};
}

// ---------------------------------------------------------------------------
// Shared runner plumbing

namespace {

using Clock = std::chrono::steady_clock;

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string fmt(double v) { return format_real(v); }

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json opt(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }

EvalReport begin_report(EvalKind kind, const EvalConfig& c) {
    EvalReport r;
    r.kind = std::string(to_string(kind));
    r.seed = c.seed;
    r.config = c.echo();
    r.started_at = utc_now();
    r.conventions = {{"log_base", "e"},
                     {"perplexity", "exp(-(1/L) * sum of per-token log-probabilities)"},
                     {"tie_policy", "average ranks"},
                     {"quantile_rule", "linear interpolation between order statistics (type 7)"},
                     {"long_sequences", "scored in backend-context chunks, log-probabilities concatenated"}};
    return r;
}

void add_probe_conventions(EvalReport& r, const EvalConfig& c) {
    r.conventions["standardization"] = "per dimension, training split mean and std";
    r.conventions["bias"] = "unpenalized";
    r.conventions["ridge_lambda"] = c.ridge_lambda ? json(*c.ridge_lambda) : json("1e-6 * trace(Z'Z) / d");
    r.conventions["pooling"] = std::string(to_string(c.pooling));
    r.conventions["layer_tie_break"] = "lower layer index";
    r.conventions["layer_rules"] = {"min train RMSE", "max validation correlation"};
}

class Stopwatch {
public:
    Stopwatch() : start_(Clock::now()) {}
    double seconds() const { return std::chrono::duration<double>(Clock::now() - start_).count(); }

private:
    Clock::time_point start_;
};

std::vector<SequenceRecord> load_corpus(const EvalConfig& c, const std::string& path, const std::string& sidecar,
                                        const std::string& role, EvalReport& r) {
    const auto resolved = c.resolve(path);
    auto parsed = read_fasta_file(resolved);
    r.inputs.push_back(describe_input(role, path, resolved));
    if (!parsed.errors.empty()) {
        r.warnings.push_back(role + ": " + std::to_string(parsed.errors.size()) + " malformed records skipped");
        const std::size_t shown = std::min<std::size_t>(parsed.errors.size(), 10);
        for (std::size_t i = 0; i < shown; ++i) {
            const auto& e = parsed.errors[i];
            r.warnings.push_back(role + " line " + std::to_string(e.line) + (e.id.empty() ? "" : " (" + e.id + ")") +
                                 ": " + e.message);
        }
    }
    if (!sidecar.empty()) {
        const auto side = c.resolve(sidecar);
        const auto rows = read_sidecar_file(side);
        r.inputs.push_back(describe_input(role + "_sidecar", sidecar, side));
        const auto matched = apply_sidecar(parsed.records, rows);
        if (matched < parsed.records.size()) {
            r.warnings.push_back(role + ": " + std::to_string(parsed.records.size() - matched) +
                                 " records have no sidecar row");
        }
    }
    if (parsed.records.empty()) throw DataError(role + " has no usable records: " + path);
    return std::move(parsed.records);
}

BackendClient open_backend(const Checkpoint& cp) { return BackendClient::connect(cp.endpoint); }

void require(const BackendClient& b, Capability cap, const Checkpoint& cp) {
    if (!b.descriptor().supports(cap)) {
        throw ConfigError("backend '" + cp.label + "' does not offer " + std::string(to_string(cap)));
    }
}

bool within_alphabet(std::string_view tokens, const std::string& alphabet) {
    return tokens.find_first_not_of(alphabet) == std::string_view::npos;
}

std::vector<int> layer_list(const EvalConfig& c, const BackendDescriptor& d) {
    std::vector<int> out;
    if (c.layers.empty()) {
        for (int l = 0; l < d.num_layers; ++l) out.push_back(l);
    } else {
        for (int l : c.layers) {
            if (l < 0 || l >= d.num_layers) {
                throw ConfigError("layer " + std::to_string(l) + " outside backend's " + std::to_string(d.num_layers) +
                                  " layers");
            }
            out.push_back(l);
        }
    }
    if (out.empty()) throw ConfigError("backend advertises no layers");
    return out;
}

std::vector<FeatureMatrix> featurize(BackendClient& b, const std::vector<std::string>& tokens,
                                     const std::vector<std::string>& ids, const std::vector<int>& layers,
                                     Pooling pooling, const std::string& backend_label) {
    const auto n = static_cast<Eigen::Index>(tokens.size());
    const int d = b.descriptor().hidden_dim;
    std::vector<FeatureMatrix> out(layers.size());
    for (std::size_t k = 0; k < layers.size(); ++k) {
        out[k].values.resize(n, d);
        out[k].layer = layers[k];
        out[k].ids = ids;
        out[k].pooling = std::string(to_string(pooling));
        out[k].backend = backend_label;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto states = b.hidden(tokens[static_cast<std::size_t>(i)], layers);
        for (std::size_t k = 0; k < layers.size(); ++k) {
            const Eigen::VectorXd v = pool_features(states[k], pooling);
            if (v.size() != d) {
                throw BackendError("backend sent " + std::to_string(v.size()) + "-dim states, advertised " +
                                       std::to_string(d),
                                   false);
            }
            out[k].values.row(i) = v.transpose();
        }
    }
    return out;
}

std::string lineage_value(const TaxonLineage& l, TaxonRank rank) {
    const auto& v = lineage_at(l, rank);
    return v ? *v : "";
}

}  // namespace

// ---------------------------------------------------------------------------
// Gen

namespace {

struct ScoredSet {
    std::vector<ScoredRecord> records;
    std::size_t total = 0;
    std::size_t skipped = 0;
    std::size_t chunked = 0;
};

ScoredSet score_records(BackendClient& b, std::span<const SequenceRecord> records, const std::string& label,
                        const std::string& set, Table& per_sequence) {
    ScoredSet out;
    out.total = records.size();
    const auto& alphabet = b.descriptor().alphabet;
    for (const auto& rec : records) {
        const std::string& tokens = rec.seq.str();
        if (!within_alphabet(tokens, alphabet)) {
            ++out.skipped;
            continue;
        }
        const auto scores = b.score_causal(tokens);
        const double s_ll = sequence_log_likelihood(scores);
        const double ppl = perplexity(scores);
        const auto L = static_cast<double>(tokens.size());
        if (!(std::abs(ppl - std::exp(-s_ll / L)) <= 1e-12 * ppl)) {
            throw DataError("perplexity of " + rec.id + " disagrees with exp(-S_LL/L)");
        }
        const auto chunks = b.chunk_count(tokens.size());
        if (chunks > 1) ++out.chunked;
        per_sequence.add({label, set, rec.id, lineage_value(rec.lineage, TaxonRank::family),
                          lineage_value(rec.lineage, TaxonRank::genus), lineage_value(rec.lineage, TaxonRank::species),
                          lineage_value(rec.lineage, TaxonRank::strain), std::to_string(tokens.size()),
                          std::to_string(chunks), fmt(s_ll), fmt(ppl)});
        out.records.push_back(ScoredRecord{rec.id, rec.lineage, ppl});
    }
    return out;
}

json summarize_set(const ScoredSet& s, const std::vector<TaxonRank>& ranks, const std::string& label,
                   const std::string& set, Table& trend, Table& distribution) {
    json j = {{"n_records", s.total}, {"n_scored", s.records.size()}, {"n_skipped", s.skipped}, {"n_chunked", s.chunked}};
    if (s.skipped) j["skip_reason"] = "symbols outside the backend alphabet";
    if (s.records.empty()) {
        j["perplexity"] = nullptr;
        return j;
    }
    std::vector<double> ppl;
    for (const auto& r : s.records) ppl.push_back(r.perplexity);
    const auto summary = summarize(ppl);
    j["perplexity"] = to_json(summary);
    trend.add({label, set, std::to_string(summary.count), fmt(summary.mean), fmt(summary.median), fmt(summary.q1),
               fmt(summary.q3), fmt(summary.min), fmt(summary.max)});
    json by_rank = json::object();
    for (auto rank : ranks) {
        const auto grouped = group_perplexities(s.records, rank);
        by_rank[std::string(to_string(rank))] = grouped.to_json();
        for (const auto& [group, g] : grouped.summaries()) {
            distribution.add({label, set, std::string(to_string(rank)), group, std::to_string(g.count), fmt(g.mean),
                              fmt(g.median), fmt(g.q1), fmt(g.q3), fmt(g.min), fmt(g.max)});
        }
    }
    j["by_rank"] = by_rank;
    return j;
}

std::vector<SequenceRecord> seeded_sample(std::vector<SequenceRecord> records, std::size_t n, std::uint64_t seed) {
    if (records.size() <= n) return records;
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
    for (std::size_t i = 0; i < records.size(); ++i) keyed.emplace_back(mix_key(seed, records[i].id, 0), i);
    std::sort(keyed.begin(), keyed.end());
    std::vector<std::size_t> chosen;
    for (std::size_t k = 0; k < n; ++k) chosen.push_back(keyed[k].second);
    std::sort(chosen.begin(), chosen.end());
    std::vector<SequenceRecord> out;
    for (auto i : chosen) out.push_back(std::move(records[i]));
    return out;
}

}  // namespace

EvalReport run_eval_gen(const EvalConfig& c) {
    c.validate(EvalKind::gen);
    Stopwatch clock;
    auto report = begin_report(EvalKind::gen, c);
    report.conventions["baseline_sampling"] = "uniform, keyed on (seed, record id)";

    auto records = load_corpus(c, c.gen.corpus, c.gen.sidecar, "corpus", report);
    const std::size_t loaded = records.size();
    if (!c.gen.holdout.empty()) {
        records = filter_lineage(records, LineageFilter::parse(c.gen.holdout));
        if (records.empty()) throw DataError("hold-out filter '" + c.gen.holdout + "' selects no records");
    }
    std::vector<SequenceRecord> baseline;
    std::size_t baseline_loaded = 0;
    if (!c.gen.baseline_corpus.empty()) {
        baseline = load_corpus(c, c.gen.baseline_corpus, c.gen.baseline_sidecar, "baseline_corpus", report);
        baseline_loaded = baseline.size();
        baseline = seeded_sample(std::move(baseline), c.gen.baseline_sample, c.seed);
    }
    report.metrics["corpus"] = {{"loaded", loaded}, {"holdout", c.gen.holdout}, {"evaluated", records.size()}};
    if (!c.gen.baseline_corpus.empty()) {
        report.metrics["baseline"] = {{"loaded", baseline_loaded}, {"sampled", baseline.size()}};
    }

    auto& per_sequence = report.table("gen_sequences", {"checkpoint", "set", "id", "family", "genus", "species", "strain",
                                                         "length", "chunks", "log_likelihood", "perplexity"});
    auto& trend = report.table("gen_trend",
                               {"checkpoint", "set", "n", "mean", "median", "q1", "q3", "min", "max"});
    auto& distribution = report.table("gen_groups", {"checkpoint", "set", "rank", "group", "n", "mean", "median", "q1",
                                                     "q3", "min", "max"});

    json checkpoints = json::object();
    for (const auto& cp : c.backends) {
        auto client = open_backend(cp);
        require(client, Capability::causal_logp, cp);
        json entry = {{"backend", client.descriptor().name}, {"max_length", client.descriptor().max_length}};
        const auto held = score_records(client, records, cp.label, "holdout", per_sequence);
        entry["holdout"] = summarize_set(held, c.gen.group_ranks, cp.label, "holdout", trend, distribution);
        if (!baseline.empty()) {
            const auto base = score_records(client, baseline, cp.label, "baseline", per_sequence);
            entry["baseline"] = summarize_set(base, c.gen.group_ranks, cp.label, "baseline", trend, distribution);
        }
        report.requests += client.requests_sent();
        checkpoints[cp.label] = entry;
    }
    report.metrics["checkpoints"] = checkpoints;
    report.wall_seconds = clock.seconds();
    return report;
}

// ---------------------------------------------------------------------------
// Mut

namespace {

struct LoadedDataset {
    std::string id;
    std::vector<MutantEntry> entries;
    std::optional<ProteinSequence> wildtype;
    std::string skip_reason;
};

std::vector<LoadedDataset> load_datasets(const EvalConfig& c, EvalReport& r) {
    std::map<std::string, ProteinSequence> wt_fasta;
    if (!c.mut.wildtype_fasta.empty()) {
        const auto p = c.resolve(c.mut.wildtype_fasta);
        wt_fasta = read_protein_fasta_file(p);
        r.inputs.push_back(describe_input("wildtype_fasta", c.mut.wildtype_fasta, p));
    }
    std::vector<LoadedDataset> out;
    for (const auto& d : c.mut.datasets) {
        LoadedDataset ds;
        ds.id = d.id;
        const auto table = c.resolve(d.table);
        ds.entries = read_dms_table(table, d.id);
        r.inputs.push_back(describe_input("dms:" + d.id, d.table, table));
        if (d.wildtype) {
            try {
                ds.wildtype = ProteinSequence(*d.wildtype);
            } catch (const SequenceError& e) {
                throw ConfigError("wild type of " + d.id + ": " + e.what());
            }
        } else if (auto it = wt_fasta.find(d.wildtype_id.value_or(d.id)); it != wt_fasta.end()) {
            ds.wildtype = it->second;
        } else {
            ds.skip_reason = "no wild-type protein";
        }
        if (ds.wildtype) {
            const auto residues = ds.wildtype->residues();
            for (const auto& e : ds.entries) {
                for (const auto& m : e.mutations) {
                    if (m.position > residues.size()) {
                        ds.skip_reason = "mutant " + e.raw_label + " lies beyond the wild type (" +
                                         std::to_string(residues.size()) + " residues)";
                    } else if (residues[m.position - 1] != m.wt_aa) {
                        ds.skip_reason = "wild type has " + std::string(1, residues[m.position - 1]) + " at " +
                                         std::to_string(m.position) + ", mutant " + e.raw_label + " expects " +
                                         std::string(1, m.wt_aa);
                    }
                    if (!ds.skip_reason.empty()) break;
                }
                if (!ds.skip_reason.empty()) break;
            }
        }
        if (ds.skip_reason.empty() && ds.entries.empty()) ds.skip_reason = "no mutants";
        if (!ds.skip_reason.empty()) r.warnings.push_back("dataset " + ds.id + " skipped: " + ds.skip_reason);
        out.push_back(std::move(ds));
    }
    return out;
}

WildTypeIndex load_index(const EvalConfig& c, EvalReport& r) {
    WildTypeIndex index;
    if (c.mut.reference_corpus.empty()) return index;
    const auto p = c.resolve(c.mut.reference_corpus);
    auto parsed = read_fasta_file(p);
    r.inputs.push_back(describe_input("reference_corpus", c.mut.reference_corpus, p));
    const auto skipped = index.add_records(parsed.records);
    r.metrics["reference_index"] = {{"records", parsed.records.size()}, {"indexed", index.size()},
                                    {"untranslatable", skipped}};
    return index;
}

enum class MutPath { ll, mm };

MutPath choose_path(const EvalConfig& c, const BackendClient& b, const Checkpoint& cp) {
    const auto& d = b.descriptor();
    if (c.mut.scoring == "ll" || (c.mut.scoring == "auto" && d.is_nucleotide() && d.supports(Capability::causal_logp))) {
        require(b, Capability::causal_logp, cp);
        if (!d.is_nucleotide()) throw ConfigError("backend '" + cp.label + "' is not a nucleotide model; use mm scoring");
        return MutPath::ll;
    }
    require(b, Capability::masked_marginal, cp);
    return MutPath::mm;
}

std::string mutant_protein_tokens(std::string wt, const MutantEntry& e) {
    for (const auto& m : e.mutations) wt[m.position - 1] = m.mt_aa;
    return wt;
}

bool has_stop(const MutantEntry& e) {
    return std::any_of(e.mutations.begin(), e.mutations.end(), [](const MutationSpec& m) { return m.mt_aa == kStop; });
}

/// Tokens of every mutant of a dataset for one backend, or a skip reason.
struct MutantTokens {
    std::vector<std::optional<std::string>> tokens;  // nullopt: mutant dropped
    std::string wildtype;
    std::string wildtype_source;
    std::string skip_reason;
    std::size_t dropped = 0;
};

MutantTokens build_tokens(const LoadedDataset& ds, bool nucleotide, const std::string& alphabet,
                          const WildTypeIndex& index, const SeededPicker& picker) {
    MutantTokens out;
    if (nucleotide) {
        const auto wt = find_wildtype(*ds.wildtype, index, picker, ds.id);
        out.wildtype = wt.nucleotides.str();
        out.wildtype_source = wt.exact_match ? "exact_match" : "seeded_fill";
        try {
            for (const auto& e : ds.entries) out.tokens.emplace_back(apply_mutations(wt.nucleotides, e.mutations, picker, ds.id).str());
        } catch (const DataError& err) {
            out.skip_reason = std::string("wild type not reconstructable: ") + err.what();
            return out;
        }
    } else {
        out.wildtype = std::string(ds.wildtype->residues());
        out.wildtype_source = "protein";
        for (const auto& e : ds.entries) {
            if (has_stop(e)) {
                out.tokens.emplace_back(std::nullopt);
                ++out.dropped;
            } else {
                out.tokens.emplace_back(mutant_protein_tokens(out.wildtype, e));
            }
        }
    }
    if (!within_alphabet(out.wildtype, alphabet)) out.skip_reason = "wild type has symbols outside the backend alphabet";
    return out;
}

}  // namespace

EvalReport run_eval_mut_ll(const EvalConfig& c) {
    c.validate(EvalKind::mut_ll);
    Stopwatch clock;
    auto report = begin_report(EvalKind::mut_ll, c);
    report.conventions["correlation"] = "Spearman, per dataset; summary is the mean of |rho| over scored datasets";
    report.conventions["nucleotide_mutants"] = "mutated codons drawn by the seeded picker keyed on (dataset id, residue index)";
    report.conventions["length_normalized"] = "S_LL / L reported alongside raw S_LL";

    const auto datasets = load_datasets(c, report);
    const auto index = load_index(c, report);
    const SeededPicker picker(c.seed);

    auto& per_mutant = report.table("mut_scores", {"checkpoint", "dataset", "mutant", "dms_score", "score", "score_per_token"});
    auto& per_dataset = report.table("mut_datasets", {"checkpoint", "dataset", "status", "n", "spearman", "abs_spearman",
                                                      "spearman_per_token", "detail"});
    auto& trend = report.table("mut_trend", {"checkpoint", "path", "n_datasets", "mean_abs_spearman"});

    json checkpoints = json::object();
    for (const auto& cp : c.backends) {
        auto client = open_backend(cp);
        const auto path = choose_path(c, client, cp);
        const auto& alphabet = client.descriptor().alphabet;
        json entry = {{"backend", client.descriptor().name}, {"path", path == MutPath::ll ? "log_likelihood" : "masked_marginal"}};
        json ds_json = json::object();
        std::map<std::string, double> rhos;

        for (const auto& ds : datasets) {
            auto skip = [&](const std::string& reason) {
                ds_json[ds.id] = {{"status", "skipped"}, {"reason", reason}};
                per_dataset.add({cp.label, ds.id, "skipped", "0", "", "", "", reason});
            };
            if (!ds.skip_reason.empty()) {
                skip(ds.skip_reason);
                continue;
            }
            auto built = build_tokens(ds, path == MutPath::ll, alphabet, index, picker);
            if (!built.skip_reason.empty()) {
                skip(built.skip_reason);
                continue;
            }

            std::vector<double> dms, score, score_norm;
            std::vector<const MutantEntry*> used;
            try {
                std::optional<MaskedMarginals> wt_marginals;
                if (path == MutPath::mm) {
                    std::set<std::size_t> positions;
                    for (std::size_t i = 0; i < ds.entries.size(); ++i)
                        if (built.tokens[i])
                            for (const auto& m : ds.entries[i].mutations) positions.insert(m.position - 1);
                    const std::vector<std::size_t> pos(positions.begin(), positions.end());
                    if (!pos.empty()) wt_marginals = client.score_masked(built.wildtype, pos);
                }
                for (std::size_t i = 0; i < ds.entries.size(); ++i) {
                    if (!built.tokens[i]) continue;
                    const auto& e = ds.entries[i];
                    const auto& tokens = *built.tokens[i];
                    double s;
                    if (path == MutPath::ll) {
                        s = sequence_log_likelihood(client.score_causal(tokens));
                    } else {
                        std::vector<std::size_t> pos;
                        for (const auto& m : e.mutations) pos.push_back(m.position - 1);
                        const auto mt_marginals = client.score_masked(tokens, pos);
                        s = masked_marginal_score(built.wildtype, tokens, *wt_marginals, mt_marginals, pos);
                    }
                    const double s_norm = s / static_cast<double>(tokens.size());
                    dms.push_back(e.dms_score);
                    score.push_back(s);
                    score_norm.push_back(s_norm);
                    used.push_back(&e);
                    per_mutant.add({cp.label, ds.id, e.raw_label, fmt(e.dms_score), fmt(s), fmt(s_norm)});
                }
            } catch (const BackendError&) {
                throw;
            } catch (const DataError& err) {
                skip(err.what());
                continue;
            }

            double rho = 0, rho_norm = 0;
            try {
                if (dms.size() < 3) throw UndefinedCorrelation("fewer than 3 scored mutants");
                rho = spearman_rho(dms, score);
                rho_norm = spearman_rho(dms, score_norm);
            } catch (const UndefinedCorrelation& err) {
                skip(std::string("correlation undefined: ") + err.what());
                continue;
            }
            rhos[ds.id] = rho;
            ds_json[ds.id] = {{"status", "scored"},
                              {"n", dms.size()},
                              {"dropped_mutants", built.dropped},
                              {"wildtype_source", built.wildtype_source},
                              {"spearman", rho},
                              {"abs_spearman", std::abs(rho)},
                              {"spearman_per_token", rho_norm},
                              {"metric", metric_fragment("spearman", rho, dms.size())}};
            per_dataset.add({cp.label, ds.id, "scored", std::to_string(dms.size()), fmt(rho), fmt(std::abs(rho)),
                             fmt(rho_norm), built.wildtype_source});
        }
        entry["datasets"] = ds_json;
        entry["n_scored_datasets"] = rhos.size();
        if (rhos.empty()) {
            entry["mean_abs_spearman"] = nullptr;
            report.warnings.push_back("checkpoint " + cp.label + ": no dataset could be scored");
            trend.add({cp.label, entry["path"].get<std::string>(), "0", ""});
        } else {
            const double mean = mean_abs_spearman(rhos);
            entry["mean_abs_spearman"] = mean;
            trend.add({cp.label, entry["path"].get<std::string>(), std::to_string(rhos.size()), fmt(mean)});
        }
        report.requests += client.requests_sent();
        checkpoints[cp.label] = entry;
    }
    report.metrics["checkpoints"] = checkpoints;
    report.wall_seconds = clock.seconds();
    return report;
}

EvalReport run_eval_mut_probe(const EvalConfig& c) {
    c.validate(EvalKind::mut_probe);
    Stopwatch clock;
    auto report = begin_report(EvalKind::mut_probe, c);
    add_probe_conventions(report, c);
    report.conventions["correlation"] = "Spearman; test |rho| pooled over datasets and averaged per dataset";
    report.conventions["sampling"] = sampling_to_json(c.mut.sampling);
    report.conventions["strata"] = "DMS score quantile intervals per dataset";

    const auto datasets = load_datasets(c, report);
    const auto index = load_index(c, report);
    const SeededPicker picker(c.seed);

    std::vector<MutantEntry> pooled;
    std::map<std::string, const LoadedDataset*> by_id;
    for (const auto& ds : datasets) {
        by_id[ds.id] = &ds;
        if (ds.skip_reason.empty()) pooled.insert(pooled.end(), ds.entries.begin(), ds.entries.end());
    }
    if (pooled.empty()) throw DataError("no usable DMS dataset");
    const auto split = stratified_sample(pooled, c.mut.sampling, c.seed);
    report.warnings.insert(report.warnings.end(), split.warnings.begin(), split.warnings.end());

    auto& split_table = report.table("probe_split", {"dataset", "available", "train", "val", "test", "excluded"});
    json split_json = json::object();
    for (const auto& [id, n] : split.per_dataset) {
        split_json[id] = {{"available", n.available}, {"train", n.train}, {"val", n.val}, {"test", n.test},
                          {"excluded", n.excluded}};
        split_table.add({id, std::to_string(n.available), std::to_string(n.train), std::to_string(n.val),
                         std::to_string(n.test), n.excluded ? "1" : "0"});
    }
    report.metrics["split"] = {{"preset", c.mut.sampling.name},
                               {"train", split.train.size()},
                               {"val", split.val.size()},
                               {"test", split.test.size()},
                               {"per_dataset", split_json}};

    struct Row {
        const MutantEntry* entry;
        int part;  // 0 train, 1 val, 2 test
    };
    std::vector<Row> rows;
    for (const auto& e : split.train) rows.push_back({&e, 0});
    for (const auto& e : split.val) rows.push_back({&e, 1});
    for (const auto& e : split.test) rows.push_back({&e, 2});
    static const char* kPart[] = {"train", "val", "test"};

    auto& rows_table = report.table("probe_rows", {"checkpoint", "row", "id", "dataset", "split", "dms_score"});
    auto& curve = report.table("probe_layers", {"checkpoint", "layer", "excluded", "train_rmse", "val_spearman",
                                                "test_spearman", "ridge_lambda", "note"});
    auto& trend = report.table("probe_trend", {"checkpoint", "rule", "layer", "test_abs_spearman_pooled",
                                               "test_mean_abs_spearman"});

    json checkpoints = json::object();
    for (const auto& cp : c.backends) {
        auto client = open_backend(cp);
        require(client, Capability::hidden_states, cp);
        const auto layers = layer_list(c, client.descriptor());
        const bool nucleotide = client.descriptor().is_nucleotide();

        std::map<std::string, MutantTokens> built;
        std::map<std::string, std::map<std::string, std::size_t>> position;  // dataset -> label -> entry index
        for (const auto& ds : datasets) {
            if (!ds.skip_reason.empty()) continue;
            built.emplace(ds.id, build_tokens(ds, nucleotide, client.descriptor().alphabet, index, picker));
            for (std::size_t i = 0; i < ds.entries.size(); ++i) position[ds.id][ds.entries[i].raw_label] = i;
        }

        std::vector<std::string> tokens, ids;
        std::vector<double> labels;
        std::vector<std::string> row_dataset;
        SweepSplit sweep_split;
        std::size_t dropped = 0;
        for (const auto& row : rows) {
            const auto& e = *row.entry;
            const auto& b = built.at(e.dataset_id);
            std::optional<std::string> tok;
            if (b.skip_reason.empty()) tok = b.tokens[position[e.dataset_id][e.raw_label]];
            if (!tok || !within_alphabet(*tok, client.descriptor().alphabet)) {
                ++dropped;
                continue;
            }
            const auto k = tokens.size();
            (row.part == 0 ? sweep_split.train : row.part == 1 ? sweep_split.val : sweep_split.test).push_back(k);
            tokens.push_back(*tok);
            ids.push_back(e.dataset_id + "/" + e.raw_label);
            labels.push_back(e.dms_score);
            row_dataset.push_back(e.dataset_id);
            rows_table.add({cp.label, std::to_string(k), ids.back(), e.dataset_id, kPart[row.part], fmt(e.dms_score)});
        }
        for (const auto& [id, b] : built)
            if (!b.skip_reason.empty()) report.warnings.push_back(cp.label + ": dataset " + id + " dropped: " + b.skip_reason);
        if (dropped) report.warnings.push_back(cp.label + ": " + std::to_string(dropped) + " mutants not representable");
        if (sweep_split.train.size() < 2 || sweep_split.test.empty()) {
            throw DataError("checkpoint " + cp.label + ": too few representable mutants for probing");
        }

        const auto features = featurize(client, tokens, ids, layers, c.pooling, cp.label);
        for (const auto& f : features) {
            report.features.emplace_back(cp.label + "/layer_" + std::to_string(f.layer) + ".bin", f);
        }
        SweepOptions options{c.ridge_lambda, Correlation::spearman, Correlation::spearman};
        const auto sweep = layer_sweep(features, labels, sweep_split, options);

        for (const auto& lr : sweep.layers) {
            curve.add({cp.label, std::to_string(lr.layer), lr.excluded ? "1" : "0", lr.excluded ? "" : fmt(lr.train_rmse),
                       lr.val_corr ? fmt(*lr.val_corr) : "", lr.test_corr ? fmt(*lr.test_corr) : "",
                       lr.model ? fmt(lr.model->ridge_lambda) : "", lr.note});
        }

        auto evaluate_rule = [&](const char* rule, std::optional<int> layer, std::optional<double> pooled_rho) -> json {
            json j = {{"rule", rule}, {"layer", opt(layer)}};
            if (!layer || !pooled_rho) {
                trend.add({cp.label, rule, "", "", ""});
                return j;
            }
            const auto* lr = sweep.find(*layer);
            std::size_t k = 0;
            for (std::size_t i = 0; i < layers.size(); ++i)
                if (layers[i] == *layer) k = i;
            const auto preds = predict(*lr->model, features[k].select(sweep_split.test));
            std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
            for (std::size_t t = 0; t < sweep_split.test.size(); ++t) {
                const auto row = sweep_split.test[t];
                groups[row_dataset[row]].first.push_back(labels[row]);
                groups[row_dataset[row]].second.push_back(preds[t]);
            }
            std::map<std::string, double> rhos;
            json per = json::object();
            for (const auto& [id, g] : groups) {
                try {
                    if (g.first.size() < 3) throw UndefinedCorrelation("fewer than 3 test mutants");
                    rhos[id] = spearman_rho(g.first, g.second);
                    per[id] = {{"n", g.first.size()}, {"spearman", rhos[id]}};
                } catch (const UndefinedCorrelation& err) {
                    per[id] = {{"n", g.first.size()}, {"spearman", nullptr}, {"reason", err.what()}};
                }
            }
            j["test_spearman_pooled"] = *pooled_rho;
            j["test_abs_spearman_pooled"] = std::abs(*pooled_rho);
            j["test_per_dataset"] = per;
            std::optional<double> mean;
            if (!rhos.empty()) mean = mean_abs_spearman(rhos);
            j["test_mean_abs_spearman"] = opt(mean);
            trend.add({cp.label, rule, std::to_string(*layer), fmt(std::abs(*pooled_rho)), mean ? fmt(*mean) : ""});
            return j;
        };

        json entry = {{"backend", client.descriptor().name},
                      {"layers", layers},
                      {"n_train", sweep_split.train.size()},
                      {"n_val", sweep_split.val.size()},
                      {"n_test", sweep_split.test.size()},
                      {"sweep", sweep.to_json()},
                      {"magnitude_profile", magnitude_profile(features)}};
        entry["selected"] = {evaluate_rule("min_train_rmse", sweep.selected_by_rmse, sweep.test_at_rmse),
                             evaluate_rule("max_val_spearman", sweep.selected_by_val, sweep.test_at_val)};
        report.requests += client.requests_sent();
        checkpoints[cp.label] = entry;
    }
    report.metrics["checkpoints"] = checkpoints;
    report.wall_seconds = clock.seconds();
    return report;
}

// ---------------------------------------------------------------------------
// Vir

EvalReport run_eval_vir(const EvalConfig& c) {
    c.validate(EvalKind::vir);
    Stopwatch clock;
    auto report = begin_report(EvalKind::vir, c);
    add_probe_conventions(report, c);
    report.conventions["correlation"] = "Pearson";
    report.conventions["label_scale"] = c.vir.label_scale;
    report.conventions["split"] = "label-quantile stratified train draw, remainder is test, no validation set";
    report.conventions["strain_sequence"] = "segments of a strain concatenated in file order";

    const auto table_path = c.resolve(c.vir.ld50_table);
    const auto table = read_delimited_file(table_path, delimiter_for(table_path));
    report.inputs.push_back(describe_input("ld50_table", c.vir.ld50_table, table_path));
    const auto strain_col = table.column(c.vir.strain_column);
    const auto ld50_col = table.column(c.vir.ld50_column);

    auto segments = load_corpus(c, c.vir.segments, c.vir.sidecar, "segments", report);
    std::map<std::string, std::string> by_strain;
    std::map<std::string, std::size_t> segment_count;
    std::size_t unlabeled = 0;
    for (const auto& rec : segments) {
        if (!rec.lineage.strain) {
            ++unlabeled;
            continue;
        }
        by_strain[*rec.lineage.strain] += rec.seq.str();
        ++segment_count[*rec.lineage.strain];
    }
    if (unlabeled) report.warnings.push_back(std::to_string(unlabeled) + " segments carry no strain and were ignored");

    std::vector<std::string> strains, tokens;
    std::vector<double> raw, labels;
    std::set<std::string> seen;
    std::size_t missing = 0;
    auto& examples = report.table("vir_examples", {"strain", "ld50", "label", "segments", "length"});
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string where = c.vir.ld50_table + " row " + std::to_string(r + 2);
        if (strain_col >= row.size() || ld50_col >= row.size()) throw DataError(where + ": short row");
        const auto& strain = row[strain_col];
        if (!seen.insert(strain).second) throw DataError(where + ": duplicate strain " + strain);
        double v;
        try {
            std::size_t used = 0;
            v = std::stod(row[ld50_col], &used);
            if (used != row[ld50_col].size()) throw std::invalid_argument("trailing text");
        } catch (const std::exception&) {
            throw DataError(where + ": LD50 is not a number");
        }
        if (!std::isfinite(v)) throw DataError(where + ": LD50 is not finite");
        if (c.vir.label_scale == "log10" && v <= 0) throw DataError(where + ": LD50 must be positive on log scale");
        auto it = by_strain.find(strain);
        if (it == by_strain.end()) {
            ++missing;
            continue;
        }
        const double label = c.vir.label_scale == "log10" ? std::log10(v) : v;
        strains.push_back(strain);
        tokens.push_back(it->second);
        raw.push_back(v);
        labels.push_back(label);
        examples.add({strain, fmt(v), fmt(label), std::to_string(segment_count[strain]), std::to_string(it->second.size())});
    }
    if (missing) report.warnings.push_back(std::to_string(missing) + " LD50 rows have no segments and were skipped");
    if (strains.size() < 3) throw DataError("fewer than 3 strains with both LD50 and segments");
    report.metrics["examples"] = {{"ld50_rows", table.rows.size()},
                                  {"with_segments", strains.size()},
                                  {"missing_segments", missing},
                                  {"label", to_json(summarize(labels))}};

    auto& curve = report.table("vir_layers", {"checkpoint", "layer", "excluded", "train_rmse", "test_pearson",
                                              "magnitude", "ridge_lambda", "note"});
    auto& trend = report.table("vir_trend", {"checkpoint", "rmse_layer", "test_pearson_at_rmse_layer", "best_test_layer",
                                             "best_test_pearson"});

    VirulenceProbeConfig probe_config{c.vir.train_fraction, c.vir.n_strata, c.seed, c.ridge_lambda};
    json checkpoints = json::object();
    for (const auto& cp : c.backends) {
        auto client = open_backend(cp);
        require(client, Capability::hidden_states, cp);
        const auto layers = layer_list(c, client.descriptor());
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (!within_alphabet(tokens[i], client.descriptor().alphabet)) {
                throw DataError("strain " + strains[i] + " has symbols outside the alphabet of backend " + cp.label);
            }
        }
        const auto features = featurize(client, tokens, strains, layers, c.pooling, cp.label);
        for (const auto& f : features) {
            report.features.emplace_back(cp.label + "/layer_" + std::to_string(f.layer) + ".bin", f);
        }
        const auto result = probe_virulence(features, labels, probe_config);
        for (std::size_t k = 0; k < result.sweep.layers.size(); ++k) {
            const auto& lr = result.sweep.layers[k];
            curve.add({cp.label, std::to_string(lr.layer), lr.excluded ? "1" : "0", lr.excluded ? "" : fmt(lr.train_rmse),
                       lr.test_corr ? fmt(*lr.test_corr) : "",
                       k < result.magnitude.size() ? fmt(result.magnitude[k]) : "",
                       lr.model ? fmt(lr.model->ridge_lambda) : "", lr.note});
        }
        trend.add({cp.label, result.sweep.selected_by_rmse ? std::to_string(*result.sweep.selected_by_rmse) : "",
                   result.sweep.test_at_rmse ? fmt(*result.sweep.test_at_rmse) : "",
                   result.best_test_layer ? std::to_string(*result.best_test_layer) : "",
                   result.best_test_pearson ? fmt(*result.best_test_pearson) : ""});
        json entry = result.to_json();
        entry["backend"] = client.descriptor().name;
        entry["layers"] = layers;
        report.requests += client.requests_sent();
        checkpoints[cp.label] = entry;
    }
    report.metrics["checkpoints"] = checkpoints;
    report.wall_seconds = clock.seconds();
    return report;
}

EvalReport run_eval(EvalKind kind, const EvalConfig& config) {
    switch (kind) {
        case EvalKind::gen: return run_eval_gen(config);
        case EvalKind::mut_ll: return run_eval_mut_ll(config);
        case EvalKind::mut_probe: return run_eval_mut_probe(config);
        case EvalKind::vir: return run_eval_vir(config);
    }
    throw ConfigError("unknown eval kind");
}

}  // namespace dualeval
