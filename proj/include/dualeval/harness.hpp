#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualeval/curation.hpp"
#include "dualeval/report.hpp"
#include "dualeval/scoring.hpp"

namespace dualeval {

enum class EvalKind { gen, mut_ll, mut_probe, vir };
std::string_view to_string(EvalKind kind);

/// A backend endpoint standing in for one model checkpoint ("step-0", ...).
struct Checkpoint {
    std::string label;
    std::string endpoint;
};

struct DmsDatasetConfig {
    std::string id;
    std::string table;
    std::optional<std::string> wildtype;     // residues given inline
    std::optional<std::string> wildtype_id;  // key into mut.wildtype_fasta (default: id)
};

/// Paths are kept as written and resolved against base_dir on use.
///
/// JSON layout (every section optional except what the chosen eval needs):
///   { "seed", "out", "backends": [{"label","endpoint"}] | "backend",
///     "pooling", "layers", "ridge_lambda",
///     "gen":  {"corpus","sidecar","holdout","group_ranks","baseline_corpus",
///              "baseline_sidecar","baseline_sample"},
///     "mut":  {"datasets": [{"id","table","wildtype","wildtype_id"}],
///              "wildtype_fasta","reference_corpus","scoring","sampling"},
///     "vir":  {"ld50_table","segments","sidecar","strain_column","ld50_column",
///              "label_scale","train_fraction","n_strata"},
///     "curation": {CurationConfig fields, "corpus", "sidecar"} }
struct EvalConfig {
    std::filesystem::path base_dir = ".";
    std::uint64_t seed = 0;
    std::string out;
    std::vector<Checkpoint> backends;
    Pooling pooling = Pooling::mean;
    std::vector<int> layers;  // empty: every layer the backend advertises
    std::optional<double> ridge_lambda;

    struct Gen {
        std::string corpus;
        std::string sidecar;
        std::string holdout;  // LineageFilter expression selecting the evaluated records
        std::vector<TaxonRank> group_ranks{TaxonRank::family, TaxonRank::genus, TaxonRank::species};
        std::string baseline_corpus;
        std::string baseline_sidecar;
        std::size_t baseline_sample = 5000;
    } gen;

    struct Mut {
        std::vector<DmsDatasetConfig> datasets;
        std::string wildtype_fasta;
        std::string reference_corpus;
        std::string scoring = "auto";  // auto | ll | mm
        SamplingPreset sampling = SamplingPreset::probe_main();
    } mut;

    struct Vir {
        std::string ld50_table;
        std::string segments;
        std::string sidecar;
        std::string strain_column = "strain";
        std::string ld50_column = "ld50";
        std::string label_scale = "log10";  // log10 | raw
        double train_fraction = 0.10;
        std::size_t n_strata = 10;
    } vir;

    struct Curation {
        CurationConfig config;
        std::string corpus;
        std::string sidecar;
    } curation;

    /// Throws ConfigError on unknown keys or bad values.
    static EvalConfig from_json(const nlohmann::json& j, std::filesystem::path base_dir = ".");
    static EvalConfig load(const std::filesystem::path& file);

    std::filesystem::path resolve(const std::string& configured) const;
    /// Every path the given eval reads must exist; at least one backend.
    void validate(EvalKind kind) const;
    /// Effective configuration, output location omitted.
    nlohmann::json echo() const;
};

EvalReport run_eval_gen(const EvalConfig& config);
EvalReport run_eval_mut_ll(const EvalConfig& config);
EvalReport run_eval_mut_probe(const EvalConfig& config);
EvalReport run_eval_vir(const EvalConfig& config);
EvalReport run_eval(EvalKind kind, const EvalConfig& config);

}  // namespace dualeval
