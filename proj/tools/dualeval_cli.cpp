#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dualeval/backtranslate.hpp"
#include "dualeval/curation.hpp"
#include "dualeval/errors.hpp"
#include "dualeval/harness.hpp"
#include "dualeval/report.hpp"
#include "dualeval/text_io.hpp"

namespace fs = std::filesystem;
using namespace dualeval;

namespace {

enum Exit { kOk = 0, kConfig = 2, kBackend = 3, kData = 4 };

struct Globals {
    std::string config;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string backend;
    std::string out;
};

EvalConfig load_config(const Globals& g) {
    EvalConfig c = g.config.empty() ? EvalConfig{} : EvalConfig::load(g.config);
    if (g.seed_set) {
        c.seed = g.seed;
        c.curation.config.seed = g.seed;
    }
    if (!g.backend.empty()) c.backends = {Checkpoint{"cli", g.backend}};
    return c;
}

fs::path out_dir(const Globals& g, const EvalConfig& c, const char* fallback) {
    if (!g.out.empty()) return g.out;
    if (!c.out.empty()) return c.resolve(c.out);
    return fallback;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

std::string sources_tsv(const Partition& p) {
    std::string s = "id\toffset\tlength\n";
    for (const auto& src : p.sources)
        s += src.id + "\t" + std::to_string(src.offset) + "\t" + std::to_string(src.length) + "\n";
    return s;
}

std::string segments_text(const Partition& p) {
    std::string s;
    for (const auto& seg : p.segments) {
        s += seg;
        s += '\n';
    }
    return s;
}

struct CurateFlags {
    std::string corpus, sidecar;
    std::optional<bool> add_rc, require_genus, dedup;
    std::optional<double> val_fraction;
    std::optional<std::size_t> segment_length;
    std::optional<std::string> drop_ambiguous_run, lineage_filter, longest_per;
};

int run_curate(const Globals& g, const CurateFlags& f) {
    auto c = load_config(g);
    auto cfg = c.curation.config;
    std::string corpus = c.curation.corpus, sidecar = c.curation.sidecar;
    if (!f.corpus.empty()) corpus = fs::absolute(f.corpus).string();
    if (!f.sidecar.empty()) sidecar = fs::absolute(f.sidecar).string();
    if (f.add_rc) cfg.add_rc = *f.add_rc;
    if (f.require_genus) cfg.require_genus = *f.require_genus;
    if (f.dedup) cfg.dedup = *f.dedup;
    if (f.val_fraction) cfg.val_fraction = *f.val_fraction;
    if (f.segment_length) cfg.segment_length = *f.segment_length;
    if (f.drop_ambiguous_run) {
        cfg.drop_ambiguous_run = *f.drop_ambiguous_run == "none" ? std::nullopt : f.drop_ambiguous_run;
    }
    if (f.lineage_filter) cfg.lineage_filter = f.lineage_filter->empty() ? std::nullopt : f.lineage_filter;
    if (f.longest_per) {
        cfg.longest_per = *f.longest_per == "none" ? std::nullopt : std::optional(parse_taxon_rank(*f.longest_per));
    }
    cfg.validate();
    if (corpus.empty()) throw ConfigError("curate needs a corpus (--corpus or curation.corpus)");

    const auto corpus_path = c.resolve(corpus);
    if (!fs::exists(corpus_path)) throw ConfigError("corpus not found: " + corpus_path.string());
    auto parsed = read_fasta_file(corpus_path);
    if (!sidecar.empty()) apply_sidecar(parsed.records, read_sidecar_file(c.resolve(sidecar)));
    for (const auto& e : parsed.errors) {
        std::cerr << "warning: " << corpus << " line " << e.line << ": " << e.message << "\n";
    }

    const auto result = run_curation(parsed.records, cfg);
    const auto dir = out_dir(g, c, "curated");
    fs::create_directories(dir);
    {
        std::ofstream train(dir / "train.fasta"), val(dir / "val.fasta");
        write_fasta(train, result.split.train);
        write_fasta(val, result.split.val);
    }
    write_file(dir / "train_segments.txt", segments_text(result.train_segments));
    write_file(dir / "val_segments.txt", segments_text(result.val_segments));
    write_file(dir / "train_sources.tsv", sources_tsv(result.train_segments));
    write_file(dir / "val_sources.tsv", sources_tsv(result.val_segments));

    nlohmann::json manifest = result.manifest.to_json();
    manifest["config"] = cfg.to_json();
    nlohmann::json inputs = nlohmann::json::array();
    inputs.push_back({{"role", "corpus"}, {"path", corpus}, {"sha256", sha256_file(corpus_path)}});
    if (!sidecar.empty()) {
        inputs.push_back({{"role", "sidecar"}, {"path", sidecar}, {"sha256", sha256_file(c.resolve(sidecar))}});
    }
    manifest["inputs"] = inputs;
    manifest["parse_errors"] = parsed.errors.size();
    manifest["train_tokens"] = result.train_segments.total_tokens;
    manifest["val_tokens"] = result.val_segments.total_tokens;
    manifest["train_segments"] = result.train_segments.segments.size();
    manifest["val_segments"] = result.val_segments.segments.size();
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");

    std::cout << "curated " << parsed.records.size() << " records: " << result.split.train.size() << " train, "
              << result.split.val.size() << " val; " << result.train_segments.segments.size() << " + "
              << result.val_segments.segments.size() << " segments -> " << dir.string() << "\n";
    for (const auto& w : result.manifest.warnings) std::cerr << "warning: " << w << "\n";
    return kOk;
}

struct BacktranslateFlags {
    std::string protein;
    std::string reference;
    std::string dms;
    std::string wildtype_id;
};

int run_backtranslate(const Globals& g, const BacktranslateFlags& f) {
    auto c = load_config(g);
    const SeededPicker picker(c.seed);
    const auto proteins = read_protein_fasta_file(f.protein);
    WildTypeIndex index;
    if (!f.reference.empty()) index = WildTypeIndex::from_fasta(f.reference);

    const auto dir = out_dir(g, c, "backtranslated");
    fs::create_directories(dir);
    std::ofstream fasta(dir / "backtranslated.fasta");
    std::map<std::string, NucleotideSequence> wild;
    for (const auto& [id, protein] : proteins) {
        auto hit = find_wildtype(protein, index, picker, id);
        fasta << '>' << id << " source=" << (hit.exact_match ? "exact_match" : "seeded_fill") << " seed=" << c.seed
              << '\n';
        const auto& s = hit.nucleotides.str();
        for (std::size_t i = 0; i < s.size(); i += 60) fasta << s.substr(i, 60) << '\n';
        wild.emplace(id, std::move(hit.nucleotides));
    }

    if (!f.dms.empty()) {
        const auto id = f.wildtype_id.empty() ? fs::path(f.dms).stem().string() : f.wildtype_id;
        auto it = wild.find(id);
        if (it == wild.end()) throw ConfigError("no protein named " + id + " in " + f.protein);
        std::ofstream out(dir / "mutants.tsv");
        out << "mutant\tDMS_score\tsequence\n";
        for (const auto& e : read_dms_table(f.dms, id)) {
            out << e.raw_label << '\t' << format_real(e.dms_score) << '\t'
                << apply_mutations(it->second, e.mutations, picker, id).str() << '\n';
        }
    }
    std::cout << "back-translated " << proteins.size() << " proteins -> " << dir.string() << "\n";
    return kOk;
}

int run_eval_command(const Globals& g, EvalKind kind) {
    if (g.config.empty()) throw ConfigError("--config is required");
    const auto c = load_config(g);
    const auto report = run_eval(kind, c);
    const auto dir = out_dir(g, c, "report");
    const auto emitted = emit_report(report, dir);
    if (emitted.manifest_changed) {
        std::cerr << "warning: inputs changed since the previous report in " << dir.string() << " (manifest "
                  << *emitted.previous_manifest_hash << " -> " << report.manifest_hash() << ")\n";
    }
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << to_string(kind) << ": " << report.metrics.at("checkpoints").size() << " checkpoint(s), "
              << report.requests << " requests, " << report.wall_seconds << " s -> " << dir.string() << "\n";
    return kOk;
}

int run_report(const Globals& g) {
    if (g.out.empty()) throw ConfigError("report needs --out <dir>");
    const fs::path path = fs::path(g.out) / "report.json";
    std::ifstream in(path);
    if (!in) throw DataError("no report at " + path.string());
    nlohmann::json report;
    try {
        report = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    std::cout << "kind      " << report.value("kind", "?") << "\n"
              << "seed      " << report.value("seed", std::uint64_t{0}) << "\n"
              << "manifest  " << report.at("manifest").at("hash").get<std::string>() << "\n";
    for (const auto& [label, entry] : report.at("metrics").at("checkpoints").items()) {
        std::cout << "checkpoint " << label;
        for (const char* key : {"mean_abs_spearman", "best_test_pearson"})
            if (entry.contains(key)) std::cout << "  " << key << "=" << entry.at(key).dump();
        if (entry.contains("holdout") && entry.at("holdout").contains("perplexity"))
            std::cout << "  holdout_perplexity=" << entry.at("holdout").at("perplexity").dump();
        std::cout << "\n";
    }
    if (!g.config.empty()) {
        const auto c = load_config(g);
        const auto check = check_manifest(report, c.base_dir);
        if (!check.matches()) {
            std::cerr << "manifest mismatch: recorded " << check.recorded << ", inputs now hash to " << check.current
                      << "\n";
            for (const auto& ch : check.changed) std::cerr << "  changed " << ch << "\n";
            return kData;
        }
        std::cout << "manifest matches current inputs\n";
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dualeval: evaluation harness for genomic and protein sequence models"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config, "Config file (JSON)");
    app.add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { g.seed = s; g.seed_set = true; },
                                           "Seed override");
    app.add_option("--backend", g.backend, "Backend endpoint override (exec:<cmd> | unix:<path> | mock:<flags>)");
    app.add_option("--out", g.out, "Output directory");

    CurateFlags cf;
    auto* curate = app.add_subcommand("curate", "Filter, augment, split and partition a corpus");
    curate->add_option("--corpus", cf.corpus, "Input FASTA");
    curate->add_option("--sidecar", cf.sidecar, "Metadata TSV");
    curate->add_option("--add_rc", cf.add_rc);
    curate->add_option("--val_fraction", cf.val_fraction);
    curate->add_option("--segment_length", cf.segment_length);
    curate->add_option("--drop_ambiguous_run", cf.drop_ambiguous_run, "Motif, or 'none'");
    curate->add_option("--require_genus", cf.require_genus);
    curate->add_option("--dedup", cf.dedup);
    curate->add_option("--lineage_filter", cf.lineage_filter);
    curate->add_option("--longest_per", cf.longest_per, "Taxon rank, or 'none'");

    BacktranslateFlags bf;
    auto* bt = app.add_subcommand("backtranslate", "Protein to nucleotide reconstruction");
    bt->add_option("--protein", bf.protein, "Protein FASTA")->required()->check(CLI::ExistingFile);
    bt->add_option("--reference", bf.reference, "Nucleotide reference corpus")->check(CLI::ExistingFile);
    bt->add_option("--dms", bf.dms, "DMS table; writes mutant nucleotide sequences")->check(CLI::ExistingFile);
    bt->add_option("--wildtype-id", bf.wildtype_id, "Protein id the DMS table refers to");

    auto* gen = app.add_subcommand("eval-gen", "Perplexity distributions on a hold-out");
    auto* mut = app.add_subcommand("eval-mut", "Zero-shot mutational effect scoring");
    auto* probe = app.add_subcommand("eval-mut-probe", "Linear probes on hidden states for DMS scores");
    auto* vir = app.add_subcommand("eval-vir", "Linear probes on hidden states for LD50");
    auto* rep = app.add_subcommand("report", "Summarize a report directory; with --config, verify the input manifest");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (*curate) return run_curate(g, cf);
        if (*bt) return run_backtranslate(g, bf);
        if (*gen) return run_eval_command(g, EvalKind::gen);
        if (*mut) return run_eval_command(g, EvalKind::mut_ll);
        if (*probe) return run_eval_command(g, EvalKind::mut_probe);
        if (*vir) return run_eval_command(g, EvalKind::vir);
        if (*rep) return run_report(g);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.kind()) {
            case ErrorKind::config: return kConfig;
            case ErrorKind::backend: return kBackend;
            case ErrorKind::data: return kData;
        }
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    }
    return kOk;
}
