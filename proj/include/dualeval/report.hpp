#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualeval/probes.hpp"

namespace dualeval {

/// Plot-ready tab-separated table; written as <name>.tsv.
struct Table {
    std::string name;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
};

struct InputFile {
    std::string role;
    std::string path;  // as configured
    std::uintmax_t bytes = 0;
    std::string sha256;
};

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);
InputFile describe_input(std::string role, std::string configured, const std::filesystem::path& resolved);

struct EvalReport {
    std::string kind;
    std::uint64_t seed = 0;
    nlohmann::json config = nlohmann::json::object();  // echo, output location omitted
    nlohmann::json conventions = nlohmann::json::object();
    nlohmann::json metrics = nlohmann::json::object();
    std::vector<InputFile> inputs;
    std::vector<std::string> warnings;
    std::deque<Table> tables;  // stable references across table()
    /// Persisted intermediates, written under features/<relative path>.
    std::vector<std::pair<std::string, FeatureMatrix>> features;

    // Run section, kept out of metrics.json.
    std::string started_at;
    double wall_seconds = 0;
    std::size_t requests = 0;

    Table& table(const std::string& name, std::vector<std::string> header);
    nlohmann::json manifest() const;
    std::string manifest_hash() const;
    /// Everything deterministic: config echo, conventions, manifest, metrics, warnings.
    nlohmann::json metrics_document() const;
};

struct ReportFormats {
    bool json = true;
    bool tsv = true;
};

struct EmitResult {
    std::vector<std::filesystem::path> files;
    std::optional<std::string> previous_manifest_hash;
    bool manifest_changed = false;
};

/// Writes metrics.json (byte-stable), report.json (adds the run section), one
/// TSV per table and the feature files. A report.json already present in
/// `out_dir` with a different manifest hash is flagged in the result and in the
/// new run section.
EmitResult emit_report(const EvalReport& report, const std::filesystem::path& out_dir, ReportFormats formats = {});

struct ManifestCheck {
    std::string recorded;
    std::string current;
    std::vector<std::string> changed;  // "role: path"
    bool matches() const noexcept { return recorded == current; }
};

/// Re-hashes the inputs listed in a report's manifest, resolving relative
/// paths against `base_dir`.
ManifestCheck check_manifest(const nlohmann::json& report_json, const std::filesystem::path& base_dir);

}  // namespace dualeval
