#include "dualeval/report.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "dualeval/errors.hpp"

namespace dualeval {

namespace fs = std::filesystem;

namespace {

std::string to_hex(const unsigned char* data, unsigned int n) {
    std::ostringstream out;
    out << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < n; ++i) out << std::setw(2) << static_cast<int>(data[i]);
    return out.str();
}

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new()) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
    }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }
    std::string hex() {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned int n = 0;
        EVP_DigestFinal_ex(ctx_, md, &n);
        return to_hex(md, n);
    }

private:
    EVP_MD_CTX* ctx_;
};

std::string clean_cell(std::string s) {
    for (char& c : s)
        if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    return s;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace

std::string sha256_hex(std::string_view data) {
    Sha256 h;
    h.update(data.data(), data.size());
    return h.hex();
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    Sha256 h;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) h.update(buf, static_cast<std::size_t>(in.gcount()));
    return h.hex();
}

InputFile describe_input(std::string role, std::string configured, const fs::path& resolved) {
    InputFile f;
    f.role = std::move(role);
    f.path = std::move(configured);
    f.bytes = fs::file_size(resolved);
    f.sha256 = sha256_file(resolved);
    return f;
}

Table& EvalReport::table(const std::string& name, std::vector<std::string> header) {
    for (auto& t : tables)
        if (t.name == name) return t;
    tables.push_back(Table{name, std::move(header), {}});
    return tables.back();
}

nlohmann::json EvalReport::manifest() const {
    nlohmann::json files = nlohmann::json::array();
    for (const auto& f : inputs) {
        files.push_back({{"role", f.role}, {"path", f.path}, {"bytes", f.bytes}, {"sha256", f.sha256}});
    }
    return {{"kind", kind}, {"seed", seed}, {"inputs", files}};
}

std::string EvalReport::manifest_hash() const { return sha256_hex(manifest().dump()); }

nlohmann::json EvalReport::metrics_document() const {
    auto m = manifest();
    m["hash"] = manifest_hash();
    return {{"kind", kind},          {"seed", seed},       {"config", config}, {"conventions", conventions},
            {"manifest", m},         {"metrics", metrics}, {"warnings", warnings}};
}

EmitResult emit_report(const EvalReport& report, const fs::path& out_dir, ReportFormats formats) {
    EmitResult result;
    fs::create_directories(out_dir);

    const auto report_path = out_dir / "report.json";
    const std::string hash = report.manifest_hash();
    if (fs::exists(report_path)) {
        try {
            std::ifstream in(report_path);
            const auto previous = nlohmann::json::parse(in);
            const auto old = previous.at("manifest").at("hash").get<std::string>();
            result.previous_manifest_hash = old;
            result.manifest_changed = old != hash;
        } catch (const std::exception&) {
            // unreadable previous report: nothing to compare against
        }
    }

    auto doc = report.metrics_document();
    if (formats.json) {
        write_text(out_dir / "metrics.json", doc.dump(2) + "\n");
        result.files.push_back(out_dir / "metrics.json");

        nlohmann::json run = {{"started_at", report.started_at},
                              {"wall_seconds", report.wall_seconds},
                              {"requests", report.requests}};
        if (result.previous_manifest_hash) {
            run["previous_manifest_hash"] = *result.previous_manifest_hash;
            run["manifest_changed"] = result.manifest_changed;
        }
        doc["run"] = run;
        nlohmann::json table_files = nlohmann::json::array();
        if (formats.tsv)
            for (const auto& t : report.tables) table_files.push_back(t.name + ".tsv");
        doc["tables"] = table_files;
        nlohmann::json feature_files = nlohmann::json::array();
        for (const auto& [name, _] : report.features) feature_files.push_back("features/" + name);
        doc["features"] = feature_files;
        write_text(report_path, doc.dump(2) + "\n");
        result.files.push_back(report_path);
    }

    if (formats.tsv) {
        for (const auto& t : report.tables) {
            std::ostringstream out;
            for (std::size_t i = 0; i < t.header.size(); ++i) out << (i ? "\t" : "") << clean_cell(t.header[i]);
            out << '\n';
            for (const auto& row : t.rows) {
                for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "\t" : "") << clean_cell(row[i]);
                out << '\n';
            }
            const auto path = out_dir / (t.name + ".tsv");
            write_text(path, out.str());
            result.files.push_back(path);
        }
    }

    for (const auto& [name, matrix] : report.features) {
        const auto path = out_dir / "features" / name;
        fs::create_directories(path.parent_path());
        write_feature_matrix(path, matrix);
        result.files.push_back(path);
    }
    return result;
}

ManifestCheck check_manifest(const nlohmann::json& report_json, const fs::path& base_dir) {
    const auto& manifest = report_json.at("manifest");
    ManifestCheck check;
    check.recorded = manifest.at("hash").get<std::string>();

    EvalReport probe;
    probe.kind = manifest.at("kind").get<std::string>();
    probe.seed = manifest.at("seed").get<std::uint64_t>();
    for (const auto& f : manifest.at("inputs")) {
        const auto role = f.at("role").get<std::string>();
        const auto configured = f.at("path").get<std::string>();
        fs::path resolved = configured;
        if (resolved.is_relative()) resolved = base_dir / resolved;
        InputFile now{role, configured, 0, "missing"};
        if (fs::exists(resolved)) now = describe_input(role, configured, resolved);
        if (now.sha256 != f.at("sha256").get<std::string>()) check.changed.push_back(role + ": " + configured);
        probe.inputs.push_back(now);
    }
    check.current = probe.manifest_hash();
    return check;
}

}  // namespace dualeval
