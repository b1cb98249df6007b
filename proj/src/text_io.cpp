#include "dualeval/text_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "dualeval/errors.hpp"

namespace dualeval {

std::string read_maybe_gzip(const std::filesystem::path& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw DataError("cannot open " + path.string());
    std::array<unsigned char, 2> magic{};
    probe.read(reinterpret_cast<char*>(magic.data()), 2);
    const bool gz = probe.gcount() == 2 && magic[0] == 0x1f && magic[1] == 0x8b;
    probe.close();

    if (!gz) {
        std::ifstream in(path, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw DataError("cannot open gzip stream " + path.string());
    std::string out;
    std::array<char, 1 << 16> buf{};
    int n;
    while ((n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()))) > 0) out.append(buf.data(), static_cast<std::size_t>(n));
    int errnum = 0;
    const char* msg = gzerror(f, &errnum);
    std::string err = (n < 0 && msg) ? msg : "";
    gzclose(f);
    if (n < 0) throw DataError("gzip read failed for " + path.string() + ": " + err);
    return out;
}

bool DelimitedTable::has_column(std::string_view name) const {
    return std::find(header.begin(), header.end(), name) != header.end();
}

std::size_t DelimitedTable::column(std::string_view name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("missing column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - header.begin());
}

namespace {

std::vector<std::string> split_row(const std::string& line, char delim) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (delim == ',' && c == '"') {
            if (quoted && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else {
                quoted = !quoted;
            }
        } else if (c == delim && !quoted) {
            cells.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    cells.push_back(std::move(cur));
    return cells;
}

}  // namespace

DelimitedTable read_delimited(std::istream& in, char delimiter) {
    DelimitedTable t;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_row(line, delimiter);
        if (!have_header) {
            // Tolerate a UTF-8 BOM on the first header cell.
            if (!cells.empty() && cells[0].rfind("\xEF\xBB\xBF", 0) == 0) cells[0].erase(0, 3);
            t.header = std::move(cells);
            have_header = true;
        } else {
            t.rows.push_back(std::move(cells));
        }
    }
    if (!have_header) throw DataError("table has no header row");
    return t;
}

DelimitedTable read_delimited_file(const std::filesystem::path& path, char delimiter) {
    std::istringstream in(read_maybe_gzip(path));
    return read_delimited(in, delimiter);
}

char delimiter_for(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    if (ext == ".gz") ext = path.stem().extension().string();
    return (ext == ".tsv" || ext == ".tab") ? '\t' : ',';
}

std::string format_real(double value) {
    std::array<char, 64> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    return std::string(buf.data(), res.ptr);
}

}  // namespace dualeval
