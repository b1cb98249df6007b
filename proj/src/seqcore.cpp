#include "dualeval/seqcore.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <zlib.h>

#include "dualeval/errors.hpp"
#include "dualeval/text_io.hpp"

namespace dualeval {

namespace {

char normalize_base(char c) noexcept {
    char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return u == 'U' ? 'T' : u;
}

bool is_base(char c) noexcept { return c == 'A' || c == 'C' || c == 'G' || c == 'T' || c == 'N'; }

// Table 1 in TCAG order, the usual way it is printed.
constexpr std::string_view kStandardCodeTCAG =
    "FFLLSSSSYY**CC*WLLLLPPPPHHQQRRRRIIIMTTTTNNKKSSRRVVVVAAAADDEEGGGG";
constexpr std::string_view kTCAG = "TCAG";

}  // namespace

NucleotideSequence::NucleotideSequence(std::string_view raw) {
    bases_.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        char c = normalize_base(raw[i]);
        if (!is_base(c)) {
            throw SequenceError("illegal symbol " + std::string(1, raw[i]) + " at offset " + std::to_string(i));
        }
        bases_.push_back(c);
    }
    if (bases_.empty()) throw SequenceError("empty nucleotide sequence");
}

bool is_canonical_residue(char c) noexcept { return kCanonicalResidues.find(c) != std::string_view::npos; }

ProteinSequence::ProteinSequence(std::string_view raw) {
    residues_.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        char c = static_cast<char>(std::toupper(static_cast<unsigned char>(raw[i])));
        if (c == kStop && i + 1 == raw.size() && i > 0) {
            residues_.push_back(c);
            continue;
        }
        if (!is_canonical_residue(c)) {
            throw SequenceError("illegal residue " + std::string(1, raw[i]) + " at offset " + std::to_string(i));
        }
        residues_.push_back(c);
    }
    if (residues_.empty()) throw SequenceError("empty protein sequence");
}

char complement(char base) noexcept {
    switch (base) {
        case 'A': return 'T';
        case 'T': return 'A';
        case 'C': return 'G';
        case 'G': return 'C';
        default: return 'N';
    }
}

CodonTable::CodonTable() {
    for (char a : std::string_view("ACGT"))
        for (char b : std::string_view("ACGT"))
            for (char c : std::string_view("ACGT")) all_codons_.push_back(std::string{a, b, c});

    for (std::size_t i = 0; i < 64; ++i) {
        const std::string codon{kTCAG[i / 16], kTCAG[(i / 4) % 4], kTCAG[i % 4]};
        char aa = kStandardCodeTCAG[i];
        aa_by_index_[static_cast<std::size_t>(index_of(codon))] = aa;
    }
    for (const auto& codon : all_codons_) by_residue_[amino_acid(codon)].push_back(codon);
}

int CodonTable::index_of(std::string_view codon) {
    if (codon.size() != 3) return -1;
    int idx = 0;
    for (char c : codon) {
        int v;
        switch (c) {
            case 'A': v = 0; break;
            case 'C': v = 1; break;
            case 'G': v = 2; break;
            case 'T': v = 3; break;
            default: return -1;
        }
        idx = idx * 4 + v;
    }
    return idx;
}

const CodonTable& CodonTable::standard() {
    static const CodonTable table;
    return table;
}

char CodonTable::amino_acid(std::string_view codon) const {
    int idx = index_of(codon);
    if (idx < 0) throw AmbiguityError("not an unambiguous codon: " + std::string(codon));
    return aa_by_index_[static_cast<std::size_t>(idx)];
}

std::span<const std::string> CodonTable::codons_for(char residue) const {
    auto it = by_residue_.find(residue);
    if (it == by_residue_.end()) throw SequenceError("no codons for residue " + std::string(1, residue));
    return it->second;
}

TaxonRank parse_taxon_rank(std::string_view name) {
    if (name == "family") return TaxonRank::family;
    if (name == "genus") return TaxonRank::genus;
    if (name == "species") return TaxonRank::species;
    if (name == "strain") return TaxonRank::strain;
    throw ConfigError("unknown taxon rank: " + std::string(name));
}

std::string_view to_string(TaxonRank rank) {
    switch (rank) {
        case TaxonRank::family: return "family";
        case TaxonRank::genus: return "genus";
        case TaxonRank::species: return "species";
        case TaxonRank::strain: return "strain";
    }
    return "?";
}

const std::optional<std::string>& lineage_at(const TaxonLineage& lineage, TaxonRank rank) {
    switch (rank) {
        case TaxonRank::family: return lineage.family;
        case TaxonRank::genus: return lineage.genus;
        case TaxonRank::species: return lineage.species;
        case TaxonRank::strain: break;
    }
    return lineage.strain;
}

namespace {

struct ParsedHeader {
    std::string id;
    std::string host;
    TaxonLineage lineage;
};

// Splits on whitespace, keeping "double quoted" runs together (quotes removed).
std::vector<std::string> header_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    bool in_quotes = false;
    bool have = false;
    for (char c : text) {
        if (c == '"') {
            in_quotes = !in_quotes;
            have = true;
        } else if (!in_quotes && std::isspace(static_cast<unsigned char>(c))) {
            if (have) out.push_back(std::move(cur));
            cur.clear();
            have = false;
        } else {
            cur.push_back(c);
            have = true;
        }
    }
    if (have) out.push_back(std::move(cur));
    return out;
}

ParsedHeader parse_header(std::string_view body) {
    ParsedHeader h;
    auto first_non_space = body.find_first_not_of(" \t");
    if (first_non_space != 0) return h;  // ">" followed by whitespace has no id
    auto tokens = header_tokens(body);
    if (tokens.empty()) return h;
    h.id = tokens.front();
    for (std::size_t i = 1; i < tokens.size(); ++i) {
        const auto& tok = tokens[i];
        auto eq = tok.find('=');
        if (eq == std::string::npos || eq == 0) continue;
        std::string key = tok.substr(0, eq);
        std::string value = tok.substr(eq + 1);
        if (value.empty()) continue;
        if (key == "host") h.host = value;
        else if (key == "family") h.lineage.family = value;
        else if (key == "genus") h.lineage.genus = value;
        else if (key == "species") h.lineage.species = value;
        else if (key == "strain") h.lineage.strain = value;
    }
    return h;
}

}  // namespace

std::optional<FastaItem> FastaReader::next() {
    std::string line;
    if (!pending_header_) {
        // Skip to the first header; stray sequence lines before it are an error.
        while (std::getline(in_, line)) {
            ++line_no_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line.find_first_not_of(" \t") == std::string::npos) continue;
            if (line[0] == '>') {
                pending_header_ = line.substr(1);
                pending_header_line_ = line_no_;
                break;
            }
            return FastaItem{FastaError{line_no_, "", "sequence data before first header"}};
        }
        if (!pending_header_) return std::nullopt;
    }

    const std::string header = std::move(*pending_header_);
    const std::size_t header_line = pending_header_line_;
    pending_header_.reset();

    std::string raw;
    std::optional<FastaError> error;
    while (std::getline(in_, line)) {
        ++line_no_;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line[0] == '>') {
            pending_header_ = line.substr(1);
            pending_header_line_ = line_no_;
            break;
        }
        for (char c : line) {
            if (std::isspace(static_cast<unsigned char>(c))) continue;
            char n = normalize_base(c);
            if (!is_base(n) && !error) {
                error = FastaError{line_no_, "", std::string("illegal symbol ") + c};
            }
            raw.push_back(n);
        }
    }

    ParsedHeader parsed = parse_header(header);
    if (parsed.id.empty()) return FastaItem{FastaError{header_line, "", "malformed header: missing id"}};
    if (error) {
        error->id = parsed.id;
        return FastaItem{std::move(*error)};
    }
    if (raw.empty()) return FastaItem{FastaError{header_line, parsed.id, "empty sequence"}};
    return FastaItem{SequenceRecord{std::move(parsed.id), NucleotideSequence(raw), std::move(parsed.host),
                                    std::move(parsed.lineage)}};
}

FastaParseResult parse_fasta(std::istream& in) {
    FastaParseResult result;
    FastaReader reader(in);
    while (auto item = reader.next()) {
        if (auto* rec = std::get_if<SequenceRecord>(&*item)) result.records.push_back(std::move(*rec));
        else result.errors.push_back(std::get<FastaError>(std::move(*item)));
    }
    return result;
}

FastaParseResult parse_fasta(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse_fasta(in);
}

std::unique_ptr<std::istream> open_sequence_file(const std::filesystem::path& path) {
    return std::make_unique<std::istringstream>(read_maybe_gzip(path));
}

FastaParseResult read_fasta_file(const std::filesystem::path& path) {
    auto in = open_sequence_file(path);
    return parse_fasta(*in);
}

namespace {

void write_meta(std::ostream& out, std::string_view key, const std::string& value) {
    out << ' ' << key << '=';
    if (value.find_first_of(" \t") != std::string::npos) out << '"' << value << '"';
    else out << value;
}

}  // namespace

void write_fasta(std::ostream& out, std::span<const SequenceRecord> records, std::size_t line_width) {
    if (line_width == 0) line_width = 60;
    for (const auto& r : records) {
        out << '>' << r.id;
        if (!r.host.empty()) write_meta(out, "host", r.host);
        if (r.lineage.family) write_meta(out, "family", *r.lineage.family);
        if (r.lineage.genus) write_meta(out, "genus", *r.lineage.genus);
        if (r.lineage.species) write_meta(out, "species", *r.lineage.species);
        if (r.lineage.strain) write_meta(out, "strain", *r.lineage.strain);
        out << '\n';
        const auto& s = r.seq.str();
        for (std::size_t i = 0; i < s.size(); i += line_width) out << s.substr(i, line_width) << '\n';
    }
}

std::map<std::string, SidecarRow> read_sidecar(std::istream& in) {
    const auto table = read_delimited(in, '\t');
    const std::size_t id_col = table.column("id");
    auto optional_col = [&](std::string_view name) -> std::optional<std::size_t> {
        if (table.has_column(name)) return table.column(name);
        return std::nullopt;
    };
    const auto host = optional_col("host");
    const auto family = optional_col("family");
    const auto genus = optional_col("genus");
    const auto species = optional_col("species");
    const auto strain = optional_col("strain");

    auto cell = [](const std::vector<std::string>& row, std::optional<std::size_t> col) -> std::optional<std::string> {
        if (!col || *col >= row.size() || row[*col].empty()) return std::nullopt;
        return row[*col];
    };

    std::map<std::string, SidecarRow> out;
    for (const auto& row : table.rows) {
        if (id_col >= row.size() || row[id_col].empty()) continue;
        SidecarRow r;
        r.host = cell(row, host).value_or("");
        r.lineage = TaxonLineage{cell(row, family), cell(row, genus), cell(row, species), cell(row, strain)};
        out.insert_or_assign(row[id_col], std::move(r));
    }
    return out;
}

std::map<std::string, SidecarRow> read_sidecar_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open sidecar " + path.string());
    return read_sidecar(in);
}

std::size_t apply_sidecar(std::vector<SequenceRecord>& records, const std::map<std::string, SidecarRow>& sidecar) {
    std::size_t matched = 0;
    for (auto& r : records) {
        auto it = sidecar.find(r.id);
        if (it == sidecar.end()) continue;
        r.host = it->second.host;
        r.lineage = it->second.lineage;
        ++matched;
    }
    return matched;
}

NucleotideSequence reverse_complement(const NucleotideSequence& seq) {
    std::string out(seq.str().rbegin(), seq.str().rend());
    for (auto& c : out) c = complement(c);
    return NucleotideSequence(std::move(out), NucleotideSequence::Trusted{});
}

ProteinSequence translate(const NucleotideSequence& seq, const CodonTable& table) {
    const auto& s = seq.str();
    if (s.size() % 3 != 0) {
        throw FrameError("length " + std::to_string(s.size()) + " is not a multiple of 3");
    }
    std::string protein;
    protein.reserve(s.size() / 3);
    for (std::size_t i = 0; i < s.size(); i += 3) {
        std::string_view codon(s.data() + i, 3);
        if (codon.find('N') != std::string_view::npos) {
            throw AmbiguityError("ambiguous codon " + std::string(codon) + " at nucleotide " + std::to_string(i + 1));
        }
        char aa = table.amino_acid(codon);
        if (aa == kStop) break;
        protein.push_back(aa);
    }
    if (protein.empty()) throw SequenceError("translation is empty (leading stop codon)");
    return ProteinSequence(protein);
}

std::vector<SequenceRecord> dedup_exact(std::span<const SequenceRecord> records) {
    std::unordered_set<std::string_view> seen;
    std::vector<SequenceRecord> out;
    for (const auto& r : records) {
        if (seen.insert(r.seq.str()).second) out.push_back(r);
    }
    return out;
}

}  // namespace dualeval
