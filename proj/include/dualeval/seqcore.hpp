#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dualeval {

/// DNA over {A,C,G,T,N}, uppercase. U is folded to T on construction.
class NucleotideSequence {
public:
    /// Normalizes case and U->T, then validates. Throws SequenceError.
    explicit NucleotideSequence(std::string_view raw);

    const std::string& str() const noexcept { return bases_; }
    std::size_t size() const noexcept { return bases_.size(); }
    char operator[](std::size_t i) const { return bases_[i]; }

    friend bool operator==(const NucleotideSequence&, const NucleotideSequence&) = default;

private:
    struct Trusted {};
    NucleotideSequence(std::string bases, Trusted) : bases_(std::move(bases)) {}
    friend NucleotideSequence reverse_complement(const NucleotideSequence&);

    std::string bases_;
};

/// The 20 canonical residues, optionally followed by a single terminal '*'.
class ProteinSequence {
public:
    explicit ProteinSequence(std::string_view raw);

    const std::string& str() const noexcept { return residues_; }
    std::size_t size() const noexcept { return residues_.size(); }
    char operator[](std::size_t i) const { return residues_[i]; }
    bool has_stop() const noexcept { return !residues_.empty() && residues_.back() == '*'; }
    /// Residues without the stop marker.
    std::string_view residues() const noexcept {
        return has_stop() ? std::string_view(residues_).substr(0, residues_.size() - 1)
                          : std::string_view(residues_);
    }

    friend bool operator==(const ProteinSequence&, const ProteinSequence&) = default;
    friend auto operator<=>(const ProteinSequence& a, const ProteinSequence& b) {
        return a.residues_ <=> b.residues_;
    }

private:
    std::string residues_;
};

inline constexpr std::string_view kCanonicalResidues = "ACDEFGHIKLMNPQRSTVWY";
inline constexpr char kStop = '*';

bool is_canonical_residue(char c) noexcept;
char complement(char base) noexcept;

/// 64-codon genetic code with its inverse.
class CodonTable {
public:
    /// NCBI translation table 1.
    static const CodonTable& standard();

    /// Amino-acid letter or '*' for a stop. Codon must be three of ACGT.
    char amino_acid(std::string_view codon) const;
    /// Codons for a residue (or '*'), lexicographically sorted.
    std::span<const std::string> codons_for(char residue) const;
    /// All 64 codons in lexicographic order.
    std::span<const std::string> codons() const { return all_codons_; }

private:
    CodonTable();
    static int index_of(std::string_view codon);

    std::array<char, 64> aa_by_index_{};
    std::vector<std::string> all_codons_;
    std::map<char, std::vector<std::string>> by_residue_;
};

struct TaxonLineage {
    std::optional<std::string> family;
    std::optional<std::string> genus;
    std::optional<std::string> species;
    std::optional<std::string> strain;

    friend bool operator==(const TaxonLineage&, const TaxonLineage&) = default;
};

enum class TaxonRank { family, genus, species, strain };

TaxonRank parse_taxon_rank(std::string_view name);
std::string_view to_string(TaxonRank rank);
const std::optional<std::string>& lineage_at(const TaxonLineage& lineage, TaxonRank rank);

struct SequenceRecord {
    std::string id;
    NucleotideSequence seq;
    std::string host;
    TaxonLineage lineage;

    friend bool operator==(const SequenceRecord&, const SequenceRecord&) = default;
};

/// A record-level parse failure. The reader keeps going after one.
struct FastaError {
    std::size_t line;  // 1-based line of the offending header or sequence line
    std::string id;    // empty when the header itself had no id
    std::string message;
};

using FastaItem = std::variant<SequenceRecord, FastaError>;

/// Streaming FASTA reader. Headers look like
///   >ID key=value key="value with spaces" free text
/// where host/family/genus/species/strain keys populate the record.
class FastaReader {
public:
    explicit FastaReader(std::istream& in) : in_(in) {}

    /// Next record or record-level error; nullopt at end of stream.
    std::optional<FastaItem> next();

private:
    std::istream& in_;
    std::size_t line_no_ = 0;
    std::optional<std::string> pending_header_;
    std::size_t pending_header_line_ = 0;
};

struct FastaParseResult {
    std::vector<SequenceRecord> records;
    std::vector<FastaError> errors;
};

FastaParseResult parse_fasta(std::istream& in);
FastaParseResult parse_fasta(std::string_view text);

/// Opens a FASTA file, transparently inflating gzip (detected by magic bytes).
std::unique_ptr<std::istream> open_sequence_file(const std::filesystem::path& path);
FastaParseResult read_fasta_file(const std::filesystem::path& path);

void write_fasta(std::ostream& out, std::span<const SequenceRecord> records, std::size_t line_width = 60);

/// Metadata sidecar: TSV with header row id, host, family, genus, species, strain.
struct SidecarRow {
    std::string host;
    TaxonLineage lineage;
};
std::map<std::string, SidecarRow> read_sidecar(std::istream& in);
std::map<std::string, SidecarRow> read_sidecar_file(const std::filesystem::path& path);
/// Sidecar values take precedence over header metadata; returns matched count.
std::size_t apply_sidecar(std::vector<SequenceRecord>& records, const std::map<std::string, SidecarRow>& sidecar);

NucleotideSequence reverse_complement(const NucleotideSequence& seq);

/// Codon-wise translation up to (excluding) the first in-frame stop.
/// Throws FrameError / AmbiguityError.
ProteinSequence translate(const NucleotideSequence& seq, const CodonTable& table = CodonTable::standard());

/// First occurrence of each distinct base string, order preserved.
std::vector<SequenceRecord> dedup_exact(std::span<const SequenceRecord> records);

}  // namespace dualeval
