#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dualeval/seqcore.hpp"

namespace dualeval {

/// One substitution, 1-based position.
struct MutationSpec {
    std::size_t position;
    char wt_aa;
    char mt_aa;

    friend bool operator==(const MutationSpec&, const MutationSpec&) = default;
};

/// Parses "A171C" or "A171C:D175E" (whitespace tolerated). Positions must be
/// strictly increasing and wt != mt. Throws DataError.
std::vector<MutationSpec> parse_mutant_label(std::string_view label);

struct MutantEntry {
    std::string raw_label;
    std::vector<MutationSpec> mutations;
    double dms_score;
    std::string dataset_id;
};

/// DMS table with columns `mutant` and `DMS_score`; other columns are ignored.
/// Rows with unparsable labels or non-finite scores are rejected with a DataError
/// naming the row.
std::vector<MutantEntry> read_dms_table(const std::filesystem::path& path, const std::string& dataset_id);

/// Protein FASTA (">id" then residue lines). Entries that fail validation throw
/// DataError naming the id.
std::map<std::string, ProteinSequence> read_protein_fasta(std::istream& in);
std::map<std::string, ProteinSequence> read_protein_fasta_file(const std::filesystem::path& path);

/// Applies the substitutions at the protein level, checking wild-type residues.
ProteinSequence mutate_protein(const ProteinSequence& wt, std::span<const MutationSpec> muts);

/// Seeded codon chooser. A pick depends only on (seed, sequence id, residue
/// index), never on how many picks came before it.
class SeededPicker {
public:
    explicit SeededPicker(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    /// Codon for `residue` at 0-based `index` of sequence `sequence_id`.
    const std::string& pick(std::string_view sequence_id, std::size_t index, char residue,
                            const CodonTable& table = CodonTable::standard()) const;

private:
    std::uint64_t seed_;
};

/// Protein -> nucleotide coding sequence, built from a local reference corpus.
class WildTypeIndex {
public:
    WildTypeIndex() = default;

    /// Indexes the coding prefix (up to the first stop) of every record that
    /// translates cleanly; returns how many records were skipped.
    std::size_t add_records(std::span<const SequenceRecord> records);
    static WildTypeIndex from_fasta(const std::filesystem::path& path);

    const NucleotideSequence* find(const ProteinSequence& protein) const;
    std::size_t size() const noexcept { return entries_.size(); }

private:
    std::map<std::string, NucleotideSequence, std::less<>> entries_;
};

/// Seeded codon fill for every residue. A terminal stop marker becomes a stop codon.
NucleotideSequence back_translate(const ProteinSequence& protein, const SeededPicker& picker,
                                  std::string_view sequence_id = "");

struct WildTypeLookup {
    NucleotideSequence nucleotides;
    bool exact_match;
};

/// Exact index hit returned verbatim, otherwise a full seeded fill.
WildTypeLookup find_wildtype(const ProteinSequence& protein, const WildTypeIndex& index, const SeededPicker& picker,
                             std::string_view sequence_id = "");

/// Swaps the codon at each mutated residue for a seeded codon of the target
/// residue; all other codons are left as they are. Throws ConsistencyError.
NucleotideSequence apply_mutations(const NucleotideSequence& wt_nt, std::span<const MutationSpec> muts,
                                   const SeededPicker& picker, std::string_view sequence_id = "");

}  // namespace dualeval
