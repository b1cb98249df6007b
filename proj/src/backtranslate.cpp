#include "dualeval/backtranslate.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

#include "dualeval/errors.hpp"
#include "dualeval/hashing.hpp"
#include "dualeval/text_io.hpp"

namespace dualeval {

namespace {

std::string strip(std::string_view s) {
    std::string out;
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
    return out;
}

MutationSpec parse_single(std::string_view tok, std::string_view whole) {
    auto fail = [&](const std::string& why) { return DataError("bad mutant label '" + std::string(whole) + "': " + why); };
    if (tok.size() < 3) throw fail("too short");
    char wt = static_cast<char>(std::toupper(static_cast<unsigned char>(tok.front())));
    char mt = static_cast<char>(std::toupper(static_cast<unsigned char>(tok.back())));
    auto digits = tok.substr(1, tok.size() - 2);
    std::size_t pos = 0;
    for (char c : digits) {
        if (!std::isdigit(static_cast<unsigned char>(c))) throw fail("non-numeric position");
        pos = pos * 10 + static_cast<std::size_t>(c - '0');
    }
    if (pos == 0) throw fail("positions are 1-based");
    if (!is_canonical_residue(wt) || !(is_canonical_residue(mt) || mt == kStop)) throw fail("unknown residue");
    if (wt == mt) throw fail("synonymous substitution");
    return MutationSpec{pos, wt, mt};
}

}  // namespace

std::vector<MutationSpec> parse_mutant_label(std::string_view label) {
    const std::string compact = strip(label);
    if (compact.empty()) throw DataError("empty mutant label");
    std::vector<MutationSpec> out;
    std::size_t start = 0;
    while (start <= compact.size()) {
        auto end = compact.find(':', start);
        if (end == std::string::npos) end = compact.size();
        out.push_back(parse_single(std::string_view(compact).substr(start, end - start), label));
        start = end + 1;
    }
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i].position <= out[i - 1].position) {
            throw DataError("bad mutant label '" + std::string(label) + "': positions must be strictly increasing");
        }
    }
    return out;
}

std::vector<MutantEntry> read_dms_table(const std::filesystem::path& path, const std::string& dataset_id) {
    const auto table = read_delimited_file(path, delimiter_for(path));
    const auto label_col = table.column("mutant");
    const auto score_col = table.column("DMS_score");
    std::vector<MutantEntry> out;
    out.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string where = path.filename().string() + " row " + std::to_string(r + 2);
        if (label_col >= row.size() || score_col >= row.size()) throw DataError(where + ": short row");
        double score;
        try {
            std::size_t used = 0;
            score = std::stod(row[score_col], &used);
        } catch (const std::exception&) {
            throw DataError(where + ": DMS_score is not a number");
        }
        if (!std::isfinite(score)) throw DataError(where + ": DMS_score is not finite");
        out.push_back(MutantEntry{row[label_col], parse_mutant_label(row[label_col]), score, dataset_id});
    }
    return out;
}

std::map<std::string, ProteinSequence> read_protein_fasta(std::istream& in) {
    std::map<std::string, ProteinSequence> out;
    std::string line, id, residues;
    auto flush = [&]() {
        if (id.empty()) return;
        try {
            out.insert_or_assign(id, ProteinSequence(residues));
        } catch (const SequenceError& e) {
            throw DataError("protein " + id + ": " + e.what());
        }
    };
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line[0] == '>') {
            flush();
            std::istringstream header(line.substr(1));
            id.clear();
            header >> id;
            if (id.empty()) throw DataError("protein FASTA header without id");
            residues.clear();
        } else {
            residues += strip(line);
        }
    }
    flush();
    return out;
}

std::map<std::string, ProteinSequence> read_protein_fasta_file(const std::filesystem::path& path) {
    std::istringstream in(read_maybe_gzip(path));
    return read_protein_fasta(in);
}

ProteinSequence mutate_protein(const ProteinSequence& wt, std::span<const MutationSpec> muts) {
    std::string out = wt.str();
    for (const auto& m : muts) {
        if (m.position > wt.residues().size()) {
            throw DataError("mutation position " + std::to_string(m.position) + " beyond protein length " +
                            std::to_string(wt.residues().size()));
        }
        if (out[m.position - 1] != m.wt_aa) throw ConsistencyError(m.position, m.wt_aa, out[m.position - 1]);
        out[m.position - 1] = m.mt_aa;
    }
    return ProteinSequence(out);
}

const std::string& SeededPicker::pick(std::string_view sequence_id, std::size_t index, char residue,
                                      const CodonTable& table) const {
    const auto options = table.codons_for(residue);
    const std::uint64_t key = splitmix64(mix_key(seed_, sequence_id, index) ^ static_cast<unsigned char>(residue));
    return options[reduce_to(key, options.size())];
}

std::size_t WildTypeIndex::add_records(std::span<const SequenceRecord> records) {
    std::size_t skipped = 0;
    for (const auto& r : records) {
        try {
            auto protein = translate(r.seq);
            auto coding = NucleotideSequence(std::string_view(r.seq.str()).substr(0, 3 * protein.size()));
            entries_.try_emplace(protein.str(), std::move(coding));
        } catch (const DataError&) {
            ++skipped;
        }
    }
    return skipped;
}

WildTypeIndex WildTypeIndex::from_fasta(const std::filesystem::path& path) {
    auto parsed = read_fasta_file(path);
    WildTypeIndex index;
    index.add_records(parsed.records);
    return index;
}

const NucleotideSequence* WildTypeIndex::find(const ProteinSequence& protein) const {
    auto it = entries_.find(protein.residues());
    return it == entries_.end() ? nullptr : &it->second;
}

NucleotideSequence back_translate(const ProteinSequence& protein, const SeededPicker& picker,
                                  std::string_view sequence_id) {
    std::string nt;
    nt.reserve(3 * protein.size());
    for (std::size_t i = 0; i < protein.size(); ++i) nt += picker.pick(sequence_id, i, protein[i]);
    return NucleotideSequence(nt);
}

WildTypeLookup find_wildtype(const ProteinSequence& protein, const WildTypeIndex& index, const SeededPicker& picker,
                             std::string_view sequence_id) {
    if (const auto* hit = index.find(protein)) return {*hit, true};
    return {back_translate(protein, picker, sequence_id), false};
}

NucleotideSequence apply_mutations(const NucleotideSequence& wt_nt, std::span<const MutationSpec> muts,
                                   const SeededPicker& picker, std::string_view sequence_id) {
    if (muts.empty()) return wt_nt;
    const auto& table = CodonTable::standard();
    std::string nt = wt_nt.str();
    if (nt.size() % 3 != 0) throw FrameError("wild type length " + std::to_string(nt.size()) + " is not a multiple of 3");
    for (const auto& m : muts) {
        const std::size_t offset = 3 * (m.position - 1);
        if (m.position == 0 || offset + 3 > nt.size()) {
            throw DataError("mutation position " + std::to_string(m.position) + " beyond wild-type length");
        }
        const std::string_view codon(wt_nt.str().data() + offset, 3);
        if (codon.find('N') != std::string_view::npos) throw ConsistencyError(m.position, m.wt_aa, 'X');
        const char found = table.amino_acid(codon);
        if (found != m.wt_aa) throw ConsistencyError(m.position, m.wt_aa, found);
        nt.replace(offset, 3, picker.pick(sequence_id, m.position - 1, m.mt_aa, table));
    }
    return NucleotideSequence(nt);
}

}  // namespace dualeval
