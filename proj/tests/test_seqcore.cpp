#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <zlib.h>

#include "dualeval/errors.hpp"
#include "dualeval/hashing.hpp"
#include "dualeval/seqcore.hpp"
#include "synthetic.hpp"

using namespace dualeval;

namespace {

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("dualeval_seqcore_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST(NucleotideSequence, NormalizesCaseAndU) {
    EXPECT_EQ(NucleotideSequence("acgu").str(), "ACGT");
    EXPECT_EQ(NucleotideSequence("ACGTN").str(), "ACGTN");
    EXPECT_THROW(NucleotideSequence("ACXT"), SequenceError);
    EXPECT_THROW(NucleotideSequence(""), SequenceError);
}

TEST(ProteinSequence, StopOnlyTerminal) {
    EXPECT_TRUE(ProteinSequence("MW*").has_stop());
    EXPECT_EQ(ProteinSequence("MW*").residues(), "MW");
    EXPECT_THROW(ProteinSequence("M*W"), SequenceError);
    EXPECT_THROW(ProteinSequence("MB"), SequenceError);
}

TEST(ParseFasta, SingleEntry) {
    auto r = parse_fasta(">s1\nACGT\n");
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].id, "s1");
    EXPECT_EQ(r.records[0].seq.str(), "ACGT");
    EXPECT_TRUE(r.errors.empty());
}

TEST(ParseFasta, JoinsLinesAndUppercases) {
    auto r = parse_fasta(">s1\nac\ngt\n");
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].seq.str(), "ACGT");
}

TEST(ParseFasta, IllegalSymbolIsRecordLevel) {
    auto r = parse_fasta(">s1\nACXT\n>s2\nGG\n");
    ASSERT_EQ(r.errors.size(), 1u);
    EXPECT_EQ(r.errors[0].id, "s1");
    EXPECT_NE(r.errors[0].message.find("illegal symbol X"), std::string::npos);
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].id, "s2");
}

TEST(ParseFasta, MissingIdCarriesLine) {
    auto r = parse_fasta(">s1\nAC\n>\nGG\n>s3\nTT\n");
    ASSERT_EQ(r.errors.size(), 1u);
    EXPECT_EQ(r.errors[0].line, 3u);
    EXPECT_EQ(r.records.size(), 2u);
}

TEST(ParseFasta, HeaderMetadata) {
    auto r = parse_fasta(">x1 host=\"Homo sapiens\" family=Orthoherpesviridae genus=Simplexvirus some text\nACGT\n");
    ASSERT_EQ(r.records.size(), 1u);
    const auto& rec = r.records[0];
    EXPECT_EQ(rec.host, "Homo sapiens");
    EXPECT_EQ(rec.lineage.family, "Orthoherpesviridae");
    EXPECT_EQ(rec.lineage.genus, "Simplexvirus");
    EXPECT_FALSE(rec.lineage.species.has_value());
}

TEST(ParseFasta, WriteReadRoundTrip) {
    SplitMix rng(3);
    std::vector<SequenceRecord> recs;
    for (int i = 0; i < 20; ++i) {
        SequenceRecord r{"r" + std::to_string(i), NucleotideSequence(synth::random_dna(rng, 1 + rng.below(300))), "", {}};
        if (i % 2) r.lineage.genus = "G" + std::to_string(i % 4);
        recs.push_back(r);
    }
    std::ostringstream out;
    write_fasta(out, recs, 50);
    auto back = parse_fasta(out.str());
    EXPECT_TRUE(back.errors.empty());
    EXPECT_EQ(back.records, recs);
}

TEST(ParseFasta, GzipTransparent) {
    auto dir = scratch("gz");
    const std::string text = ">a\nACGT\n>b\nGGCC\n";
    gzFile gz = gzopen((dir / "x.fa.gz").c_str(), "wb");
    ASSERT_NE(gz, nullptr);
    gzwrite(gz, text.data(), static_cast<unsigned>(text.size()));
    gzclose(gz);
    std::ofstream(dir / "x.fa") << text;
    auto a = read_fasta_file(dir / "x.fa.gz");
    auto b = read_fasta_file(dir / "x.fa");
    EXPECT_EQ(a.records, b.records);
    EXPECT_EQ(a.records.size(), 2u);
}

TEST(Sidecar, OverridesHeader) {
    std::istringstream in("id\thost\tfamily\tgenus\tspecies\tstrain\n"
                          "a\thuman\tF1\tG1\tS1\t\n"
                          "zz\tbat\tF2\t\t\t\n");
    auto side = read_sidecar(in);
    auto recs = parse_fasta(">a genus=Other\nACGT\n>b\nAC\n").records;
    EXPECT_EQ(apply_sidecar(recs, side), 1u);
    EXPECT_EQ(recs[0].lineage.genus, "G1");
    EXPECT_EQ(recs[0].host, "human");
    EXPECT_FALSE(recs[0].lineage.strain.has_value());
    EXPECT_FALSE(recs[1].lineage.genus.has_value());
}

TEST(ReverseComplement, Examples) {
    EXPECT_EQ(reverse_complement(NucleotideSequence("AAC")).str(), "GTT");
    EXPECT_EQ(reverse_complement(NucleotideSequence("ATGC")).str(), "GCAT");
    EXPECT_EQ(reverse_complement(NucleotideSequence("ACGT")).str(), "ACGT");
    EXPECT_EQ(reverse_complement(NucleotideSequence("ANT")).str(), "ANT");
}

TEST(ReverseComplement, Involution) {
    SplitMix rng(11);
    for (int i = 0; i < 200; ++i) {
        NucleotideSequence s(synth::random_dna(rng, 1 + rng.below(500)));
        EXPECT_EQ(reverse_complement(reverse_complement(s)), s);
    }
}

TEST(Translate, Examples) {
    EXPECT_EQ(translate(NucleotideSequence("ATG")).str(), "M");
    EXPECT_EQ(translate(NucleotideSequence("ATGTGG")).str(), "MW");
    EXPECT_EQ(translate(NucleotideSequence("ATGTAA")).str(), "M");
    EXPECT_THROW(translate(NucleotideSequence("ATGT")), FrameError);
    EXPECT_THROW(translate(NucleotideSequence("ATGNGG")), AmbiguityError);
}

TEST(CodonTable, StandardCode) {
    const auto& t = CodonTable::standard();
    EXPECT_EQ(t.codons().size(), 64u);
    EXPECT_EQ(t.codons_for('L').size(), 6u);
    EXPECT_EQ(t.codons_for('M').size(), 1u);
    EXPECT_EQ(t.codons_for('*').size(), 3u);
    std::size_t total = 0;
    for (char aa : kCanonicalResidues) total += t.codons_for(aa).size();
    EXPECT_EQ(total + 3, 64u);
    for (const auto& c : t.codons()) {
        auto aa = t.amino_acid(c);
        auto list = t.codons_for(aa);
        EXPECT_NE(std::find(list.begin(), list.end(), c), list.end());
    }
}

TEST(Dedup, Examples) {
    auto rec = [](std::string id, std::string s) { return SequenceRecord{id, NucleotideSequence(s), "", {}}; };
    std::vector<SequenceRecord> a{rec("s1", "ACGT"), rec("s2", "ACGT")};
    auto out = dedup_exact(a);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].id, "s1");
    std::vector<SequenceRecord> b{rec("s1", "ACGT"), rec("s2", "ACGA")};
    EXPECT_EQ(dedup_exact(b).size(), 2u);
    std::vector<SequenceRecord> c;
    for (int i = 0; i < 10; ++i) c.push_back(rec("c" + std::to_string(i), "GGGG"));
    c.push_back(rec("u", "TTTT"));
    EXPECT_EQ(dedup_exact(c).size(), 2u);
}

TEST(TaxonRank, ParseAndName) {
    EXPECT_EQ(parse_taxon_rank("genus"), TaxonRank::genus);
    EXPECT_EQ(to_string(TaxonRank::species), "species");
    EXPECT_THROW(parse_taxon_rank("order"), ConfigError);
}
