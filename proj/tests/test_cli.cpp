#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "synthetic.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(DUALEVAL_CLI_EXE) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("dualeval_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string mock() { return std::string("exec:") + DUALEVAL_MOCK_EXE; }

}  // namespace

TEST(Cli, EvalSubcommandsWriteReports) {
    auto ws = synth::make_workspace(scratch("eval"), {{"step-0", mock()}});
    const auto cfg = (ws.dir / "config.json").string();
    for (std::string sub : {"eval-gen", "eval-mut", "eval-mut-probe", "eval-vir"}) {
        const auto out = ws.dir / ("out_" + sub);
        EXPECT_EQ(run("--config " + cfg + " --out " + out.string() + " " + sub), 0) << sub;
        EXPECT_TRUE(fs::exists(out / "metrics.json")) << sub;
        EXPECT_TRUE(fs::exists(out / "report.json")) << sub;
    }
    EXPECT_EQ(run("--out " + (ws.dir / "out_eval-gen").string() + " report"), 0);
}

TEST(Cli, SeedOverrideIsEchoed) {
    auto ws = synth::make_workspace(scratch("seed"), {{"step-0", mock()}});
    const auto out = ws.dir / "o";
    ASSERT_EQ(run("--config " + (ws.dir / "config.json").string() + " --seed 99 --out " + out.string() + " eval-vir"),
              0);
    auto m = nlohmann::json::parse(slurp(out / "metrics.json"));
    EXPECT_EQ(m.at("seed"), 99);
}

TEST(Cli, ExitCodes) {
    auto ws = synth::make_workspace(scratch("codes"), {{"step-0", mock()}});
    const auto cfg = (ws.dir / "config.json").string();
    const auto out = (ws.dir / "o").string();
    EXPECT_EQ(run("--config /nonexistent.json --out " + out + " eval-gen"), 2);
    EXPECT_EQ(run("--bogus-flag eval-gen"), 2);
    EXPECT_EQ(run("--config " + cfg + " --backend exec:/bin/false --out " + out + " eval-gen"), 3);
    EXPECT_EQ(run("--config " + cfg + " --backend 'mock:--disable hidden_states' --out " + out + " eval-vir"), 2);

    std::ofstream(ws.dir / "ld50.tsv", std::ios::app) << "st0\tnot-a-number\n";
    EXPECT_EQ(run("--config " + cfg + " --out " + out + " eval-vir"), 4);
}

TEST(Cli, ReportDetectsChangedInputs) {
    auto ws = synth::make_workspace(scratch("manifest"), {{"step-0", mock()}});
    const auto cfg = (ws.dir / "config.json").string();
    const auto out = (ws.dir / "o").string();
    ASSERT_EQ(run("--config " + cfg + " --out " + out + " eval-gen"), 0);
    EXPECT_EQ(run("--config " + cfg + " --out " + out + " report"), 0);
    std::ofstream(ws.dir / "corpus.fasta", std::ios::app) << ">extra\nACGT\n";
    EXPECT_EQ(run("--config " + cfg + " --out " + out + " report"), 4);
}

TEST(Cli, CurateWritesSplitsAndManifest) {
    auto dir = scratch("curate");
    {
        dualeval::SplitMix rng(1);
        std::ofstream f(dir / "c.fasta");
        for (int i = 0; i < 20; ++i)
            f << ">r" << i << " genus=G" << i % 3 << "\n" << synth::random_dna(rng, 500 + rng.below(500)) << "\n";
    }
    const auto out = dir / "o";
    ASSERT_EQ(run("--out " + out.string() + " --seed 3 curate --corpus " + (dir / "c.fasta").string() +
                  " --segment_length 1000"),
              0);
    auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
    EXPECT_EQ(manifest.at("seed"), 3);
    std::size_t records = 0;
    std::istringstream train(slurp(out / "train.fasta") + slurp(out / "val.fasta"));
    for (std::string line; std::getline(train, line);) records += !line.empty() && line[0] == '>';
    EXPECT_EQ(records, 40u);
}

TEST(Cli, BacktranslateWritesMutants) {
    auto dir = scratch("bt");
    std::ofstream(dir / "p.faa") << ">w\nMWK\n";
    std::ofstream(dir / "d.csv") << "mutant,DMS_score\nW2M,0.1\nK3R,-0.2\n";
    const auto out = dir / "o";
    ASSERT_EQ(run("--out " + out.string() + " backtranslate --protein " + (dir / "p.faa").string() + " --dms " +
                  (dir / "d.csv").string() + " --wildtype-id w"),
              0);
    const auto fasta = slurp(out / "backtranslated.fasta");
    EXPECT_NE(fasta.find(">w"), std::string::npos);
    EXPECT_NE(slurp(out / "mutants.tsv").find("W2M"), std::string::npos);
    EXPECT_EQ(run("--out " + out.string() + " backtranslate --protein " + (dir / "missing.faa").string()), 2);
}
