#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "dualeval/errors.hpp"
#include "dualeval/harness.hpp"
#include "dualeval/report.hpp"
#include "synthetic.hpp"

using namespace dualeval;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("dualeval_harness_" + name);
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

EvalConfig workspace_config(const std::string& name,
                            std::vector<std::pair<std::string, std::string>> endpoints = {
                                {"step-0", "mock:"}, {"step-50", "mock:--growth 1.2"}}) {
    auto ws = synth::make_workspace(scratch(name), endpoints);
    return EvalConfig::load(ws.dir / "config.json");
}

}  // namespace

TEST(Config, StrictKeys) {
    EXPECT_THROW(EvalConfig::from_json({{"seeed", 1}}), ConfigError);
    EXPECT_THROW(EvalConfig::from_json({{"gen", {{"corpus", "x"}, {"holdot", ""}}}}), ConfigError);
    EXPECT_THROW(EvalConfig::from_json({{"backends", {{{"label", "a"}, {"endpoint", "mock:"}, {"x", 1}}}}}),
                 ConfigError);
}

TEST(Config, BackendForms) {
    auto a = EvalConfig::from_json({{"backend", "mock:"}});
    ASSERT_EQ(a.backends.size(), 1u);
    EXPECT_EQ(a.backends[0].label, "default");
    auto b = EvalConfig::from_json({{"backends", {"mock:", {{"label", "ft"}, {"endpoint", "mock:--growth 2"}}}}});
    ASSERT_EQ(b.backends.size(), 2u);
    EXPECT_EQ(b.backends[1].label, "ft");
    EXPECT_THROW(EvalConfig::from_json({{"backends", {{{"label", "x"}, {"endpoint", "mock:"}},
                                                      {{"label", "x"}, {"endpoint", "mock:"}}}}}),
                 ConfigError);
}

TEST(Config, RidgeAndSampling) {
    EXPECT_FALSE(EvalConfig::from_json({{"ridge_lambda", "default"}}).ridge_lambda.has_value());
    EXPECT_FALSE(EvalConfig::from_json({{"ridge_lambda", nullptr}}).ridge_lambda.has_value());
    EXPECT_EQ(EvalConfig::from_json({{"ridge_lambda", 0.0}}).ridge_lambda, 0.0);
    EXPECT_THROW(EvalConfig::from_json({{"ridge_lambda", -1.0}}), ConfigError);
    auto p = EvalConfig::from_json({{"mut", {{"sampling", "probe_624_80_20"}}}});
    EXPECT_EQ(p.mut.sampling.per_dataset_total, 624u);
    EXPECT_TRUE(p.mut.sampling.allow_smaller);
    EXPECT_THROW(EvalConfig::from_json({{"mut", {{"sampling", "nope"}}}}), ConfigError);
    EXPECT_THROW(EvalConfig::from_json({{"pooling", "median"}}), ConfigError);
}

TEST(Config, ValidateNeedsInputsAndBackends) {
    auto dir = scratch("validate");
    auto c = EvalConfig::from_json({{"gen", {{"corpus", "missing.fa"}}}}, dir);
    EXPECT_THROW(c.validate(EvalKind::gen), ConfigError);
    std::ofstream(dir / "missing.fa") << ">a\nACGT\n";
    EXPECT_THROW(c.validate(EvalKind::gen), ConfigError);
    c.backends.push_back({"x", "mock:"});
    EXPECT_NO_THROW(c.validate(EvalKind::gen));
}

TEST(Config, EchoOmitsOut) {
    auto c = EvalConfig::from_json({{"out", "somewhere"}, {"seed", 3}, {"backend", "mock:"}});
    auto e = c.echo();
    EXPECT_FALSE(e.contains("out"));
    EXPECT_EQ(e.at("seed"), 3);
}

TEST(Runners, UniformGenIsFour) {
    auto c = workspace_config("gen_uniform", {{"u", "mock:--mode uniform"}});
    auto r = run_eval_gen(c);
    const auto& t = *std::find_if(r.tables.begin(), r.tables.end(), [](const Table& t) { return t.name == "gen_sequences"; });
    ASSERT_FALSE(t.rows.empty());
    auto col = std::find(t.header.begin(), t.header.end(), "perplexity") - t.header.begin();
    for (const auto& row : t.rows) EXPECT_EQ(row[col], "4");
}

TEST(Runners, AllFourProduceCheckpoints) {
    auto c = workspace_config("all");
    for (auto kind : {EvalKind::gen, EvalKind::mut_ll, EvalKind::mut_probe, EvalKind::vir}) {
        auto r = run_eval(kind, c);
        EXPECT_EQ(r.kind, std::string(to_string(kind)));
        ASSERT_TRUE(r.metrics.contains("checkpoints")) << to_string(kind);
        EXPECT_TRUE(r.metrics["checkpoints"].contains("step-0"));
        EXPECT_TRUE(r.metrics["checkpoints"].contains("step-50"));
        EXPECT_GT(r.requests, 0u);
    }
}

TEST(Runners, ProteinBackendUsesMaskedMarginals) {
    auto c = workspace_config("mm", {{"esm", "mock:--alphabet protein"}});
    auto r = run_eval_mut_ll(c);
    auto dump = r.metrics.dump();
    EXPECT_NE(dump.find("masked_marginal"), std::string::npos);
}

TEST(Runners, MissingCapabilityIsFatal) {
    auto c = workspace_config("cap", {{"x", "mock:--disable hidden_states"}});
    EXPECT_THROW(run_eval_mut_probe(c), ConfigError);
}

TEST(Report, MetricsByteStableAndManifest) {
    auto c = workspace_config("stable");
    auto out = scratch("stable_out");
    auto r1 = run_eval_mut_probe(c);
    emit_report(r1, out / "a");
    auto r2 = run_eval_mut_probe(c);
    emit_report(r2, out / "b");
    EXPECT_EQ(slurp(out / "a" / "metrics.json"), slurp(out / "b" / "metrics.json"));
    EXPECT_TRUE(fs::exists(out / "a" / "probe_layers.tsv"));
    EXPECT_FALSE(nlohmann::json::parse(slurp(out / "a" / "metrics.json")).contains("run"));

    auto report = nlohmann::json::parse(slurp(out / "a" / "report.json"));
    EXPECT_TRUE(report.contains("run"));
    EXPECT_TRUE(check_manifest(report, c.base_dir).matches());

    std::ofstream(c.base_dir / "D1.csv", std::ios::app) << "A1C,0.5\n";
    auto changed = check_manifest(report, c.base_dir);
    EXPECT_FALSE(changed.matches());
    ASSERT_EQ(changed.changed.size(), 1u);
    EXPECT_NE(changed.changed[0].find("D1.csv"), std::string::npos);

    auto r3 = run_eval_mut_probe(c);
    auto res = emit_report(r3, out / "a");
    EXPECT_TRUE(res.manifest_changed);
}

TEST(Report, TsvEscapesCells) {
    EvalReport r;
    r.kind = "x";
    r.table("t", {"a", "b"}).add({"x\ty", "z\nw"});
    auto out = scratch("tsv");
    emit_report(r, out);
    EXPECT_EQ(slurp(out / "t.tsv"), "a\tb\nx y\tz w\n");
}

TEST(Report, Sha256) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
