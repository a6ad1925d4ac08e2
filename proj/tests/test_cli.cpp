#include "dpborrow/cli.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

using namespace dpborrow;

namespace {

const std::string kCase1 = std::string(DPBORROW_DATA_DIR) + "/as_case1.json";

class TempDir : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir = fs::temp_directory_path() / ("dpborrow_" + std::string(info->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    fs::path write(const std::string& name, const std::string& text) {
        write_file(dir / name, text);
        return dir / name;
    }

    fs::path dir;
};

AnalyzeArgs quick_analyze(const fs::path& data, const fs::path& out) {
    AnalyzeArgs a;
    a.data = data;
    a.out = out;
    a.seed = 11;
    a.overrides = {{"iters", 1500}, {"burn_in", 300}, {"comparator_draws", 5000}};
    return a;
}

} // namespace

using Cli = TempDir;

TEST_F(Cli, ValidateSummary) {
    std::ostringstream out, err;
    EXPECT_EQ(cmd_validate(kCase1, std::nullopt, out, err), exit_ok);
    EXPECT_NE(out.str().find("8 historical, 1 current control, 1 current treatment"), std::string::npos);
    EXPECT_NE(out.str().find("H7 historical n=78 responses=9"), std::string::npos);
}

TEST_F(Cli, ValidateRejectsBadInput) {
    const auto bad = write("bad.json", R"({"outcome": "binomial", "studies": [{"id": "H1", "role": "historical", "n": 5, "responses": 9}]})");
    std::ostringstream out, err;
    EXPECT_EQ(cmd_validate(bad, std::nullopt, out, err), exit_input);
    EXPECT_NE(err.str().find("invalid"), std::string::npos);
    EXPECT_EQ(cmd_validate(dir / "missing.json", std::nullopt, out, err), exit_input);
}

TEST_F(Cli, ValidateIpdWarnsOnConstantCovariate) {
    const auto csv = write("ipd.csv",
                           "study,arm,y,age,site\n"
                           "A,control,1,70,1\n"
                           "B,control,2,71,1\n"
                           "B,treatment,3,72,1\n");
    std::ostringstream out, err;
    EXPECT_EQ(cmd_validate(csv, std::nullopt, out, err), exit_ok);
    EXPECT_NE(out.str().find("1 historical"), std::string::npos);
    EXPECT_NE(err.str().find("'site' is constant"), std::string::npos);
}

TEST_F(Cli, ColumnMapSelectsCovariates) {
    const auto csv = write("ipd.csv",
                           "study,arm,y,age,site\n"
                           "A,control,1,70,1\n"
                           "B,control,2,71,1\n"
                           "B,treatment,3,72,1\n");
    const auto map = write("cols.json", R"({"covariates": ["age"]})");
    const Dataset ds = load_dataset(csv, map);
    EXPECT_EQ(ds.covariate_names, (std::vector<std::string>{"age"}));
    EXPECT_EQ(load_dataset(csv).covariate_names, (std::vector<std::string>{"age", "site"}));
}

TEST_F(Cli, AnalyzeWritesOutputs) {
    std::ostringstream out, err;
    ASSERT_EQ(cmd_analyze(quick_analyze(kCase1, dir / "a"), out, err), exit_ok) << err.str();
    const auto rows = parse_summary_csv(read_file(dir / "a" / "summary.csv"));
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0].method, "cd");
    EXPECT_EQ(rows[3].method, "ddpm");
    for (const auto& r : rows) {
        EXPECT_GT(r.summary.mean, 0.2);
        EXPECT_LT(r.summary.mean, 0.5);
        EXPECT_TRUE(r.ehss.has_value());
    }
    const std::string sbi = read_file(dir / "a" / "sbi.csv");
    EXPECT_EQ(sbi.rfind("method,study,sbi\n", 0), 0u);
    EXPECT_NE(sbi.find("dpm,H8,"), std::string::npos);
    EXPECT_EQ(sbi.find("cd,"), std::string::npos);
    const auto manifest = nlohmann::json::parse(read_file(dir / "a" / "manifest.json"));
    EXPECT_EQ(manifest["seed"], 11);
    EXPECT_EQ(manifest["config"]["iters"], 1500);
    EXPECT_EQ(manifest["methods"].size(), 4u);
    EXPECT_EQ(manifest["config_digest"].get<std::string>().size(), 16u);
    EXPECT_NE(out.str().find("ddpm"), std::string::npos);
}

TEST_F(Cli, AnalyzeIsReproducible) {
    std::ostringstream out, err;
    ASSERT_EQ(cmd_analyze(quick_analyze(kCase1, dir / "a"), out, err), exit_ok);
    ASSERT_EQ(cmd_analyze(quick_analyze(kCase1, dir / "b"), out, err), exit_ok);
    EXPECT_EQ(read_file(dir / "a" / "summary.csv"), read_file(dir / "b" / "summary.csv"));
    EXPECT_EQ(read_file(dir / "a" / "sbi.csv"), read_file(dir / "b" / "sbi.csv"));
}

TEST_F(Cli, MethodSubsetLeavesOtherStreamsAlone) {
    std::ostringstream out, err;
    AnalyzeArgs all = quick_analyze(kCase1, dir / "all");
    AnalyzeArgs one = quick_analyze(kCase1, dir / "one");
    one.methods = "ddpm";
    ASSERT_EQ(cmd_analyze(all, out, err), exit_ok);
    ASSERT_EQ(cmd_analyze(one, out, err), exit_ok);
    const auto a = parse_summary_csv(read_file(dir / "all" / "summary.csv"));
    const auto b = parse_summary_csv(read_file(dir / "one" / "summary.csv"));
    ASSERT_EQ(b.size(), 1u);
    EXPECT_EQ(a[3], b[0]);
}

TEST_F(Cli, AnalyzeInputErrors) {
    std::ostringstream out, err;
    AnalyzeArgs a = quick_analyze(kCase1, dir / "x");
    a.methods = "cd,bayes";
    EXPECT_EQ(cmd_analyze(a, out, err), exit_input);
    a = quick_analyze(kCase1, dir / "x");
    a.config = write("cfg.json", R"({"iters": 100, "colour": "red"})");
    EXPECT_EQ(cmd_analyze(a, out, err), exit_input);
    EXPECT_NE(err.str().find("colour"), std::string::npos);
    a = quick_analyze(kCase1, dir / "x");
    a.overrides["burn_in"] = 5000;
    EXPECT_EQ(cmd_analyze(a, out, err), exit_input);
}

TEST_F(Cli, AnalyzeNeedsTreatmentArm) {
    const auto ds = write("nt.json", R"({"outcome": "binomial", "studies": [{"id": "CC", "role": "current_control", "n": 6, "responses": 1}]})");
    std::ostringstream out, err;
    EXPECT_EQ(cmd_analyze(quick_analyze(ds, dir / "x"), out, err), exit_input);
    EXPECT_NE(err.str().find("current_treatment"), std::string::npos);
}

TEST_F(Cli, AnalyzeSamplerAbortExitCode) {
    AnalyzeArgs a = quick_analyze(kCase1, dir / "x");
    a.methods = "dpm";
    a.overrides["fixed_m"] = 1000.0;
    a.overrides["max_components"] = 2;
    std::ostringstream out, err;
    EXPECT_EQ(cmd_analyze(a, out, err), exit_sampler);
}

TEST_F(Cli, AnalyzeIpd) {
    RngStream rng(3, 0);
    IpdScenario scn;
    scn.hypothesis = Hypothesis::Alternative;
    const auto rep = generate_ipd_replicate(scn, rng);
    const auto csv = write("ipd.csv", serialize_ipd_dataset(rep.data));
    std::ostringstream out, err;
    AnalyzeArgs a = quick_analyze(csv, dir / "ipd");
    a.methods = "cd,dpm";
    ASSERT_EQ(cmd_analyze(a, out, err), exit_ok) << err.str();
    const auto rows = parse_summary_csv(read_file(dir / "ipd" / "summary.csv"));
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_FALSE(rows[0].ehss.has_value());
    EXPECT_LT(rows[1].summary.mean, 0.0);
}

TEST(SummaryCsv, RoundTrip) {
    std::vector<SummaryRow> rows{{"cd", {0.39, 0.17, 0.05, 0.71, 0.99}, true, 1.5},
                                 {"dpm", {0.1 / 3.0, 1e-9, -2.0, 3.25, 0.5}, false, std::nullopt}};
    EXPECT_EQ(parse_summary_csv(summary_csv(rows)), rows);
    EXPECT_THROW(parse_summary_csv("x\n"), SchemaError);
}

TEST(Config, DefaultsAndOverrides) {
    const auto c = analysis_config_from_json(nlohmann::json::object());
    EXPECT_EQ(c.mcmc.iters, 22000);
    EXPECT_EQ(c.mcmc.burn_in, 2000);
    EXPECT_EQ(c.mcmc.m_prior.shape, 1.0);
    EXPECT_EQ(c.mcmc.m_prior.scale, 5.0);
    EXPECT_EQ(c.mcmc.phi_prior.a, 2.0);
    EXPECT_EQ(c.mcmc.init, InitMode::Auto);
    EXPECT_EQ(c.threshold, 0.975);
    const auto d = analysis_config_from_json(
        {{"m_prior", {{"scale", 2.0}}}, {"phi_update", "metropolis_hastings"}, {"stick_counts", "all_units"},
         {"init", "singletons"}, {"fixed_phi", 0.25}});
    EXPECT_EQ(d.mcmc.m_prior.shape, 1.0);
    EXPECT_EQ(d.mcmc.m_prior.scale, 2.0);
    EXPECT_EQ(d.mcmc.phi_update, PhiUpdate::MetropolisHastings);
    EXPECT_EQ(d.mcmc.stick_counts, StickCounts::AllUnits);
    EXPECT_EQ(d.mcmc.init, InitMode::Singletons);
    EXPECT_EQ(d.mcmc.fixed_phi, 0.25);
}

TEST(Config, Rejections) {
    EXPECT_THROW(analysis_config_from_json({{"itres", 5}}), ConfigError);
    EXPECT_THROW(analysis_config_from_json({{"iters", "many"}}), ConfigError);
    EXPECT_THROW(analysis_config_from_json({{"m_update", "newton"}}), ConfigError);
    EXPECT_THROW(analysis_config_from_json({{"init", "random"}}), ConfigError);
    EXPECT_THROW(analysis_config_from_json({{"base", {{"a", -1.0}}}}), ConfigError);
    EXPECT_THROW(analysis_config_from_json({{"threshold", 1.0}}), ConfigError);
    EXPECT_THROW(analysis_config_from_json(nlohmann::json::array()), ConfigError);
}

TEST(Config, DigestIgnoresKeyOrderAndDefaults) {
    const auto a = analysis_config_from_json({{"iters", 5000}, {"burn_in", 500}});
    const auto b = analysis_config_from_json(nlohmann::json::parse(R"({"burn_in": 500, "iters": 5000, "thin": 1})"));
    const auto c = analysis_config_from_json({{"iters", 5001}, {"burn_in", 500}});
    EXPECT_EQ(config_digest(a), config_digest(b));
    EXPECT_NE(config_digest(a), config_digest(c));
    EXPECT_EQ(to_json(analysis_config_from_json(to_json(a))), to_json(a));
}

TEST(Methods, ListParsing) {
    EXPECT_EQ(parse_method_list("cd,ddpm"), (std::vector<Method>{Method::CD, Method::DDPM}));
    EXPECT_THROW(parse_method_list(""), ConfigError);
    EXPECT_THROW(parse_method_list("cd,cd"), ConfigError);
    EXPECT_THROW(parse_method_list("gp"), ConfigError);
}

TEST(Plan, Parsing) {
    const auto plan = parse_plan(nlohmann::json::parse(R"({
        "methods": ["pd", "dpm"],
        "analysis": {"iters": 800, "burn_in": 100},
        "cells": [{"outcome": "binomial", "scenario": 4},
                  {"outcome": "ipd", "scenario": 3, "hypothesis": "alternative", "replicates": 7}]})"));
    ASSERT_EQ(plan.cells.size(), 2u);
    EXPECT_EQ(plan.cells[0].replicates, 1000);
    EXPECT_EQ(plan.cells[0].hypothesis, Hypothesis::Null);
    EXPECT_EQ(plan.cells[1].replicates, 7);
    EXPECT_EQ(plan.cells[1].label(), "ipd-sce3-alternative");
    EXPECT_EQ(plan.methods, (std::vector<Method>{Method::PD, Method::DPM}));
    EXPECT_EQ(plan.analysis.mcmc.iters, 800);
    EXPECT_THROW(parse_plan(nlohmann::json::parse(R"({"cells": []})")), ConfigError);
    EXPECT_THROW(parse_plan(nlohmann::json::parse(R"({"cells": [{"outcome": "binomial", "scenario": 9}]})")), ConfigError);
    EXPECT_THROW(parse_plan(nlohmann::json::parse(R"({"cells": [{"outcome": "survival", "scenario": 1}]})")), ConfigError);
    EXPECT_THROW(parse_plan(nlohmann::json::parse(R"({"cells": [{"outcome": "ipd", "scenario": 1}], "seed": 3})")), ConfigError);
}

TEST(Plan, ShippedPlansParse) {
    for (const char* name : {"desk_binomial.json", "desk_ipd.json", "smoke.json"}) {
        const auto text = read_file(std::string(DPBORROW_DATA_DIR) + "/plans/" + name);
        EXPECT_NO_THROW(parse_plan(nlohmann::json::parse(text))) << name;
    }
}

TEST_F(Cli, SimulateWritesTables) {
    const auto plan = write("plan.json", R"({
        "analysis": {"iters": 600, "burn_in": 100, "comparator_draws": 2000},
        "cells": [{"outcome": "binomial", "scenario": 3, "replicates": 6}]})");
    SimulateArgs a;
    a.plan = plan;
    a.out = dir / "sim";
    a.threads = 2;
    std::ostringstream out, err;
    ASSERT_EQ(cmd_simulate(a, out, err), exit_ok) << err.str();
    const auto rows = parse_metrics_csv(read_file(dir / "sim" / "oc.csv"));
    EXPECT_FALSE(rows.empty());
    EXPECT_EQ(rows.front().replicates, 6);
    EXPECT_EQ(read_file(dir / "sim" / "failures.csv"), "cell,replicate,method,message\n");
    const auto manifest = nlohmann::json::parse(read_file(dir / "sim" / "manifest.json"));
    EXPECT_EQ(manifest["threads"], 2);
    EXPECT_EQ(manifest["failed_replicates"], 0);
    const auto oc = nlohmann::json::parse(read_file(dir / "sim" / "oc.json"));
    EXPECT_EQ(oc["rows"].size(), rows.size());
    EXPECT_NE(out.str().find("rejection_rate"), std::string::npos);

    a.out = dir / "sim2";
    a.threads = 1;
    ASSERT_EQ(cmd_simulate(a, out, err), exit_ok);
    EXPECT_EQ(read_file(dir / "sim" / "oc.csv"), read_file(dir / "sim2" / "oc.csv"));
}

TEST_F(Cli, SimulateReportsFailuresButSucceeds) {
    const auto plan = write("plan.json", R"({
        "methods": ["cd", "dpm"],
        "analysis": {"iters": 300, "burn_in": 100, "comparator_draws": 500, "fixed_m": 1000.0, "max_components": 2},
        "cells": [{"outcome": "binomial", "scenario": 1, "replicates": 3}]})");
    SimulateArgs a;
    a.plan = plan;
    a.out = dir / "sim";
    a.threads = 1;
    std::ostringstream out, err;
    EXPECT_EQ(cmd_simulate(a, out, err), exit_ok);
    EXPECT_NE(err.str().find("3 method failures"), std::string::npos);
    const std::string failures = read_file(dir / "sim" / "failures.csv");
    EXPECT_EQ(std::count(failures.begin(), failures.end(), '\n'), 4);
}

TEST_F(Cli, SimulateBadPlan) {
    const auto plan = write("plan.json", "{not json");
    SimulateArgs a;
    a.plan = plan;
    a.out = dir / "sim";
    std::ostringstream out, err;
    EXPECT_EQ(cmd_simulate(a, out, err), exit_input);
}
