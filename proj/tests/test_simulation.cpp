#include "dpborrow/simulation.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dpborrow;

namespace {

SimPlan quick_plan(std::vector<SimCell> cells, int threads = 1) {
    SimPlan plan;
    plan.cells = std::move(cells);
    plan.analysis.mcmc.iters = 700;
    plan.analysis.mcmc.burn_in = 200;
    plan.analysis.comparator_draws = 2000;
    plan.threads = threads;
    return plan;
}

SimCell cell(OutcomeKind o, int scenario, Hypothesis h, int reps) { return {o, scenario, h, reps}; }

} // namespace

TEST(BinomialGenerator, ScenarioRates) {
    RngStream rng(1, 0);
    for (int id = 1; id <= 5; ++id) {
        BinomialScenario scn;
        scn.scenario_id = id;
        const auto rep = generate_binomial_replicate(scn, rng);
        ASSERT_EQ(rep.control_rates.size(), 9u);
        EXPECT_EQ(rep.data.num_historical(), 8u);
        EXPECT_EQ(rep.data.current_control().summary().n, 20);
        EXPECT_EQ(rep.data.current_treatment()->summary().n, 40);
        EXPECT_EQ(rep.data.controls().front()->summary().n, 60);
        EXPECT_DOUBLE_EQ(rep.true_effect(), rep.pi_ct - rep.control_rates.back());
        if (id == 2) continue;
        const int het = id == 3 ? 2 : id == 4 ? 4 : id == 5 ? 8 : 0;
        EXPECT_EQ(rep.heterogeneous, het);
        for (int j = 0; j < 8; ++j) EXPECT_EQ(rep.control_rates[static_cast<std::size_t>(j)], j >= 8 - het ? 0.2 : 0.5);
        EXPECT_EQ(rep.control_rates.back(), 0.5);
    }
}

TEST(BinomialGenerator, AlternativeRate) {
    RngStream rng(1, 1);
    BinomialScenario scn;
    scn.hypothesis = Hypothesis::Alternative;
    const auto rep = generate_binomial_replicate(scn, rng);
    EXPECT_DOUBLE_EQ(rep.pi_ct, 0.7452);
    EXPECT_NEAR(rep.true_effect(), 0.2452, 1e-12);
}

TEST(BinomialGenerator, CountsHaveBinomialMeans) {
    RngStream rng(1, 2);
    BinomialScenario scn;
    scn.scenario_id = 4;
    double h1 = 0.0, h8 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const auto rep = generate_binomial_replicate(scn, rng);
        h1 += static_cast<double>(rep.data.studies[0].summary().responses);
        h8 += static_cast<double>(rep.data.studies[7].summary().responses);
    }
    EXPECT_NEAR(h1 / n, 30.0, 5.0 * std::sqrt(15.0 / n));
    EXPECT_NEAR(h8 / n, 12.0, 5.0 * std::sqrt(9.6 / n));
}

TEST(BinomialGenerator, LogitNormalRates) {
    RngStream rng(1, 3);
    BinomialScenario scn;
    scn.scenario_id = 2;
    std::vector<double> eta;
    for (int i = 0; i < 20000; ++i) {
        const auto rep = generate_binomial_replicate(scn, rng);
        for (double p : rep.control_rates) eta.push_back(std::log(p / (1.0 - p)));
    }
    EXPECT_NEAR(mean_of(eta), 0.0, 0.01);
    EXPECT_NEAR(std::sqrt(variance_of(eta)), 0.5, 0.01);
}

TEST(BinomialGenerator, RejectsUnknownScenario) {
    RngStream rng(1, 4);
    BinomialScenario scn;
    scn.scenario_id = 6;
    EXPECT_THROW(generate_binomial_replicate(scn, rng), ConfigError);
}

TEST(IpdGenerator, Layout) {
    RngStream rng(2, 0);
    IpdScenario scn;
    scn.scenario_id = 4;
    scn.hypothesis = Hypothesis::Alternative;
    const auto rep = generate_ipd_replicate(scn, rng);
    EXPECT_EQ(rep.data.num_historical(), 5u);
    EXPECT_EQ(rep.data.dimension(), 3u);
    EXPECT_EQ(rep.rows.size(), 620u);
    EXPECT_EQ(rep.data.current_control().records().size(), 60u);
    EXPECT_EQ(rep.data.current_treatment()->records().size(), 60u);
    EXPECT_EQ(rep.base_means, (std::vector<double>{24.0, 24.0, 24.0, 30.0, 30.0, 24.0}));
    EXPECT_DOUBLE_EQ(rep.true_effect(), -2.885);
}

TEST(IpdGenerator, LeastSquaresRecoversModel) {
    RngStream rng(2, 1);
    IpdScenario scn;
    scn.hypothesis = Hypothesis::Alternative;
    scn.n_historical = 20000;
    scn.n_arm = 20000;
    const auto rep = generate_ipd_replicate(scn, rng);
    const auto n = static_cast<Eigen::Index>(rep.rows.size());
    Eigen::MatrixXd x(n, 5);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = rep.rows[static_cast<std::size_t>(i)];
        x.row(i) << 1.0, r.age, r.sex, r.base, static_cast<double>(r.trt);
        y[i] = r.y;
    }
    const Eigen::VectorXd b = x.colPivHouseholderQr().solve(y);
    EXPECT_NEAR(b[0], -5.0, 0.1);
    EXPECT_NEAR(b[1], 0.2, 0.002);
    EXPECT_NEAR(b[2], 1.0, 0.02);
    EXPECT_NEAR(b[3], 1.0, 0.002);
    EXPECT_NEAR(b[4], -2.885, 0.03);
    const double resid = (y - x * b).squaredNorm() / static_cast<double>(n - 5);
    EXPECT_NEAR(resid, 1.0, 0.02);
}

TEST(IpdGenerator, CovariateLaws) {
    RngStream rng(2, 2);
    IpdScenario scn;
    scn.scenario_id = 2;
    std::vector<double> base_means, ages, sexes;
    for (int i = 0; i < 2000; ++i) {
        const auto rep = generate_ipd_replicate(scn, rng);
        base_means.insert(base_means.end(), rep.base_means.begin(), rep.base_means.end());
        if (i < 50)
            for (const auto& r : rep.rows) {
                ages.push_back(r.age);
                sexes.push_back(r.sex);
            }
    }
    EXPECT_NEAR(mean_of(base_means), 24.0, 0.1);
    EXPECT_NEAR(std::sqrt(variance_of(base_means)), 3.0, 0.08);
    EXPECT_NEAR(mean_of(ages), 74.0, 0.3);
    // within-study sd 8 plus between-study uniform(71, 77) spread
    EXPECT_NEAR(variance_of(ages), 64.0 + 3.0, 2.0);
    EXPECT_NEAR(mean_of(sexes), 0.55, 0.01);
}

TEST(Harness, ThreadCountDoesNotChangeResults) {
    const std::vector<SimCell> cells{cell(OutcomeKind::BinomialSummary, 1, Hypothesis::Null, 12),
                                     cell(OutcomeKind::Ipd, 3, Hypothesis::Alternative, 4)};
    const auto one = run_operating_characteristics(quick_plan(cells, 1), 77);
    const auto four = run_operating_characteristics(quick_plan(cells, 4), 77);
    EXPECT_EQ(metrics_csv(one), metrics_csv(four));
    EXPECT_EQ(one.rows.size(), four.rows.size());
}

TEST(Harness, SeedChangesResults) {
    const std::vector<SimCell> cells{cell(OutcomeKind::BinomialSummary, 1, Hypothesis::Null, 6)};
    EXPECT_NE(metrics_csv(run_operating_characteristics(quick_plan(cells), 1)),
              metrics_csv(run_operating_characteristics(quick_plan(cells), 2)));
}

TEST(Harness, CellsAreIndependentOfEachOther) {
    const SimCell a = cell(OutcomeKind::BinomialSummary, 1, Hypothesis::Null, 5);
    const SimCell b = cell(OutcomeKind::BinomialSummary, 4, Hypothesis::Null, 5);
    const auto alone = run_operating_characteristics(quick_plan({a}), 3);
    const auto both = run_operating_characteristics(quick_plan({b, a}), 3);
    for (const auto& r : alone.rows) EXPECT_EQ(both.value(r.cell, r.method, r.metric), r.value);
}

TEST(Harness, MetricsCsvRoundTrip) {
    const auto t = run_operating_characteristics(quick_plan({cell(OutcomeKind::BinomialSummary, 3, Hypothesis::Alternative, 8)}), 5);
    const auto rows = parse_metrics_csv(metrics_csv(t));
    ASSERT_EQ(rows.size(), t.rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i], t.rows[i]) << t.rows[i].metric;
    EXPECT_THROW(parse_metrics_csv("bogus\n"), SchemaError);
}

TEST(Harness, ExpectedMetricSet) {
    const auto t = run_operating_characteristics(quick_plan({cell(OutcomeKind::BinomialSummary, 1, Hypothesis::Null, 4)}), 6);
    const std::string c = "binomial-sce1-null";
    for (const char* m : {"cd", "pd", "dpm", "ddpm"})
        for (const char* metric : {"bias", "rmse", "mean_sd", "coverage", "rejection_rate", "mean_ehss"})
            EXPECT_NE(t.find(c, m, metric), nullptr) << m << ' ' << metric;
    EXPECT_EQ(t.find(c, "cd", "mean_co_clustered"), nullptr);
    EXPECT_NE(t.find(c, "dpm", "mean_co_clustered"), nullptr);
    const double rmse = t.value(c, "pd", "rmse");
    EXPECT_GE(rmse, std::abs(t.value(c, "pd", "bias")));
    EXPECT_THROW(t.value(c, "pd", "power"), MissingEstimand);
}

TEST(Harness, FailuresAreRecordedAndPaired) {
    SimPlan plan = quick_plan({cell(OutcomeKind::BinomialSummary, 1, Hypothesis::Null, 4)});
    plan.methods = {Method::CD, Method::DPM};
    plan.analysis.mcmc.fixed_m = 1000.0;
    plan.analysis.mcmc.max_components = 2;
    const auto t = run_operating_characteristics(plan, 7);
    EXPECT_EQ(t.failures.size(), 4u);
    const MetricRow* cd = t.find("binomial-sce1-null", "cd", "bias");
    ASSERT_NE(cd, nullptr);
    EXPECT_EQ(cd->replicates, 0);
    EXPECT_EQ(cd->failed, 4);
    EXPECT_TRUE(std::isnan(cd->value));
    EXPECT_EQ(detail::display_value(*cd), "");
}

TEST(Harness, HeterogeneityReducesCoClustering) {
    const auto t = run_operating_characteristics(
        quick_plan({cell(OutcomeKind::BinomialSummary, 1, Hypothesis::Null, 30),
                    cell(OutcomeKind::BinomialSummary, 5, Hypothesis::Null, 30)}, 4),
        8);
    for (const char* m : {"dpm", "ddpm"})
        EXPECT_GT(t.value("binomial-sce1-null", m, "mean_co_clustered"),
                  t.value("binomial-sce5-null", m, "mean_co_clustered") + 1.0)
            << m;
}

TEST(Harness, PairedDifference) {
    const SimPlan plan = quick_plan({cell(OutcomeKind::BinomialSummary, 4, Hypothesis::Null, 20)}, 4);
    const auto t = run_operating_characteristics(plan, 9);
    const auto d = paired_error_difference(t, plan, "binomial-sce4-null", Method::PD, Method::CD);
    EXPECT_EQ(d.n, 20);
    EXPECT_NEAR(d.mean, t.value("binomial-sce4-null", "pd", "bias") - t.value("binomial-sce4-null", "cd", "bias"), 1e-12);
    // pooling four studies at 0.2 with four at 0.5 biases the effect upwards
    EXPECT_GT(d.z(), 2.0);
}

TEST(Harness, DisplayUnits) {
    MetricRow r;
    r.outcome = "binomial";
    r.metric = "bias";
    r.value = 0.01437;
    EXPECT_EQ(detail::display_value(r), "1.4");
    r.metric = "mean_ehss";
    r.value = 12.346;
    EXPECT_EQ(detail::display_value(r), "12.35");
    r.outcome = "ipd";
    r.metric = "bias";
    r.value = -0.0812;
    EXPECT_EQ(detail::display_value(r), "-0.08");
    r.metric = "rejection_rate";
    r.value = 0.025;
    EXPECT_EQ(detail::display_value(r), "2.5");
}
