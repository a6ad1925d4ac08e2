#include "dpborrow/cli.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dpborrow;

namespace {

Dataset case1() { return load_dataset(std::string(DPBORROW_DATA_DIR) + "/as_case1.json"); }

double beta_mean(const Beta& b) { return b.a / (b.a + b.b); }
double beta_var(const Beta& b) { return b.a * b.b / ((b.a + b.b) * (b.a + b.b) * (b.a + b.b + 1.0)); }

} // namespace

TEST(Conjugate, UpdateAddsCounts) {
    const Beta post = detail::conjugate_update({0.5, 0.5}, 3, 10);
    EXPECT_DOUBLE_EQ(post.a, 3.5);
    EXPECT_DOUBLE_EQ(post.b, 7.5);
}

TEST(Conjugate, CurrentDataPosteriors) {
    const auto post = cd_posteriors(case1());
    EXPECT_DOUBLE_EQ(post.control.a, 1.5);
    EXPECT_DOUBLE_EQ(post.control.b, 5.5);
    EXPECT_DOUBLE_EQ(post.treatment.a, 14.5);
    EXPECT_DOUBLE_EQ(post.treatment.b, 9.5);
}

TEST(Conjugate, PooledDataPosteriors) {
    const auto post = pd_posteriors(case1());
    EXPECT_DOUBLE_EQ(post.control.a, 128.5);
    EXPECT_DOUBLE_EQ(post.control.b, 391.5);
    EXPECT_DOUBLE_EQ(post.treatment.a, 14.5);
}

TEST(Conjugate, DrawsMatchClosedForm) {
    const Dataset ds = case1();
    for (int pooled = 0; pooled < 2; ++pooled) {
        const auto post = pooled ? pd_posteriors(ds) : cd_posteriors(ds);
        RngStream rng(2, static_cast<std::uint64_t>(pooled));
        const auto chain = pooled ? pd_binomial(ds, {0.5, 0.5}, 400000, rng) : cd_binomial(ds, {0.5, 0.5}, 400000, rng);
        ASSERT_EQ(chain.size(), 400000u);
        const auto s = effect_summary(chain, Estimand::BinomialDiff);
        const double mean = beta_mean(post.treatment) - beta_mean(post.control);
        const double var = beta_var(post.treatment) + beta_var(post.control);
        EXPECT_NEAR(s.mean, mean, 5.0 * std::sqrt(var / 400000.0));
        EXPECT_NEAR(s.sd, std::sqrt(var), 0.001);
    }
}

TEST(Conjugate, CaseOneEffectSizes) {
    const auto cd = cd_posteriors(case1());
    const auto pd = pd_posteriors(case1());
    EXPECT_NEAR(100.0 * (beta_mean(cd.treatment) - beta_mean(cd.control)), 39.0, 0.05);
    EXPECT_NEAR(100.0 * std::sqrt(beta_var(cd.treatment) + beta_var(cd.control)), 17.5, 0.05);
    EXPECT_NEAR(100.0 * (beta_mean(pd.treatment) - beta_mean(pd.control)), 35.7, 0.05);
}

TEST(Conjugate, MissingTreatmentArm) {
    EXPECT_THROW(cd_posteriors(control_subset(case1())), MissingArm);
    EXPECT_THROW(pd_posteriors(control_subset(case1())), MissingArm);
}

TEST(Conjugate, SameSeedSameDraws) {
    const Dataset ds = case1();
    RngStream a(4, 4), b(4, 4);
    const auto ca = cd_binomial(ds, {0.5, 0.5}, 1000, a);
    const auto cb = cd_binomial(ds, {0.5, 0.5}, 1000, b);
    EXPECT_EQ(ca.pi_cc, cb.pi_cc);
    EXPECT_EQ(ca.pi_ct, cb.pi_ct);
}

class LinearModel : public ::testing::Test {
protected:
    void SetUp() override {
        RngStream rng(21, 0);
        IpdScenario scn;
        scn.hypothesis = Hypothesis::Alternative;
        rep = generate_ipd_replicate(scn, rng);
    }
    IpdReplicate rep;
};

TEST_F(LinearModel, DesignLayout) {
    const LinearDesign cur = linear_design(rep.data, Pooling::CurrentOnly);
    const LinearDesign all = linear_design(rep.data, Pooling::Pooled);
    EXPECT_EQ(cur.x.rows(), 120);
    EXPECT_EQ(all.x.rows(), 620);
    EXPECT_EQ(cur.x.cols(), 4);
    EXPECT_EQ(cur.x.col(3).sum(), 60.0);
    EXPECT_EQ(cur.x.col(0).sum(), 120.0);
}

TEST_F(LinearModel, FixedVarianceRecoversLeastSquares) {
    const LinearDesign d = linear_design(rep.data, Pooling::CurrentOnly);
    const double sigma2 = 1.3;
    const double coef_sd = 1000.0;
    Eigen::MatrixXd q = d.x.transpose() * d.x / sigma2;
    q.diagonal().array() += 1.0 / (coef_sd * coef_sd);
    const Eigen::MatrixXd cov = q.inverse();
    const Eigen::VectorXd mean = cov * d.x.transpose() * d.y / sigma2;
    const Eigen::VectorXd ols = d.x.colPivHouseholderQr().solve(d.y);
    EXPECT_NEAR(mean[3], ols[3], 1e-6);

    RngStream rng(21, 1);
    const int kept = 40000;
    const auto post = linear_regression_gibbs(rep.data, Pooling::CurrentOnly, {coef_sd, {0.01, 0.01}},
                                              {kept + 10, 10, sigma2}, rng);
    ASSERT_EQ(post.beta.rows(), kept);
    for (Eigen::Index c = 0; c < 4; ++c) {
        const double m = post.beta.col(c).mean();
        EXPECT_NEAR(m, mean[c], 5.0 * std::sqrt(cov(c, c) / kept)) << post.coefficient_names[static_cast<std::size_t>(c)];
        const double v = (post.beta.col(c).array() - m).square().sum() / (kept - 1);
        EXPECT_NEAR(v, cov(c, c), 0.05 * cov(c, c));
    }
    EXPECT_EQ(post.coefficient_names, (std::vector<std::string>{"intercept", "age", "sex", "trt"}));
}

TEST_F(LinearModel, TreatmentEffectRecovered) {
    RngStream rng(21, 2);
    const auto post = linear_regression_gibbs(rep.data, Pooling::Pooled, {}, {6000, 1000, std::nullopt}, rng);
    const auto s = summarize(post.treatment_draws());
    // baseline is omitted from the design, so the residual sd is about 8
    EXPECT_NEAR(s.mean, rep.gamma, 4.0 * s.sd);
    const double sigma2 = mean_of(post.sigma2);
    EXPECT_GT(sigma2, 40.0);
    EXPECT_LT(sigma2, 90.0);
}

TEST_F(LinearModel, RankDeficientDesign) {
    Dataset ds = rep.data;
    for (auto& s : ds.studies)
        for (auto& r : std::get<std::vector<IpdRecord>>(s.payload)) r.covariates[2] = 1.0;
    RngStream rng(21, 3);
    EXPECT_THROW(linear_regression_gibbs(ds, Pooling::Pooled, {}, {100, 10, std::nullopt}, rng), RankDeficient);
}

TEST_F(LinearModel, ChainWrapping) {
    RngStream rng(21, 4);
    const auto post = linear_regression_gibbs(rep.data, Pooling::CurrentOnly, {}, {300, 100, std::nullopt}, rng);
    const auto chain = to_chain(post, "cd");
    EXPECT_EQ(chain.size(), 200u);
    EXPECT_EQ(chain.outcome_kind, OutcomeKind::Ipd);
    EXPECT_FALSE(chain.has_allocations());
    EXPECT_NO_THROW(effect_summary(chain, Estimand::IpdGamma));
    EXPECT_THROW(effect_summary(chain, Estimand::BinomialDiff), MissingEstimand);
}
