#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "mvpl/model.hpp"
#include "mvpl/rng.hpp"
#include "test_clips.hpp"

using namespace mvpl::model;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.frames = 4;
    c.height = c.width = 8;
    c.widths = {4, 6, 8};
    return c;
}

Tensor random_batch(const ModelConfig& c, std::size_t n, std::uint64_t seed) {
    mvpl::Rng rng(seed);
    Tensor t({n, c.frames, c.height, c.width, c.channels});
    for (double& v : t.values()) v = rng.uniform(0.0, 255.0);
    return t;
}

}  // namespace

TEST(Model, LogitShape) {
    ModelConfig c = small_config();
    ModelState s = init_parameters(c, 1);
    EXPECT_EQ(eval_logits(s, random_batch(c, 2, 2)).shape(), (Shape{2, 8}));
    Tape tape;
    auto params = bind(tape, s, true);
    EXPECT_EQ(forward(tape, params, s.bn, c, random_batch(c, 3, 3), Mode::train).value().shape(), (Shape{3, 8}));
}

TEST(Model, RejectsMismatchedInput) {
    ModelConfig c = small_config();
    ModelState s = init_parameters(c, 1);
    EXPECT_THROW(eval_logits(s, Tensor({2, 4, 8, 7, 3})), std::invalid_argument);
    EXPECT_THROW(eval_logits(s, Tensor({4, 8, 8, 3})), std::invalid_argument);
}

TEST(Model, EvalIsDeterministicAndSideEffectFree) {
    ModelConfig c = small_config();
    ModelState s = init_parameters(c, 4);
    Tensor batch = random_batch(c, 2, 5);
    {  // move the running statistics away from their initial values
        Tape tape;
        auto params = bind(tape, s, false);
        forward(tape, params, s.bn, c, batch, Mode::train);
    }
    const std::vector<BatchNormStats> before = s.bn;
    Tensor a = eval_logits(s, batch), b = eval_logits(s, batch);
    EXPECT_TRUE(mvpl::tensorlab::bitwise_equal(a, b));
    for (std::size_t k = 0; k < s.bn.size(); ++k) {
        EXPECT_TRUE(mvpl::tensorlab::bitwise_equal(before[k].running_mean, s.bn[k].running_mean));
        EXPECT_TRUE(mvpl::tensorlab::bitwise_equal(before[k].running_var, s.bn[k].running_var));
    }
}

TEST(Model, GradientOfEveryParameterMatchesFiniteDifferences) {
    ModelConfig c = small_config();
    c.height = c.width = 4;
    auto report = model_gradcheck(c, 11);
    EXPECT_TRUE(report.passed) << report.max_rel_error << " at parameter " << report.worst_input;
}

TEST(PredictDistribution, RowsSumToOne) {
    ModelConfig c = small_config();
    ModelState s = init_parameters(c, 6);
    Tensor p = predict_distribution(s, random_batch(c, 5, 7));
    for (std::size_t i = 0; i < 5; ++i) {
        double sum = 0.0;
        for (std::size_t k = 0; k < 8; ++k) sum += p[i * 8 + k];
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(PredictDistribution, ClosedFormFromBias) {
    ModelConfig c = small_config();
    ModelState s = init_parameters(c, 6);
    const std::size_t fc_w = s.params.size() - 2, fc_b = s.params.size() - 1;
    s.params[fc_w].fill(0.0);
    s.params[fc_b].fill(0.0);
    s.params[fc_b][0] = std::log(2.0);
    Tensor p = predict_distribution(s, random_batch(c, 1, 8));
    EXPECT_NEAR(p[0], 2.0 / (2.0 + 8.0 - 1.0), 1e-12);
}

TEST(PredictDistribution, UntrainedModelIsNeitherUniformNorCertain) {
    ModelConfig c = small_config();
    ModelState s = init_parameters(c, 9);
    Tensor p = predict_distribution(s, random_batch(c, 100, 10));
    double mean_max = 0.0;
    for (std::size_t i = 0; i < 100; ++i) mean_max += *std::max_element(p.data() + i * 8, p.data() + (i + 1) * 8);
    mean_max /= 100.0;
    EXPECT_GT(mean_max, 1.0 / 8.0);
    EXPECT_LT(mean_max, 1.0);
}

TEST(InitParameters, SameSeedSameState) {
    ModelConfig c = small_config();
    ModelState a = init_parameters(c, 3), b = init_parameters(c, 3), d = init_parameters(c, 4);
    ASSERT_EQ(a.params.size(), b.params.size());
    for (std::size_t i = 0; i < a.params.size(); ++i) EXPECT_TRUE(mvpl::tensorlab::bitwise_equal(a.params[i], b.params[i]));
    EXPECT_FALSE(mvpl::tensorlab::bitwise_equal(a.params[0], d.params[0]));
    EXPECT_EQ(a.parameter_count(), d.parameter_count());
}

TEST(InitParameters, HeVarianceAndAffineDefaults) {
    ModelState s = init_parameters(ModelConfig{}, 12);
    // second block kernel: 3*3*3*16 fan-in, 13824 draws
    const Tensor& k = s.params[3];
    ASSERT_GE(k.size(), 10000u);
    double mean = 0.0, sq = 0.0;
    for (double v : k.values()) mean += v;
    mean /= static_cast<double>(k.size());
    for (double v : k.values()) sq += (v - mean) * (v - mean);
    const double var = sq / static_cast<double>(k.size() - 1);
    const double want = 2.0 / (27.0 * 16.0);
    EXPECT_NEAR(var / want, 1.0, 0.2);
    for (double v : s.params[4].values()) EXPECT_EQ(v, 1.0);
    for (double v : s.params[5].values()) EXPECT_EQ(v, 0.0);
}

TEST(InitParameters, NeutralInputGivesBiasLogits) {
    ModelConfig c = small_config();
    ModelState s = init_parameters(c, 13);
    mvpl::Rng rng(1);
    for (double& v : s.params.back().values()) v = rng.uniform(-1.0, 1.0);
    Tensor logits = eval_logits(s, Tensor({2, c.frames, c.height, c.width, 3}, 127.5));
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t k = 0; k < 8; ++k) EXPECT_DOUBLE_EQ(logits[i * 8 + k], s.params.back()[k]);
}

TEST(Model, AcceptsEveryViewUnchanged) {
    ModelConfig c = small_config();
    ModelState s = init_parameters(c, 14);
    mvpl::views::VideoClip clip = mvpl::testing::translating_texture(4, 8, 8, 1.0, 0.0);
    mvpl::views::ViewSet vs = mvpl::views::build_viewset(clip);
    for (auto k : mvpl::views::kAllViews) {
        const mvpl::views::VideoClip* one[] = {&vs.view(k)};
        EXPECT_EQ(eval_logits(s, stack_clips(one)).shape(), (Shape{1, 8}));
    }
}
