#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "mvpl/data.hpp"

using namespace mvpl::data;
using mvpl::container::ContainerError;
using mvpl::container::ErrorCode;

namespace {

MotionShapesSpec small_spec() {
    MotionShapesSpec s;
    s.frames = 6;
    s.height = s.width = 16;
    s.eval_per_class = 2;
    return s;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("mvpl_data_test_" + name)).string();
}

ErrorCode code_of(const std::string& bytes) {
    try {
        mvpl::container::deserialize(bytes);
    } catch (const ContainerError& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorCode::io;
}

// Multinomial logistic regression trained by full-batch gradient descent.
struct Probe {
    std::size_t dim, classes;
    std::vector<double> w;

    Probe(std::size_t d, std::size_t c) : dim(d), classes(c), w((d + 1) * c, 0.0) {}

    std::vector<double> scores(const std::vector<double>& x) const {
        std::vector<double> s(classes, 0.0);
        for (std::size_t k = 0; k < classes; ++k) {
            s[k] = w[dim * classes + k];
            for (std::size_t j = 0; j < dim; ++j) s[k] += x[j] * w[j * classes + k];
        }
        return s;
    }

    void fit(const std::vector<std::vector<double>>& xs, const std::vector<std::size_t>& ys, int steps, double lr) {
        for (int it = 0; it < steps; ++it) {
            std::vector<double> g(w.size(), 0.0);
            for (std::size_t i = 0; i < xs.size(); ++i) {
                std::vector<double> s = scores(xs[i]);
                const double mx = *std::max_element(s.begin(), s.end());
                double z = 0.0;
                for (double& v : s) z += (v = std::exp(v - mx));
                for (std::size_t k = 0; k < classes; ++k) {
                    const double d = s[k] / z - (k == ys[i] ? 1.0 : 0.0);
                    for (std::size_t j = 0; j < dim; ++j) g[j * classes + k] += d * xs[i][j];
                    g[dim * classes + k] += d;
                }
            }
            for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * g[j] / static_cast<double>(xs.size());
        }
    }

    std::size_t predict(const std::vector<double>& x) const {
        std::vector<double> s = scores(x);
        return static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
    }
};

std::vector<double> frame_zero_features(const Dataset& d, std::size_t i) {
    const Tensor& f = d.frames[i];
    const std::size_t n = f.dim(1) * f.dim(2) * f.dim(3);
    std::vector<double> x(n);
    for (std::size_t j = 0; j < n; ++j) x[j] = f[j] / 127.5 - 1.0;
    return x;
}

}  // namespace

TEST(Generate, RightMovingClipStoresUnitFlowOnShapeSupport) {
    MotionShapesSpec s = small_spec();
    s.speed_min = s.speed_max = 1.0;
    Dataset d = generate(s, 1, 3);
    const ClipRecord& right = d.clips[static_cast<std::size_t>(Motion::right)];
    ASSERT_EQ(right.label, 1u);
    EXPECT_DOUBLE_EQ(right.motion.u, 1.0);
    const Tensor& f = d.gt_flow.at(right.id);
    ASSERT_EQ(f.shape(), (Shape{5, 16, 16, 2}));
    std::size_t support = 0;
    for (std::size_t i = 0; i < f.size(); i += 2) {
        if (f[i] == 0.0 && f[i + 1] == 0.0) continue;
        ++support;
        EXPECT_EQ(f[i], 1.0);
        EXPECT_EQ(f[i + 1], 0.0);
    }
    EXPECT_GT(support, 5u);
    EXPECT_FALSE(d.gt_flow.contains(d.clips[static_cast<std::size_t>(Motion::clockwise)].id));
}

TEST(Generate, FramesAreQuantizedPixels) {
    Dataset d = generate(small_spec(), 1, 4);
    for (const Tensor& t : d.frames)
        for (double v : t.values()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 255.0);
            EXPECT_EQ(v, std::round(v));
        }
}

TEST(Generate, SameSeedGivesByteIdenticalContainer) {
    const std::string a = mvpl::container::serialize(to_container(generate(small_spec(), 2, 5)));
    const std::string b = mvpl::container::serialize(to_container(generate(small_spec(), 2, 5)));
    const std::string c = mvpl::container::serialize(to_container(generate(small_spec(), 2, 6)));
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
}

TEST(Generate, TrainAndEvalAreDisjoint) {
    Dataset d = generate(small_spec(), 3, 7);
    std::set<std::uint64_t> train, eval;
    for (std::size_t i : d.indices(Split::train)) train.insert(d.clips[i].id);
    for (std::size_t i : d.indices(Split::eval)) eval.insert(d.clips[i].id);
    EXPECT_EQ(train.size(), 24u);
    EXPECT_EQ(eval.size(), 16u);
    for (auto id : eval) EXPECT_FALSE(train.contains(id));
}

TEST(Generate, RejectsInconsistentSpec) {
    MotionShapesSpec s = small_spec();
    s.max_shapes = 0;
    EXPECT_THROW(generate(s, 1, 1), std::invalid_argument);
    EXPECT_THROW(generate(small_spec(), 0, 1), std::invalid_argument);
}

TEST(Generate, SingleFrameProbeIsNearChance) {
    MotionShapesSpec s = small_spec();
    s.frames = 2;
    s.eval_per_class = 25;
    Dataset d = generate(s, 50, 8);
    std::vector<std::vector<double>> xs;
    std::vector<std::size_t> ys;
    for (std::size_t i : d.indices(Split::train)) {
        xs.push_back(frame_zero_features(d, i));
        ys.push_back(d.clips[i].label);
    }
    Probe probe(xs.front().size(), kClasses);
    probe.fit(xs, ys, 200, 0.05);
    std::size_t fitted = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) fitted += probe.predict(xs[i]) == ys[i];
    // the probe has capacity: it fits its own training frames
    EXPECT_GT(static_cast<double>(fitted) / static_cast<double>(xs.size()), 0.5);
    std::size_t correct = 0;
    const auto eval = d.indices(Split::eval);
    for (std::size_t i : eval) correct += probe.predict(frame_zero_features(d, i)) == d.clips[i].label;
    const double acc = static_cast<double>(correct) / static_cast<double>(eval.size());
    EXPECT_LE(acc, 1.0 / 8.0 + 0.1) << acc;
}

TEST(MakeSplits, FullFractionLabelsEverything) {
    Dataset d = generate(small_spec(), 3, 9);
    make_splits(d, 1.0, 1);
    EXPECT_EQ(d.labeled_indices().size(), d.indices(Split::train).size());
}

TEST(MakeSplits, TenPercentOfHundredPerClass) {
    MotionShapesSpec s = small_spec();
    s.frames = 2;
    s.height = s.width = 4;
    s.eval_per_class = 1;
    Dataset d = generate(s, 100, 10);
    make_splits(d, 0.1, 1);
    std::array<int, kClasses> per{};
    for (std::size_t i : d.labeled_indices()) ++per[d.clips[i].label];
    for (int n : per) EXPECT_EQ(n, 10);
    for (std::size_t i : d.indices(Split::eval)) EXPECT_FALSE(d.clips[i].labeled);

    Dataset e = d;
    make_splits(e, 0.1, 2);
    auto a = d.labeled_indices(), b = e.labeled_indices();
    EXPECT_EQ(a.size(), b.size());
    EXPECT_NE(a, b);
    Dataset again = d;
    make_splits(again, 0.1, 1);
    EXPECT_EQ(again.labeled_indices(), a);
}

TEST(MakeSplits, RejectsBadFractions) {
    Dataset d = generate(small_spec(), 3, 11);
    EXPECT_THROW(make_splits(d, 0.0, 1), std::invalid_argument);
    EXPECT_THROW(make_splits(d, 1.5, 1), std::invalid_argument);
    EXPECT_THROW(make_splits(d, 0.2, 1), std::invalid_argument);  // 0.6 clips per class
}

TEST(Container, RoundTripIsBitwise) {
    Dataset d = generate(small_spec(), 2, 12);
    make_splits(d, 0.5, 3);
    extract_views(d);
    const std::string path = temp_path("roundtrip.mvpl");
    save(path, d);
    Dataset r = load(path);
    std::filesystem::remove(path);
    ASSERT_EQ(r.clips.size(), d.clips.size());
    for (std::size_t i = 0; i < d.clips.size(); ++i) {
        EXPECT_TRUE(mvpl::tensorlab::bitwise_equal(r.frames[i], d.frames[i]));
        EXPECT_EQ(r.clips[i].labeled, d.clips[i].labeled);
        for (auto k : {ViewKind::flow, ViewKind::tg})
            EXPECT_TRUE(mvpl::tensorlab::bitwise_equal(r.views.at(k)[i], d.views.at(k)[i]));
    }
    EXPECT_EQ(r.gt_flow.size(), d.gt_flow.size());
    EXPECT_EQ(mvpl::container::serialize(to_container(r)), mvpl::container::serialize(to_container(d)));
}

TEST(Container, DistinctErrors) {
    const std::string good = mvpl::container::serialize(to_container(generate(small_spec(), 1, 13)));
    EXPECT_EQ(code_of(good.substr(0, good.size() - 9)), ErrorCode::truncated);
    EXPECT_EQ(code_of(good.substr(0, 10)), ErrorCode::truncated);
    std::string magic = good;
    magic[0] = 'X';
    EXPECT_EQ(code_of(magic), ErrorCode::bad_magic);
    std::string version = good;
    version[4] = 2;
    EXPECT_EQ(code_of(version), ErrorCode::bad_version);
    std::string header = good;
    header[16] = '#';
    EXPECT_EQ(code_of(header), ErrorCode::bad_header);
    EXPECT_THROW(mvpl::container::read_file(temp_path("does_not_exist")), ContainerError);
}

TEST(Container, PrecomputedViewsEqualOnTheFly) {
    Dataset d = generate(small_spec(), 1, 14);
    Dataset stored = d;
    extract_views(stored);
    const std::vector<ViewKind> all{ViewKind::rgb, ViewKind::flow, ViewKind::tg};
    for (std::size_t i = 0; i < d.clips.size(); ++i) {
        ViewSet a = viewset(d, i, all), b = viewset(stored, i, all);
        for (ViewKind k : all) EXPECT_TRUE(mvpl::tensorlab::bitwise_equal(a.view(k).frames, b.view(k).frames));
    }
    ViewSet rgb_only = viewset(d, 0, {ViewKind::rgb});
    EXPECT_TRUE(rgb_only.flow.frames.empty());
}

TEST(Manifest, ListsOffsetsAndSplits) {
    Dataset d = generate(small_spec(), 1, 15);
    auto m = manifest(d);
    EXPECT_EQ(m.at("clips").size(), d.clips.size());
    EXPECT_TRUE(m.at("blocks").front().contains("offset"));
    EXPECT_EQ(m.at("clips").front().at("split"), "train");
}
