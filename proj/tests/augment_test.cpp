#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "mvpl/augment.hpp"
#include "mvpl/rng.hpp"

using namespace mvpl::augment;
using mvpl::tensorlab::Shape;
using mvpl::tensorlab::Tensor;

namespace {

VideoClip random_clip(std::size_t t, std::size_t h, std::size_t w, std::uint64_t seed, std::uint64_t id = 0) {
    mvpl::Rng rng(seed);
    VideoClip c{Tensor({t, h, w, 3})};
    for (double& v : c.frames.values()) v = static_cast<double>(rng.uniform_int(0, 255));
    c.id = id;
    return c;
}

AugmentationPolicy strong_policy(std::uint64_t seed) {
    AugmentationPolicy p;
    p.kind = AugmentKind::strong;
    p.seed = seed;
    p.crop_h = p.crop_w = 12;
    return p;
}

}  // namespace

TEST(WeakAugment, FlipTwiceIsIdentity) {
    VideoClip clip = random_clip(3, 6, 7, 1);
    GeometryParams g = centered_geometry(6, 7, 6, 7, 1.0, true);
    ASSERT_EQ(g.resized_h, 6u);
    ASSERT_EQ(g.resized_w, 7u);
    FrameTransform t{g, {}, {}};
    VideoClip twice = apply_transform(apply_transform(clip, t).clip, t).clip;
    EXPECT_TRUE(mvpl::tensorlab::bitwise_equal(twice.frames, clip.frames));
    VideoClip once = apply_transform(clip, t).clip;
    EXPECT_EQ(once.at(1, 2, 0, 1), clip.at(1, 2, 6, 1));
}

TEST(WeakAugment, CenteredCropAtMinimumScaleHasTargetShape) {
    VideoClip clip = random_clip(2, 16, 20, 2);
    GeometryParams g = centered_geometry(16, 20, 12, 12, 1.14);
    VideoClip out = apply_transform(clip, FrameTransform{g, {}, {}}).clip;
    EXPECT_EQ(out.frames.shape(), (Shape{2, 12, 12, 3}));
}

TEST(WeakAugment, ConstantClipStaysConstant) {
    VideoClip clip{Tensor({4, 16, 16, 3}, 73.25)};
    AugmentationPolicy p;
    p.crop_h = p.crop_w = 12;
    for (std::uint64_t step = 0; step < 10; ++step) {
        VideoClip out = weak_augment(clip, p, step);
        EXPECT_EQ(out.frames.shape(), (Shape{4, 12, 12, 3}));
        for (double v : out.frames.values()) EXPECT_DOUBLE_EQ(v, 73.25);
    }
}

TEST(WeakAugment, RejectsOversizedCrop) {
    AugmentationPolicy p;
    p.crop_h = p.crop_w = 20;
    EXPECT_THROW(weak_augment(random_clip(2, 16, 16, 3), p), std::invalid_argument);
}

TEST(WeakAugment, ScaleStaysInRange) {
    AugmentationPolicy p;
    p.crop_h = p.crop_w = 12;
    mvpl::Rng rng(4);
    for (int i = 0; i < 200; ++i) {
        GeometryParams g = draw_geometry(p, rng, 16, 16);
        EXPECT_GE(g.scale, 1.14);
        EXPECT_LE(g.scale, 1.43);
        EXPECT_LE(g.top + 12, g.resized_h);
        EXPECT_LE(g.left + 12, g.resized_w);
    }
}

TEST(StrongAugment, MagnitudeTenRotateIsThirtyDegrees) {
    EXPECT_DOUBLE_EQ(std::abs(op_value(StrongOp::rotate, 10, false, 12)), 30.0);
    EXPECT_DOUBLE_EQ(op_value(StrongOp::rotate, 10, true, 12), -30.0);

    // a linear ramp is reproduced exactly by bilinear sampling, so the rotated
    // clip can be predicted by rotating coordinates with complex arithmetic
    const std::size_t n = 15;
    VideoClip clip{Tensor({2, n, n, 3})};
    auto ramp = [](double x, double y) { return 100.0 + 3.0 * x + 2.0 * y; };
    for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x)
                for (std::size_t c = 0; c < 3; ++c) clip.at(t, y, x, c) = ramp(x, y);
    Augmented out = apply_transform(clip, FrameTransform{{}, {{StrongOp::rotate, 10, 30.0}}, {}});
    EXPECT_TRUE(out.record.temporally_consistent());
    const std::complex<double> turn = std::polar(1.0, 30.0 * std::numbers::pi / 180.0);
    const double centre = 7.0;
    std::size_t checked = 0;
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            const std::complex<double> src = turn * std::complex<double>(x - centre, y - centre);
            const double sx = src.real() + centre, sy = src.imag() + centre;
            if (sx < 0.0 || sy < 0.0 || sx > n - 1.0 || sy > n - 1.0) continue;
            ++checked;
            for (std::size_t t = 0; t < 2; ++t) EXPECT_NEAR(out.clip.at(t, y, x, 0), ramp(sx, sy), 1e-9);
        }
    EXPECT_GT(checked, 100u);
}

TEST(StrongAugment, SolarizeAboveRangeIsIdentity) {
    VideoClip clip = random_clip(2, 5, 5, 5);
    EXPECT_TRUE(mvpl::tensorlab::bitwise_equal(
        apply_transform(clip, FrameTransform{{}, {{StrongOp::solarize, 0, 256.0}}, {}}).clip.frames, clip.frames));
    VideoClip inverted = apply_transform(clip, FrameTransform{{}, {{StrongOp::solarize, 10, 0.0}}, {}}).clip;
    for (std::size_t i = 0; i < clip.frames.size(); ++i) EXPECT_EQ(inverted.frames[i], 255.0 - clip.frames[i]);
}

TEST(StrongAugment, PosterizeKeepsHighBits) {
    VideoClip clip{Tensor({1, 1, 1, 3}, 203.0)};
    EXPECT_DOUBLE_EQ(op_value(StrongOp::posterize, 10, false, 1), 4.0);
    VideoClip out = apply_transform(clip, FrameTransform{{}, {{StrongOp::posterize, 10, 4.0}}, {}}).clip;
    EXPECT_DOUBLE_EQ(out.frames[0], 192.0);
}

TEST(StrongAugment, EnhancementFactorsSpanTheDecidedRange) {
    for (StrongOp op : {StrongOp::contrast, StrongOp::brightness, StrongOp::sharpness}) {
        EXPECT_NEAR(op_value(op, 10, true, 1), 0.1, 1e-12);
        EXPECT_NEAR(op_value(op, 10, false, 1), 1.9, 1e-12);
    }
    EXPECT_NEAR(op_value(StrongOp::translate_x, 10, false, 20), 6.0, 1e-12);
    EXPECT_NEAR(op_value(StrongOp::shear_y, 5, true, 20), -0.15, 1e-12);
}

TEST(StrongAugment, CutoutRegionIsGrayAndSharedAcrossFrames) {
    AugmentationPolicy p = strong_policy(9);
    p.ops_per_sample = 0;
    VideoClip clip = random_clip(4, 16, 16, 6, 42);
    for (double& v : clip.frames.values())
        if (v == 127.5) v = 0.0;
    Augmented out = strong_augment(clip, p, 3);
    ASSERT_TRUE(out.record.frames.front().cutout.has_value());
    const CutoutParams cut = *out.record.frames.front().cutout;
    EXPECT_EQ(cut.side, 7u);  // ceil(0.57 * 12)
    // brute-force scan: the gray pixels are exactly the recorded square, on every frame
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t y = 0; y < 12; ++y)
            for (std::size_t x = 0; x < 12; ++x) {
                const bool inside = y >= cut.top && y < cut.top + cut.side && x >= cut.left && x < cut.left + cut.side;
                bool gray = true;
                for (std::size_t c = 0; c < 3; ++c) gray = gray && out.clip.at(t, y, x, c) == 127.5;
                EXPECT_EQ(gray, inside) << t << " " << y << " " << x;
            }
}

TEST(StrongAugment, RecordsAreTemporallyConsistentAndOutputsInRange) {
    for (std::uint64_t s = 0; s < 40; ++s) {
        VideoClip clip = random_clip(3, 16, 16, 100 + s, s);
        Augmented out = strong_augment(clip, strong_policy(s), s);
        EXPECT_TRUE(out.record.temporally_consistent());
        EXPECT_EQ(out.record.frames.size(), 3u);
        EXPECT_EQ(out.record.frames.front().ops.size(), 2u);
        for (const OpParams& op : out.record.frames.front().ops) {
            EXPECT_GE(op.magnitude, 1);
            EXPECT_LE(op.magnitude, 10);
        }
        EXPECT_TRUE(mvpl::views::in_pixel_range(out.clip));
    }
}

TEST(PairedAugment, ViewsShareTheCropRectangle) {
    ViewSet vs;
    vs.rgb = random_clip(3, 16, 16, 7, 5);
    vs.flow = vs.rgb;
    vs.tg = random_clip(3, 16, 16, 8, 5);
    AugmentationPolicy weak;
    weak.crop_h = weak.crop_w = 12;
    weak.seed = 1;
    PairedViewSets out = paired_augment(vs, weak, strong_policy(1), 2);
    EXPECT_TRUE(mvpl::tensorlab::bitwise_equal(out.weak.views.rgb.frames, out.weak.views.flow.frames));
    EXPECT_TRUE(mvpl::tensorlab::bitwise_equal(out.strong.views.rgb.frames, out.strong.views.flow.frames));
    EXPECT_EQ(out.weak.views.tg.frames.shape(), (Shape{3, 12, 12, 3}));
}

TEST(PairedAugment, NoneKindIsIdentity) {
    ViewSet vs{random_clip(2, 8, 8, 1), random_clip(2, 8, 8, 2), random_clip(2, 8, 8, 3)};
    AugmentationPolicy none;
    none.kind = AugmentKind::none;
    PairedViewSets out = paired_augment(vs, none, none);
    for (mvpl::views::ViewKind k : mvpl::views::kAllViews) {
        EXPECT_TRUE(mvpl::tensorlab::bitwise_equal(out.weak.views.view(k).frames, vs.view(k).frames));
        EXPECT_TRUE(mvpl::tensorlab::bitwise_equal(out.strong.views.view(k).frames, vs.view(k).frames));
    }
}

TEST(PairedAugment, DeterministicUnderFixedSeeds) {
    ViewSet vs{random_clip(3, 16, 16, 1, 9), random_clip(3, 16, 16, 2, 9), random_clip(3, 16, 16, 3, 9)};
    AugmentationPolicy weak;
    weak.crop_h = weak.crop_w = 12;
    PairedViewSets a = paired_augment(vs, weak, strong_policy(4), 11);
    PairedViewSets b = paired_augment(vs, weak, strong_policy(4), 11);
    PairedViewSets c = paired_augment(vs, weak, strong_policy(4), 12);
    bool differs = false;
    for (mvpl::views::ViewKind k : mvpl::views::kAllViews) {
        EXPECT_TRUE(mvpl::tensorlab::bitwise_equal(a.weak.views.view(k).frames, b.weak.views.view(k).frames));
        EXPECT_TRUE(mvpl::tensorlab::bitwise_equal(a.strong.views.view(k).frames, b.strong.views.view(k).frames));
        differs = differs || !mvpl::tensorlab::bitwise_equal(a.strong.views.view(k).frames, c.strong.views.view(k).frames);
    }
    EXPECT_TRUE(differs);
}
