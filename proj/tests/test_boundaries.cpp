#include <scribbleseg/boundaries.hpp>
#include <scribbleseg/scribbledata.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <set>

using namespace scribbleseg;

namespace {

Image constant_image(int h, int w, double v) { return Image(h, w, 3, v); }

/// Each label id forms exactly one 4-connected component.
bool labels_connected(const Grid<int>& labels) {
    Grid<int> comp;
    const int n_comp = detail::connected_components(labels, comp);
    std::set<int> ids(labels.data().begin(), labels.data().end());
    return n_comp == static_cast<int>(ids.size());
}

}  // namespace

TEST(Slic, ConstantImageGivesRegularSegments) {
    const auto sp = slic(constant_image(64, 64, 0.4), 16);
    EXPECT_EQ(sp.n_segments, 16);
    EXPECT_TRUE(labels_connected(sp.labels));
    std::vector<int> area(16, 0);
    for (int v : sp.labels.data()) ++area[static_cast<std::size_t>(v)];
    const double mean = 64.0 * 64.0 / 16.0;
    for (int a : area) {
        EXPECT_GE(a, 0.5 * mean);
        EXPECT_LE(a, 2.0 * mean);
    }
}

TEST(Slic, SingleSegmentCoversImage) {
    const auto sp = slic(constant_image(20, 30, 0.1), 1);
    EXPECT_EQ(sp.n_segments, 1);
    for (int v : sp.labels.data()) EXPECT_EQ(v, 0);
}

TEST(Slic, SegmentsAreConnectedOnSyntheticScenes) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const auto scene = generate_scene(SceneSpec{seed, 3, 4, 64, 64, SceneStyle{}});
        const auto sp = slic(scene.image, 16);
        EXPECT_TRUE(labels_connected(sp.labels)) << "seed " << seed;
        std::set<int> ids(sp.labels.data().begin(), sp.labels.data().end());
        EXPECT_EQ(static_cast<int>(ids.size()), sp.n_segments);
        EXPECT_EQ(*ids.rbegin(), sp.n_segments - 1);
    }
}

TEST(Slic, FollowsColorEdges) {
    Image img(32, 32, 3, 0.1);
    for (int i = 0; i < 32; ++i) {
        for (int j = 13; j < 32; ++j) {
            for (int c = 0; c < 3; ++c) img(i, j, c) = 0.9;
        }
    }
    const auto sp = slic(img, 4);
    for (int i = 0; i < 32; ++i) EXPECT_NE(sp.labels(i, 12), sp.labels(i, 13));
}

TEST(Slic, RejectsBadArguments) {
    EXPECT_THROW(slic(Image(), 4), std::invalid_argument);
    EXPECT_THROW(slic(constant_image(4, 4, 0.0), 0), std::invalid_argument);
    EXPECT_THROW(slic(constant_image(4, 4, 0.0), 17), std::invalid_argument);
}

TEST(BoundaryMask, SingleSegmentHasNoBoundary) {
    SuperpixelLabeling sp{Grid<int>(6, 6, 1, 0), 1};
    for (int d = 0; d < 3; ++d) {
        const auto bm = boundary_mask(sp, d);
        for (auto v : bm.mask.data()) EXPECT_EQ(v, 0);
    }
}

TEST(BoundaryMask, HalfSplitMarksInterfaceColumns) {
    SuperpixelLabeling sp{Grid<int>(4, 4, 1, 0), 2};
    for (int i = 0; i < 4; ++i) {
        for (int j = 2; j < 4; ++j) sp.labels(i, j) = 1;
    }
    const auto mask = boundary_mask(sp, 0).mask;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) EXPECT_EQ(mask(i, j), (j == 1 || j == 2) ? 1 : 0) << i << "," << j;
    }
}

TEST(BoundaryMask, DilationIsMonotone) {
    const auto scene = generate_scene(SceneSpec{3, 3, 4, 64, 64, SceneStyle{}});
    const auto sp = slic(scene.image, 16);
    LabelGrid prev = boundary_mask(sp, 0).mask;
    for (int d = 1; d <= 3; ++d) {
        const LabelGrid next = boundary_mask(sp, d).mask;
        for (std::size_t i = 0; i < prev.size(); ++i) {
            if (prev.data()[i]) EXPECT_TRUE(next.data()[i]);
        }
        prev = next;
    }
}

TEST(ReduceMask, ThresholdOnCellFraction) {
    BoundaryMask m{LabelGrid(4, 4, 1, 0)};
    m.mask(0, 0) = 1;  // 1/4 of the top-left cell
    m.mask(2, 2) = 1;
    m.mask(2, 3) = 1;  // 2/4 of the bottom-right cell
    const auto r = reduce_mask(m, 2, 0.25);
    EXPECT_EQ(r(0, 0), 1);
    EXPECT_EQ(r(0, 1), 0);
    EXPECT_EQ(r(1, 1), 1);
    EXPECT_EQ(reduce_mask(m, 2, 0.5)(0, 0), 0);
    EXPECT_THROW(reduce_mask(m, 3, 0.25), std::invalid_argument);
}

TEST(BoundaryCache, RoundTripsThroughDisk) {
    const auto dir = std::filesystem::temp_directory_path() / "scribbleseg_boundary_cache_test";
    std::filesystem::remove_all(dir);
    const auto scene = generate_scene(SceneSpec{9, 3, 4, 64, 64, SceneStyle{}});
    const SlicParams params{};
    const auto first = cached_boundary(dir, scene.image, params);
    const auto second = cached_boundary(dir, scene.image, params);
    EXPECT_EQ(first.mask, second.mask);
    EXPECT_EQ(first.mask, compute_boundary(scene.image, params).mask);
    EXPECT_EQ(std::distance(std::filesystem::directory_iterator(dir), std::filesystem::directory_iterator{}), 1);
    std::filesystem::remove_all(dir);
}
