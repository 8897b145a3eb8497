#include <scribbleseg/scribbledata.hpp>

#include <gtest/gtest.h>

#include <set>

using namespace scribbleseg;

namespace {

SceneSpec spec(std::uint64_t seed, int objects = 3, int classes = 4) { return SceneSpec{seed, objects, classes, 64, 64, SceneStyle{}}; }

bool is_subsequence_run(const std::vector<Pixel>& part, const std::vector<Pixel>& whole) {
    if (part.empty()) return true;
    for (std::size_t s = 0; s + part.size() <= whole.size(); ++s) {
        if (std::equal(part.begin(), part.end(), whole.begin() + static_cast<long>(s))) return true;
    }
    return false;
}

}  // namespace

TEST(GenerateScene, Deterministic) {
    const auto a = generate_scene(spec(17));
    const auto b = generate_scene(spec(17));
    EXPECT_EQ(a.image, b.image);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_NE(generate_scene(spec(18)).labels, a.labels);
}

TEST(GenerateScene, SingleObjectTwoClasses) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto scene = generate_scene(spec(seed, 1, 2));
        const std::set<int> values(scene.labels.data().begin(), scene.labels.data().end());
        EXPECT_EQ(values, (std::set<int>{0, 1}));
    }
}

TEST(GenerateScene, EveryClassAppearsOften) {
    std::vector<int> scenes_with(4, 0);
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
        const auto scene = generate_scene(spec(seed, 2 + static_cast<int>(seed % 3)));
        const std::set<int> values(scene.labels.data().begin(), scene.labels.data().end());
        for (int c : values) ++scenes_with[static_cast<std::size_t>(c)];
    }
    for (int c = 1; c < 4; ++c) EXPECT_GE(scenes_with[static_cast<std::size_t>(c)], 25) << "class " << c;
}

TEST(GenerateScene, ImpossiblePlacementFails) {
    SceneSpec s = spec(1, 12);
    s.style.min_visible_area = 2000;
    s.style.max_retries = 3;
    EXPECT_THROW(generate_scene(s), GenerationError);
}

TEST(Scribbles, StayInsideTheirObjects) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto scene = generate_scene(spec(seed));
        const auto s = scribble_from_mask(scene.labels, seed);
        EXPECT_TRUE(audit_scribbles(scene.labels, s).empty()) << "seed " << seed;
    }
}

TEST(Scribbles, EveryLargeObjectAndBackgroundIsMarked) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto scene = generate_scene(spec(seed));
        const auto s = scribble_from_mask(scene.labels, seed);
        const auto regions = detail::label_regions(scene.labels);
        std::set<int> marked;
        for (const auto& st : s.strokes) {
            EXPECT_FALSE(st.pixels.empty());
            marked.insert(st.object_id);
        }
        for (const auto& r : regions) {
            if (r.pixels.size() >= 32) EXPECT_TRUE(marked.count(r.object_id)) << "seed " << seed << " object " << r.object_id;
        }
        EXPECT_TRUE(marked.count(0));
    }
}

TEST(Scribbles, CoverLessThanTenPercent) {
    std::size_t labeled = 0;
    std::size_t total = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto scene = generate_scene(spec(seed));
        labeled += scribble_from_mask(scene.labels, seed).labeled_pixels();
        total += scene.labels.size();
    }
    EXPECT_LT(static_cast<double>(labeled) / total, 0.10);
}

TEST(Scribbles, Deterministic) {
    const auto scene = generate_scene(spec(5));
    EXPECT_EQ(scribble_from_mask(scene.labels, 3), scribble_from_mask(scene.labels, 3));
}

TEST(Drop, IdentityAndCertainDrop) {
    const auto scene = generate_scene(spec(2));
    const auto s = scribble_from_mask(scene.labels, 2);
    EXPECT_EQ(drop_scribbles(s, 0.0, 9), s);
    const auto gone = drop_scribbles(s, 1.0, 9);
    EXPECT_TRUE(gone.strokes.empty());
    for (auto v : gone.labels.data()) EXPECT_EQ(v, kIgnoreLabel);
    EXPECT_THROW(drop_scribbles(s, 1.2, 9), std::invalid_argument);
}

TEST(Drop, HalfRateDropsHalfTheObjects) {
    int objects = 0;
    int dropped = 0;
    for (std::uint64_t seed = 0; objects < 1000; ++seed) {
        const auto scene = generate_scene(spec(seed, 4));
        const auto s = scribble_from_mask(scene.labels, seed);
        std::set<int> before;
        std::set<int> after;
        for (const auto& st : s.strokes) before.insert(st.object_id);
        for (const auto& st : drop_scribbles(s, 0.5, mix_seed(seed, 77)).strokes) after.insert(st.object_id);
        objects += static_cast<int>(before.size());
        dropped += static_cast<int>(before.size() - after.size());
    }
    EXPECT_NEAR(static_cast<double>(dropped) / objects, 0.5, 0.05);
}

TEST(Shrink, IdentityAndSpots) {
    const auto scene = generate_scene(spec(4));
    const auto s = scribble_from_mask(scene.labels, 4);
    EXPECT_EQ(shrink_scribbles(s, 0.0, 1), s);
    const auto spots = shrink_scribbles(s, 1.0, 1, ShrinkMode::exact);
    ASSERT_EQ(spots.strokes.size(), s.strokes.size());
    for (const auto& st : spots.strokes) EXPECT_EQ(st.pixels.size(), 1u);
    const auto uniform = shrink_scribbles(s, 1.0, 1);
    for (std::size_t k = 0; k < s.strokes.size(); ++k) {
        EXPECT_GE(uniform.strokes[k].pixels.size(), 1u);
        EXPECT_LE(uniform.strokes[k].pixels.size(), s.strokes[k].pixels.size());
    }
}

TEST(Shrink, KeepsCentralContiguousRun) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto scene = generate_scene(spec(seed));
        const auto s = scribble_from_mask(scene.labels, seed);
        for (double rate : {0.3, 0.7, 1.0}) {
            const auto out = shrink_scribbles(s, rate, seed);
            for (std::size_t k = 0; k < s.strokes.size(); ++k) {
                EXPECT_TRUE(is_subsequence_run(out.strokes[k].pixels, s.strokes[k].pixels));
                EXPECT_EQ(out.strokes[k].class_id, s.strokes[k].class_id);
            }
        }
    }
}

TEST(Corruption, NeverAddsPixelsOrChangesClasses) {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto scene = generate_scene(spec(seed % 200, 2 + static_cast<int>(seed % 3)));
        const auto s = scribble_from_mask(scene.labels, seed);
        const double rate = static_cast<double>(seed % 11) / 10.0;
        for (const auto& out : {drop_scribbles(s, rate, seed), shrink_scribbles(s, rate, seed),
                                shrink_scribbles(s, rate, seed, ShrinkMode::exact)}) {
            for (std::size_t i = 0; i < out.labels.size(); ++i) {
                if (out.labels.data()[i] == kIgnoreLabel) continue;
                ASSERT_EQ(out.labels.data()[i], s.labels.data()[i]) << "seed " << seed;
            }
        }
    }
}

TEST(Components, FallbackStrokesFollowConnectedScribbles) {
    LabelGrid g(6, 6, 1, kIgnoreLabel);
    g(0, 0) = 1;
    g(0, 1) = 1;
    g(4, 4) = 2;
    g(5, 4) = 2;
    g(3, 0) = 1;
    const auto s = strokes_from_components(g);
    EXPECT_EQ(s.strokes.size(), 3u);
    EXPECT_EQ(s.labels, g);
}
