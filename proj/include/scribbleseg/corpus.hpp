#pragma once

// On-disk corpus layout:
//   images/{id}.png     8-bit RGB
//   labels/{id}.png     8-bit gray, class index, 255 ignore
//   scribbles/{id}.png  same encoding as labels
//   strokes/{id}.json   ordered stroke pixels with class / object ids
//   manifest.json       splits, class count, sizes, seeds, corruption record

#include "scribbleseg/io.hpp"
#include "scribbleseg/scribbledata.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace scribbleseg {

namespace fs = std::filesystem;

struct CorpusConfig {
    std::uint64_t seed = 1;
    int train = 500;
    int val = 100;
    int height = 64;
    int width = 64;
    int classes = 4;
    int min_objects = 2;
    int max_objects = 4;
    SceneStyle style{};

    void validate() const {
        if (train < 0 || val < 0) throw std::invalid_argument("split sizes must be non-negative");
        if (min_objects < 1 || max_objects < min_objects) throw std::invalid_argument("invalid object count range");
        SceneSpec{seed, min_objects, classes, height, width, style}.validate();
    }
};

inline nlohmann::json to_json(const CorpusConfig& c) {
    return {{"seed", c.seed},
            {"train", c.train},
            {"val", c.val},
            {"height", c.height},
            {"width", c.width},
            {"classes", c.classes},
            {"min_objects", c.min_objects},
            {"max_objects", c.max_objects},
            {"style",
             {{"noise_sigma", c.style.noise_sigma},
              {"color_jitter", c.style.color_jitter},
              {"texture_amplitude", c.style.texture_amplitude},
              {"object_texture", c.style.object_texture},
              {"rim_fade", c.style.rim_fade},
              {"min_visible_area", c.style.min_visible_area},
              {"max_retries", c.style.max_retries}}}};
}

/// Rejects unknown keys; missing keys keep their defaults.
inline CorpusConfig corpus_config_from_json(const nlohmann::json& j) {
    CorpusConfig c;
    static const std::vector<std::string> kKeys{"seed", "train", "val", "height", "width", "classes",
                                                "min_objects", "max_objects", "style"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
            throw std::invalid_argument("unknown corpus config key '" + key + "'");
        }
    }
    c.seed = j.value("seed", c.seed);
    c.train = j.value("train", c.train);
    c.val = j.value("val", c.val);
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.classes = j.value("classes", c.classes);
    c.min_objects = j.value("min_objects", c.min_objects);
    c.max_objects = j.value("max_objects", c.max_objects);
    if (j.contains("style")) {
        const auto& s = j.at("style");
        static const std::vector<std::string> kStyle{"noise_sigma",      "color_jitter",     "texture_amplitude",
                                                     "object_texture",   "rim_fade",         "min_visible_area",
                                                     "max_retries"};
        for (const auto& [key, _] : s.items()) {
            if (std::find(kStyle.begin(), kStyle.end(), key) == kStyle.end()) {
                throw std::invalid_argument("unknown corpus style key '" + key + "'");
            }
        }
        c.style.noise_sigma = s.value("noise_sigma", c.style.noise_sigma);
        c.style.color_jitter = s.value("color_jitter", c.style.color_jitter);
        c.style.texture_amplitude = s.value("texture_amplitude", c.style.texture_amplitude);
        c.style.object_texture = s.value("object_texture", c.style.object_texture);
        c.style.rim_fade = s.value("rim_fade", c.style.rim_fade);
        c.style.min_visible_area = s.value("min_visible_area", c.style.min_visible_area);
        c.style.max_retries = s.value("max_retries", c.style.max_retries);
    }
    c.validate();
    return c;
}

inline nlohmann::json strokes_to_json(const ScribbleMap& s) {
    nlohmann::json strokes = nlohmann::json::array();
    for (const auto& stroke : s.strokes) {
        nlohmann::json pixels = nlohmann::json::array();
        for (const auto& p : stroke.pixels) pixels.push_back({p.row, p.col});
        strokes.push_back({{"class", stroke.class_id}, {"object", stroke.object_id}, {"pixels", std::move(pixels)}});
    }
    return {{"height", s.labels.height()}, {"width", s.labels.width()}, {"strokes", std::move(strokes)}};
}

inline ScribbleMap strokes_from_json(const nlohmann::json& j) {
    ScribbleMap s{LabelGrid(j.at("height").get<int>(), j.at("width").get<int>(), 1, kIgnoreLabel), {}};
    for (const auto& js : j.at("strokes")) {
        Stroke stroke{js.at("class").get<int>(), js.at("object").get<int>(), {}};
        for (const auto& p : js.at("pixels")) stroke.pixels.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
        s.strokes.push_back(std::move(stroke));
    }
    detail::rebuild_labels(s);
    return s;
}

struct Sample {
    std::string id;
    Image image;
    LabelGrid labels;
    ScribbleMap scribbles;
    bool has_strokes = false;
};

inline std::string sample_id(const std::string& split, int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%05d", split.c_str(), index);
    return buf;
}

class Corpus {
public:
    explicit Corpus(fs::path root) : root_(std::move(root)) {
        const auto manifest_path = root_ / "manifest.json";
        if (!fs::exists(manifest_path)) throw IoError(manifest_path, "corpus manifest not found");
        manifest_ = nlohmann::json::parse(read_text(manifest_path));
        classes_ = manifest_.at("classes");
    }

    const fs::path& root() const noexcept { return root_; }
    const nlohmann::json& manifest() const noexcept { return manifest_; }
    int classes() const noexcept { return classes_; }

    std::vector<std::string> split(const std::string& name) const {
        const auto& splits = manifest_.at("splits");
        if (!splits.contains(name)) throw std::invalid_argument("corpus has no split '" + name + "'");
        return splits.at(name).get<std::vector<std::string>>();
    }

    Sample load(const std::string& id) const {
        Sample s;
        s.id = id;
        s.image = dequantize_image(read_png(root_ / "images" / (id + ".png"), 3));
        s.labels = read_png(root_ / "labels" / (id + ".png"), 1);
        const auto stroke_path = root_ / "strokes" / (id + ".json");
        if (fs::exists(stroke_path)) {
            s.scribbles = strokes_from_json(nlohmann::json::parse(read_text(stroke_path)));
            s.has_strokes = true;
        } else {
            s.scribbles = ScribbleMap{read_png(root_ / "scribbles" / (id + ".png"), 1), {}};
        }
        return s;
    }

    std::vector<Sample> load_split(const std::string& name) const {
        std::vector<Sample> out;
        for (const auto& id : split(name)) out.push_back(load(id));
        return out;
    }

private:
    fs::path root_;
    nlohmann::json manifest_;
    int classes_ = 0;
};

inline void write_sample(const fs::path& root, const Sample& s, bool with_image_and_labels = true) {
    if (with_image_and_labels) {
        write_png(root / "images" / (s.id + ".png"), quantize_image(s.image));
        write_png(root / "labels" / (s.id + ".png"), s.labels);
    }
    write_png(root / "scribbles" / (s.id + ".png"), s.scribbles.labels);
    if (s.has_strokes) write_text(root / "strokes" / (s.id + ".json"), strokes_to_json(s.scribbles).dump());
}

inline void prepare_corpus_dirs(const fs::path& root) {
    for (const char* sub : {"images", "labels", "scribbles", "strokes"}) ensure_directory(root / sub);
}

struct CorpusStats {
    int images = 0;
    double scribbled_fraction = 0.0;
    std::vector<long> class_pixels;
};

/// Generates a synthetic corpus into `root`. Sample seeds depend only on the
/// config seed, split name and index.
inline CorpusStats generate_corpus(const CorpusConfig& cfg, const fs::path& root) {
    cfg.validate();
    prepare_corpus_dirs(root);
    CorpusStats stats;
    stats.class_pixels.assign(static_cast<std::size_t>(cfg.classes), 0);
    long labeled = 0;
    long total = 0;
    nlohmann::json splits = nlohmann::json::object();
    nlohmann::json seeds = nlohmann::json::object();
    const std::vector<std::pair<std::string, int>> plan{{"train", cfg.train}, {"val", cfg.val}};
    for (std::size_t si = 0; si < plan.size(); ++si) {
        const auto& [name, count] = plan[si];
        nlohmann::json ids = nlohmann::json::array();
        for (int i = 0; i < count; ++i) {
            const std::uint64_t scene_seed = mix_seed(mix_seed(cfg.seed, si), static_cast<std::uint64_t>(i));
            const int span = cfg.max_objects - cfg.min_objects + 1;
            SceneSpec spec{scene_seed, cfg.min_objects + static_cast<int>(scene_seed % static_cast<std::uint64_t>(span)),
                           cfg.classes, cfg.height, cfg.width, cfg.style};
            const Scene scene = generate_scene(spec);
            Sample s;
            s.id = sample_id(name, i);
            s.image = scene.image;
            s.labels = scene.labels;
            s.scribbles = scribble_from_mask(scene.labels, mix_seed(scene_seed, 1));
            s.has_strokes = true;
            write_sample(root, s);
            ids.push_back(s.id);
            seeds[s.id] = scene_seed;
            labeled += static_cast<long>(s.scribbles.labeled_pixels());
            total += static_cast<long>(s.labels.size());
            for (auto v : s.labels.data()) {
                if (v < cfg.classes) ++stats.class_pixels[v];
            }
            ++stats.images;
        }
        splits[name] = std::move(ids);
    }
    stats.scribbled_fraction = total > 0 ? static_cast<double>(labeled) / total : 0.0;
    nlohmann::json manifest{{"format", "scribbleseg-corpus"},
                            {"version", 1},
                            {"classes", cfg.classes},
                            {"height", cfg.height},
                            {"width", cfg.width},
                            {"splits", std::move(splits)},
                            {"generation", {{"config", to_json(cfg)}, {"sample_seeds", std::move(seeds)}}},
                            {"corruption", nullptr}};
    write_text(root / "manifest.json", manifest.dump(2));
    return stats;
}

enum class CorruptionMode { drop, shrink };

struct CorruptionSpec {
    CorruptionMode mode = CorruptionMode::drop;
    double rate = 0.0;
    std::uint64_t seed = 0;
    ShrinkMode shrink_mode = ShrinkMode::uniform;
};

/// Writes a corrupted copy of `src` into `dst`: images and labels are copied,
/// scribbles and strokes are replaced, and the manifest records the corruption.
inline void corrupt_corpus(const Corpus& src, const fs::path& dst, const CorruptionSpec& spec) {
    if (fs::exists(dst) && fs::equivalent(src.root(), dst)) {
        throw std::invalid_argument("corruption target must differ from the source corpus");
    }
    prepare_corpus_dirs(dst);
    bool fallback = false;
    nlohmann::json manifest = src.manifest();
    for (const auto& [split, ids_json] : manifest.at("splits").items()) {
        for (const auto& id_json : ids_json) {
            const std::string id = id_json.get<std::string>();
            Sample s = src.load(id);
            if (!s.has_strokes) {
                s.scribbles = strokes_from_components(s.scribbles.labels);
                fallback = true;
            }
            const std::uint64_t sample_seed = mix_seed(spec.seed, Fnv1a().update(id).digest());
            s.scribbles = spec.mode == CorruptionMode::drop
                              ? drop_scribbles(s.scribbles, spec.rate, sample_seed)
                              : shrink_scribbles(s.scribbles, spec.rate, sample_seed, spec.shrink_mode);
            fs::copy_file(src.root() / "images" / (id + ".png"), dst / "images" / (id + ".png"),
                          fs::copy_options::overwrite_existing);
            fs::copy_file(src.root() / "labels" / (id + ".png"), dst / "labels" / (id + ".png"),
                          fs::copy_options::overwrite_existing);
            write_sample(dst, s, false);
        }
    }
    manifest["corruption"] = {{"mode", spec.mode == CorruptionMode::drop ? "drop" : "shrink"},
                              {"rate", spec.rate},
                              {"seed", spec.seed},
                              {"shrink_draw", spec.shrink_mode == ShrinkMode::exact ? "exact" : "uniform"},
                              {"source", fs::absolute(src.root()).lexically_normal().string()},
                              {"previous", src.manifest().at("corruption")},
                              {"fallback", fallback ? "connected_components" : "none"}};
    write_text(dst / "manifest.json", manifest.dump(2));
}

}  // namespace scribbleseg
