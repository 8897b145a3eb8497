#pragma once

// Training configuration: a single JSON document validated against the
// defaults (unknown keys are rejected) plus flat key=value overrides.

#include "scribbleseg/boundaries.hpp"
#include "scribbleseg/io.hpp"
#include "scribbleseg/losses.hpp"
#include "scribbleseg/segnet.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace scribbleseg {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class TransformMode { flip, translation, random, none };
enum class SsLocation { none, f_pre, f_post, eigenspace };

struct Ablation {
    bool use_entropy = true;
    bool use_boundary = true;
    bool use_random_walk = true;
    SsLocation ss_location = SsLocation::eigenspace;
};

struct Augmentation {
    bool scale = false;   // 0.5 - 2
    bool rotate = false;  // +-10 degrees
    bool blur = false;
    bool flip = true;
};

struct TrainConfig {
    int epochs = 24;
    int batch_size = 8;
    double learning_rate = 0.02;
    double lr_power = 0.9;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    LossWeights weights{};
    TransformMode transform_mode = TransformMode::random;
    Ablation ablation{};
    std::uint64_t seed = 0;
    std::string corpus;
    std::string train_split = "train";
    std::string val_split = "val";
    Augmentation augment{};
    int crop = 64;
    BackboneSpec backbone{};
    double gram_scale = 1.0;
    SlicParams slic{};
    double mask_threshold = 0.25;
    int max_translation = 0;  // grid cells; 0 selects ceil(0.25 * min(M, N))
    bool eval_each_epoch = true;

    void validate() const {
        if (epochs < 0) throw ConfigError("epochs must be non-negative");
        if (batch_size < 1) throw ConfigError("batch_size must be positive");
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
        if (!(lr_power > 0.0)) throw ConfigError("lr_power must be positive");
        if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
        if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
        try {
            weights.validate();
            backbone.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        if (crop < backbone.stride || crop % backbone.stride != 0) {
            throw ConfigError("crop size " + std::to_string(crop) + " is not divisible by stride " +
                              std::to_string(backbone.stride));
        }
        if (mask_threshold < 0.0 || mask_threshold > 1.0) throw ConfigError("mask_threshold must lie in [0, 1]");
        if (max_translation < 0) throw ConfigError("max_translation must be non-negative");
    }

    int warmup_epochs() const {
        return static_cast<int>(std::lround(weights.warmup_fraction * static_cast<double>(epochs)));
    }
};

namespace detail {

template <typename E>
struct EnumNames;

template <>
struct EnumNames<TransformMode> {
    static constexpr std::array<std::pair<TransformMode, const char*>, 4> kValues{{
        {TransformMode::flip, "flip"},
        {TransformMode::translation, "translation"},
        {TransformMode::random, "random"},
        {TransformMode::none, "none"},
    }};
};

template <>
struct EnumNames<SsLocation> {
    static constexpr std::array<std::pair<SsLocation, const char*>, 4> kValues{{
        {SsLocation::none, "none"},
        {SsLocation::f_pre, "f_pre"},
        {SsLocation::f_post, "f_post"},
        {SsLocation::eigenspace, "eigenspace"},
    }};
};

template <typename E>
std::string enum_name(E v) {
    for (const auto& [value, name] : EnumNames<E>::kValues) {
        if (value == v) return name;
    }
    throw ConfigError("unnamed enum value");
}

template <typename E>
E enum_from(const std::string& s, const char* what) {
    for (const auto& [value, name] : EnumNames<E>::kValues) {
        if (s == name) return value;
    }
    throw ConfigError(std::string("invalid ") + what + " '" + s + "'");
}

/// Overlays `user` onto `base`; every key in `user` must already exist in `base`.
inline void merge_strict(nlohmann::json& base, const nlohmann::json& user, const std::string& prefix = "") {
    if (!user.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
    for (const auto& [key, value] : user.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
        if (base.at(key).is_object()) {
            merge_strict(base.at(key), value, path);
        } else {
            const auto& current = base.at(key);
            const bool compatible = (current.is_number() && value.is_number()) ||
                                    (current.is_boolean() && value.is_boolean()) ||
                                    (current.is_string() && value.is_string());
            if (!compatible) throw ConfigError("config key '" + path + "' has the wrong type");
            base[key] = value;
        }
    }
}

}  // namespace detail

inline nlohmann::json to_json(const TrainConfig& c) {
    return {
        {"epochs", c.epochs},
        {"batch_size", c.batch_size},
        {"learning_rate", c.learning_rate},
        {"lr_power", c.lr_power},
        {"momentum", c.momentum},
        {"weight_decay", c.weight_decay},
        {"weights",
         {{"omega1", c.weights.omega1},
          {"omega2", c.weights.omega2},
          {"gamma", c.weights.gamma},
          {"warmup_fraction", c.weights.warmup_fraction}}},
        {"transform_mode", detail::enum_name(c.transform_mode)},
        {"ablation",
         {{"use_entropy", c.ablation.use_entropy},
          {"use_boundary", c.ablation.use_boundary},
          {"use_random_walk", c.ablation.use_random_walk},
          {"ss_location", detail::enum_name(c.ablation.ss_location)}}},
        {"seed", c.seed},
        {"corpus", c.corpus},
        {"train_split", c.train_split},
        {"val_split", c.val_split},
        {"augment",
         {{"scale", c.augment.scale}, {"rotate", c.augment.rotate}, {"blur", c.augment.blur}, {"flip", c.augment.flip}}},
        {"crop", c.crop},
        {"backbone", {{"stride", c.backbone.stride}, {"channels", c.backbone.channels}, {"depth", c.backbone.depth}, {"feature_gain", c.backbone.feature_gain}}},
        {"gram_scale", c.gram_scale},
        {"slic",
         {{"n_segments", c.slic.n_segments},
          {"compactness", c.slic.compactness},
          {"max_iters", c.slic.max_iters},
          {"dilation", c.slic.dilation}}},
        {"mask_threshold", c.mask_threshold},
        {"max_translation", c.max_translation},
        {"eval_each_epoch", c.eval_each_epoch},
    };
}

inline TrainConfig train_config_from_json(const nlohmann::json& user) {
    nlohmann::json j = to_json(TrainConfig{});
    detail::merge_strict(j, user);
    TrainConfig c;
    c.epochs = j.at("epochs");
    c.batch_size = j.at("batch_size");
    c.learning_rate = j.at("learning_rate");
    c.lr_power = j.at("lr_power");
    c.momentum = j.at("momentum");
    c.weight_decay = j.at("weight_decay");
    c.weights.omega1 = j.at("weights").at("omega1");
    c.weights.omega2 = j.at("weights").at("omega2");
    c.weights.gamma = j.at("weights").at("gamma");
    c.weights.warmup_fraction = j.at("weights").at("warmup_fraction");
    c.transform_mode = detail::enum_from<TransformMode>(j.at("transform_mode"), "transform_mode");
    c.ablation.use_entropy = j.at("ablation").at("use_entropy");
    c.ablation.use_boundary = j.at("ablation").at("use_boundary");
    c.ablation.use_random_walk = j.at("ablation").at("use_random_walk");
    c.ablation.ss_location = detail::enum_from<SsLocation>(j.at("ablation").at("ss_location"), "ss_location");
    c.seed = j.at("seed");
    c.corpus = j.at("corpus");
    c.train_split = j.at("train_split");
    c.val_split = j.at("val_split");
    c.augment.scale = j.at("augment").at("scale");
    c.augment.rotate = j.at("augment").at("rotate");
    c.augment.blur = j.at("augment").at("blur");
    c.augment.flip = j.at("augment").at("flip");
    c.crop = j.at("crop");
    c.backbone.stride = j.at("backbone").at("stride");
    c.backbone.channels = j.at("backbone").at("channels");
    c.backbone.depth = j.at("backbone").at("depth");
    c.backbone.feature_gain = j.at("backbone").at("feature_gain");
    c.gram_scale = j.at("gram_scale");
    c.slic.n_segments = j.at("slic").at("n_segments");
    c.slic.compactness = j.at("slic").at("compactness");
    c.slic.max_iters = j.at("slic").at("max_iters");
    c.slic.dilation = j.at("slic").at("dilation");
    c.mask_threshold = j.at("mask_threshold");
    c.max_translation = j.at("max_translation");
    c.eval_each_epoch = j.at("eval_each_epoch");
    c.validate();
    return c;
}

/// Applies "a.b.c=value" overrides. Values parse as JSON when possible,
/// otherwise as strings; the key must already exist.
inline nlohmann::json apply_overrides(nlohmann::json j, const std::vector<std::string>& overrides) {
    for (const auto& item : overrides) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + item + "' is not key=value");
        const std::string key = item.substr(0, eq);
        const std::string raw = item.substr(eq + 1);
        nlohmann::json value;
        try {
            value = nlohmann::json::parse(raw);
        } catch (const nlohmann::json::parse_error&) {
            value = raw;
        }
        nlohmann::json* node = &j;
        std::size_t start = 0;
        while (true) {
            const auto dot = key.find('.', start);
            const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + key + "'");
            node = &(*node)[part];
            if (dot == std::string::npos) break;
            start = dot + 1;
        }
        *node = value;
    }
    return j;
}

/// Loads a config file (or defaults when `path` is empty) and applies overrides.
inline TrainConfig load_train_config(const std::string& path, const std::vector<std::string>& overrides) {
    nlohmann::json j = to_json(TrainConfig{});
    if (!path.empty()) {
        nlohmann::json user;
        try {
            user = nlohmann::json::parse(read_text(path));
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
        detail::merge_strict(j, user);
    }
    j = apply_overrides(std::move(j), overrides);
    return train_config_from_json(j);
}

inline std::string config_hash(const TrainConfig& c) { return Fnv1a().update(to_json(c).dump()).hex(); }

}  // namespace scribbleseg
