#pragma once

// Two-stage optimization, mIoU evaluation and the analysis protocols
// (entropy maps, eigenvector maps, variation table).

#include "scribbleseg/augment.hpp"
#include "scribbleseg/boundaries.hpp"
#include "scribbleseg/config.hpp"
#include "scribbleseg/corpus.hpp"
#include "scribbleseg/gridtransform.hpp"
#include "scribbleseg/losses.hpp"
#include "scribbleseg/segnet.hpp"
#include "scribbleseg/spectral.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace scribbleseg {

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& what, nlohmann::json snapshot)
        : std::runtime_error(what), snapshot_(std::move(snapshot)) {}
    const nlohmann::json& snapshot() const noexcept { return snapshot_; }

private:
    nlohmann::json snapshot_;
};

// ---------------------------------------------------------------------------
// Evaluation

struct EvalReport {
    std::vector<double> per_class_iou;
    std::vector<bool> class_present;  // class appears in ground truth or prediction
    double miou = 0.0;
    int n_images = 0;
    long counted_pixels = 0;
    bool valid = true;  // false when every pixel was ignore-labeled
};

/// Accumulates a confusion matrix over images; argmax ties go to the lowest class.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int classes) : classes_(classes), counts_(static_cast<std::size_t>(classes * classes), 0) {}

    void add(const LabelGrid& truth, const LabelGrid& predicted) {
        if (!truth.same_shape(predicted)) throw std::invalid_argument("prediction and label map differ in shape");
        for (std::size_t i = 0; i < truth.size(); ++i) {
            const std::uint8_t t = truth.data()[i];
            if (t == kIgnoreLabel) continue;
            if (t >= classes_) throw std::invalid_argument("label exceeds class count");
            ++counts_[static_cast<std::size_t>(t * classes_ + predicted.data()[i])];
            ++counted_;
        }
        ++images_;
    }

    EvalReport report() const {
        EvalReport r;
        r.n_images = images_;
        r.counted_pixels = counted_;
        r.valid = counted_ > 0;
        r.per_class_iou.assign(static_cast<std::size_t>(classes_), 0.0);
        r.class_present.assign(static_cast<std::size_t>(classes_), false);
        int present = 0;
        double sum = 0.0;
        for (int c = 0; c < classes_; ++c) {
            long tp = at(c, c);
            long fp = 0;
            long fn = 0;
            for (int o = 0; o < classes_; ++o) {
                if (o == c) continue;
                fp += at(o, c);
                fn += at(c, o);
            }
            const long denom = tp + fp + fn;
            if (denom == 0) continue;
            r.per_class_iou[static_cast<std::size_t>(c)] = static_cast<double>(tp) / static_cast<double>(denom);
            r.class_present[static_cast<std::size_t>(c)] = true;
            sum += r.per_class_iou[static_cast<std::size_t>(c)];
            ++present;
        }
        r.miou = present > 0 ? sum / present : 0.0;
        return r;
    }

private:
    long at(int truth, int pred) const { return counts_[static_cast<std::size_t>(truth * classes_ + pred)]; }
    int classes_;
    std::vector<long> counts_;
    long counted_ = 0;
    int images_ = 0;
};

inline LabelGrid argmax_labels(const Prediction& pred) {
    LabelGrid out(pred.h, pred.w, 1, 0);
    for (Eigen::Index r = 0; r < pred.probs.rows(); ++r) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < pred.probs.cols(); ++c) {
            if (pred.probs(r, c) > pred.probs(r, best)) best = c;
        }
        out.data()[static_cast<std::size_t>(r)] = static_cast<std::uint8_t>(best);
    }
    return out;
}

inline EvalReport evaluate(const SegNet& net, const std::vector<Sample>& samples) {
    if (samples.empty()) throw std::invalid_argument("cannot evaluate an empty split");
    ConfusionMatrix cm(net.classes());
    for (const auto& s : samples) cm.add(s.labels, argmax_labels(net.forward(s.image).pred));
    return cm.report();
}

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json present = nlohmann::json::array();
    for (bool b : r.class_present) present.push_back(b);
    return {{"miou", r.miou},
            {"per_class_iou", r.per_class_iou},
            {"class_present", present},
            {"n_images", r.n_images},
            {"counted_pixels", r.counted_pixels},
            {"valid", r.valid}};
}

inline std::string to_csv(const EvalReport& r) {
    std::string csv = "class,iou,present\n";
    for (std::size_t c = 0; c < r.per_class_iou.size(); ++c) {
        csv += std::to_string(c) + "," + std::to_string(r.per_class_iou[c]) + "," + (r.class_present[c] ? "1" : "0") + "\n";
    }
    csv += "mean," + std::to_string(r.miou) + ",\n";
    return csv;
}

// ---------------------------------------------------------------------------
// Analysis

/// Per-pixel entropy of the upsampled prediction.
inline Grid<double> entropy_map(const SegNet& net, const Image& image) {
    return entropy_per_pixel(net.forward(image).pred);
}

struct VariationReport {
    double f_pre = 0.0;  // mean relative variation, percent
    double f_post = 0.0;
    double p = 0.0;
    int samples = 0;
};

inline double relative_variation(const RowMatrix& moved, const RowMatrix& reference) {
    const double denom = reference.norm();
    return denom > 0.0 ? (moved - reference).norm() / denom : 0.0;
}

/// rel(q) = ||T(q(x)) - q(t(x))||_F / ||q(t(x))||_F averaged over samples, in percent.
inline VariationReport variation_report(const SegNet& net, const std::vector<Sample>& samples, const TransformSpec& phi) {
    VariationReport out;
    if (samples.empty()) return out;
    const TransformSpec grid_phi = scale_to_grid(phi, net.stride());
    for (const auto& s : samples) {
        const ForwardTrace a = net.forward(s.image);
        const ForwardTrace b = net.forward(apply_spatial(s.image, phi));
        const int m = a.f_pre.m;
        const int n = a.f_pre.n;
        out.f_pre += relative_variation(apply_spatial_rows(a.f_pre.data, grid_phi, m, n), b.f_pre.data);
        out.f_post += relative_variation(apply_spatial_rows(a.f_post.data, grid_phi, m, n), b.f_post.data);
        const TransitionMatrix pa = a.p.p.size() > 0 ? a.p : compute_transition(a.f_pre, net.head().gram_scale);
        const TransitionMatrix pb = b.p.p.size() > 0 ? b.p : compute_transition(b.f_pre, net.head().gram_scale);
        const auto cm = build_computing_matrices(grid_phi, m, n);
        out.p += relative_variation(apply_transform_to_transition(pa, cm).p, pb.p);
        ++out.samples;
    }
    const double scale = 100.0 / out.samples;
    out.f_pre *= scale;
    out.f_post *= scale;
    out.p *= scale;
    return out;
}

// ---------------------------------------------------------------------------
// Training

struct EpochMetrics {
    int epoch = 0;
    Stage stage = Stage::warmup;
    double partial_ce = 0.0;
    double entropy = 0.0;
    std::optional<double> self_supervision;
    double total = 0.0;
    double alpha = 0.0;
    double learning_rate = 0.0;
    std::optional<double> val_miou;
    double wall_time = 0.0;
};

inline nlohmann::json to_json(const EpochMetrics& m) {
    nlohmann::json j{{"epoch", m.epoch},
                     {"stage", m.stage == Stage::warmup ? "warmup" : "full"},
                     {"partial_ce", m.partial_ce},
                     {"entropy", m.entropy},
                     {"total", m.total},
                     {"alpha", m.alpha},
                     {"lr", m.learning_rate},
                     {"wall_time", m.wall_time}};
    if (m.self_supervision) j["self_supervision"] = *m.self_supervision;
    if (m.val_miou) j["val_miou"] = *m.val_miou;
    return j;
}

struct TrainResult {
    SegNet net;
    std::vector<EpochMetrics> metrics;
    std::optional<EvalReport> final_eval;
};

struct TrainOptions {
    bool resume = false;
    int stop_after_epoch = -1;  // simulate an interrupted run (testing); -1 runs to completion
    std::function<void(const EpochMetrics&)> on_epoch;
};

/// Per-sample data prepared once before training.
struct TrainItem {
    Image image;
    LabelGrid scribbles;
    LabelGrid boundary;  // image resolution, 1 = boundary
};

namespace detail {

inline bool ss_active(const TrainConfig& cfg) {
    return cfg.ablation.ss_location != SsLocation::none && cfg.weights.omega2 > 0.0 &&
           cfg.transform_mode != TransformMode::none;
}

inline TransformSpec draw_transform(const TrainConfig& cfg, int grid_m, int grid_n, int stride, std::mt19937_64& rng) {
    TransformMode mode = cfg.transform_mode;
    if (mode == TransformMode::random) {
        mode = std::uniform_int_distribution<int>(0, 1)(rng) == 0 ? TransformMode::flip : TransformMode::translation;
    }
    if (mode == TransformMode::flip) return TransformSpec::flip();
    const int limit_default = static_cast<int>(std::ceil(0.25 * std::min(grid_m, grid_n)));
    int limit = cfg.max_translation > 0 ? cfg.max_translation : limit_default;
    limit = std::min({limit, grid_m - 1, grid_n - 1});
    std::uniform_int_distribution<int> shift(-limit, limit);
    int dx = 0;
    int dy = 0;
    while (limit > 0 && dx == 0 && dy == 0) {
        dx = shift(rng);
        dy = shift(rng);
    }
    return TransformSpec::translate(dx * stride, dy * stride);
}

struct SampleLoss {
    double ce = 0.0;
    double entropy = 0.0;
    std::optional<double> ss;
    double total = 0.0;
};

/// Loss and gradient for one (augmented) sample; gradient is accumulated into `grad`.
inline SampleLoss sample_step(const SegNet& net, const TrainConfig& cfg, const TrainItem& item, Stage stage,
                              std::mt19937_64& rng, nn::VecRef grad) {
    SampleLoss out;
    const ForwardCache cx = net.forward_cached(item.image);
    const ForwardTrace& tx = cx.trace;

    HeadGrad hg;
    const LossGrad ce = partial_cross_entropy_grad(tx.pred, item.scribbles);
    out.ce = ce.value;
    hg.pred = ce.grad;

    if (cfg.ablation.use_entropy) {
        LossGrad ent;
        if (cfg.ablation.use_boundary) {
            const LabelGrid coarse = reduce_mask(BoundaryMask{item.boundary}, net.stride(), cfg.mask_threshold);
            ent = entropy_soft_grad(tx.coarse, coarse);
        } else {
            ent = entropy_full_grad(tx.coarse);
        }
        out.entropy = ent.value;
        hg.coarse = cfg.weights.omega1 * ent.grad;
    }

    const bool with_ss = stage == Stage::full && ss_active(cfg);
    std::optional<ForwardCache> ctx;
    HeadGrad hg_t;
    if (with_ss) {
        const TransformSpec phi = draw_transform(cfg, tx.f_pre.m, tx.f_pre.n, net.stride(), rng);
        const TransformSpec grid_phi = scale_to_grid(phi, net.stride());
        ctx = net.forward_cached(apply_spatial(item.image, phi));
        const ForwardTrace& tt = ctx->trace;
        const double w2 = cfg.weights.omega2;
        switch (cfg.ablation.ss_location) {
            case SsLocation::eigenspace: {
                const auto cm = build_computing_matrices(grid_phi, tx.f_pre.m, tx.f_pre.n);
                const PairLossGrad ss = soft_eigenspace_ss_grad(tx.p, tt.p, cm, cfg.weights.gamma);
                out.ss = ss.value;
                hg.p = w2 * ss.grad_a;
                hg_t.p = w2 * ss.grad_b;
                break;
            }
            case SsLocation::f_pre: {
                const PairLossGrad ss = feature_ss_grad(tx.f_pre, tt.f_pre, grid_phi);
                out.ss = ss.value;
                hg.f_pre = w2 * ss.grad_a;
                hg_t.f_pre = w2 * ss.grad_b;
                break;
            }
            case SsLocation::f_post: {
                const PairLossGrad ss = feature_ss_grad(tx.f_post, tt.f_post, grid_phi);
                out.ss = ss.value;
                hg.f_post = w2 * ss.grad_a;
                hg_t.f_post = w2 * ss.grad_b;
                break;
            }
            case SsLocation::none:
                break;
        }
    }
    out.total = total_loss(out.ce, out.entropy, out.ss.value_or(0.0), cfg.weights, stage);
    net.backward(cx, hg, grad);
    if (ctx) net.backward(*ctx, hg_t, grad);
    return out;
}

}  // namespace detail

/// Builds the per-sample training items (boundary masks come from SLIC on the
/// original image and are cached under `cache_dir` when it is non-empty).
inline std::vector<TrainItem> prepare_items(const std::vector<Sample>& samples, const TrainConfig& cfg,
                                            const std::filesystem::path& cache_dir) {
    std::vector<TrainItem> items;
    items.reserve(samples.size());
    for (const auto& s : samples) {
        TrainItem item{s.image, s.scribbles.labels, LabelGrid(s.image.height(), s.image.width(), 1, 0)};
        if (cfg.ablation.use_entropy && cfg.ablation.use_boundary) {
            item.boundary = cache_dir.empty() ? compute_boundary(s.image, cfg.slic).mask
                                              : cached_boundary(cache_dir, s.image, cfg.slic).mask;
        }
        items.push_back(std::move(item));
    }
    return items;
}

inline std::uint64_t sample_stream(std::uint64_t seed, int epoch, std::size_t index) {
    return mix_seed(mix_seed(seed, static_cast<std::uint64_t>(epoch) + 1000003ULL), index);
}

/// Runs the two-stage schedule. Writes `metrics.jsonl`, `checkpoint_last.bin`
/// (with optimizer state, every epoch) and `checkpoint.bin` under `out_dir`.
inline TrainResult train(const TrainConfig& cfg, const std::vector<Sample>& train_samples,
                         const std::vector<Sample>& val_samples, int classes, const std::filesystem::path& out_dir,
                         const TrainOptions& options = {}) {
    cfg.validate();
    ensure_directory(out_dir);
    const std::string hash = config_hash(cfg);

    HeadOptions head{cfg.ablation.use_random_walk, cfg.gram_scale};
    SegNet net(cfg.backbone, classes, head, mix_seed(cfg.seed, 0xC0FFEE));
    if (cfg.ablation.ss_location == SsLocation::eigenspace) net.set_always_compute_transition(true);
    if (!cfg.ablation.use_random_walk) net.set_alpha(0.0);

    Eigen::VectorXd velocity = Eigen::VectorXd::Zero(net.param_count());
    int start_epoch = 0;
    const auto log_path = out_dir / "metrics.jsonl";
    const auto last_path = out_dir / "checkpoint_last.bin";
    std::vector<EpochMetrics> history;

    if (options.resume && std::filesystem::exists(last_path)) {
        const Checkpoint ck = load_checkpoint(last_path);
        if (ck.config_hash != hash) throw ConfigError("cannot resume: checkpoint was produced by a different config");
        net.params() = ck.params;
        if (ck.momentum.size() == velocity.size()) velocity = ck.momentum;
        start_epoch = ck.epoch;
        // keep only log lines for completed epochs
        std::vector<std::string> kept;
        if (std::filesystem::exists(log_path)) {
            std::ifstream in(log_path);
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                if (nlohmann::json::parse(line).at("epoch").get<int>() < start_epoch) kept.push_back(line);
            }
        }
        std::ofstream out(log_path, std::ios::trunc);
        for (const auto& l : kept) out << l << '\n';
    } else {
        std::ofstream truncate(log_path, std::ios::trunc);
        if (!truncate) throw IoError(log_path, "cannot create metrics log");
    }

    const std::vector<TrainItem> items = prepare_items(train_samples, cfg, out_dir / "boundary_cache");
    if (items.empty() && cfg.epochs > 0) throw std::invalid_argument("training split is empty");
    const int warmup = cfg.warmup_epochs();
    const std::size_t batches_per_epoch = items.empty() ? 0 : (items.size() + cfg.batch_size - 1) / cfg.batch_size;
    const double total_iters = static_cast<double>(batches_per_epoch) * cfg.epochs;

    // decay applies to weights, not to alpha
    Eigen::VectorXd decay_mask = Eigen::VectorXd::Ones(net.param_count());
    decay_mask(net.alpha_index()) = 0.0;
    if (!cfg.ablation.use_random_walk) decay_mask(net.alpha_index()) = 0.0;

    // writes nan_snapshot.json and aborts
    auto diverged = [&](int epoch, std::size_t idx, const TrainItem* input, const detail::SampleLoss& loss,
                        const std::string& what) {
        const Image& img = input != nullptr ? input->image : items[idx].image;
        nlohmann::json snapshot{{"epoch", epoch},
                                {"sample", train_samples[idx].id},
                                {"input_hash", Fnv1a().update(quantize_image(img).data().data(), img.size()).hex()},
                                {"partial_ce", loss.ce},
                                {"entropy", loss.entropy},
                                {"self_supervision", loss.ss ? nlohmann::json(*loss.ss) : nlohmann::json()},
                                {"alpha", net.alpha()},
                                {"config_hash", hash}};
        write_text(out_dir / "nan_snapshot.json", snapshot.dump(2));
        throw TrainingDiverged(what + " at epoch " + std::to_string(epoch) + " sample " + train_samples[idx].id,
                               snapshot);
    };

    const auto clock_start = std::chrono::steady_clock::now();
    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const Stage stage = epoch < warmup ? Stage::warmup : Stage::full;
        std::vector<std::size_t> order(items.size());
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        EpochMetrics m;
        m.epoch = epoch;
        m.stage = stage;
        double ss_sum = 0.0;
        int ss_count = 0;
        double lr = cfg.learning_rate;
        for (std::size_t b = 0; b < batches_per_epoch; ++b) {
            const double iter = static_cast<double>(epoch) * batches_per_epoch + b;
            lr = cfg.learning_rate * std::pow(1.0 - iter / total_iters, cfg.lr_power);
            Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.param_count());
            const std::size_t begin = b * cfg.batch_size;
            const std::size_t end = std::min(items.size(), begin + cfg.batch_size);
            detail::SampleLoss last;
            for (std::size_t i = begin; i < end; ++i) {
                const std::size_t idx = order[i];
                std::mt19937_64 rng(sample_stream(cfg.seed, epoch, idx));
                const TrainItem aug = augment_item(items[idx], cfg.augment, cfg.crop, rng);
                detail::SampleLoss loss;
                try {
                    loss = detail::sample_step(net, cfg, aug, stage, rng, grad);
                } catch (const NonFiniteError& e) {
                    diverged(epoch, idx, &aug, last, e.what());
                }
                if (!std::isfinite(loss.total) || !grad.allFinite()) {
                    diverged(epoch, idx, &aug, loss, "non-finite loss");
                }
                last = loss;
                m.partial_ce += loss.ce;
                m.entropy += loss.entropy;
                m.total += loss.total;
                if (loss.ss) {
                    ss_sum += *loss.ss;
                    ++ss_count;
                }
            }
            grad /= static_cast<double>(end - begin);
            grad += cfg.weight_decay * net.params().cwiseProduct(decay_mask);
            if (!cfg.ablation.use_random_walk) grad(net.alpha_index()) = 0.0;
            velocity = cfg.momentum * velocity + grad;
            net.params() -= lr * velocity;
            if (!net.params().allFinite()) diverged(epoch, order[end - 1], nullptr, last, "non-finite parameters after update");
        }
        const double n = static_cast<double>(items.size());
        m.partial_ce /= n;
        m.entropy /= n;
        m.total /= n;
        if (ss_count > 0) m.self_supervision = ss_sum / ss_count;
        m.alpha = net.alpha();
        m.learning_rate = lr;
        if (cfg.eval_each_epoch && !val_samples.empty()) m.val_miou = evaluate(net, val_samples).miou;
        m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();

        {
            std::ofstream log(log_path, std::ios::app);
            log << to_json(m).dump() << '\n';
            log.flush();
        }
        Checkpoint last = make_checkpoint(net, hash, epoch + 1);
        last.momentum = velocity;
        save_checkpoint(last_path, last);
        history.push_back(m);
        if (options.on_epoch) options.on_epoch(m);
        if (options.stop_after_epoch >= 0 && epoch >= options.stop_after_epoch) {
            return TrainResult{std::move(net), std::move(history), std::nullopt};
        }
    }

    Checkpoint final_ck = make_checkpoint(net, hash, cfg.epochs);
    final_ck.extra = {{"config", to_json(cfg)}};
    save_checkpoint(out_dir / "checkpoint.bin", final_ck);
    TrainResult result{std::move(net), std::move(history), std::nullopt};
    if (!val_samples.empty()) result.final_eval = evaluate(result.net, val_samples);
    return result;
}

/// Reads metrics.jsonl back (one object per line).
inline std::vector<nlohmann::json> read_metrics_log(const std::filesystem::path& path) {
    std::vector<nlohmann::json> out;
    std::ifstream in(path);
    if (!in) throw IoError(path, "cannot open metrics log");
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(nlohmann::json::parse(line));
    }
    return out;
}

}  // namespace scribbleseg
