#pragma once

// Desk-scale segmentation network: encoder -> f^{L-1} -> similarity module
// (P) -> embedded random walk -> f^L -> 1x1 classifier -> softmax ->
// bilinear upsampling. All parameters, including alpha, live in one flat
// vector so optimizers and gradient checks can treat them uniformly.

#include "scribbleseg/grid.hpp"
#include "scribbleseg/gridtransform.hpp"
#include "scribbleseg/io.hpp"
#include "scribbleseg/losses.hpp"
#include "scribbleseg/nn.hpp"
#include "scribbleseg/transition.hpp"

#include <nlohmann/json.hpp>

#include <any>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace scribbleseg {

enum class BackboneKind { tiny_cnn, external };

struct BackboneSpec {
    BackboneKind kind = BackboneKind::tiny_cnn;
    int stride = 8;
    int channels = 64;  // K
    int depth = 3;
    double feature_gain = 1.0;  // initial scale of the last normalization layer

    /// Channel width per block, halving backwards from `channels`.
    std::vector<int> widths() const {
        std::vector<int> w(static_cast<std::size_t>(depth));
        for (int i = 0; i < depth; ++i) w[static_cast<std::size_t>(i)] = std::max(1, channels >> (depth - 1 - i));
        return w;
    }

    void validate() const {
        if (depth < 1) throw std::invalid_argument("backbone depth must be >= 1");
        if (kind == BackboneKind::tiny_cnn && stride != (1 << depth)) {
            throw std::invalid_argument("tiny_cnn stride must equal 2^depth (" + std::to_string(1 << depth) + ")");
        }
        if (channels < 1) throw std::invalid_argument("backbone channels must be >= 1");
    }
};

/// Feature extractor plug point: maps an image (HW x 3) to (M N) x K features.
class Encoder {
public:
    virtual ~Encoder() = default;
    virtual int stride() const = 0;
    virtual int channels() const = 0;
    virtual Eigen::Index param_count() const = 0;
    virtual void initialize(nn::VecRef params, std::mt19937_64& rng) const = 0;
    virtual RowMatrix forward(const RowMatrix& image, nn::Extent extent, nn::ConstVecRef params,
                              std::any* cache) const = 0;
    virtual void backward(const RowMatrix& grad_features, const std::any& cache, nn::ConstVecRef params,
                          nn::VecRef grad_params) const = 0;
};

/// Stride-2 conv -> single-group norm -> ReLU, repeated `depth` times.
class TinyCnn final : public Encoder {
public:
    explicit TinyCnn(const BackboneSpec& spec) : spec_(spec) {
        int cin = 3;
        for (int width : spec.widths()) {
            blocks_.push_back({nn::Conv3x3s2{cin, width}, nn::GroupNorm1{width}});
            cin = width;
        }
    }

    int stride() const override { return spec_.stride; }
    int channels() const override { return spec_.channels; }

    Eigen::Index param_count() const override {
        Eigen::Index n = 0;
        for (const auto& b : blocks_) n += b.conv.param_count() + b.norm.param_count();
        return n;
    }

    void initialize(nn::VecRef params, std::mt19937_64& rng) const override {
        Eigen::Index offset = 0;
        for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
            const auto& b = blocks_[bi];
            std::normal_distribution<double> he(0.0, std::sqrt(2.0 / (9.0 * b.conv.cin)));
            for (Eigen::Index i = 0; i < b.conv.weight_count(); ++i) params(offset + i) = he(rng);
            params.segment(offset + b.conv.weight_count(), b.conv.cout).setZero();
            offset += b.conv.param_count();
            params.segment(offset, b.norm.channels).setConstant(bi + 1 == blocks_.size() ? spec_.feature_gain : 1.0);
            params.segment(offset + b.norm.channels, b.norm.channels).setZero();
            offset += b.norm.param_count();
        }
    }

    struct BlockCache {
        nn::Extent in;
        RowMatrix col;
        nn::GroupNorm1::Cache norm;
        RowMatrix out;
    };
    using Cache = std::vector<BlockCache>;

    RowMatrix forward(const RowMatrix& image, nn::Extent extent, nn::ConstVecRef params,
                      std::any* cache) const override {
        Cache local;
        RowMatrix x = image;
        Eigen::Index offset = 0;
        for (const auto& b : blocks_) {
            BlockCache bc;
            bc.in = extent;
            const auto conv_params = params.segment(offset, b.conv.param_count());
            offset += b.conv.param_count();
            const auto norm_params = params.segment(offset, b.norm.param_count());
            offset += b.norm.param_count();
            RowMatrix y = b.conv.forward(x, extent, conv_params, bc.col);
            y = b.norm.forward(y, norm_params, bc.norm);
            x = nn::relu(y);
            extent = nn::Conv3x3s2::output_extent(extent);
            if (cache != nullptr) {
                bc.out = x;
                local.push_back(std::move(bc));
            }
        }
        if (cache != nullptr) *cache = std::move(local);
        return x;
    }

    void backward(const RowMatrix& grad_features, const std::any& cache, nn::ConstVecRef params,
                  nn::VecRef grad_params) const override {
        const auto& local = std::any_cast<const Cache&>(cache);
        std::vector<Eigen::Index> offsets;
        Eigen::Index offset = 0;
        for (const auto& b : blocks_) {
            offsets.push_back(offset);
            offset += b.conv.param_count() + b.norm.param_count();
        }
        RowMatrix grad = grad_features;
        for (std::size_t i = blocks_.size(); i-- > 0;) {
            const auto& b = blocks_[i];
            const auto& bc = local[i];
            const Eigen::Index conv_off = offsets[i];
            const Eigen::Index norm_off = conv_off + b.conv.param_count();
            grad = nn::relu_backward(bc.out, grad);
            grad = b.norm.backward(grad, bc.norm, params.segment(norm_off, b.norm.param_count()),
                                   grad_params.segment(norm_off, b.norm.param_count()));
            grad = b.conv.backward(grad, bc.col, bc.in, params.segment(conv_off, b.conv.param_count()),
                                   grad_params.segment(conv_off, b.conv.param_count()), i > 0);
        }
    }

private:
    struct Block {
        nn::Conv3x3s2 conv;
        nn::GroupNorm1 norm;
    };
    BackboneSpec spec_;
    std::vector<Block> blocks_;
};

struct HeadOptions {
    bool use_random_walk = true;
    double gram_scale = 1.0;  // 1 = plain softmax(F F^T)
};

struct ForwardTrace {
    FeatureMap f_pre;
    TransitionMatrix p;
    FeatureMap f_post;
    Prediction coarse;  // M x N class distributions
    Prediction pred;    // upsampled to H x W
    double alpha = 0.0;
};

/// Intermediates retained for the backward pass.
struct ForwardCache {
    ForwardTrace trace;
    std::any encoder;
    nn::Extent image;
};

/// Upstream gradients entering the head.
struct HeadGrad {
    RowMatrix coarse;  // dL/d(coarse probabilities), MN x C (may be empty)
    RowMatrix pred;    // dL/d(upsampled probabilities), HW x C (may be empty)
    RowMatrix p;       // extra dL/dP (self-supervision), MN x MN (may be empty)
    RowMatrix f_pre;   // extra dL/df^{L-1} (may be empty)
    RowMatrix f_post;  // extra dL/df^L (may be empty)
};

class SegNet {
public:
    SegNet(BackboneSpec spec, int classes, HeadOptions head = {}, std::uint64_t seed = 0)
        : spec_(spec), classes_(classes), head_(head) {
        spec_.validate();
        if (spec_.kind != BackboneKind::tiny_cnn) {
            throw std::invalid_argument("external backbones must be supplied through the Encoder constructor");
        }
        if (classes < 2) throw std::invalid_argument("network needs at least two classes");
        encoder_ = std::make_shared<TinyCnn>(spec_);
        init(seed);
    }

    SegNet(std::shared_ptr<const Encoder> encoder, BackboneSpec spec, int classes, HeadOptions head = {},
           std::uint64_t seed = 0)
        : spec_(spec), classes_(classes), head_(head), encoder_(std::move(encoder)) {
        if (!encoder_) throw std::invalid_argument("encoder must not be null");
        spec_.stride = encoder_->stride();
        spec_.channels = encoder_->channels();
        init(seed);
    }

    const BackboneSpec& backbone() const noexcept { return spec_; }
    const HeadOptions& head() const noexcept { return head_; }
    int classes() const noexcept { return classes_; }
    int stride() const noexcept { return spec_.stride; }
    int channels() const noexcept { return spec_.channels; }

    Eigen::VectorXd& params() noexcept { return params_; }
    const Eigen::VectorXd& params() const noexcept { return params_; }
    Eigen::Index param_count() const noexcept { return params_.size(); }

    double alpha() const { return params_(alpha_index()); }
    void set_alpha(double a) { params_(alpha_index()) = a; }
    Eigen::Index alpha_index() const noexcept { return params_.size() - 1; }
    Eigen::Index classifier_offset() const noexcept { return encoder_->param_count(); }
    Eigen::Index encoder_param_count() const noexcept { return encoder_->param_count(); }

    void check_input(const Image& x) const {
        if (x.depth() != 3) throw std::invalid_argument("network expects 3-channel images");
        if (x.height() < stride() || x.width() < stride() || x.height() % stride() != 0 || x.width() % stride() != 0) {
            throw std::invalid_argument("image " + std::to_string(x.height()) + "x" + std::to_string(x.width()) +
                                        " is not divisible by stride " + std::to_string(stride()));
        }
    }

    /// Inference pass (no caches retained).
    ForwardTrace forward(const Image& x) const { return run(x, nullptr); }

    ForwardCache forward_cached(const Image& x) const {
        ForwardCache cache;
        cache.trace = run(x, &cache);
        return cache;
    }

    /// Accumulates dL/dparams into `grad` (same length as params()).
    void backward(const ForwardCache& cache, const HeadGrad& upstream, nn::VecRef grad) const {
        const ForwardTrace& t = cache.trace;
        const Eigen::Index cells = t.f_pre.cells();
        RowMatrix grad_q = RowMatrix::Zero(cells, classes_);
        if (upstream.coarse.size() > 0) grad_q += upstream.coarse;
        if (upstream.pred.size() > 0) grad_q += upsampler(t.f_pre.m, t.f_pre.n, cache.image).backward(upstream.pred);
        const RowMatrix grad_logits = row_softmax_backward(t.coarse.probs, grad_q);

        const Eigen::Index cls_off = classifier_offset();
        const Eigen::Index k = channels();
        Eigen::Map<const RowMatrix> w_cls(params_.data() + cls_off, k, classes_);
        Eigen::Map<RowMatrix> grad_w(grad.data() + cls_off, k, classes_);
        grad_w.noalias() += t.f_post.data.transpose() * grad_logits;
        grad.segment(cls_off + k * classes_, classes_) += grad_logits.colwise().sum().transpose();
        RowMatrix grad_post = grad_logits * w_cls.transpose();
        if (upstream.f_post.size() > 0) grad_post += upstream.f_post;

        RowMatrix grad_pre;
        RowMatrix grad_p = upstream.p.size() > 0 ? upstream.p : RowMatrix();
        if (head_.use_random_walk) {
            auto rw = random_walk_embedded_backward(t.f_pre, t.p, t.alpha, grad_post);
            grad(alpha_index()) += rw.grad_alpha;
            grad_pre = std::move(rw.grad_f);
            if (grad_p.size() > 0) {
                grad_p += rw.grad_p;
            } else {
                grad_p = std::move(rw.grad_p);
            }
        } else {
            grad_pre = std::move(grad_post);
        }
        if (grad_p.size() > 0 && t.p.p.size() > 0) {
            grad_pre += transition_backward(t.f_pre, t.p, grad_p, head_.gram_scale);
        }
        if (upstream.f_pre.size() > 0) grad_pre += upstream.f_pre;
        encoder_->backward(grad_pre, cache.encoder, params_.head(encoder_->param_count()),
                           grad.head(encoder_->param_count()));
    }

    /// Needs P even without the random walk (eigenspace self-supervision).
    void set_always_compute_transition(bool on) { always_transition_ = on; }

private:
    void init(std::uint64_t seed) {
        const Eigen::Index enc = encoder_->param_count();
        params_ = Eigen::VectorXd::Zero(enc + static_cast<Eigen::Index>(spec_.channels) * classes_ + classes_ + 1);
        std::mt19937_64 rng(seed);
        encoder_->initialize(params_.head(enc), rng);
        std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(spec_.channels)));
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(spec_.channels) * classes_; ++i) params_(enc + i) = normal(rng);
        // classifier bias and alpha start at zero
    }

    nn::BilinearResize upsampler(int m, int n, nn::Extent image) const {
        return nn::BilinearResize({m, n}, image);
    }

    ForwardTrace run(const Image& x, ForwardCache* cache) const {
        check_input(x);
        const nn::Extent extent{x.height(), x.width()};
        RowMatrix input = to_matrix(x);
        input.array() = 2.0 * input.array() - 1.0;
        const RowMatrix features = encoder_->forward(input, extent, params_.head(encoder_->param_count()),
                                                     cache != nullptr ? &cache->encoder : nullptr);
        const int m = x.height() / stride();
        const int n = x.width() / stride();
        ForwardTrace t;
        t.alpha = alpha();
        t.f_pre = FeatureMap(m, n, features);
        if (head_.use_random_walk || always_transition_) t.p = compute_transition(t.f_pre, head_.gram_scale);
        t.f_post = head_.use_random_walk ? random_walk_embedded(t.f_pre, t.p, t.alpha) : t.f_pre;

        const Eigen::Index cls_off = classifier_offset();
        Eigen::Map<const RowMatrix> w_cls(params_.data() + cls_off, channels(), classes_);
        RowMatrix logits = t.f_post.data * w_cls;
        logits.rowwise() += params_.segment(cls_off + static_cast<Eigen::Index>(channels()) * classes_, classes_).transpose();
        t.coarse = Prediction{m, n, row_softmax(logits)};
        t.pred = Prediction{x.height(), x.width(), upsampler(m, n, extent).forward(t.coarse.probs)};
        if (cache != nullptr) cache->image = extent;
        return t;
    }

    BackboneSpec spec_;
    int classes_ = 0;
    HeadOptions head_;
    std::shared_ptr<const Encoder> encoder_;
    Eigen::VectorXd params_;
    bool always_transition_ = false;
};

/// Traces for x and t_phi(x) under the same parameters.
inline std::pair<ForwardCache, ForwardCache> forward_pair(const SegNet& net, const Image& x, const TransformSpec& phi) {
    scale_to_grid(phi, net.stride());  // rejects translations that are not stride-aligned
    return {net.forward_cached(x), net.forward_cached(apply_spatial(x, phi))};
}

// ---------------------------------------------------------------------------
// Checkpoints: "SSEGCKPT" magic, u32 format version, u64 header length, JSON
// header, then raw little-endian doubles (parameters, optionally momentum).

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    BackboneSpec backbone;
    HeadOptions head;
    int classes = 0;
    std::string config_hash;
    int epoch = 0;
    Eigen::VectorXd params;
    Eigen::VectorXd momentum;  // empty when not saved
    nlohmann::json extra = nlohmann::json::object();
};

inline Checkpoint make_checkpoint(const SegNet& net, std::string config_hash, int epoch) {
    Checkpoint c;
    c.backbone = net.backbone();
    c.head = net.head();
    c.classes = net.classes();
    c.config_hash = std::move(config_hash);
    c.epoch = epoch;
    c.params = net.params();
    return c;
}

inline SegNet network_from_checkpoint(const Checkpoint& c) {
    SegNet net(c.backbone, c.classes, c.head, 0);
    if (net.param_count() != c.params.size()) {
        throw std::invalid_argument("checkpoint holds " + std::to_string(c.params.size()) +
                                    " parameters but the described network needs " + std::to_string(net.param_count()));
    }
    net.params() = c.params;
    return net;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    nlohmann::json header{
        {"format", "scribbleseg-checkpoint"},
        {"backbone",
         {{"kind", c.backbone.kind == BackboneKind::tiny_cnn ? "tiny_cnn" : "external"},
          {"stride", c.backbone.stride},
          {"channels", c.backbone.channels},
          {"depth", c.backbone.depth},
          {"feature_gain", c.backbone.feature_gain}}},
        {"head", {{"use_random_walk", c.head.use_random_walk}, {"gram_scale", c.head.gram_scale}}},
        {"classes", c.classes},
        {"config_hash", c.config_hash},
        {"epoch", c.epoch},
        {"param_count", c.params.size()},
        {"alpha", c.params.size() > 0 ? c.params(c.params.size() - 1) : 0.0},
        {"momentum_count", c.momentum.size()},
        {"extra", c.extra},
    };
    const std::string text = header.dump();
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(tmp, "cannot write checkpoint");
        out.write("SSEGCKPT", 8);
        const std::uint32_t version = kCheckpointVersion;
        const std::uint64_t len = text.size();
        out.write(reinterpret_cast<const char*>(&version), sizeof version);
        out.write(reinterpret_cast<const char*>(&len), sizeof len);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        out.write(reinterpret_cast<const char*>(c.params.data()), static_cast<std::streamsize>(c.params.size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(c.momentum.data()), static_cast<std::streamsize>(c.momentum.size() * sizeof(double)));
        if (!out) throw IoError(tmp, "checkpoint write failed");
    }
    std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path, "cannot open checkpoint");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "SSEGCKPT", 8) != 0) throw IoError(path, "not a scribbleseg checkpoint");
    std::uint32_t version = 0;
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || version != kCheckpointVersion) throw IoError(path, "unsupported checkpoint version");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    const auto header = nlohmann::json::parse(text);
    Checkpoint c;
    const auto& bb = header.at("backbone");
    c.backbone.kind = bb.at("kind").get<std::string>() == "tiny_cnn" ? BackboneKind::tiny_cnn : BackboneKind::external;
    c.backbone.stride = bb.at("stride");
    c.backbone.channels = bb.at("channels");
    c.backbone.depth = bb.at("depth");
    c.backbone.feature_gain = bb.value("feature_gain", 1.0);
    c.head.use_random_walk = header.at("head").at("use_random_walk");
    c.head.gram_scale = header.at("head").at("gram_scale");
    c.classes = header.at("classes");
    c.config_hash = header.at("config_hash");
    c.epoch = header.at("epoch");
    c.extra = header.value("extra", nlohmann::json::object());
    c.params.resize(header.at("param_count").get<Eigen::Index>());
    in.read(reinterpret_cast<char*>(c.params.data()), static_cast<std::streamsize>(c.params.size() * sizeof(double)));
    c.momentum.resize(header.at("momentum_count").get<Eigen::Index>());
    in.read(reinterpret_cast<char*>(c.momentum.data()), static_cast<std::streamsize>(c.momentum.size() * sizeof(double)));
    if (!in) throw IoError(path, "truncated checkpoint");
    return c;
}

}  // namespace scribbleseg
