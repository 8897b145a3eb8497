// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance <runs-dir> [--strict] [--only N,M,...]
//
// Exits 0 once every requested criterion was evaluated; with --strict the
// exit status is 1 if any of them failed. The report is also written to
// <runs-dir>/acceptance_report.json.

#include "support/helpers.hpp"

#include <scribbleseg/spectral.hpp>
#include <scribbleseg/trainer.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace scribbleseg;
using namespace testing_support;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream os;
    os.precision(digits);
    os << v;
    return os.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

bool same_tree(const fs::path& a, const fs::path& b) {
    std::set<fs::path> seen;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), a);
        seen.insert(rel);
        if (!fs::exists(b / rel) || slurp(e.path()) != slurp(b / rel)) return false;
    }
    for (const auto& e : fs::recursive_directory_iterator(b)) {
        if (e.is_regular_file() && !seen.count(fs::relative(e.path(), b))) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// 1. conjugation identity

Verdict identity_suite() {
    std::mt19937_64 rng(20240601);
    std::uniform_int_distribution<int> side(1, 8);
    std::uniform_int_distribution<int> depth(1, 16);
    double worst_conj = 0.0;
    double worst_rows = 0.0;
    bool positive = true;
    for (int trial = 0; trial < 200; ++trial) {
        const int m = side(rng);
        const int n = side(rng);
        const auto f = random_features(rng, m, n, depth(rng), 0.7);
        std::uniform_int_distribution<int> dx(1 - n, n - 1);
        std::uniform_int_distribution<int> dy(1 - m, m - 1);
        for (const auto& phi : {TransformSpec::flip(), TransformSpec::translate(dx(rng), dy(rng))}) {
            const auto cm = build_computing_matrices(phi, m, n);
            const auto direct = compute_transition(apply_spatial(f, phi));
            const auto conj = apply_transform_to_transition(compute_transition(f), cm);
            worst_conj = std::max(worst_conj, (direct.p - conj.p).cwiseAbs().maxCoeff());
            worst_rows = std::max(worst_rows, (direct.p.rowwise().sum().array() - 1.0).abs().maxCoeff());
            positive = positive && (direct.p.array() > 0.0).all();
        }
    }
    return {worst_conj < 1e-6 && worst_rows < 1e-9 && positive,
            "max|T P T' - P(t f)| " + fmt(worst_conj) + ", max row-sum error " + fmt(worst_rows) +
                (positive ? ", all entries > 0" : ", non-positive entry found")};
}

// ---------------------------------------------------------------------------
// 2. spectra

Verdict spectral_suite() {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> side(1, 8);
    std::uniform_int_distribution<int> depth(1, 16);
    double imag = 0.0;
    double top = 0.0;
    double constant = 0.0;
    double lap_dev = 0.0;
    double lap_res = 0.0;
    double tr = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto f = random_features(rng, side(rng), side(rng), depth(rng), 0.7);
        const auto p = compute_transition(f);
        const auto es = eigendecompose_transition(p, f);
        Eigen::EigenSolver<Eigen::MatrixXd> general(Eigen::MatrixXd(p.p), false);
        imag = std::max(imag, general.eigenvalues().imag().cwiseAbs().maxCoeff());
        top = std::max(top, std::abs(es.eigenvalues(0) - 1.0));
        const Eigen::VectorXd u = es.eigenvectors.col(0);
        constant = std::max(constant, (u.array() - u.mean()).abs().maxCoeff());
        const auto lap = laplacian_relation_check(es, p);
        lap_dev = std::max(lap_dev, lap.max_eigenvalue_deviation);
        lap_res = std::max(lap_res, lap.max_residual);
        tr = std::max(tr, std::abs(trace(p) - es.eigenvalues.sum()));
    }
    double small = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int cells = trial % 2 == 0 ? 2 : 3;
        const auto f = random_features(rng, 1, cells, 2, 0.9);
        const auto p = compute_transition(f);
        const auto es = eigendecompose_transition(p, f);
        const auto roots = oracle::char_poly_eigenvalues(to_mat(p.p));
        for (int i = 0; i < cells; ++i) {
            const auto& r = roots[static_cast<std::size_t>(i)];
            small = std::max({small, std::abs(es.eigenvalues(i) - r.real()), std::abs(r.imag())});
        }
    }
    const bool pass = imag < 1e-8 && top < 1e-8 && constant < 1e-8 && lap_dev < 1e-8 && lap_res < 1e-8 && tr < 1e-6 &&
                      small < 1e-6;
    return {pass, "imag " + fmt(imag) + ", |top-1| " + fmt(top) + ", top-vector spread " + fmt(constant) +
                      ", laplacian dev " + fmt(lap_dev) + " res " + fmt(lap_res) + ", trace " + fmt(tr) +
                      ", 2x2/3x3 oracle " + fmt(small)};
}

// ---------------------------------------------------------------------------
// 3. gradients

Image random_image(std::mt19937_64& rng, int h, int w) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(h, w, 3);
    for (auto& v : img.data()) v = u(rng);
    return img;
}

LabelGrid random_labels(std::mt19937_64& rng, int h, int w, int c, double labeled) {
    std::uniform_real_distribution<double> u;
    std::uniform_int_distribution<int> cls(0, c - 1);
    LabelGrid g(h, w, 1, kIgnoreLabel);
    for (auto& v : g.data()) {
        if (u(rng) < labeled) v = static_cast<std::uint8_t>(cls(rng));
    }
    return g;
}

LabelGrid random_mask(std::mt19937_64& rng, int h, int w) {
    std::bernoulli_distribution b(0.3);
    LabelGrid g(h, w, 1, 0);
    for (auto& v : g.data()) v = b(rng) ? 1 : 0;
    return g;
}

double end_to_end_error(SsLocation where, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    TrainConfig cfg;
    cfg.backbone.channels = 8;
    cfg.backbone.feature_gain = 0.4;
    cfg.transform_mode = TransformMode::random;
    cfg.ablation.ss_location = where;
    cfg.weights.omega2 = 0.5;
    SegNet net(cfg.backbone, 3, {}, seed + 1);
    if (where == SsLocation::eigenspace) net.set_always_compute_transition(true);
    net.set_alpha(0.3);
    const int side = 48;  // 6x6 grid
    TrainItem item{random_image(rng, side, side), random_labels(rng, side, side, 3, 0.05), random_mask(rng, side, side)};
    double worst = 0.0;
    for (std::uint64_t draw = 0; draw < 2; ++draw) {
        auto objective = [&](const Eigen::VectorXd& p, Eigen::VectorXd* grad) {
            SegNet probe = net;
            probe.params() = p;
            std::mt19937_64 local(seed * 10 + draw);
            Eigen::VectorXd g = Eigen::VectorXd::Zero(p.size());
            const auto loss = detail::sample_step(probe, cfg, item, Stage::full, local, g);
            if (grad) *grad = g;
            return loss.total;
        };
        Eigen::VectorXd analytic;
        objective(net.params(), &analytic);
        std::vector<Eigen::Index> picks{net.alpha_index(), net.classifier_offset(), net.classifier_offset() + 4};
        std::uniform_int_distribution<Eigen::Index> any(0, net.encoder_param_count() - 1);
        while (picks.size() < 24) {
            const Eigen::Index i = any(rng);
            if (std::find(picks.begin(), picks.end(), i) == picks.end()) picks.push_back(i);
        }
        oracle::Vec sub;
        for (auto i : picks) sub.push_back(net.params()(i));
        const auto numeric = oracle::oracle_grad(
            [&](const oracle::Vec& v) {
                Eigen::VectorXd p = net.params();
                for (std::size_t k = 0; k < picks.size(); ++k) p(picks[k]) = v[k];
                return objective(p, nullptr);
            },
            sub, 1e-6);
        for (std::size_t k = 0; k < picks.size(); ++k) {
            const double a = analytic(picks[k]);
            worst = std::max(worst, std::abs(numeric[k] - a) / std::max({std::abs(numeric[k]), std::abs(a), 1e-6}));
        }
    }
    return worst;
}

Verdict gradient_suite() {
    constexpr double kStep = 1e-6;
    std::map<std::string, double> err;
    auto note = [&](const std::string& name, double e) { err[name] = std::max(err[name], e); };
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        std::mt19937_64 rng(seed);
        const int h = 6;
        const int w = 6;
        const Prediction pred{h, w, random_stochastic(rng, h * w, 4)};
        const auto labels = random_labels(rng, h, w, 4, 0.4);
        const auto mask = random_mask(rng, h, w);
        auto as_pred = [&](const oracle::Vec& v) { return Prediction{h, w, reshape(v, h * w, 4)}; };
        note("partial_ce", rel_error(flatten(partial_cross_entropy_grad(pred, labels).grad),
                                     oracle::oracle_grad([&](const oracle::Vec& v) { return partial_cross_entropy(as_pred(v), labels); },
                                                         flatten(pred.probs), kStep)));
        note("entropy_full", rel_error(flatten(entropy_full_grad(pred).grad),
                                       oracle::oracle_grad([&](const oracle::Vec& v) { return entropy_full(as_pred(v)); },
                                                           flatten(pred.probs), kStep)));
        note("entropy_soft", rel_error(flatten(entropy_soft_grad(pred, mask).grad),
                                       oracle::oracle_grad([&](const oracle::Vec& v) { return entropy_soft(as_pred(v), mask); },
                                                           flatten(pred.probs), kStep)));

        const auto fa = random_features(rng, h, w, 3);
        const auto fb = random_features(rng, h, w, 3);
        const auto phi = seed % 2 ? TransformSpec::flip() : TransformSpec::translate(2, -1);
        const auto fg = feature_ss_grad(fa, fb, phi);
        note("feature_ss", rel_error(flatten(fg.grad_a),
                                     oracle::oracle_grad([&](const oracle::Vec& v) { return feature_ss(FeatureMap(h, w, reshape(v, h * w, 3)), fb, phi); },
                                                         flatten(fa.data), kStep)));
        note("feature_ss", rel_error(flatten(fg.grad_b),
                                     oracle::oracle_grad([&](const oracle::Vec& v) { return feature_ss(fa, FeatureMap(h, w, reshape(v, h * w, 3)), phi); },
                                                         flatten(fb.data), kStep)));

        const int cells = h * w;
        const TransitionMatrix pa{h, w, random_stochastic(rng, cells, cells)};
        const TransitionMatrix pb{h, w, random_stochastic(rng, cells, cells)};
        auto as_p = [&](const oracle::Vec& v) { return TransitionMatrix{h, w, reshape(v, cells, cells)}; };
        const auto kg = kl_rowwise_grad(pa, pb);
        note("kl_rowwise", rel_error(flatten(kg.grad_a),
                                     oracle::oracle_grad([&](const oracle::Vec& v) { return kl_rowwise(as_p(v), pb); }, flatten(pa.p), kStep)));
        note("kl_rowwise", rel_error(flatten(kg.grad_b),
                                     oracle::oracle_grad([&](const oracle::Vec& v) { return kl_rowwise(pa, as_p(v)); }, flatten(pb.p), kStep)));
        const auto cm = build_computing_matrices(phi, h, w);
        const auto sg = soft_eigenspace_ss_grad(pa, pb, cm, 0.7);
        note("soft_eigenspace_ss",
             rel_error(flatten(sg.grad_a), oracle::oracle_grad([&](const oracle::Vec& v) { return soft_eigenspace_ss(as_p(v), pb, cm, 0.7); },
                                                               flatten(pa.p), kStep)));
        note("soft_eigenspace_ss",
             rel_error(flatten(sg.grad_b), oracle::oracle_grad([&](const oracle::Vec& v) { return soft_eigenspace_ss(pa, as_p(v), cm, 0.7); },
                                                               flatten(pb.p), kStep)));
    }
    bool pass = true;
    std::string detail;
    for (const auto& [name, e] : err) {
        pass = pass && e < 1e-4;
        detail += name + " " + fmt(e, 2) + ", ";
    }
    double e2e = 0.0;
    for (auto where : {SsLocation::eigenspace, SsLocation::f_pre, SsLocation::f_post}) {
        e2e = std::max(e2e, end_to_end_error(where, 3));
    }
    pass = pass && e2e < 1e-3;
    return {pass, detail + "end-to-end " + fmt(e2e, 2)};
}

// ---------------------------------------------------------------------------
// 4. spot values

Verdict spot_values() {
    Prediction half{1, 1, RowMatrix(1, 2)};
    half.probs << 0.5, 0.5;
    const double ce = partial_cross_entropy(half, LabelGrid(1, 1, 1, 0));
    const double ent = entropy_full(Prediction{3, 3, RowMatrix::Constant(9, 4, 0.25)});
    RowMatrix a(1, 2);
    a << 0.5, 0.5;
    RowMatrix b(1, 2);
    b << 0.75, 0.25;
    const double kl = kl_rowwise(TransitionMatrix{1, 1, a}, TransitionMatrix{1, 1, b});
    // features whose transition is [[0.75, 0.25], [0.5, 0.5]]
    Eigen::Matrix2d g;
    g << std::log(1.5) + 3.0, std::log(0.5) + 3.0, std::log(0.5) + 3.0, std::log(0.5) + 3.0;
    const FeatureMap f(1, 2, RowMatrix(Eigen::Matrix2d(g.llt().matrixL())));
    const auto es = eigendecompose_transition(compute_transition(f), f);
    const bool pass = std::abs(ce - 0.693147) < 1e-5 && std::abs(ent - 1.386294) < 1e-5 && std::abs(kl - 0.143841) < 1e-5 &&
                      std::abs(es.eigenvalues(0) - 1.0) < 1e-5 && std::abs(es.eigenvalues(1) - 0.25) < 1e-5;
    return {pass, "ce " + fmt(ce, 7) + ", entropy " + fmt(ent, 7) + ", kl " + fmt(kl, 7) + ", eig {" +
                      fmt(es.eigenvalues(0), 7) + ", " + fmt(es.eigenvalues(1), 7) + "}"};
}

// ---------------------------------------------------------------------------
// desk-scale training

enum class Method { base, ur, full };

const char* method_name(Method m) {
    switch (m) {
        case Method::base: return "base";
        case Method::ur: return "ur";
        case Method::full: return "full";
    }
    return "?";
}

TrainConfig method_config(Method m, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.eval_each_epoch = false;
    if (m == Method::base) cfg.ablation = Ablation{false, false, false, SsLocation::none};
    if (m == Method::ur) cfg.ablation.ss_location = SsLocation::none;
    return cfg;
}

struct Split {
    std::vector<Sample> train;
    std::vector<Sample> val;
    int classes = 0;
};

Split load(const fs::path& root) {
    const Corpus c(root);
    return {c.load_split("train"), c.load_split("val"), c.classes()};
}

struct Run {
    double miou = 0.0;
    fs::path dir;
};

Run run(const Split& data, Method m, std::uint64_t seed, const fs::path& dir) {
    fs::remove_all(dir);
    const auto t0 = Clock::now();
    const TrainResult r = train(method_config(m, seed), data.train, data.val, data.classes, dir);
    const double miou = 100.0 * r.final_eval->miou;
    std::cerr << "  " << dir.filename().string() << ": mIoU " << fmt(miou) << " (" << fmt(seconds_since(t0), 3) << " s)\n";
    return {miou, dir};
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3};

fs::path reference_corpus(const fs::path& runs) {
    const fs::path root = runs / "corpus";
    if (!fs::exists(root / "manifest.json")) generate_corpus(CorpusConfig{}, root);
    return root;
}

struct Table {
    std::map<Method, std::vector<double>> miou;
    fs::path full_seed1;
};

Table train_table(const Split& data, const fs::path& dir, const std::vector<Method>& methods) {
    Table t;
    for (auto seed : kSeeds) {
        for (auto m : methods) {
            const Run r = run(data, m, seed, dir / (std::string(method_name(m)) + "_s" + std::to_string(seed)));
            t.miou[m].push_back(r.miou);
            if (m == Method::full && seed == kSeeds.front()) t.full_seed1 = r.dir;
        }
    }
    return t;
}

struct Desk {
    Table table;
    Split data;
};

// 5. method ordering
Verdict ordering(const Desk& d) {
    const double base = mean(d.table.miou.at(Method::base));
    const double ur = mean(d.table.miou.at(Method::ur));
    const double full = mean(d.table.miou.at(Method::full));
    return {ur - base >= 2.0 && full - ur >= 1.0,
            "mean mIoU base " + fmt(base) + ", UR " + fmt(ur) + ", full " + fmt(full) + " (UR-base " + fmt(ur - base, 3) +
                ", need >= 2; full-UR " + fmt(full - ur, 3) + ", need >= 1)"};
}

// 6. variation under flip
Verdict variation(const Desk& d) {
    const SegNet net = network_from_checkpoint(load_checkpoint(d.table.full_seed1 / "checkpoint.bin"));
    const VariationReport v = variation_report(net, d.data.val, TransformSpec::flip());
    return {v.p < v.f_pre && v.p < v.f_post,
            "P " + fmt(v.p) + "%, f_pre " + fmt(v.f_pre) + "%, f_post " + fmt(v.f_post) + "% over " +
                std::to_string(v.samples) + " images"};
}

// 7. degraded scribbles
Verdict degraded(const fs::path& runs, const fs::path& corpus) {
    const Corpus src(corpus);
    const fs::path shrunk = runs / "corpus_shrink1";
    const fs::path dropped = runs / "corpus_drop05";
    if (!fs::exists(shrunk / "manifest.json")) corrupt_corpus(src, shrunk, {CorruptionMode::shrink, 1.0, 7, ShrinkMode::exact});
    if (!fs::exists(dropped / "manifest.json")) corrupt_corpus(src, dropped, {CorruptionMode::drop, 0.5, 7});

    const Split s = load(shrunk);
    const Table ts = train_table(s, runs / "shrink1", {Method::base, Method::full});
    std::vector<double> untrained;
    for (auto seed : kSeeds) {
        TrainConfig cfg = method_config(Method::full, seed);
        cfg.epochs = 0;
        const fs::path dir = runs / "shrink1" / ("untrained_s" + std::to_string(seed));
        fs::remove_all(dir);
        untrained.push_back(100.0 * train(cfg, s.train, s.val, s.classes, dir).final_eval->miou);
    }
    const Table td = train_table(load(dropped), runs / "drop05", {Method::base, Method::full});

    const double s_base = mean(ts.miou.at(Method::base));
    const double s_full = mean(ts.miou.at(Method::full));
    const double s_init = mean(untrained);
    const double d_base = mean(td.miou.at(Method::base));
    const double d_full = mean(td.miou.at(Method::full));
    const bool pass = s_full > s_init && s_full - s_base >= 2.0 && d_full - d_base >= 2.0;
    return {pass, "shrink 1.0: full " + fmt(s_full) + ", base " + fmt(s_base) + ", untrained " + fmt(s_init) +
                      " (full-base " + fmt(s_full - s_base, 3) + "); drop 0.5: full " + fmt(d_full) + ", base " +
                      fmt(d_base) + " (full-base " + fmt(d_full - d_base, 3) + "); need >= 2"};
}

// 8. determinism and corruption invariants
Verdict determinism(const fs::path& runs) {
    const fs::path dir = runs / "determinism";
    fs::remove_all(dir);
    CorpusConfig cc;
    cc.train = 24;
    cc.val = 8;
    generate_corpus(cc, dir / "gen_a");
    generate_corpus(cc, dir / "gen_b");
    const bool gen_same = same_tree(dir / "gen_a", dir / "gen_b");

    const Corpus src(dir / "gen_a");
    bool corrupt_same = true;
    for (const CorruptionSpec& spec : {CorruptionSpec{CorruptionMode::drop, 0.5, 3},
                                       CorruptionSpec{CorruptionMode::shrink, 0.7, 3},
                                       CorruptionSpec{CorruptionMode::shrink, 1.0, 3, ShrinkMode::exact}}) {
        corrupt_corpus(src, dir / "cor_a", spec);
        corrupt_corpus(src, dir / "cor_b", spec);
        corrupt_same = corrupt_same && same_tree(dir / "cor_a", dir / "cor_b");
        fs::remove_all(dir / "cor_a");
        fs::remove_all(dir / "cor_b");
    }

    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 5;
    const Split data = load(dir / "gen_a");
    train(cfg, data.train, data.val, data.classes, dir / "train_a");
    train(cfg, data.train, data.val, data.classes, dir / "train_b");
    auto log = [](const fs::path& p) {
        auto lines = read_metrics_log(p / "metrics.jsonl");
        for (auto& j : lines) j.erase("wall_time");
        return lines;
    };
    const bool train_same = log(dir / "train_a") == log(dir / "train_b") &&
                            slurp(dir / "train_a" / "checkpoint.bin") == slurp(dir / "train_b" / "checkpoint.bin");

    // corruption invariants on 1000 seeded samples
    int violations = 0;
    int samples = 0;
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> rate(0.0, 1.0);
    for (std::uint64_t i = 0; i < 1000; ++i) {
        const std::uint64_t seed = mix_seed(4242, i);
        const Scene scene = generate_scene(SceneSpec{seed, 2 + static_cast<int>(seed % 3), 4, 64, 64, {}});
        const ScribbleMap orig = scribble_from_mask(scene.labels, mix_seed(seed, 1));
        const double r = rate(rng);
        const ScribbleMap dropped = drop_scribbles(orig, r, seed);
        const ScribbleMap shrunk = shrink_scribbles(orig, r, seed, i % 2 ? ShrinkMode::exact : ShrinkMode::uniform);
        ++samples;
        for (const ScribbleMap* c : {&dropped, &shrunk}) {
            violations += static_cast<int>(!audit_scribbles(scene.labels, *c).empty());
            for (std::size_t k = 0; k < orig.labels.size(); ++k) {
                const auto v = c->labels.data()[k];
                if (v != kIgnoreLabel && v != orig.labels.data()[k]) ++violations;  // not a subset
            }
        }
        // shrinking keeps every stroke, so the same classes stay scribbled
        std::set<int> before;
        std::set<int> after;
        for (const auto& s : orig.strokes) before.insert(s.class_id);
        for (const auto& s : shrunk.strokes) {
            if (!s.pixels.empty()) after.insert(s.class_id);
        }
        violations += static_cast<int>(before != after || shrunk.strokes.size() != orig.strokes.size());
    }
    fs::remove_all(dir);
    return {gen_same && corrupt_same && train_same && violations == 0,
            std::string("gen-data ") + (gen_same ? "identical" : "differs") + ", corrupt " +
                (corrupt_same ? "identical" : "differs") + ", train logs " + (train_same ? "identical" : "differ") + ", " +
                std::to_string(violations) + " invariant violations over " + std::to_string(samples) + " samples"};
}

// 9. two-stage schedule, read back from a full-method log
Verdict schedule(const Desk& d) {
    const auto log = read_metrics_log(d.table.full_seed1 / "metrics.jsonl");
    const int warm = method_config(Method::full, 1).warmup_epochs();
    bool ok = !log.empty();
    int absent = 0;
    int present = 0;
    for (const auto& line : log) {
        const bool warmup = line.at("epoch").get<int>() < warm;
        const bool has = line.contains("self_supervision");
        ok = ok && has != warmup && line.at("stage") == (warmup ? "warmup" : "full");
        absent += !has;
        present += has;
    }
    return {ok && absent == warm && present == static_cast<int>(log.size()) - warm,
            "term absent in " + std::to_string(absent) + " warmup epochs, present in " + std::to_string(present) +
                " of " + std::to_string(log.size()) + " epochs"};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: acceptance <runs-dir> [--strict] [--only N,M,...]\n";
        return 2;
    }
    const fs::path runs = argv[1];
    bool strict = false;
    std::set<int> only;
    for (int i = 2; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--strict") {
            strict = true;
        } else if (a == "--only" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            for (std::string item; std::getline(ss, item, ',');) only.insert(std::stoi(item));
        } else {
            std::cerr << "unknown argument " << a << "\n";
            return 2;
        }
    }
    fs::create_directories(runs);
    auto wanted = [&](int n) { return only.empty() || only.count(n) > 0; };

    nlohmann::json report = nlohmann::json::array();
    bool all = true;
    auto record = [&](int n, const std::function<Verdict()>& check) {
        if (!wanted(n)) return;
        const auto t0 = Clock::now();
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        const double secs = seconds_since(t0);
        all = all && v.pass;
        std::cout << "criterion " << n << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << "  [" << fmt(secs, 3)
                  << " s]" << std::endl;
        report.push_back({{"criterion", n}, {"pass", v.pass}, {"detail", v.detail}, {"seconds", secs}});
    };

    record(1, identity_suite);
    record(2, spectral_suite);
    record(3, gradient_suite);
    record(4, spot_values);

    std::optional<Desk> desk;
    auto need_desk = [&]() -> const Desk& {
        if (!desk) {
            const auto t0 = Clock::now();
            const fs::path corpus = reference_corpus(runs);
            Desk d;
            d.data = load(corpus);
            d.table = train_table(d.data, runs / "reference", {Method::base, Method::ur, Method::full});
            std::cerr << "  reference table trained in " << fmt(seconds_since(t0), 4) << " s\n";
            desk = std::move(d);
        }
        return *desk;
    };
    record(5, [&] { return ordering(need_desk()); });
    record(6, [&] { return variation(need_desk()); });
    record(7, [&] { return degraded(runs, reference_corpus(runs)); });
    record(8, [&] { return determinism(runs); });
    record(9, [&] { return schedule(need_desk()); });

    write_text(runs / "acceptance_report.json", report.dump(2));
    std::cout << (all ? "all criteria passed" : "some criteria failed") << std::endl;
    return strict && !all ? 1 : 0;
}
