// scribbleseg command-line driver: gen-data, corrupt, train, eval, analyze.
//
// Errors print one line "error: <code>: <message>" on stderr and exit nonzero.

#include <scribbleseg/trainer.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace scribbleseg;

namespace {

// exit codes
constexpr int kUsage = 2;
constexpr int kConfig = 3;
constexpr int kIo = 4;
constexpr int kRuntime = 5;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// --out wins; otherwise $SCRIBBLESEG_OUT/<command>.
fs::path resolve_out(const std::string& out, const std::string& command) {
    if (!out.empty()) return out;
    if (const char* root = std::getenv("SCRIBBLESEG_OUT"); root != nullptr && *root != '\0') {
        return fs::path(root) / command;
    }
    throw UsageError("no output directory: pass --out or set SCRIBBLESEG_OUT");
}

CorpusConfig load_corpus_config(const std::string& path, const std::vector<std::string>& overrides) {
    nlohmann::json j = to_json(CorpusConfig{});
    if (!path.empty()) {
        nlohmann::json user;
        try {
            user = nlohmann::json::parse(read_text(path));
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(std::string("corpus config is not valid JSON: ") + e.what());
        }
        detail::merge_strict(j, user);
    }
    j = apply_overrides(std::move(j), overrides);
    try {
        return corpus_config_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("corpus config: ") + e.what());
    }
}

SegNet load_network(const std::string& path, const Corpus& corpus) {
    const Checkpoint ck = load_checkpoint(path);
    if (ck.classes != corpus.classes()) {
        throw ConfigError("checkpoint predicts " + std::to_string(ck.classes) + " classes but corpus " +
                          corpus.root().string() + " has " + std::to_string(corpus.classes()));
    }
    return network_from_checkpoint(ck);
}

TransformSpec parse_transform(const std::string& text) {
    if (text == "flip") return TransformSpec::flip();
    int dx = 0;
    int dy = 0;
    char comma = 0;
    if (text.rfind("translate:", 0) == 0) {
        std::istringstream in(text.substr(10));
        if (in >> dx >> comma >> dy && comma == ',' && in.eof()) return TransformSpec::translate(dx, dy);
    }
    throw UsageError("transform must be 'flip' or 'translate:DX,DY' (got '" + text + "')");
}

void write_grid_csv(const fs::path& path, const Grid<double>& g) {
    std::ostringstream out;
    out.precision(9);
    for (int i = 0; i < g.height(); ++i) {
        for (int j = 0; j < g.width(); ++j) out << (j ? "," : "") << g(i, j);
        out << '\n';
    }
    write_text(path, out.str());
}

int run_gen_data(const std::string& config, const std::vector<std::string>& overrides, const std::string& out_opt) {
    const CorpusConfig cfg = load_corpus_config(config, overrides);
    const fs::path out = resolve_out(out_opt, "corpus");
    const CorpusStats stats = generate_corpus(cfg, out);
    nlohmann::json report{{"corpus", out.string()},
                          {"images", stats.images},
                          {"scribbled_fraction", stats.scribbled_fraction},
                          {"class_pixels", stats.class_pixels}};
    std::cout << report.dump() << '\n';
    return 0;
}

int run_corrupt(const std::string& corpus, const std::string& mode, double rate, std::uint64_t seed, bool exact,
                const std::string& out_opt) {
    if (mode != "drop" && mode != "shrink") throw UsageError("mode must be drop or shrink");
    if (!(rate >= 0.0 && rate <= 1.0)) throw UsageError("rate must lie in [0, 1]");
    CorruptionSpec spec{mode == "drop" ? CorruptionMode::drop : CorruptionMode::shrink, rate, seed,
                        exact ? ShrinkMode::exact : ShrinkMode::uniform};
    const fs::path out = resolve_out(out_opt, "corrupt");
    corrupt_corpus(Corpus(corpus), out, spec);
    std::cout << Corpus(out).manifest().at("corruption").dump() << '\n';
    return 0;
}

int run_train(const std::string& config, const std::vector<std::string>& overrides, const std::string& corpus_opt,
              const std::string& out_opt, bool resume, bool quiet) {
    TrainConfig cfg = load_train_config(config, overrides);
    if (!corpus_opt.empty()) cfg.corpus = corpus_opt;
    if (cfg.corpus.empty()) throw ConfigError("no corpus: set the 'corpus' key or pass --corpus");
    const fs::path out = resolve_out(out_opt, "train");
    const Corpus corpus(cfg.corpus);
    TrainOptions opt;
    opt.resume = resume;
    if (!quiet) opt.on_epoch = [](const EpochMetrics& m) { std::cerr << to_json(m).dump() << '\n'; };
    const TrainResult r = train(cfg, corpus.load_split(cfg.train_split), corpus.load_split(cfg.val_split),
                                corpus.classes(), out, opt);
    ensure_directory(out);
    write_text(out / "config.json", to_json(cfg).dump(2));
    nlohmann::json summary{{"checkpoint", (out / "checkpoint.bin").string()}, {"config_hash", config_hash(cfg)}};
    if (r.final_eval) {
        summary["val"] = to_json(*r.final_eval);
        write_text(out / "eval.json", to_json(*r.final_eval).dump(2));
    }
    std::cout << summary.dump() << '\n';
    return 0;
}

int run_eval(const std::string& checkpoint, const std::string& corpus_path, const std::string& split,
             const std::string& out_opt) {
    const Corpus corpus(corpus_path);
    const SegNet net = load_network(checkpoint, corpus);
    const EvalReport report = evaluate(net, corpus.load_split(split));
    const fs::path out = resolve_out(out_opt, "eval");
    ensure_directory(out);
    write_text(out / "eval.json", to_json(report).dump(2));
    write_text(out / "eval.csv", to_csv(report));
    std::cout << to_json(report).dump() << '\n';
    return 0;
}

int run_analyze(const std::string& checkpoint, const std::string& corpus_path, const std::string& split, int k,
                int images, const std::string& transform, const std::string& out_opt) {
    const Corpus corpus(corpus_path);
    const SegNet net = load_network(checkpoint, corpus);
    if (k < 0) throw UsageError("k must be non-negative");
    const TransformSpec phi = parse_transform(transform);
    const std::vector<Sample> samples = corpus.load_split(split);
    const fs::path out = resolve_out(out_opt, "analyze");
    ensure_directory(out / "entropy");
    ensure_directory(out / "eigenvectors");

    const std::size_t count = images < 0 ? samples.size() : std::min(samples.size(), static_cast<std::size_t>(images));
    nlohmann::json per_image = nlohmann::json::array();
    for (std::size_t i = 0; i < count; ++i) {
        const Sample& s = samples[i];
        const ForwardTrace t = net.forward(s.image);
        const Grid<double> ent = entropy_per_pixel(t.pred);
        write_png(out / "entropy" / (s.id + ".png"), normalize_to_gray(ent));
        write_grid_csv(out / "entropy" / (s.id + ".csv"), ent);

        const TransitionMatrix p = t.p.p.size() > 0 ? t.p : compute_transition(t.f_pre, net.head().gram_scale);
        const EigenSystem es = eigendecompose_transition(p, t.f_pre, net.head().gram_scale);
        const auto vecs = eigenvector_images(es, k);
        for (std::size_t j = 0; j < vecs.size(); ++j) {
            write_png(out / "eigenvectors" / (s.id + "_" + std::to_string(j) + ".png"), vecs[j]);
        }
        std::vector<double> top(es.eigenvalues.data(), es.eigenvalues.data() + std::min<Eigen::Index>(k, es.eigenvalues.size()));
        per_image.push_back({{"id", s.id}, {"mean_entropy", entropy_full(t.pred)}, {"eigenvalues", top}});
    }

    const VariationReport v = variation_report(net, samples, phi);
    const nlohmann::json table{{"transform", to_string(phi)},
                               {"samples", v.samples},
                               {"f_pre_percent", v.f_pre},
                               {"f_post_percent", v.f_post},
                               {"p_percent", v.p}};
    write_text(out / "variation.json", table.dump(2));
    std::ostringstream csv;
    csv << "quantity,relative_variation_percent\nf_pre," << v.f_pre << "\nf_post," << v.f_post << "\nP," << v.p << '\n';
    write_text(out / "variation.csv", csv.str());
    write_text(out / "images.json", per_image.dump(2));
    std::cout << table.dump() << '\n';
    return 0;
}

int fail(const char* code, const std::string& message, int status) {
    std::string flat = message;
    std::replace(flat.begin(), flat.end(), '\n', ' ');
    std::cerr << "error: " << code << ": " << flat << '\n';
    return status;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scribble-supervised segmentation toolkit"};
    app.require_subcommand(1);

    std::string config;
    std::vector<std::string> overrides;
    std::string out;
    std::string corpus;
    std::string checkpoint;
    std::string split = "val";
    std::string mode;
    std::string transform = "flip";
    double rate = 0.0;
    std::uint64_t seed = 0;
    bool exact = false;
    bool resume = false;
    bool quiet = false;
    int k = 3;
    int images = 4;

    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus");
    gen->add_option("--config", config, "Corpus config JSON");
    gen->add_option("--set", overrides, "key=value override (repeatable)");
    gen->add_option("--out", out, "Output corpus directory");

    auto* cor = app.add_subcommand("corrupt", "Write a scribble-drop or scribble-shrink copy of a corpus");
    cor->add_option("--corpus", corpus, "Source corpus")->required();
    cor->add_option("--mode", mode, "drop or shrink")->required();
    cor->add_option("--rate", rate, "Corruption rate in [0, 1]")->required();
    cor->add_option("--seed", seed, "Corruption seed");
    cor->add_flag("--exact", exact, "Shrink every stroke by exactly the rate");
    cor->add_option("--out", out, "Output corpus directory");

    auto* trn = app.add_subcommand("train", "Train a network");
    trn->add_option("--config", config, "Training config JSON");
    trn->add_option("--set", overrides, "key=value override (repeatable)");
    trn->add_option("--corpus", corpus, "Corpus directory (overrides the config)");
    trn->add_option("--out", out, "Run directory");
    trn->add_flag("--resume", resume, "Continue from checkpoint_last.bin in the run directory");
    trn->add_flag("--quiet", quiet, "Do not echo per-epoch metrics");

    auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint (JSON + CSV)");
    evl->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    evl->add_option("--corpus", corpus, "Corpus directory")->required();
    evl->add_option("--split", split, "Split name");
    evl->add_option("--out", out, "Output directory");

    auto* ana = app.add_subcommand("analyze", "Entropy maps, eigenvector images and the variation table");
    ana->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    ana->add_option("--corpus", corpus, "Corpus directory")->required();
    ana->add_option("--split", split, "Split name");
    ana->add_option("--k", k, "Eigenvector images per sample");
    ana->add_option("--images", images, "Samples to render (-1 = all)");
    ana->add_option("--transform", transform, "flip or translate:DX,DY (pixels)");
    ana->add_option("--out", out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what(), kUsage);
    }

    try {
        if (*gen) return run_gen_data(config, overrides, out);
        if (*cor) return run_corrupt(corpus, mode, rate, seed, exact, out);
        if (*trn) return run_train(config, overrides, corpus, out, resume, quiet);
        if (*evl) return run_eval(checkpoint, corpus, split, out);
        if (*ana) return run_analyze(checkpoint, corpus, split, k, images, transform, out);
    } catch (const UsageError& e) {
        return fail("usage", e.what(), kUsage);
    } catch (const ConfigError& e) {
        return fail("config", e.what(), kConfig);
    } catch (const IoError& e) {
        return fail("io", e.what(), kIo);
    } catch (const TrainingDiverged& e) {
        return fail("diverged", e.what(), kRuntime);
    } catch (const GenerationError& e) {
        return fail("generation", e.what(), kRuntime);
    } catch (const std::filesystem::filesystem_error& e) {
        return fail("io", e.what(), kIo);
    } catch (const nlohmann::json::exception& e) {
        return fail("format", e.what(), kIo);
    } catch (const std::invalid_argument& e) {
        return fail("invalid", e.what(), kRuntime);
    } catch (const std::exception& e) {
        return fail("internal", e.what(), kRuntime);
    }
    return 0;
}
