#include "dnetpad_cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "dnetpad/checkpoint.hpp"
#include "dnetpad/error.hpp"
#include "dnetpad/freq.hpp"
#include "dnetpad/gradcam.hpp"
#include "dnetpad/metrics.hpp"
#include "dnetpad/synthdata.hpp"
#include "dnetpad/train.hpp"
#include "dnetpad/tsne.hpp"

namespace fs = std::filesystem;

namespace dnetpad::cli {
namespace {

// Bad invocation: missing inputs, malformed values. Exit code 2.
struct UsageError : Error {
    using Error::Error;
};

std::string text(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, r.ptr};
}
std::string text(const std::string& v) { return v; }
std::string text(bool v) { return v ? "true" : "false"; }
template <typename T>
    requires std::is_integral_v<T>
std::string text(T v) {
    return std::to_string(v);
}

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

std::vector<double> parse_doubles(const std::string& list, const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        double v = 0.0;
        const auto r = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || r.ec != std::errc{} || r.ptr != item.data() + item.size()) {
            throw UsageError("--" + key + ": cannot parse '" + item + "' as a number");
        }
        out.push_back(v);
    }
    return out;
}

std::vector<std::size_t> parse_sizes(const std::string& list, const std::string& key) {
    std::vector<std::size_t> out;
    for (double v : parse_doubles(list, key)) {
        if (v < 0.0 || v != std::floor(v)) throw UsageError("--" + key + ": expected non-negative integers");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

// Options of one subcommand plus a getter per key for run_config.txt.
class Command {
public:
    Command(CLI::App& parent, const std::string& name, const std::string& help)
        : app_(parent.add_subcommand(name, help)) {}

    template <typename T>
    CLI::Option* opt(const std::string& key, T& var, const std::string& help) {
        echo_.emplace_back(key, [&var] { return text(var); });
        return app_->add_option("--" + key, var, help)->capture_default_str();
    }
    CLI::Option* flag(const std::string& key, bool& var, const std::string& help) {
        echo_.emplace_back(key, [&var] { return text(var); });
        return app_->add_flag("--" + key, var, help);
    }

    CLI::App* app() const { return app_; }
    bool knows(const std::string& key) const {
        return std::any_of(echo_.begin(), echo_.end(), [&](const auto& e) { return e.first == key; });
    }
    std::string effective_config() const {
        std::string s = "command=" + app_->get_name() + "\n";
        for (const auto& [key, get] : echo_) s += key + "=" + get() + "\n";
        return s;
    }

private:
    CLI::App* app_;
    std::vector<std::pair<std::string, std::function<std::string()>>> echo_;
};

struct Common {
    std::string out;
    std::size_t jobs = 1;
};

void add_common(Command& c, Common& common) {
    c.opt("out", common.out, "Output directory (falls back to $DNETPAD_OUT, then ./out)");
    c.opt("jobs", common.jobs, "Worker threads for per-image stages")->check(CLI::PositiveNumber);
}

fs::path resolve_out(Common& common) {
    if (common.out.empty()) {
        const char* env = std::getenv("DNETPAD_OUT");
        common.out = env && *env ? env : "out";
    }
    fs::create_directories(common.out);
    return common.out;
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + path.string());
    f << content;
}

// DIR/<split> when it exists, else DIR itself.
fs::path split_dir(const std::string& dir, Split split) {
    if (dir.empty()) throw UsageError("--data is required");
    const fs::path root(dir);
    if (!fs::is_directory(root)) throw UsageError("dataset directory not found: " + dir);
    const fs::path sub = root / std::string(to_string(split));
    return fs::is_directory(sub) ? sub : root;
}

Dataset load_dataset(const std::string& dir, Split split, std::size_t input_size, std::size_t jobs,
                     std::ostream& out) {
    const fs::path root = split_dir(dir, split);
    auto loaded = load_dir(root);
    if (!loaded.errors.empty()) {
        throw InputError("failed to read " + std::to_string(loaded.errors.size()) + " image(s); first: " +
                         loaded.errors.front());
    }
    if (loaded.images.empty()) throw UsageError("no images found under " + root.string());
    if (loaded.warnings > 0) out << "note: skipped " << loaded.warnings << " unrecognised file(s) under " << root.string() << "\n";
    return prepare_dataset(loaded.images, input_size, jobs);
}

Model load_model(const std::string& path) {
    if (path.empty()) throw UsageError("--checkpoint is required");
    if (!fs::is_regular_file(path)) throw UsageError("checkpoint not found: " + path);
    return load_checkpoint(path).model;
}

std::string file_stem(const std::string& id) {
    if (id.rfind("seed:", 0) == 0) return "seed_" + id.substr(5);
    return fs::path(id).stem().string();
}

// --- config file -----------------------------------------------------------

std::map<std::string, std::string> read_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UsageError("config file not found: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
        }
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

// Pulls `--config PATH` out of args and returns PATH (empty when absent).
std::string take_config_arg(std::vector<std::string>& args) {
    std::string path;
    for (std::size_t i = 0; i < args.size();) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw UsageError("--config needs a file path");
            path = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
        } else {
            ++i;
        }
    }
    return path;
}

// --- commands --------------------------------------------------------------

struct GenDataArgs {
    Common common;
    std::size_t train = 1200;
    std::size_t test = 400;
    std::uint64_t seed = 42;
    std::size_t size = 128;
    bool force = false;
};

int cmd_gen_data(GenDataArgs& a, const Command& c, std::ostream& out) {
    const fs::path root = resolve_out(a.common);
    if (fs::exists(root / "manifest.csv")) {
        if (!a.force) throw UsageError("dataset already exists at " + root.string() + " (use --force to overwrite)");
        fs::remove_all(root / "train");
        fs::remove_all(root / "test");
    }
    if (a.size < 32) throw UsageError("--size must be >= 32");
    DatasetManifest tr{balanced_counts(a.train), Split::train, a.seed, a.size};
    DatasetManifest te{balanced_counts(a.test), Split::test, a.seed, a.size};
    write_dataset(root, generate_split(tr), generate_split(te));
    write_text(root / "run_config.txt", c.effective_config());
    out << "wrote " << a.train << " train and " << a.test << " test images to " << root.string() << "\n";
    return 0;
}

struct ModelArgs {
    std::size_t input_size = 64;
    std::size_t stem_filters = 16;
    std::size_t stem_kernel = 3;
    std::size_t growth = 8;
    std::size_t bottleneck = 4;
    std::string blocks = "2,2,2,2";
    double compression = 0.5;

    ModelConfig config() const {
        ModelConfig m;
        m.input_size = input_size;
        m.stem_filters = stem_filters;
        m.stem_kernel = stem_kernel;
        m.growth_rate = growth;
        m.bottleneck_factor = bottleneck;
        m.block_layers = parse_sizes(blocks, "blocks");
        m.compression = compression;
        try {
            m.validate();
        } catch (const ConfigError& e) {
            throw UsageError(e.what());
        }
        return m;
    }
};

struct TrainArgs {
    Common common;
    ModelArgs model;
    std::string data;
    std::size_t epochs = 50;
    double lr = 0.005;
    double momentum = 0.9;
    std::size_t batch = 20;
    std::uint64_t seed = 42;
    std::size_t checkpoint_every = 0;
};

int cmd_train(TrainArgs& a, const Command& c, std::ostream& out) {
    const auto mcfg = a.model.config();
    TrainConfig tcfg;
    tcfg.learning_rate = a.lr;
    tcfg.momentum = a.momentum;
    tcfg.batch_size = a.batch;
    tcfg.epochs = a.epochs;
    tcfg.seed = a.seed;
    tcfg.checkpoint_every = a.checkpoint_every;
    try {
        tcfg.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    const auto data = load_dataset(a.data, Split::train, mcfg.input_size, a.common.jobs, out);
    const fs::path dir = resolve_out(a.common);
    write_text(dir / "run_config.txt", c.effective_config());
    tcfg.checkpoint_dir = dir;
    out << "training on " << data.size() << " images, " << Model::build(mcfg, a.seed).parameter_count()
        << " parameters\n";
    auto result = train(Model::build(mcfg, a.seed), data, tcfg, [&](const EpochRecord& r, const Model&) {
        char line[160];
        std::snprintf(line, sizeof line, "epoch %zu/%zu loss=%.6f acc=%.4f time=%.1fs\n", r.epoch, tcfg.epochs,
                      r.mean_loss, r.train_accuracy, r.wall_seconds);
        out << line << std::flush;
    });
    write_train_log_csv(result.log, dir / "train_log.csv");
    out << "wrote " << (dir / "model.ckpt").string() << "\n";
    return 0;
}

struct EvalArgs {
    Common common;
    std::string checkpoint;
    std::string data;
    double fdr = 0.002;
    std::size_t bins = 20;
};

int cmd_eval(EvalArgs& a, const Command& c, std::ostream& out) {
    const Model model = load_model(a.checkpoint);
    if (!(a.fdr >= 0.0 && a.fdr <= 1.0)) throw UsageError("--fdr must lie in [0,1]");
    if (a.bins < 1) throw UsageError("--bins must be >= 1");
    const auto data = load_dataset(a.data, Split::test, model.config().input_size, a.common.jobs, out);
    const fs::path dir = resolve_out(a.common);
    write_text(dir / "run_config.txt", c.effective_config());
    const auto scores = evaluate_scores(model, data, a.common.jobs);
    const auto report = make_report(scores, a.fdr, a.bins);
    write_scores_csv(scores, dir / "scores.csv");
    write_report_csv(report, dir / "report.csv");
    write_report_text(report, dir / "report.txt");
    write_histogram_csv(report, dir / "histogram.csv");
    write_pgm(histogram_plot(report), dir / "histogram.pgm");
    std::vector<double> bf, pa;
    split_scores(scores, bf, pa);
    write_roc_csv(roc_curve(bf, pa), dir / "roc.csv");
    char line[200];
    std::snprintf(line, sizeof line, "TDR %.4f at FDR %.4f (target %.4f), threshold %.6f, d' %.3f\n", report.tdr,
                  report.realized_fdr, a.fdr, report.threshold, report.d_prime.value);
    out << line;
    return 0;
}

struct GradcamArgs {
    Common common;
    std::string checkpoint;
    std::string data;
    std::string cls = "all";
    std::string target = "pa";
    long block = 0;  // 1-based; 0 = last
    bool average = false;
    std::size_t limit = 0;
};

int cmd_gradcam(GradcamArgs& a, const Command& c, std::ostream& out) {
    const Model model = load_model(a.checkpoint);
    int target = 0;
    if (a.target == "pa") {
        target = kPaClass;
    } else if (a.target == "bonafide") {
        target = kBonafideClass;
    } else {
        throw UsageError("--target must be pa or bonafide");
    }
    const std::size_t blocks = model.config().block_layers.size();
    if (a.block < 0 || static_cast<std::size_t>(a.block) > blocks) {
        throw UsageError("--block must lie in [1," + std::to_string(blocks) + "] (0 = last)");
    }
    const std::optional<std::size_t> block =
        a.block == 0 ? std::nullopt : std::optional<std::size_t>(static_cast<std::size_t>(a.block - 1));
    std::vector<ImageClass> classes;
    if (a.cls == "all") {
        classes.assign(kAllClasses.begin(), kAllClasses.end());
    } else {
        try {
            classes.push_back(parse_image_class(a.cls));
        } catch (const InputError& e) {
            throw UsageError(e.what());
        }
    }
    const auto data = load_dataset(a.data, Split::test, model.config().input_size, a.common.jobs, out);
    const fs::path dir = resolve_out(a.common);
    write_text(dir / "run_config.txt", c.effective_config());

    std::string summary = "class,count,annulus_ratio\n";
    for (const auto cls : classes) {
        Dataset subset;
        for (const auto& s : data) {
            if (s.cls == cls && (a.limit == 0 || subset.size() < a.limit)) subset.push_back(s);
        }
        if (subset.empty()) continue;
        const std::string name(to_string(cls));
        const auto maps = grad_cam_batch(model, subset, target, block, a.common.jobs);
        const auto avg = average_heatmap(maps);
        summary += name + "," + std::to_string(maps.size()) + "," + text(annulus_ratio(avg)) + "\n";
        if (a.average) {
            Tensor mean_image = Tensor::zeros_like(subset[0].image);
            for (const auto& s : subset) {
                for (std::size_t i = 0; i < mean_image.size(); ++i) mean_image[i] += s.image[i];
            }
            for (auto& v : mean_image.data()) v /= static_cast<double>(subset.size());
            write_pgm(heatmap_image(avg), dir / ("gradcam_" + name + "_avg.pgm"));
            write_ppm(heatmap_overlay(avg, &mean_image), dir / ("gradcam_" + name + "_avg.ppm"));
        } else {
            const fs::path sub = dir / "gradcam" / name;
            fs::create_directories(sub);
            for (std::size_t i = 0; i < maps.size(); ++i) {
                const std::string stem = file_stem(subset[i].id);
                write_pgm(heatmap_image(maps[i]), sub / (stem + ".pgm"));
                write_ppm(heatmap_overlay(maps[i], &subset[i].image), sub / (stem + ".ppm"));
            }
        }
        out << name << ": " << maps.size() << " heatmaps\n";
    }
    write_text(dir / "gradcam_summary.csv", summary);
    return 0;
}

struct TsneArgs {
    Common common;
    std::string checkpoint;
    std::string data;
    std::string blocks;  // 1-based list; empty = all
    double perplexity = 30.0;
    std::size_t iterations = 1000;
    std::uint64_t seed = 42;
    std::size_t limit = 0;
};

int cmd_tsne(TsneArgs& a, const Command& c, std::ostream& out) {
    const Model model = load_model(a.checkpoint);
    const std::size_t nblocks = model.config().block_layers.size();
    std::vector<std::size_t> blocks;
    if (a.blocks.empty()) {
        for (std::size_t b = 1; b <= nblocks; ++b) blocks.push_back(b);
    } else {
        blocks = parse_sizes(a.blocks, "blocks");
    }
    for (auto b : blocks) {
        if (b < 1 || b > nblocks) throw UsageError("--blocks entries must lie in [1," + std::to_string(nblocks) + "]");
    }
    auto data = load_dataset(a.data, Split::test, model.config().input_size, a.common.jobs, out);
    if (a.limit > 0 && data.size() > a.limit) data.resize(a.limit);
    if (static_cast<double>(data.size()) < 3.0 * a.perplexity) {
        throw UsageError("t-SNE needs at least 3*perplexity samples, have " + std::to_string(data.size()));
    }
    const fs::path dir = resolve_out(a.common);
    write_text(dir / "run_config.txt", c.effective_config());

    TsneConfig cfg;
    cfg.perplexity = a.perplexity;
    cfg.iterations = a.iterations;
    cfg.seed = a.seed;
    cfg.exaggeration_iters = std::min(cfg.exaggeration_iters, a.iterations);
    cfg.momentum_switch = std::min(cfg.momentum_switch, a.iterations);
    std::vector<int> labels;
    for (const auto& s : data) labels.push_back(s.label);

    std::vector<Embedding> embeddings;
    std::string summary = "block,n,dims,silhouette,knn5_purity,kl\n";
    for (auto b : blocks) {
        const auto features = extract_block_features(model, data, b - 1, a.common.jobs);
        auto e = tsne(features, cfg);
        e.labels = labels;
        e.block = b;
        const double sil = silhouette(e.coords, e.labels);
        const double pur = knn_purity(e.coords, e.labels, 5);
        summary += std::to_string(b) + "," + std::to_string(e.n) + "," + std::to_string(features.cols) + "," +
                   text(sil) + "," + text(pur) + "," + text(e.kl) + "\n";
        write_ppm(embedding_scatter(e), dir / ("tsne_block" + std::to_string(b) + ".ppm"));
        char line[160];
        std::snprintf(line, sizeof line, "block %zu: silhouette %.4f, 5-NN purity %.4f, KL %.4f\n", b, sil, pur, e.kl);
        out << line;
        embeddings.push_back(std::move(e));
    }
    write_embedding_csv(embeddings, dir / "embedding.csv");
    write_text(dir / "tsne_summary.csv", summary);
    write_text(dir / "tsne_meta.txt", cfg.describe() + "\n");
    return 0;
}

// Cutoffs quoted for 224x224 inputs, used to derive defaults.
constexpr double kSweep224[] = {5, 10, 20, 30, 40, 50, 60, 80, 100, 160};

struct SweepArgs {
    Common common;
    std::string checkpoint;
    std::string data;
    std::string cutoffs;  // bins of the model input; empty = rescaled 224 px list
    double fdr = 0.002;
    double panel_low = -1.0;
    double panel_high = -1.0;
};

int cmd_freq_sweep(SweepArgs& a, const Command& c, std::ostream& out) {
    const Model model = load_model(a.checkpoint);
    const std::size_t s = model.config().input_size;
    std::vector<double> cutoffs;
    if (a.cutoffs.empty()) {
        for (double p : kSweep224) cutoffs.push_back(scale_cutoff(p, s));
        std::string list;
        for (double v : cutoffs) list += (list.empty() ? "" : ",") + text(v);
        a.cutoffs = list;
    } else {
        cutoffs = parse_doubles(a.cutoffs, "cutoffs");
    }
    if (a.panel_low < 0.0) a.panel_low = scale_cutoff(20.0, s);
    if (a.panel_high < 0.0) a.panel_high = scale_cutoff(5.0, s);
    for (std::size_t i = 0; i < cutoffs.size(); ++i) {
        if (cutoffs[i] < 0.0 || (i > 0 && cutoffs[i] <= cutoffs[i - 1])) {
            throw UsageError("--cutoffs must be non-negative and strictly increasing");
        }
    }
    if (cutoffs.empty()) throw UsageError("--cutoffs is empty");
    const auto data = load_dataset(a.data, Split::test, s, a.common.jobs, out);
    const fs::path dir = resolve_out(a.common);
    write_text(dir / "run_config.txt", c.effective_config());
    const auto sweep = cutoff_sweep(model, data, cutoffs, a.fdr, a.common.jobs);
    write_sweep_csv(sweep, s, dir / "sweep.csv");
    const auto first_bf = std::find_if(data.begin(), data.end(), [](const Sample& x) { return x.label == 0; });
    write_pgm(frequency_panel((first_bf != data.end() ? *first_bf : data.front()).image, a.panel_low, a.panel_high),
              dir / "freq_panel.pgm");
    char line[120];
    std::snprintf(line, sizeof line, "baseline TDR %.4f\n", sweep.baseline_tdr);
    out << line;
    for (const auto& p : sweep.points) {
        std::snprintf(line, sizeof line, "cutoff %8.3f  TDR %.4f\n", p.cutoff, p.tdr);
        out << line;
    }
    return 0;
}

struct RobustnessArgs {
    Common common;
    std::string checkpoint;
    std::string data;
    double fdr = 0.002;
    std::string lowpass = "20,30,50";  // 224 px cutoffs
    double sp_density = 0.02;
    double gauss_sigma = 0.1;
    std::uint64_t seed = 42;
};

int cmd_robustness(RobustnessArgs& a, const Command& c, std::ostream& out) {
    const Model model = load_model(a.checkpoint);
    const std::size_t s = model.config().input_size;
    if (!(a.sp_density >= 0.0 && a.sp_density <= 1.0)) throw UsageError("--sp-density must lie in [0,1]");
    if (!(a.gauss_sigma >= 0.0)) throw UsageError("--gauss-sigma must be >= 0");
    std::vector<Manipulation> manips;
    for (double p : parse_doubles(a.lowpass, "lowpass")) {
        if (p < 0.0) throw UsageError("--lowpass cutoffs must be >= 0");
        manips.push_back({"LowPass" + text(p), Manipulation::Kind::low_pass, scale_cutoff(p, s), p, 0});
    }
    manips.push_back({"SaltPepper", Manipulation::Kind::salt_pepper, a.sp_density, a.sp_density, a.seed});
    manips.push_back({"Gaussian", Manipulation::Kind::gaussian, a.gauss_sigma, a.gauss_sigma, a.seed});
    const auto data = load_dataset(a.data, Split::test, s, a.common.jobs, out);
    const fs::path dir = resolve_out(a.common);
    write_text(dir / "run_config.txt", c.effective_config());
    const auto rows = robustness_table(model, data, manips, a.fdr, a.common.jobs);
    write_robustness_csv(rows, dir / "robustness.csv");
    for (const auto& r : rows) {
        char line[160];
        std::snprintf(line, sizeof line, "%-12s TDR %.4f  relative decrease %.2f%%\n", r.name.c_str(), r.tdr,
                      r.relative_decrease);
        out << line;
    }
    return 0;
}

std::string one_line(std::string msg) {
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    return msg;
}

int fail(std::ostream& err, const char* kind, int code, const std::string& msg) {
    err << "dnetpad error kind=" << kind << " code=" << code << " message=" << one_line(msg) << "\n";
    return code;
}

const char* error_kind(const Error& e) {
    if (dynamic_cast<const ShapeError*>(&e)) return "shape";
    if (dynamic_cast<const InputError*>(&e)) return "input";
    if (dynamic_cast<const ConfigError*>(&e)) return "config";
    if (dynamic_cast<const FormatError*>(&e)) return "format";
    if (dynamic_cast<const NumericError*>(&e)) return "numeric";
    return "runtime";
}

} // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Iris presentation-attack detection with a small densely connected CNN", "dnetpad"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);
    app.footer("Every subcommand also accepts --config FILE: key=value lines using the flag names; "
               "flags given on the command line win.");

    GenDataArgs gen;
    Command gen_cmd(app, "gen-data", "Generate the synthetic iris dataset (PGM images + manifest.csv)");
    add_common(gen_cmd, gen.common);
    gen_cmd.opt("train", gen.train, "Training images");
    gen_cmd.opt("test", gen.test, "Test images");
    gen_cmd.opt("seed", gen.seed, "Base seed");
    gen_cmd.opt("size", gen.size, "Image side in pixels (>= 32)");
    gen_cmd.flag("force", gen.force, "Overwrite an existing dataset");

    TrainArgs tr;
    Command train_cmd(app, "train", "Train a model with SGD + momentum");
    add_common(train_cmd, tr.common);
    train_cmd.opt("data", tr.data, "Dataset root (uses <data>/train when present)");
    train_cmd.opt("epochs", tr.epochs, "Epochs");
    train_cmd.opt("lr", tr.lr, "Learning rate");
    train_cmd.opt("momentum", tr.momentum, "Momentum");
    train_cmd.opt("batch", tr.batch, "Batch size");
    train_cmd.opt("seed", tr.seed, "Seed for initialisation and shuffling");
    train_cmd.opt("checkpoint-every", tr.checkpoint_every, "Also checkpoint every N epochs (0 = final only)");
    train_cmd.opt("input-size", tr.model.input_size, "Network input side");
    train_cmd.opt("stem-filters", tr.model.stem_filters, "Stem conv filters");
    train_cmd.opt("stem-kernel", tr.model.stem_kernel, "Stem conv kernel size (odd)");
    train_cmd.opt("growth", tr.model.growth, "Dense-layer growth rate");
    train_cmd.opt("bottleneck", tr.model.bottleneck, "Bottleneck width in units of the growth rate");
    train_cmd.opt("blocks", tr.model.blocks, "Dense layers per block, comma separated");
    train_cmd.opt("compression", tr.model.compression, "Transition compression in (0,1]");

    EvalArgs ev;
    Command eval_cmd(app, "eval", "Score a dataset and report TDR/APCER/BPCER/d' at a target FDR");
    add_common(eval_cmd, ev.common);
    eval_cmd.opt("checkpoint", ev.checkpoint, "Model checkpoint");
    eval_cmd.opt("data", ev.data, "Dataset root (uses <data>/test when present)");
    eval_cmd.opt("fdr", ev.fdr, "Target false detection rate");
    eval_cmd.opt("bins", ev.bins, "Histogram bins");

    GradcamArgs gc;
    Command gradcam_cmd(app, "gradcam", "Grad-CAM heatmaps per sample or averaged per class");
    add_common(gradcam_cmd, gc.common);
    gradcam_cmd.opt("checkpoint", gc.checkpoint, "Model checkpoint");
    gradcam_cmd.opt("data", gc.data, "Dataset root (uses <data>/test when present)");
    gradcam_cmd.opt("class", gc.cls, "Image class, or all");
    gradcam_cmd.opt("target", gc.target, "Logit to explain: pa or bonafide");
    gradcam_cmd.opt("block", gc.block, "Dense block to tap, 1-based (0 = last)");
    gradcam_cmd.flag("average", gc.average, "Write one averaged heatmap per class instead of per-sample maps");
    gradcam_cmd.opt("limit", gc.limit, "At most N images per class (0 = all)");

    TsneArgs ts;
    Command tsne_cmd(app, "tsne", "t-SNE embeddings of per-block features");
    add_common(tsne_cmd, ts.common);
    tsne_cmd.opt("checkpoint", ts.checkpoint, "Model checkpoint");
    tsne_cmd.opt("data", ts.data, "Dataset root (uses <data>/test when present)");
    tsne_cmd.opt("blocks", ts.blocks, "Dense blocks, 1-based, comma separated (empty = all)");
    tsne_cmd.opt("perplexity", ts.perplexity, "Perplexity");
    tsne_cmd.opt("iterations", ts.iterations, "Gradient-descent iterations");
    tsne_cmd.opt("seed", ts.seed, "Layout initialisation seed");
    tsne_cmd.opt("limit", ts.limit, "Use the first N images (0 = all)");

    SweepArgs sw;
    Command sweep_cmd(app, "freq-sweep", "TDR under low-pass filtering at a list of cutoffs");
    add_common(sweep_cmd, sw.common);
    sweep_cmd.opt("checkpoint", sw.checkpoint, "Model checkpoint");
    sweep_cmd.opt("data", sw.data, "Dataset root (uses <data>/test when present)");
    sweep_cmd.opt("cutoffs", sw.cutoffs,
                  "Cutoff radii in frequency bins of the network input, comma separated "
                  "(empty = 5,10,20,30,40,50,60,80,100,160 rescaled from 224 px)");
    sweep_cmd.opt("fdr", sw.fdr, "Target false detection rate");
    sweep_cmd.opt("panel-low", sw.panel_low, "Low-pass cutoff for freq_panel.pgm (negative = 20 rescaled)");
    sweep_cmd.opt("panel-high", sw.panel_high, "High-pass cutoff for freq_panel.pgm (negative = 5 rescaled)");

    RobustnessArgs rb;
    Command rob_cmd(app, "robustness", "Relative TDR decrease under low-pass filtering and noise");
    add_common(rob_cmd, rb.common);
    rob_cmd.opt("checkpoint", rb.checkpoint, "Model checkpoint");
    rob_cmd.opt("data", rb.data, "Dataset root (uses <data>/test when present)");
    rob_cmd.opt("fdr", rb.fdr, "Target false detection rate");
    rob_cmd.opt("lowpass", rb.lowpass, "Low-pass cutoffs quoted for 224 px inputs, rescaled to the model input");
    rob_cmd.opt("sp-density", rb.sp_density, "Salt-and-pepper density");
    rob_cmd.opt("gauss-sigma", rb.gauss_sigma, "Gaussian noise sigma (pixel values in [0,1])");
    rob_cmd.opt("seed", rb.seed, "Noise seed");

    const std::vector<const Command*> commands{&gen_cmd, &train_cmd, &eval_cmd, &gradcam_cmd,
                                               &tsne_cmd, &sweep_cmd, &rob_cmd};
    try {
        std::vector<std::string> args = raw_args;
        const std::string config_path = take_config_arg(args);
        if (!config_path.empty()) {
            const auto kv = read_config_file(config_path);
            const auto sub = std::find_if(args.begin(), args.end(), [&](const std::string& a) {
                return std::any_of(commands.begin(), commands.end(),
                                   [&](const Command* c) { return c->app()->get_name() == a; });
            });
            if (sub == args.end()) throw UsageError("--config needs a subcommand");
            const Command* cmd = *std::find_if(commands.begin(), commands.end(),
                                               [&](const Command* c) { return c->app()->get_name() == *sub; });
            std::vector<std::string> injected;
            for (const auto& [key, value] : kv) {
                if (cmd->knows(key)) {
                    injected.push_back("--" + key + "=" + value);
                } else if (std::none_of(commands.begin(), commands.end(),
                                        [&](const Command* c) { return c->knows(key); })) {
                    throw UsageError(config_path + ": unknown key '" + key + "'");
                }
            }
            args.insert(sub + 1, injected.begin(), injected.end());
        }
        std::reverse(args.begin(), args.end());  // CLI11 consumes a vector from the back
        try {
            app.parse(args);
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return 0;
        } catch (const CLI::CallForAllHelp&) {
            out << app.help("", CLI::AppFormatMode::All);
            return 0;
        } catch (const CLI::ParseError& e) {
            return fail(err, "usage", 2, e.what());
        }

        if (gen_cmd.app()->parsed()) return cmd_gen_data(gen, gen_cmd, out);
        if (train_cmd.app()->parsed()) return cmd_train(tr, train_cmd, out);
        if (eval_cmd.app()->parsed()) return cmd_eval(ev, eval_cmd, out);
        if (gradcam_cmd.app()->parsed()) return cmd_gradcam(gc, gradcam_cmd, out);
        if (tsne_cmd.app()->parsed()) return cmd_tsne(ts, tsne_cmd, out);
        if (sweep_cmd.app()->parsed()) return cmd_freq_sweep(sw, sweep_cmd, out);
        if (rob_cmd.app()->parsed()) return cmd_robustness(rb, rob_cmd, out);
        return fail(err, "usage", 2, "no subcommand");
    } catch (const UsageError& e) {
        return fail(err, "usage", 2, e.what());
    } catch (const Error& e) {
        return fail(err, error_kind(e), 1, e.what());
    } catch (const std::exception& e) {
        return fail(err, "runtime", 1, e.what());
    }
}

} // namespace dnetpad::cli
