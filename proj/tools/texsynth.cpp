// texsynth: single-binary CLI for the texture synthesis pipeline.
//
// Subcommands: filters (build/save a filter bank), synth (optimize new
// texture samples against a reference), distance (print a descriptor or
// pixel distance), confusion (texture-discrimination matrix).
//
// Conventions: structured logs and progress go to stderr, machine-readable
// results to stdout and files. Every file-producing run writes its fully
// resolved configuration next to its outputs. Exit codes: 0 success,
// 2 usage error, 3 I/O error, 4 numeric/degenerate-input error,
// 5 solver failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "texsynth/texsynth.hpp"

namespace ts = texsynth;
namespace fs = std::filesystem;

namespace {

bool g_quiet = false;

template <class... Args>
void log_line(const char* fmt, Args... args) {
    if (g_quiet) return;
    std::fprintf(stderr, "[texsynth] ");
    std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
}

void write_resolved_config(const CLI::App& app, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ts::IoError("cannot write config file: " + path);
    out << app.config_to_str(true, false);
}

std::string with_suffix(const std::string& path, const std::string& suffix,
                        const std::string& new_ext = "") {
    fs::path p(path);
    const std::string ext = new_ext.empty() ? p.extension().string() : new_ext;
    return (p.parent_path() / (p.stem().string() + suffix + ext)).string();
}

ts::ChannelMeans means_from_bank_or(const ts::FilterBank& bank, const ts::ChannelMeans& fallback,
                                    std::string& source) {
    if (bank.metadata.contains("corpus_means")) {
        const auto& m = bank.metadata["corpus_means"];
        source = "corpus";
        return {m[0].get<double>(), m[1].get<double>(), m[2].get<double>()};
    }
    source = "reference";
    return fallback;
}

std::uint64_t fnv1a_patches(const std::vector<ts::Image>& patches) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const ts::Image& p : patches)
        for (double v : p.data()) {
            const float f = static_cast<float>(v);
            std::uint32_t u;
            std::memcpy(&u, &f, 4);
            for (int i = 0; i < 4; ++i) {
                h ^= (u >> (8 * i)) & 0xFF;
                h *= 1099511628211ULL;
            }
        }
    return h;
}

struct FiltersArgs {
    std::string kind;
    std::string out;
    std::string corpus_dir;
    std::string texture;
    std::string patch_cache;
    std::uint64_t seed = 0;
    int size = 11;
    int count = 363;
    int k = 363;
    int n_patches = 100000;
    int max_iters = 100;
    bool whiten = true;
};

int run_filters(const CLI::App& app, const FiltersArgs& a) {
    ts::Rng rng(a.seed);
    ts::FilterBank bank;

    auto learned_patches = [&](const std::vector<ts::Image>& corpus) {
        std::vector<ts::Image> patches;
        if (!a.patch_cache.empty() && fs::exists(a.patch_cache)) {
            patches = ts::load_patches(a.patch_cache);
            log_line("loaded %zu cached patches from %s", patches.size(),
                     a.patch_cache.c_str());
        } else {
            ts::Rng stream = rng.stream(ts::streams::patch_sampling);
            patches = ts::sample_patches(corpus, a.n_patches, a.size, stream);
            if (!a.patch_cache.empty()) {
                // The float32 cache is the canonical patch set once requested:
                // round through it so cached and caching runs agree bit for bit.
                ts::save_patches(patches, a.patch_cache);
                patches = ts::load_patches(a.patch_cache);
                log_line("cached %zu patches to %s", patches.size(), a.patch_cache.c_str());
            }
        }
        return patches;
    };

    auto attach_corpus_metadata = [&](const std::vector<ts::Image>& corpus,
                                      const std::vector<ts::Image>& patches) {
        const ts::ChannelMeans m = ts::channel_means(corpus);
        bank.metadata["corpus_means"] = {m.r, m.g, m.b};
        char hash[17];
        std::snprintf(hash, sizeof(hash), "%016llx",
                      static_cast<unsigned long long>(fnv1a_patches(patches)));
        bank.metadata["corpus_hash"] = hash;
        bank.metadata["patch_count"] = patches.size();
    };

    if (a.kind == "fourier363") {
        bank = ts::build_fourier_363();
    } else if (a.kind == "fourier3267") {
        bank = ts::build_fourier_3267();
    } else if (a.kind == "random363") {
        ts::Rng stream = rng.stream(ts::streams::filter_init);
        bank = ts::build_random(363, 11, stream);
    } else if (a.kind == "random3267") {
        ts::Rng stream = rng.stream(ts::streams::filter_init);
        bank = ts::build_random(3267, 11, stream);
    } else if (a.kind == "random") {
        ts::Rng stream = rng.stream(ts::streams::filter_init);
        bank = ts::build_random(a.count, a.size, stream);
    } else if (a.kind == "multiscale") {
        ts::Rng stream = rng.stream(ts::streams::filter_init);
        bank = ts::build_multiscale(stream);
    } else if (a.kind == "kmeans" || a.kind == "kmeans-sample") {
        const bool sample_variant = (a.kind == "kmeans-sample");
        if (sample_variant && a.texture.empty())
            throw std::invalid_argument("filters: --texture is required for kmeans-sample");
        if (!sample_variant && a.corpus_dir.empty())
            throw std::invalid_argument("filters: --corpus is required for kmeans");
        std::vector<ts::Image> corpus;
        if (sample_variant)
            corpus.push_back(ts::load_image(a.texture));
        else
            corpus = ts::load_corpus(a.corpus_dir);
        auto patches = learned_patches(corpus);
        const ts::BankKind kind = sample_variant ? ts::BankKind::kmeans_sample
                                  : a.whiten     ? ts::BankKind::kmeans
                                                 : ts::BankKind::kmeans_nonwhite;
        if (a.whiten) {
            auto [white, transform] = ts::whiten_patches(patches);
            ts::Rng stream = rng.stream(ts::streams::kmeans);
            bank = ts::kmeans_filters(white, a.k, stream, a.max_iters, kind);
            bank.metadata["whiten"] = true;
            bank.metadata["whiten_epsilon"] = transform.epsilon;
        } else {
            ts::Rng stream = rng.stream(ts::streams::kmeans);
            bank = ts::kmeans_filters(patches, a.k, stream, a.max_iters, kind);
            bank.metadata["whiten"] = false;
        }
        attach_corpus_metadata(corpus, patches);
        bank.metadata["seed"] = a.seed;
    } else if (a.kind == "pca363") {
        if (a.corpus_dir.empty())
            throw std::invalid_argument("filters: --corpus is required for pca363");
        auto corpus = ts::load_corpus(a.corpus_dir);
        auto patches = learned_patches(corpus);
        bank = ts::pca_filters(patches);
        attach_corpus_metadata(corpus, patches);
        bank.metadata["seed"] = a.seed;
    } else {
        throw std::invalid_argument("filters: unknown --kind: " + a.kind);
    }

    ts::save_bank(bank, a.out);
    write_resolved_config(app, a.out + ".config");

    std::map<int, int> per_size;
    for (const auto& f : bank.filters) ++per_size[f.size];
    std::string sizes;
    for (const auto& [s, n] : per_size)
        sizes += (sizes.empty() ? "" : ",") + std::to_string(s) + ":" + std::to_string(n);
    std::printf("%d filters (size %s) kind=%s hash=%s\n", bank.size(), sizes.c_str(),
                ts::to_string(bank.kind).c_str(), ts::bank_hash(bank).c_str());
    return 0;
}

struct SynthArgs {
    std::string texture;
    std::string bank_path;
    std::string out;
    std::string out_size;
    std::uint64_t seed = 0;
    int iters = 2000;
    int samples = 1;
    double scale = 1e7;
    int snapshot_every = 0;
    bool deterministic = false;
};

int run_synth(const CLI::App& app, const SynthArgs& a) {
    const ts::Image reference = ts::load_image(a.texture);
    const ts::FilterBank bank = ts::load_bank(a.bank_path);
    std::string means_source;
    const ts::ChannelMeans means =
        means_from_bank_or(bank, ts::channel_means(reference), means_source);

    ts::SynthesisConfig cfg;
    cfg.max_iterations = a.iters;
    cfg.loss_scale = a.scale;
    cfg.seed = a.seed;
    cfg.deterministic = a.deterministic;
    cfg.snapshot_every = a.snapshot_every;
    if (!a.out_size.empty()) {
        int h = 0, w = 0;
        if (std::sscanf(a.out_size.c_str(), "%dx%d", &h, &w) != 2 || h < 1 || w < 1)
            throw std::invalid_argument("synth: --out-size must look like HxW");
        cfg.out_height = h;
        cfg.out_width = w;
    }
    cfg.progress = [&](int iter, double unscaled) {
        if (iter % 100 == 0) log_line("iter %d E=%.6e", iter, unscaled);
    };

    bool solver_failed = false;
    for (int k = 0; k < a.samples; ++k) {
        const std::string out_path = a.samples == 1 ? a.out : with_suffix(a.out, "_s" + std::to_string(k));
        ts::SynthesisConfig sub = cfg;
        sub.seed = ts::sample_seed(cfg.seed, k);
        if (cfg.snapshot_every > 0) {
            fs::path op(out_path);
            sub.snapshot_prefix = (op.parent_path() / op.stem()).string();
        }

        const auto t0 = std::chrono::steady_clock::now();
        ts::SynthesisRun run = ts::synthesize(reference, bank, means, sub);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        ts::save_image(run.image, out_path);
        const std::optional<double> wall_opt =
            a.deterministic ? std::nullopt : std::optional<double>(wall);
        nlohmann::json sidecar = ts::make_sidecar(run, bank, means, means_source, wall_opt);
        const std::string sidecar_path = with_suffix(out_path, "", ".json");
        std::ofstream sj(sidecar_path);
        if (!sj) throw ts::IoError("cannot write sidecar: " + sidecar_path);
        sj << sidecar.dump(2) << "\n";

        log_line("sample %d: %s  E %.3e -> %.3e (%d iterations, %s)", k, out_path.c_str(),
                 run.initial_loss, run.final_loss, run.solver.n_iterations,
                 ts::to_string(run.solver.status).c_str());
        if (run.solver.status == ts::SolverStatus::linesearch_fail) solver_failed = true;
    }
    write_resolved_config(app, with_suffix(a.out, "", ".config"));
    if (solver_failed) throw ts::SolverError("line search failed; best iterate kept");
    return 0;
}

struct DistanceArgs {
    std::string a, b;
    std::string bank_path;
    bool pixel = false;
};

int run_distance(const DistanceArgs& args) {
    const ts::Image x = ts::load_image(args.a);
    const ts::Image y = ts::load_image(args.b);
    double d = 0.0;
    if (args.pixel) {
        d = ts::pixel_distance(x, y);
    } else {
        const ts::FilterBank bank = ts::load_bank(args.bank_path);
        std::string source;
        const ts::ChannelMeans means =
            means_from_bank_or(bank, ts::channel_means(std::vector<ts::Image>{x, y}), source);
        const ts::Image xdc = ts::remove_dc(x, means);
        const ts::Image ydc = ts::remove_dc(y, means);
        if (ts::degenerate_after_dc(x, xdc) || ts::degenerate_after_dc(y, ydc))
            throw ts::NumericError("distance: image is constant after DC removal (degenerate)");
        const ts::GramMatrix gx = ts::gram(ts::forward(bank, xdc));
        const ts::GramMatrix gy = ts::gram(ts::forward(bank, ydc));
        d = ts::gram_distance(gx, gy);
    }
    std::printf("%.9e\n", d);
    return 0;
}

struct ConfusionArgs {
    std::string textures_dir;
    std::string bank_path;
    std::string out_prefix;
    bool pixel = false;
    int n_patches = 10;
    int patch_size = 300;
    std::uint64_t seed = 0;
};

int run_confusion(const CLI::App& app, const ConfusionArgs& a) {
    std::vector<std::string> labels;
    const std::vector<ts::Image> textures = ts::load_corpus(a.textures_dir, &labels);
    if (textures.size() < 2)
        throw std::invalid_argument("confusion: need at least 2 textures in the directory");

    std::optional<ts::FilterBank> bank;
    std::string means_source = "corpus-of-textures";
    ts::ChannelMeans means = ts::channel_means(textures);
    if (!a.pixel) {
        bank = ts::load_bank(a.bank_path);
        means = means_from_bank_or(*bank, means, means_source);
    }

    ts::Rng rng = ts::Rng(a.seed).stream(ts::streams::evaluation);
    const ts::ConfusionMatrix cm = ts::confusion(textures, labels, bank ? &*bank : nullptr,
                                                 means, a.n_patches, a.patch_size, rng);
    ts::render_heatmap(cm, a.out_prefix + ".png", a.out_prefix + ".csv");
    const ts::SeparationReport rep = ts::separation_report(cm);
    std::ofstream report(a.out_prefix + "_report.txt");
    if (!report) throw ts::IoError("cannot write report: " + a.out_prefix + "_report.txt");
    report << "model: " << cm.model_id << "\n" << rep.text;
    write_resolved_config(app, a.out_prefix + ".config");

    std::printf("separated: %d/%d\n", rep.n_separated, rep.n_textures);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"single-layer filter-bank texture synthesis toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read options from an INI file");

    int threads = 0;
    bool deterministic = false;
    app.add_option("--threads", threads, "worker threads (0 = all cores)")
        ->envname("TEXSYNTH_THREADS");
    app.add_flag("--deterministic", deterministic,
                 "force ordered reductions and reproducible outputs");
    app.add_flag("--quiet", g_quiet, "suppress progress logs on stderr");

    FiltersArgs fa;
    CLI::App* filters = app.add_subcommand("filters", "build and save a filter bank");
    filters->add_option("--kind", fa.kind,
                        "fourier363|fourier3267|random363|random3267|random|multiscale|"
                        "kmeans|kmeans-sample|pca363")
        ->required();
    filters->add_option("-o,--out", fa.out, "output bank file")->required();
    filters->add_option("--seed", fa.seed, "master seed");
    filters->add_option("--size", fa.size, "filter/patch size (odd)");
    filters->add_option("--count", fa.count, "filter count (kind=random)");
    filters->add_option("--k", fa.k, "cluster count for kmeans variants");
    filters->add_option("--corpus", fa.corpus_dir, "directory of PNG images");
    filters->add_option("--texture", fa.texture, "target texture (kmeans-sample)");
    filters->add_option("--patches", fa.n_patches, "number of patches to sample");
    filters->add_option("--patch-cache", fa.patch_cache,
                        "patch cache file (reused when present)");
    filters->add_option("--max-iters", fa.max_iters, "Lloyd iteration cap");
    filters->add_flag("--whiten,!--no-whiten", fa.whiten, "ZCA-whiten patches (kmeans)");

    SynthArgs sa;
    CLI::App* synth = app.add_subcommand("synth", "synthesize texture samples");
    synth->add_option("--texture", sa.texture, "reference texture PNG")->required();
    synth->add_option("--bank", sa.bank_path, "filter bank file")->required();
    synth->add_option("-o,--out", sa.out, "output PNG path")->required();
    synth->add_option("--iters", sa.iters, "maximum L-BFGS-B iterations");
    synth->add_option("--seed", sa.seed, "master seed");
    synth->add_option("--samples", sa.samples, "number of independent samples");
    synth->add_option("--scale", sa.scale, "loss/gradient scale factor");
    synth->add_option("--out-size", sa.out_size, "output size HxW (default: reference size)");
    synth->add_option("--snapshot-every", sa.snapshot_every,
                      "write the iterate every k iterations (0 = off)");

    DistanceArgs da;
    CLI::App* distance = app.add_subcommand("distance", "print the distance between two images");
    distance->add_option("a", da.a, "first image")->required();
    distance->add_option("b", da.b, "second image")->required();
    CLI::Option* dbank = distance->add_option("--bank", da.bank_path, "filter bank file");
    CLI::Option* dpix = distance->add_flag("--pixel", da.pixel, "raw pixel distance");
    dbank->excludes(dpix);

    ConfusionArgs ca;
    CLI::App* conf = app.add_subcommand("confusion", "texture discrimination matrix");
    conf->add_option("--textures", ca.textures_dir, "directory of texture PNGs")->required();
    CLI::Option* cbank = conf->add_option("--bank", ca.bank_path, "filter bank file");
    CLI::Option* cpix = conf->add_flag("--pixel", ca.pixel, "raw pixel descriptors");
    cbank->excludes(cpix);
    conf->add_option("--n-patches", ca.n_patches, "patches per texture");
    conf->add_option("--patch-size", ca.patch_size, "patch size in pixels");
    conf->add_option("--seed", ca.seed, "master seed");
    conf->add_option("-o,--out", ca.out_prefix, "output prefix (csv/png/report)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "[texsynth] usage error: " << e.what() << "\n";
        return 2;
    }

    ts::set_num_threads(threads);
    sa.deterministic = deterministic;

    try {
        if (*filters) return run_filters(app, fa);
        if (*synth) return run_synth(app, sa);
        if (*distance) {
            if (!da.pixel && da.bank_path.empty())
                throw std::invalid_argument("distance: pass --bank FILE or --pixel");
            return run_distance(da);
        }
        if (*conf) {
            if (!ca.pixel && ca.bank_path.empty())
                throw std::invalid_argument("confusion: pass --bank FILE or --pixel");
            return run_confusion(app, ca);
        }
    } catch (const CLI::ParseError& e) {
        std::cerr << "[texsynth] usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "[texsynth] usage error: " << e.what() << "\n";
        return 2;
    } catch (const ts::IoError& e) {
        std::cerr << "[texsynth] I/O error: " << e.what() << "\n";
        return 3;
    } catch (const ts::NumericError& e) {
        std::cerr << "[texsynth] numeric error: " << e.what() << "\n";
        return 4;
    } catch (const ts::SolverError& e) {
        std::cerr << "[texsynth] solver error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "[texsynth] error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
