#pragma once

// End-to-end texture synthesis: reference Gram statistics, uniform-noise
// initialization, box-constrained L-BFGS-B over the raw pixel image (DC
// removal happens inside the objective), and batched multi-sample runs with
// per-sample sub-seeds.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "texsynth/core.hpp"
#include "texsynth/filterbank.hpp"
#include "texsynth/gram.hpp"
#include "texsynth/image_io.hpp"
#include "texsynth/lbfgsb.hpp"
#include "texsynth/rng.hpp"

namespace texsynth {

struct SynthesisConfig {
    int max_iterations = 2000;
    double loss_scale = 1e7;
    Bounds bounds{0.0, 1.0};
    int out_height = 0;  // 0 = reference size
    int out_width = 0;
    std::uint64_t seed = 0;
    bool deterministic = false;
    int snapshot_every = 0;  // 0 = off; else write the iterate every k iterations
    std::string snapshot_prefix;
    std::optional<Image> init;  // replaces the noise initialization (testing/continuation)
    SolverConfig solver;        // memory and tolerances; max_iterations above wins
    std::function<void(int, double)> progress;  // (iteration, unscaled loss)
};

struct SynthesisRun {
    Image image;
    SolverResult solver;
    double initial_loss = 0.0;  // unscaled E at the initial image
    double final_loss = 0.0;    // unscaled E at the returned image
    std::uint64_t seed = 0;     // seed actually used for this run
};

// Per-sample sub-seed; sample 0 of a batch reproduces this derivation.
inline std::uint64_t sample_seed(std::uint64_t seed, int sample_index) {
    return splitmix64(seed + static_cast<std::uint64_t>(sample_index) * 0x9E3779B97F4A7C15ULL);
}

inline Image uniform_noise_image(int height, int width, Rng rng) {
    Image img(height, width);
    for (double& v : img.data()) v = rng.uniform();
    return img;
}

inline SynthesisRun synthesize(const Image& reference, const FilterBank& bank,
                               const ChannelMeans& means, const SynthesisConfig& cfg) {
    if (cfg.loss_scale <= 0.0)
        throw std::invalid_argument("synthesize: loss_scale must be positive");
    validate_bank(bank);

    const Image reference_dc = remove_dc(reference, means);
    if (degenerate_after_dc(reference, reference_dc))
        throw NumericError("synthesize: reference is constant after DC removal (degenerate)");
    const GramMatrix g_ref = gram(forward(bank, reference_dc));
    if (g_ref.data.norm() == 0.0)
        throw NumericError("synthesize: reference has a zero-norm Gram matrix");

    const int H = cfg.out_height > 0 ? cfg.out_height : reference.height();
    const int W = cfg.out_width > 0 ? cfg.out_width : reference.width();

    Image y0 = [&] {
        if (cfg.init) {
            if (cfg.init->height() != H || cfg.init->width() != W)
                throw std::invalid_argument("synthesize: init image size mismatch");
            return *cfg.init;
        }
        return uniform_noise_image(H, W, Rng(cfg.seed).stream(streams::noise_init));
    }();

    const Eigen::Index n = static_cast<Eigen::Index>(y0.data().size());
    Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(y0.data().data(), n);

    double initial_E = 0.0;
    bool first_eval = true;
    Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
        Image y(H, W, std::vector<double>(x.data(), x.data() + n));
        const LossGrad lg = loss_and_grad(bank, remove_dc(y, means), g_ref, cfg.loss_scale);
        if (first_eval) {
            initial_E = lg.unscaled;
            first_eval = false;
        }
        grad = Eigen::Map<const Eigen::VectorXd>(lg.grad.data().data(), n);
        return lg.loss;
    };

    SolverConfig solver_cfg = cfg.solver;
    solver_cfg.max_iterations = cfg.max_iterations;
    solver_cfg.on_iteration = [&](int iter, const Eigen::VectorXd& x, double f, double pg) {
        if (cfg.snapshot_every > 0 && iter % cfg.snapshot_every == 0) {
            Image snap(H, W, std::vector<double>(x.data(), x.data() + n));
            save_image(snap, cfg.snapshot_prefix + "_iter" + std::to_string(iter) + ".png");
        }
        if (cfg.progress) cfg.progress(iter, f / cfg.loss_scale);
        if (cfg.solver.on_iteration) cfg.solver.on_iteration(iter, x, f, pg);
    };

    SynthesisRun run;
    run.solver = minimize(objective, x0, cfg.bounds, solver_cfg);
    run.image = Image(H, W, std::vector<double>(run.solver.x_final.data(),
                                                run.solver.x_final.data() + n));
    run.initial_loss = initial_E;
    run.final_loss = synthesis_loss(g_ref, gram(forward(bank, remove_dc(run.image, means))));
    run.seed = cfg.seed;
    return run;
}

inline std::vector<SynthesisRun> synthesize_batch(const Image& reference, const FilterBank& bank,
                                                  const ChannelMeans& means,
                                                  const SynthesisConfig& cfg, int n_samples) {
    if (n_samples < 1)
        throw std::invalid_argument("synthesize_batch: n_samples must be >= 1");
    std::vector<SynthesisRun> runs;
    runs.reserve(n_samples);
    for (int k = 0; k < n_samples; ++k) {
        SynthesisConfig sub = cfg;
        sub.seed = sample_seed(cfg.seed, k);
        if (!cfg.snapshot_prefix.empty() && n_samples > 1)
            sub.snapshot_prefix = cfg.snapshot_prefix + "_s" + std::to_string(k);
        runs.push_back(synthesize(reference, bank, means, sub));
    }
    return runs;
}

// Run metadata written next to each output image. wall_time_s is omitted in
// deterministic mode so that reruns are byte-identical.
inline nlohmann::json make_sidecar(const SynthesisRun& run, const FilterBank& bank,
                                   const ChannelMeans& means, const std::string& means_source,
                                   std::optional<double> wall_time_s) {
    nlohmann::json j = {
        {"seed", run.seed},
        {"bank_kind", to_string(bank.kind)},
        {"bank_hash", bank_hash(bank)},
        {"iterations", run.solver.n_iterations},
        {"initial_loss", run.initial_loss},
        {"final_loss", run.final_loss},
        {"status", to_string(run.solver.status)},
        {"means", {{"r", means.r}, {"g", means.g}, {"b", means.b}}},
        {"means_source", means_source},
    };
    if (wall_time_s) j["wall_time_s"] = *wall_time_s;
    return j;
}

}  // namespace texsynth
