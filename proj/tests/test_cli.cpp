#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>

#include "testutil.hpp"
#include "texsynth/texsynth.hpp"

using namespace texsynth;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string out;
};

// Runs the CLI binary, capturing exit code and stdout (stderr is left alone
// unless the caller redirects it inside args).
CliResult run_cli(const std::string& args, const testutil::TempDir& dir,
                  const std::string& tag) {
    const std::string out_file = dir.file("stdout_" + tag + ".txt");
    const std::string cmd = std::string(TEXSYNTH_CLI_PATH) + " " + args + " > " + out_file +
                            " 2> " + dir.file("stderr_" + tag + ".txt");
    const int rc = std::system(cmd.c_str());
    CliResult res;
    res.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    std::ifstream in(out_file);
    res.out.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return res;
}

void write_small_corpus(const testutil::TempDir& dir, const std::string& sub, int count,
                        int size, std::uint64_t seed) {
    std::filesystem::create_directories(dir.file(sub));
    auto textures = make_texture_set(count, size, size, seed);
    for (int t = 0; t < count; ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "%s/tex%02d.png", sub.c_str(), t);
        save_image(textures[t], dir.file(name));
    }
}

}  // namespace

TEST_CASE("distance of a file with itself prints exactly zero", "[cli]") {
    testutil::TempDir dir("clidist");
    write_small_corpus(dir, "tex", 1, 32, 3);
    const std::string img = dir.file("tex/tex00.png");

    CliResult res = run_cli("distance " + img + " " + img + " --pixel", dir, "self");
    CHECK(res.exit_code == 0);
    CHECK(res.out == "0.000000000e+00\n");

    // Output must parse as a single float with nothing else on stdout.
    char* end = nullptr;
    const double v = std::strtod(res.out.c_str(), &end);
    CHECK(v == 0.0);
    CHECK(std::string(end) == "\n");
}

TEST_CASE("distance via a bank and dimension mismatch handling", "[cli]") {
    testutil::TempDir dir("clidist2");
    write_small_corpus(dir, "tex", 2, 32, 7);
    REQUIRE(run_cli("filters --kind random --count 8 --size 3 --seed 4 -o " + dir.file("b.bank"),
                    dir, "bank")
                .exit_code == 0);

    CliResult res = run_cli("distance " + dir.file("tex/tex00.png") + " " +
                                dir.file("tex/tex01.png") + " --bank " + dir.file("b.bank"),
                            dir, "gram");
    CHECK(res.exit_code == 0);
    CHECK(std::stod(res.out) > 0.0);

    // Pixel mode on mismatched sizes is a usage error (exit 2).
    Image small(8, 8);
    for (double& v : small.data()) v = 0.5;
    save_image(small, dir.file("small.png"));
    CliResult bad = run_cli("distance " + dir.file("tex/tex00.png") + " " + dir.file("small.png") +
                                " --pixel",
                            dir, "mismatch");
    CHECK(bad.exit_code == 2);
}

TEST_CASE("filters subcommand kinds and exit codes", "[cli]") {
    testutil::TempDir dir("clifilters");
    write_small_corpus(dir, "corpus", 3, 48, 11);

    CliResult fourier = run_cli("filters --kind fourier363 -o " + dir.file("f.bank"), dir, "f363");
    CHECK(fourier.exit_code == 0);
    CHECK(fourier.out.find("363 filters") != std::string::npos);
    FilterBank loaded = load_bank(dir.file("f.bank"));
    CHECK(loaded.kind == BankKind::fourier363);
    CHECK(std::filesystem::exists(dir.file("f.bank.config")));

    CliResult km = run_cli("filters --kind kmeans --k 12 --size 5 --patches 300 --corpus " +
                               dir.file("corpus") + " --seed 9 -o " + dir.file("km.bank"),
                           dir, "km");
    CHECK(km.exit_code == 0);
    FilterBank kmb = load_bank(dir.file("km.bank"));
    CHECK(kmb.kind == BankKind::kmeans);
    CHECK(kmb.size() == 12);
    CHECK(kmb.metadata.contains("corpus_means"));

    CliResult kmnw = run_cli("filters --kind kmeans --no-whiten --k 8 --size 5 --patches 300 "
                             "--corpus " + dir.file("corpus") + " --seed 9 -o " +
                                 dir.file("kmnw.bank"),
                             dir, "kmnw");
    CHECK(kmnw.exit_code == 0);
    CHECK(load_bank(dir.file("kmnw.bank")).kind == BankKind::kmeans_nonwhite);

    CliResult kms = run_cli("filters --kind kmeans-sample --k 8 --size 5 --patches 300 "
                            "--texture " + dir.file("corpus/tex00.png") + " --seed 9 -o " +
                                dir.file("kms.bank"),
                            dir, "kms");
    CHECK(kms.exit_code == 0);
    CHECK(load_bank(dir.file("kms.bank")).kind == BankKind::kmeans_sample);

    // Missing corpus: usage error.
    CHECK(run_cli("filters --kind kmeans --k 8 -o " + dir.file("x.bank"), dir, "nocorpus")
              .exit_code == 2);
    // Unknown kind: usage error.
    CHECK(run_cli("filters --kind nonsense -o " + dir.file("y.bank"), dir, "badkind")
              .exit_code == 2);
    // Unreadable corpus: I/O error.
    CHECK(run_cli("filters --kind kmeans --k 8 --corpus " + dir.file("missing") + " -o " +
                      dir.file("z.bank"),
                  dir, "iocorpus")
              .exit_code == 3);
}

TEST_CASE("patch cache is written and reused", "[cli]") {
    testutil::TempDir dir("clicache");
    write_small_corpus(dir, "corpus", 2, 48, 13);
    const std::string cache = dir.file("patches.txp");
    CHECK(run_cli("filters --kind kmeans --k 6 --size 5 --patches 200 --patch-cache " + cache +
                      " --corpus " + dir.file("corpus") + " --seed 1 -o " + dir.file("a.bank"),
                  dir, "cache1")
              .exit_code == 0);
    REQUIRE(std::filesystem::exists(cache));
    CHECK(load_patches(cache).size() == 200);
    // Second run consumes the cache and reproduces the bank bit for bit.
    CHECK(run_cli("filters --kind kmeans --k 6 --size 5 --patches 200 --patch-cache " + cache +
                      " --corpus " + dir.file("corpus") + " --seed 1 -o " + dir.file("b.bank"),
                  dir, "cache2")
              .exit_code == 0);
    CHECK(testutil::files_identical(dir.file("a.bank"), dir.file("b.bank")));
}

TEST_CASE("synth writes outputs and sidecars", "[cli]") {
    testutil::TempDir dir("clisynth");
    write_small_corpus(dir, "tex", 1, 24, 17);
    REQUIRE(run_cli("filters --kind random --count 6 --size 3 --seed 2 -o " + dir.file("b.bank"),
                    dir, "bank")
                .exit_code == 0);

    CliResult res = run_cli("synth --texture " + dir.file("tex/tex00.png") + " --bank " +
                                dir.file("b.bank") + " --iters 10 --samples 2 --seed 5 -o " +
                                dir.file("out.png"),
                            dir, "synth");
    CHECK(res.exit_code == 0);
    CHECK(std::filesystem::exists(dir.file("out_s0.png")));
    CHECK(std::filesystem::exists(dir.file("out_s1.png")));
    CHECK(std::filesystem::exists(dir.file("out.config")));

    std::ifstream sj(dir.file("out_s0.json"));
    REQUIRE(sj.good());
    nlohmann::json sidecar = nlohmann::json::parse(sj);
    CHECK(sidecar.contains("seed"));
    CHECK(sidecar.contains("bank_hash"));
    CHECK(sidecar.contains("initial_loss"));
    CHECK(sidecar.contains("final_loss"));
    CHECK(sidecar.contains("wall_time_s"));
    const std::string status = sidecar["status"].get<std::string>();
    CHECK((status == "max_iter" || status.rfind("converged", 0) == 0));

    // Missing bank file: I/O error.
    CHECK(run_cli("synth --texture " + dir.file("tex/tex00.png") + " --bank " +
                      dir.file("none.bank") + " -o " + dir.file("x.png"),
                  dir, "nobank")
              .exit_code == 3);
}

TEST_CASE("degenerate synth input yields the numeric exit code", "[cli]") {
    testutil::TempDir dir("clidegen");
    Image flat(16, 16);
    for (double& v : flat.data()) v = 0.5;
    save_image(flat, dir.file("flat.png"));
    REQUIRE(run_cli("filters --kind random --count 4 --size 3 --seed 3 -o " + dir.file("b.bank"),
                    dir, "bank")
                .exit_code == 0);
    CliResult res = run_cli("synth --texture " + dir.file("flat.png") + " --bank " +
                                dir.file("b.bank") + " --iters 5 -o " + dir.file("out.png"),
                            dir, "flat");
    CHECK(res.exit_code == 4);
}

TEST_CASE("confusion produces csv, heatmap, and report", "[cli]") {
    testutil::TempDir dir("cliconf");
    write_small_corpus(dir, "tex", 3, 64, 19);
    REQUIRE(run_cli("filters --kind random --count 8 --size 3 --seed 6 -o " + dir.file("b.bank"),
                    dir, "bank")
                .exit_code == 0);

    CliResult res = run_cli("confusion --textures " + dir.file("tex") + " --bank " +
                                dir.file("b.bank") + " --n-patches 3 --patch-size 24 --seed 8 -o " +
                                dir.file("cm"),
                            dir, "conf");
    CHECK(res.exit_code == 0);
    CHECK(res.out.rfind("separated: ", 0) == 0);
    CHECK(std::filesystem::exists(dir.file("cm.csv")));
    CHECK(std::filesystem::exists(dir.file("cm.png")));
    CHECK(std::filesystem::exists(dir.file("cm_report.txt")));
    CHECK(std::filesystem::exists(dir.file("cm.config")));

    // Header carries the sorted texture labels.
    std::ifstream csv(dir.file("cm.csv"));
    std::string header;
    std::getline(csv, header);
    CHECK(header == "tex00,tex01,tex02");
}

TEST_CASE("confusion reruns with the same seed are byte identical", "[cli]") {
    testutil::TempDir dir("clirepro");
    write_small_corpus(dir, "tex", 2, 48, 23);
    REQUIRE(run_cli("filters --kind random --count 6 --size 3 --seed 1 -o " + dir.file("b.bank"),
                    dir, "bank")
                .exit_code == 0);
    const std::string args = "--deterministic confusion --textures " + dir.file("tex") +
                             " --bank " + dir.file("b.bank") +
                             " --n-patches 3 --patch-size 16 --seed 42 -o ";
    CHECK(run_cli(args + dir.file("r1"), dir, "r1").exit_code == 0);
    CHECK(run_cli(args + dir.file("r2"), dir, "r2").exit_code == 0);
    CHECK(testutil::files_identical(dir.file("r1.csv"), dir.file("r2.csv")));
    CHECK(testutil::files_identical(dir.file("r1.png"), dir.file("r2.png")));
    CHECK(testutil::files_identical(dir.file("r1_report.txt"), dir.file("r2_report.txt")));
}

TEST_CASE("usage errors exit with code 2", "[cli]") {
    testutil::TempDir dir("cliusage");
    CHECK(run_cli("frobnicate", dir, "unknown").exit_code == 2);
    CHECK(run_cli("synth", dir, "missingargs").exit_code == 2);
    CHECK(run_cli("distance a.png b.png", dir, "nomode").exit_code == 2);
}
