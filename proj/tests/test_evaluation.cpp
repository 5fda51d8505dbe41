#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "testutil.hpp"
#include "texsynth/evaluation.hpp"
#include "texsynth/textures.hpp"

using namespace texsynth;

namespace {

ConfusionMatrix literal_cm(std::initializer_list<std::initializer_list<double>> rows) {
    ConfusionMatrix cm;
    cm.n_textures = static_cast<int>(rows.size());
    cm.data.resize(cm.n_textures, cm.n_textures);
    int i = 0;
    for (const auto& row : rows) {
        int j = 0;
        for (double v : row) cm.data(i, j++) = v;
        ++i;
        cm.labels.push_back("t" + std::to_string(i));
    }
    cm.model_id = "test";
    return cm;
}

}  // namespace

TEST_CASE("single texture confusion is the within-texture median", "[evaluation]") {
    Rng rng(3);
    std::vector<Image> textures{make_filtered_noise(48, 48, 1.5, Rng(5))};
    FilterBank bank = testutil::random_bank({3}, 4, rng, 0.3);
    Rng draw(7);
    ConfusionMatrix cm = confusion(textures, {"only"}, &bank, channel_means(textures), 4, 16, draw);
    REQUIRE(cm.n_textures == 1);
    CHECK(cm.data(0, 0) > 0.0);
    CHECK(cm.model_id == bank_hash(bank));
}

TEST_CASE("duplicate textures are statistically indistinguishable", "[evaluation]") {
    Rng rng(11);
    Image tex = make_filtered_noise(64, 64, 2.0, Rng(13));
    std::vector<Image> textures{tex, tex};
    FilterBank bank = testutil::random_bank({3, 5}, 4, rng, 0.3);
    Rng draw(17);
    ConfusionMatrix cm =
        confusion(textures, {"a", "b"}, &bank, channel_means(textures), 6, 24, draw);
    const double dii = cm.data(0, 0), djj = cm.data(1, 1), dij = cm.data(0, 1);
    for (double pair : {dii / djj, dii / dij, djj / dij}) {
        CHECK(pair < 3.0);
        CHECK(pair > 1.0 / 3.0);
    }
}

TEST_CASE("confusion is symmetric and seed reproducible", "[evaluation]") {
    Rng rng(19);
    auto textures = make_texture_set(3, 48, 48, 99);
    FilterBank bank = testutil::random_bank({3}, 6, rng, 0.3);
    const ChannelMeans means = channel_means(textures);
    Rng d1(23), d2(23);
    ConfusionMatrix a = confusion(textures, {"x", "y", "z"}, &bank, means, 4, 16, d1);
    ConfusionMatrix b = confusion(textures, {"x", "y", "z"}, &bank, means, 4, 16, d2);
    REQUIRE(a.data == b.data);  // bitwise
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) REQUIRE(a.data(i, j) == a.data(j, i));
}

TEST_CASE("pixel mode works without a bank", "[evaluation]") {
    auto textures = make_texture_set(2, 40, 40, 7);
    Rng draw(29);
    ConfusionMatrix cm =
        confusion(textures, {"a", "b"}, nullptr, ChannelMeans{}, 3, 16, draw);
    CHECK(cm.model_id == "pixel");
    CHECK(cm.data.minCoeff() > 0.0);
}

TEST_CASE("confusion input validation", "[evaluation]") {
    auto textures = make_texture_set(2, 32, 32, 3);
    Rng draw(31);
    CHECK_THROWS_AS(confusion(textures, {"a", "b"}, nullptr, ChannelMeans{}, 1, 16, draw),
                    std::invalid_argument);
    CHECK_THROWS_AS(confusion(textures, {"a", "b"}, nullptr, ChannelMeans{}, 3, 64, draw),
                    std::invalid_argument);
    CHECK_THROWS_AS(confusion(textures, {"a"}, nullptr, ChannelMeans{}, 3, 16, draw),
                    std::invalid_argument);
}

TEST_CASE("separation report counts and ratios", "[evaluation]") {
    ConfusionMatrix good = literal_cm({{0.1, 5.0, 4.0}, {5.0, 0.2, 6.0}, {4.0, 6.0, 0.3}});
    SeparationReport rep = separation_report(good);
    CHECK(rep.n_separated == 3);
    CHECK(rep.n_textures == 3);
    CHECK(rep.ratios[0] == Catch::Approx(40.0));
    CHECK(rep.text.find("separated: 3/3") != std::string::npos);

    ConfusionMatrix flat = literal_cm({{1.0, 1.0}, {1.0, 1.0}});
    SeparationReport none = separation_report(flat);
    CHECK(none.n_separated == 0);
    CHECK(none.text.find("separated: 0/2") != std::string::npos);
}

TEST_CASE("csv export round trips to nine significant digits", "[evaluation]") {
    testutil::TempDir dir("evalcsv");
    ConfusionMatrix cm = literal_cm({{0.123456789123, 4.5}, {4.5, 9.87654321e-7}});
    write_confusion_csv(cm, dir.file("cm.csv"));

    std::ifstream in(dir.file("cm.csv"));
    std::string header, line;
    std::getline(in, header);
    CHECK(header == "t1,t2");
    std::getline(in, line);
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    CHECK(std::stod(cell) == Catch::Approx(0.123456789123).epsilon(1e-9));
}

TEST_CASE("heatmap maps log values to equally spaced grays", "[evaluation]") {
    testutil::TempDir dir("evalheat");
    ConfusionMatrix cm = literal_cm({{1.0, 10.0}, {100.0, 1000.0}});
    render_heatmap(cm, dir.file("hm.png"), dir.file("hm.csv"));
    Image img = load_image(dir.file("hm.png"));
    REQUIRE(img.height() == 64);
    REQUIRE(img.width() == 64);
    // Cell centers: log10 = 0,1,2,3 -> gray 0, 1/3, 2/3, 1.
    CHECK(img.at(16, 16, 0) == Catch::Approx(0.0).margin(1e-9));
    CHECK(img.at(16, 48, 0) == Catch::Approx(85.0 / 255.0).margin(1e-9));
    CHECK(img.at(48, 16, 0) == Catch::Approx(170.0 / 255.0).margin(1e-9));
    CHECK(img.at(48, 48, 0) == Catch::Approx(1.0).margin(1e-9));
    CHECK(std::filesystem::exists(dir.file("hm.csv")));
}

TEST_CASE("constant heatmap renders uniform gray", "[evaluation]") {
    testutil::TempDir dir("evalflat");
    ConfusionMatrix cm = literal_cm({{2.0, 2.0}, {2.0, 2.0}});
    render_heatmap(cm, dir.file("flat.png"), dir.file("flat.csv"));
    Image img = load_image(dir.file("flat.png"));
    for (double v : img.data()) REQUIRE(v == Catch::Approx(128.0 / 255.0).margin(1e-9));
}

TEST_CASE("permuting textures permutes the matrix consistently", "[evaluation]") {
    // Textures exactly the patch size force every draw to corner (0,0), so
    // the matrix is a pure function of the texture multiset and permutation
    // equality is exact.
    Rng rng(37);
    auto textures = make_texture_set(3, 24, 24, 55);
    FilterBank bank = testutil::random_bank({3}, 5, rng, 0.3);
    const ChannelMeans means = channel_means(textures);

    Rng d1(5);
    ConfusionMatrix orig = confusion(textures, {"a", "b", "c"}, &bank, means, 3, 24, d1);
    std::vector<Image> swapped{textures[1], textures[0], textures[2]};
    Rng d2(5);
    ConfusionMatrix perm = confusion(swapped, {"b", "a", "c"}, &bank, means, 3, 24, d2);

    const std::vector<int> p{1, 0, 2};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) REQUIRE(perm.data(i, j) == orig.data(p[i], p[j]));
}

TEST_CASE("multiscale gram separates the desk corpus where pixels cannot", "[evaluation]") {
    // Small-scale version of the discrimination experiment: 5 textures,
    // 4 patches of 48 px, a thin random multi-size bank.
    Rng rng(41);
    auto textures = make_texture_set(5, 128, 128, 2024);
    std::vector<std::string> labels{"t0", "t1", "t2", "t3", "t4"};
    FilterBank bank = testutil::random_bank({3, 7, 15}, 24, rng, 0.08);
    const ChannelMeans means = channel_means(textures);

    Rng d1(43);
    ConfusionMatrix gram_cm = confusion(textures, labels, &bank, means, 4, 48, d1);
    Rng d2(43);
    ConfusionMatrix pix_cm = confusion(textures, labels, nullptr, means, 4, 48, d2);

    const int gram_sep = separation_report(gram_cm).n_separated;
    const int pix_sep = separation_report(pix_cm).n_separated;
    CHECK(gram_sep >= 4);
    CHECK(pix_sep < gram_sep);
}
