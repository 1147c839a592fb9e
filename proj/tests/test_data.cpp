#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "test_models_common.hpp"
#include "warpfit/data_io.hpp"
#include "warpfit/simulate.hpp"

using namespace warpfit;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("warpfit_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

bool same_content(const Dataset& a, const Dataset& b) {
    if (a.n() != b.n() || a.labels != b.labels) return false;
    for (int i = 0; i < a.n(); ++i) {
        if (a.curves[i].id != b.curves[i].id) return false;
        if ((a.curves[i].t - b.curves[i].t).lpNorm<Eigen::Infinity>() != 0.0) return false;
        if ((a.curves[i].y - b.curves[i].y).lpNorm<Eigen::Infinity>() != 0.0) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("load_long_csv: two-subject fixture") {
    const fs::path dir = temp_dir("load");
    write_file(dir / "curves.csv",
               "id,t,value\n"
               "a,-30,1.5\n"
               "a,-50,2.0\n"
               "a,-10,0.5\n"
               "b,-70,0.1\n"
               "b,-60,0.2\n"
               "b,-50,0.3\n"
               "b,-40,0.4\n"
               "b,-30,0.5\n");
    const Dataset data = load_curves((dir / "curves.csv").string());
    REQUIRE(data.n() == 2);
    CHECK(data.curves[0].id == "a");
    CHECK(data.curves[0].m() == 3);
    CHECK(data.curves[1].m() == 5);
    // rows are sorted by t even though the file is shuffled
    CHECK(data.curves[0].t(0) == -50.0);
    CHECK(data.curves[0].y(0) == 2.0);
    CHECK(data.curves[0].t(2) == -10.0);
}

TEST_CASE("load_long_csv: rejects duplicates, bad rows, non-finite values") {
    const fs::path dir = temp_dir("reject");
    write_file(dir / "dup.csv", "id,t,value\na,-30,1\na,-30,2\n");
    CHECK_THROWS_WITH_AS(load_long_csv((dir / "dup.csv").string()),
                         doctest::Contains("duplicate observation (id=a, t=-30)"),
                         warpfit::IoError);

    write_file(dir / "short.csv", "id,t,value\na,-30\n");
    CHECK_THROWS_WITH_AS(load_long_csv((dir / "short.csv").string()), doctest::Contains(":2:"),
                         warpfit::IoError);

    write_file(dir / "nan.csv", "id,t,value\na,-30,nan\n");
    CHECK_THROWS_AS(load_long_csv((dir / "nan.csv").string()), warpfit::IoError);

    write_file(dir / "header.csv", "id,time,value\na,-30,1\n");
    CHECK_THROWS_AS(load_long_csv((dir / "header.csv").string()), warpfit::IoError);
}

TEST_CASE("load_curve_dir: per-curve files") {
    const fs::path dir = temp_dir("dir");
    write_file(dir / "p1.csv", "t,value\n-40,1\n-20,2\n");
    write_file(dir / "p2.csv", "t,value\n-60,0\n-30,1\n-10,2\n");
    const Dataset data = load_curves(dir.string());
    REQUIRE(data.n() == 2);
    CHECK(data.curves[0].id == "p1");
    CHECK(data.curves[1].m() == 3);
}

TEST_CASE("labels: load and validation") {
    const fs::path dir = temp_dir("labels");
    write_file(dir / "curves.csv", "id,t,value\na,-30,1\nb,-30,2\n");
    write_file(dir / "labels.csv", "id,group\na,upper\nb,lower\n");
    Dataset data = load_curves((dir / "curves.csv").string());
    load_labels_csv(data, (dir / "labels.csv").string());
    CHECK(data.label_of("a") == 1);
    CHECK(data.label_of("b") == 0);

    write_file(dir / "bad_id.csv", "id,group\nzz,upper\n");
    Dataset fresh = load_curves((dir / "curves.csv").string());
    CHECK_THROWS_WITH_AS(load_labels_csv(fresh, (dir / "bad_id.csv").string()),
                         doctest::Contains("unknown id 'zz'"), warpfit::IoError);

    write_file(dir / "bad_group.csv", "id,group\na,middle\n");
    CHECK_THROWS_AS(load_labels_csv(fresh, (dir / "bad_group.csv").string()), warpfit::IoError);
}

TEST_CASE("roundtrips: long CSV and dataset JSON") {
    SimSpec spec;
    spec.model = testutil::default_layout_model();
    spec.n = 5;
    spec.m = 12;
    spec.label_b = Eigen::VectorXd::Zero(2);
    spec.seed = 77;
    const auto [data, truth] = simulate(spec);

    const fs::path dir = temp_dir("roundtrip");
    save_long_csv(data, (dir / "out.csv").string());
    Dataset back = load_long_csv((dir / "out.csv").string());
    back.labels = data.labels;  // long CSV carries no labels
    CHECK(same_content(data, back));

    save_dataset_json(data, (dir / "out.json").string());
    const Dataset back_json = load_dataset_json((dir / "out.json").string());
    CHECK(same_content(data, back_json));
    CHECK(back_json.meta.seed == data.meta.seed);
}

TEST_CASE("truncate: drops early observations and reports emptied curves") {
    Dataset data;
    Curve inside{"in", Eigen::VectorXd::LinSpaced(5, -70, -10), Eigen::VectorXd::Ones(5)};
    Curve spanning{"span", Eigen::VectorXd::LinSpaced(13, -120, 0), Eigen::VectorXd::Ones(13)};
    Curve early{"early", Eigen::VectorXd::LinSpaced(3, -150, -130), Eigen::VectorXd::Ones(3)};
    data.curves = {inside, spanning, early};
    data.labels = {{"in", 1}, {"span", 0}, {"early", 0}};

    const Dataset cut = truncate(data, -80.0);
    REQUIRE(cut.n() == 2);
    CHECK((cut.find("in")->t - inside.t).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(cut.find("span")->t(0) == -80.0);
    CHECK(cut.find("span")->m() == 9);
    CHECK(cut.meta.removed_empty_ids == std::vector<std::string>{"early"});
    CHECK(cut.labels.count("early") == 0);
    CHECK(*cut.meta.truncated_at == -80.0);

    // idempotent
    const Dataset twice = truncate(cut, -80.0);
    CHECK(same_content(cut, twice));

    // bound below all data is the identity
    const Dataset untouched = truncate(data, -1000.0);
    CHECK(untouched.n() == 3);
}

TEST_CASE("downsample: quantile selection with endpoint retention") {
    Dataset data;
    Curve dense{"dense", Eigen::VectorXd::LinSpaced(100, -80, 0), Eigen::VectorXd::Random(100)};
    Curve exact{"exact", Eigen::VectorXd::LinSpaced(30, -80, 0), Eigen::VectorXd::Random(30)};
    Curve sparse{"sparse", Eigen::VectorXd::LinSpaced(12, -80, 0), Eigen::VectorXd::Random(12)};
    data.curves = {dense, exact, sparse};

    const Dataset down = downsample(data, 30);
    CHECK(down.find("dense")->m() == 30);
    CHECK(down.find("exact")->m() == 30);
    CHECK(down.find("sparse")->m() == 12);
    CHECK((down.find("exact")->t - exact.t).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((down.find("sparse")->t - sparse.t).lpNorm<Eigen::Infinity>() == 0.0);

    const Curve& d = *down.find("dense");
    CHECK(d.t(0) == -80.0);
    CHECK(d.t(29) == 0.0);
    // spacing of the selected grid stays near the ideal 80/29
    for (int j = 1; j < 30; ++j) {
        const double gap = d.t(j) - d.t(j - 1);
        CHECK(gap > 0.0);
        CHECK(std::abs(gap - 80.0 / 29.0) < 80.0 / 99.0 + 1e-9);
    }
    // kept points carry their original values
    for (int j = 0; j < 30; ++j) {
        bool found = false;
        for (int i = 0; i < 100; ++i)
            if (dense.t(i) == d.t(j) && dense.y(i) == d.y(j)) found = true;
        CHECK(found);
    }
}

TEST_CASE("simulate: all randomness off reproduces the mean") {
    SimSpec spec;
    spec.model = testutil::default_layout_model();
    spec.model.sigma2 = 0.0;
    spec.model.lambda.setZero();
    spec.model.Sigma.setZero();
    spec.n = 4;
    spec.m = 25;
    spec.label_b = Eigen::VectorXd::Zero(2);
    spec.seed = 11;
    const auto [data, truth] = simulate(spec);
    for (const auto& c : data.curves) {
        for (int j = 0; j < c.m(); ++j) {
            const double mu = spec.model.basis.eval(c.t(j)).dot(spec.model.a);
            CHECK(c.y(j) == doctest::Approx(mu).epsilon(1e-10));
        }
    }
}

TEST_CASE("simulate: deterministic and moment-faithful") {
    SimSpec spec;
    spec.model = testutil::default_layout_model();
    spec.n = 10000;
    spec.m = 2;  // two points per curve suffice for the moment checks
    spec.label_alpha = -0.4;
    spec.label_b = Eigen::VectorXd(2);
    spec.label_b << 0.8, -0.5;
    spec.seed = 20240811;
    const auto [data, truth] = simulate(spec);
    const auto [data2, truth2] = simulate(spec);
    CHECK(same_content(data, data2));

    // z moments within 3 standard errors of (0, diag(4, 1))
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
    for (const auto& s : truth.subjects) mean += s.z;
    mean /= spec.n;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(2);
    for (const auto& s : truth.subjects) var += (s.z - mean).cwiseAbs2();
    var /= spec.n - 1;
    for (int k = 0; k < 2; ++k) {
        const double se_mean = std::sqrt(spec.model.lambda(k) / spec.n);
        CHECK(std::abs(mean(k)) < 3.0 * se_mean);
        const double se_var = spec.model.lambda(k) * std::sqrt(2.0 / spec.n);
        CHECK(std::abs(var(k) - spec.model.lambda(k)) < 3.0 * se_var);
    }

    // label prevalence matches the mechanism's average probability
    double expected = 0.0, observed = 0.0;
    for (const auto& s : truth.subjects) {
        expected += s.prob;
        observed += s.label;
    }
    expected /= spec.n;
    observed /= spec.n;
    CHECK(std::abs(observed - expected) < 3.0 * std::sqrt(0.25 / spec.n));
}

TEST_CASE("simulate: random incomplete grids stay inside the interval") {
    SimSpec spec;
    spec.model = testutil::default_layout_model();
    spec.n = 50;
    spec.m = 15;
    spec.grid_policy = SimSpec::GridPolicy::random_incomplete;
    spec.min_span = 0.5;
    spec.label_b = Eigen::VectorXd::Zero(2);
    spec.seed = 4;
    const auto [data, truth] = simulate(spec);
    for (const auto& c : data.curves) {
        CHECK(c.m() == 15);
        CHECK(c.t(0) == -80.0);
        CHECK(c.t(14) <= 0.0);
        CHECK(c.t(14) >= -40.0);
        for (int j = 1; j < c.m(); ++j) CHECK(c.t(j) > c.t(j - 1));
    }
}
