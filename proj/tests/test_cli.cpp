#include <gtest/gtest.h>
#include <json.hpp>
#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dpflab/io.hpp"

namespace fs = std::filesystem;
using dpflab::Matrix;

namespace {

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("dpflab_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
                std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    // Exit status of the CLI run inside the scratch directory; stdout/stderr to files.
    int run(const std::string& args, const std::string& env = "") {
        const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" + DPFLAB_CLI_PATH + "' " + args +
                                " > stdout.txt 2> stderr.txt";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string read(const std::string& name) const {
        std::ifstream in(dir_ / name);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

    // Numeric rows of a CSV (comments skipped); header returned separately.
    std::vector<std::vector<std::string>> csv(const std::string& name, std::string* header = nullptr) const {
        std::istringstream is(read(name));
        std::string line;
        std::vector<std::vector<std::string>> rows;
        bool first = true;
        while (std::getline(is, line)) {
            if (line.empty() || line[0] == '#') continue;
            if (first) {
                first = false;
                if (header) *header = line;
                continue;
            }
            rows.emplace_back();
            std::stringstream ls(line);
            std::string cell;
            while (std::getline(ls, cell, ',')) rows.back().push_back(cell);
        }
        return rows;
    }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, SynthFullControlHasOneDpfEdge) {
    ASSERT_EQ(run("synth --a 1 --sigma-w 1 --sigma-v 1 --td 1 --controller fc --out o"), 0) << read("stderr.txt");
    const auto art = dpflab::io::read_artifact_file((dir_ / "o/controller.ini").string());
    const double golden_inv = 2.0 / (1.0 + std::sqrt(5.0));
    EXPECT_NEAR(-art.gain(0, 0), golden_inv, 1e-8);
    EXPECT_NEAR(-art.gain(1, 0), golden_inv, 1e-8);
    const auto dims = nlohmann::json::parse(read("o/controller_dims.json"));
    EXPECT_EQ(dims["dpf_edges"].size(), 1u);
    EXPECT_EQ(dims["forward_dim"], 1);
    EXPECT_EQ(dims["feedback_dim"], 1);
    EXPECT_NE(read("o/controller.dot").find("digraph"), std::string::npos);
}

TEST_F(Cli, StateFeedbackNeedsPerfectSensing) {
    EXPECT_EQ(run("synth --controller sf --a 0.9 --sigma-v 0.5"), 2);
    EXPECT_NE(read("stderr.txt").find("SF requires perfect sensing"), std::string::npos);
    EXPECT_EQ(run("synth --controller sf --a 0.9 --sigma-v 0"), 0) << read("stderr.txt");
    const auto dims = nlohmann::json::parse(read("controller_dims.json"));
    EXPECT_EQ(dims["feedback_dim"], 0);
}

TEST_F(Cli, SlsOneTapIsDeadbeat) {
    ASSERT_EQ(run("synth --controller sls --T 1 --a 1.7 --sigma-v 0"), 0) << read("stderr.txt");
    const auto art = dpflab::io::read_artifact_file((dir_ / "controller.ini").string());
    ASSERT_TRUE(art.response.has_value());
    EXPECT_EQ(art.response->phi_u[0](0, 0), -1.7);
    EXPECT_EQ(nlohmann::json::parse(read("controller_dims.json"))["feedback_dim"], 0);
}

TEST_F(Cli, SlsImpulseCsvEqualsResponse) {
    ASSERT_EQ(run("synth --controller sls --T 3 --a 1.2 --sigma-v 0"), 0) << read("stderr.txt");
    const auto art = dpflab::io::read_artifact_file((dir_ / "controller.ini").string());
    ASSERT_EQ(run("simulate --controller controller.ini --noise impulse --horizon 8 --no-cost --out imp.csv"), 0);
    std::string header;
    const auto rows = csv("imp.csv", &header);
    EXPECT_EQ(header, "t,x_1,u_1,y_1,xhat_1,delta_hat_1");
    ASSERT_EQ(rows.size(), 8u);
    for (std::size_t t = 1; t < 8; ++t) {
        const double x = t <= 3 ? art.response->phi_x[t - 1](0, 0) : 0.0;
        const double u = t <= 3 ? art.response->phi_u[t - 1](0, 0) : 0.0;
        EXPECT_NEAR(std::stod(rows[t][1]), x, 1e-12);
        EXPECT_NEAR(std::stod(rows[t][2]), u, 1e-12);
    }
}

TEST_F(Cli, NoDpfRunIsDivergenceFlagged) {
    ASSERT_EQ(run("synth --a 2.5 --td 1 --controller fc"), 0);
    auto text = read("controller.ini");
    const auto pos = text.find("gain=");
    const auto semi = text.find(';', pos);
    text = text.substr(0, semi) + "; 0]\n" + text.substr(text.find('\n', semi) + 1);
    write("nodpf.ini", text);
    EXPECT_EQ(run("simulate --controller nodpf.ini --horizon 3000 --out traj.csv"), 4);
    const auto traj = read("traj.csv");
    EXPECT_NE(traj.find("# diverged_at="), std::string::npos);
    EXPECT_NE(traj.find("cost=refused"), std::string::npos);
    EXPECT_EQ(run("simulate --controller controller.ini --horizon 3000 --no-cost --out ok.csv"), 0);
    EXPECT_EQ(read("ok.csv").find("diverged"), std::string::npos);
}

TEST_F(Cli, SeededRunsAreIdentical) {
    ASSERT_EQ(run("synth --a 1.1 --td 2 --controller of"), 0) << read("stderr.txt");
    ASSERT_EQ(run("simulate --controller controller.ini --horizon 200 --seed 9 --rollouts 4 --cost-horizon 500 --out a.csv"), 0);
    ASSERT_EQ(run("simulate --controller controller.ini --horizon 200 --rollouts 4 --cost-horizon 500 --jobs 3 --out b.csv",
                  "DPFLAB_SEED=9"),
              0);
    ASSERT_EQ(run("simulate --controller controller.ini --horizon 200 --seed 10 --rollouts 4 --cost-horizon 500 --out c.csv"), 0);
    EXPECT_EQ(read("a.csv"), read("b.csv"));
    EXPECT_NE(read("a.csv"), read("c.csv"));
    EXPECT_NE(read("a.csv").find("cost_mean="), std::string::npos);
}

TEST_F(Cli, Fig5RowsAndOrdering) {
    ASSERT_EQ(run("fig5 --a 1,0.5,1.5 --sigma-w 1,0 --sigma-v 1,0.01 --out s --jobs 4"), 0) << read("stderr.txt");
    std::string header;
    const auto rows = csv("s/fig5.csv", &header);
    EXPECT_EQ(header, "a,sigma_w,sigma_v,l1,l2,p2,limit_case");
    ASSERT_EQ(rows.size(), 12u);
    auto find = [&](const std::string& a, const std::string& w, const std::string& v) {
        for (const auto& r : rows)
            if (r[0] == a && r[1] == w && r[2] == v) return std::stod(r[4]);
        ADD_FAILURE() << "row missing";
        return 0.0;
    };
    EXPECT_NEAR(find("1", "1", "1"), 0.6180339887, 1e-9);
    EXPECT_EQ(find("0.5", "0", "1"), 0.0);
    // sigma_v -> 0 drives l2 toward a here
    EXPECT_NEAR(find("1.5", "1", "0.01"), 1.5, 1e-3);
    // grid order: a outer, sigma_w, sigma_v inner
    EXPECT_EQ(rows[1][0], "1");
    EXPECT_EQ(rows[1][2], "0.01");
    EXPECT_EQ(rows[4][0], "0.5");
    const auto parallel = read("s/fig5.csv");
    ASSERT_EQ(run("fig5 --a 1,0.5,1.5 --sigma-w 1,0 --sigma-v 1,0.01 --out s --jobs 1"), 0);
    EXPECT_EQ(read("s/fig5.csv"), parallel);
    EXPECT_TRUE(fs::exists(dir_ / "s/fig5_a3.svg"));
}

TEST_F(Cli, Fig5DefaultGridAndLimitRows) {
    ASSERT_EQ(run("fig5 --out d --no-svg"), 0);
    EXPECT_EQ(csv("d/fig5.csv").size(), 3u * 25u * 25u);
    ASSERT_EQ(run("fig5 --a 0 --sigma-w 1 --sigma-v 1 --out z --no-svg"), 0);
    const auto rows = csv("z/fig5.csv");
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0][3], "0");
    EXPECT_EQ(rows[0][4], "0");
    EXPECT_EQ(rows[0][6], "1");
}

TEST_F(Cli, Fig7Rows) {
    ASSERT_EQ(run("fig7 --td-max 4 --tol 1e-3 --out f --jobs 2"), 0) << read("stderr.txt");
    std::string header;
    const auto rows = csv("f/fig7.csv", &header);
    EXPECT_EQ(header, "td,max_abs_a,witness_gain");
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_NEAR(std::stod(rows[0][1]), 2.0, 1e-3);
    EXPECT_NEAR(std::stod(rows[1][1]), 1.5, 1e-3);
    EXPECT_NEAR(std::stod(rows[3][1]), 1.25, 1e-3);
    EXPECT_TRUE(fs::exists(dir_ / "f/fig7.svg"));
}

TEST_F(Cli, ConfigFileAndOverrides) {
    write("run.ini", "[fig7]\ntd-max = 2\ntol = 0.01\nout = cfg\n");
    ASSERT_EQ(run("--config run.ini fig7 --no-svg"), 0) << read("stderr.txt");
    EXPECT_EQ(csv("cfg/fig7.csv").size(), 2u);
    ASSERT_EQ(run("--config run.ini fig7 --td-max 1 --no-svg"), 0);
    EXPECT_EQ(csv("cfg/fig7.csv").size(), 1u);
    write("bad.ini", "[fig7]\ntd-max = 2\nfrobnicate = 1\n");
    EXPECT_EQ(run("--config bad.ini fig7"), 2);
    EXPECT_EQ(run("--config missing.ini fig7"), 2);
}

TEST_F(Cli, ExitCodes) {
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("synth --controller pid"), 2);
    EXPECT_EQ(run("synth --plant nowhere.ini"), 2);
    write("mask.ini", "[mask]\nx_delay = [0]\nu_delay = [5]\n");
    EXPECT_EQ(run("synth --controller sls --T 2 --a 1 --sigma-v 0 --mask mask.ini"), 3);
    EXPECT_NE(read("stderr.txt").find("column"), std::string::npos);
    EXPECT_EQ(run("simulate --controller nowhere.ini"), 2);
    EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, PlantFileAndCheck) {
    write("p.ini", "# two-state plant\n[plant]\nA = [1.1, 0.3; 0, 0.8]\nB = [1, 0; 0, 1]\nC = [1, 0; 0, 1]\n"
                   "W = [1, 0; 0, 1]\nV = [0, 0; 0, 0]\n");
    ASSERT_EQ(run("synth --plant p.ini --controller sls --T 4 --out s"), 0) << read("stderr.txt");
    EXPECT_EQ(run("check s/controller.ini"), 0) << read("stdout.txt");
    EXPECT_NE(read("stdout.txt").find("PASS"), std::string::npos);
    EXPECT_EQ(csv("s/controller_phi.csv").size(), 2u * 4u * 4u);

    ASSERT_EQ(run("synth --plant p.ini --controller sf --out f"), 0) << read("stderr.txt");
    EXPECT_EQ(run("check f/controller.ini"), 0) << read("stdout.txt");

    auto text = read("s/controller.ini");
    const auto pos = text.find("phi_x_2=[");
    text.replace(pos + 9, 1, "9");
    write("bad.ini", text);
    EXPECT_NE(run("check bad.ini"), 0);
    EXPECT_NE(read("stdout.txt").find("FAIL"), std::string::npos);
}
