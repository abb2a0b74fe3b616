#include "nnsurf/pipeline.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const std::string exe = RECONSTRUCT_EXE;
const fs::path examples = EXAMPLES_DIR;

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("nnsurf_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int invoke(const std::string& args)
{
    const std::string cmd = "RECONSTRUCT_LOG=off '" + exe + "' " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string first_line(const fs::path& p)
{
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return line;
}

}  // namespace

TEST(Cli, RunWritesArtifacts)
{
    const auto out = scratch("run");
    EXPECT_EQ(invoke("run --config '" + (examples / "torus.toml").string() + "' --out '" + out.string()
                     + "' --seed 3"),
              0);
    EXPECT_TRUE(fs::exists(out / "mesh.obj"));
    EXPECT_TRUE(fs::exists(out / "mesh.ply"));
    EXPECT_TRUE(fs::exists(out / "metrics.json"));
    fs::remove_all(out);
}

TEST(Cli, ConfigProblemsExitTwo)
{
    const auto dir = scratch("config");
    EXPECT_EQ(invoke("run --config /nonexistent/config.toml"), 2);
    std::ofstream(dir / "bad.toml") << "[dataset]\nshape = \"torus\"\nunknown_key = 3\n";
    EXPECT_EQ(invoke("run --config '" + (dir / "bad.toml").string() + "'"), 2);
    EXPECT_EQ(invoke("run"), 2);
    EXPECT_EQ(invoke("frobnicate"), 2);
    EXPECT_EQ(invoke("gen --shape klein --noise 0 --out '" + (dir / "x.xyz").string() + "'"), 2);
    fs::remove_all(dir);
}

TEST(Cli, StageFailureExitsOne)
{
    const auto dir = scratch("stage");
    std::ofstream(dir / "disconnected.toml") << "[dataset]\nshape = \"torus\"\n[embedding]\nk = 1\n";
    EXPECT_EQ(invoke("run --config '" + (dir / "disconnected.toml").string() + "' --out '" + (dir / "out").string()
                     + "'"),
              1);
    fs::remove_all(dir);
}

TEST(Cli, GenWritesCloud)
{
    const auto dir = scratch("gen");
    const auto path = dir / "torus.xyz";
    ASSERT_EQ(invoke("gen --shape torus --noise 0.01 --out '" + path.string() + "'"), 0);
    EXPECT_EQ(nnsurf::load_xyz(path.string()).size(), 100u);
    ASSERT_EQ(invoke("gen --shape scurve --noise 0 --points 50 --out '" + (dir / "s.xyz").string() + "'"), 0);
    EXPECT_EQ(nnsurf::load_xyz((dir / "s.xyz").string()).size(), 50u);
    ASSERT_EQ(invoke("gen --shape cone --noise 0 --out '" + (dir / "c.xyz").string() + "'"), 0);
    EXPECT_EQ(nnsurf::load_xyz((dir / "c.xyz").string()).size(), 100u);
    fs::remove_all(dir);
}

TEST(Cli, BenchWritesCsv)
{
    const auto dir = scratch("bench");
    std::ofstream(dir / "empty.xyz") << "";
    std::ofstream(dir / "suite.toml") << "[defaults]\nnetwork = { max_layers = 1, max_neurons = 2, epochs = 5 }\n"
                                      << "[[row]]\ndataset = { shape = \"torus\" }\n"
                                      << "[[row]]\ndataset = { shape = \"xyz\", path = \"empty.xyz\" }\n";
    const auto csv = dir / "rows.csv";
    EXPECT_EQ(invoke("bench --suite '" + (dir / "suite.toml").string() + "' --csv '" + csv.string() + "'"), 0);
    EXPECT_EQ(first_line(csv), "dataset,method,points,mse,layers,neurons,epochs,seconds");

    std::ofstream(dir / "all_bad.toml") << "[[row]]\ndataset = { shape = \"xyz\", path = \"empty.xyz\" }\n";
    EXPECT_EQ(invoke("bench --suite '" + (dir / "all_bad.toml").string() + "' --csv '" + csv.string() + "'"), 1);
    fs::remove_all(dir);
}

TEST(Cli, ExampleConfigsLoad)
{
    for (const char* name : {"torus.toml", "scurve.toml", "cone.toml"})
        EXPECT_NO_THROW(nnsurf::load_config((examples / name).string())) << name;
    const auto suite = nnsurf::load_suite((examples / "suite.toml").string());
    EXPECT_EQ(suite.configs.size(), 15u);
}
