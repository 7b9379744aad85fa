// Copyright 2026 The depthgan Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli_app.hpp"

using namespace depthgan;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "depthgan");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / "depthgan_test_cli" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::string csv_column(const std::string& csv, const std::string& col, std::size_t row) {
    std::istringstream in(csv);
    std::string line;
    std::vector<std::string> header;
    std::size_t r = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
        if (header.empty()) {
            header = cells;
            continue;
        }
        if (r++ == row)
            for (std::size_t k = 0; k < header.size(); ++k)
                if (header[k] == col) return cells[k];
    }
    return {};
}

}  // namespace

TEST(Cli, UnknownFlagIsUsageError) {
    const Result r = run({"synth", "--bogus", "1", "--out", "x"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("error: usage:"), std::string::npos);
    EXPECT_NE(r.err.find("--hole"), std::string::npos);
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"fly"}).code, 2);
    EXPECT_EQ(run({"inpaint", "--ckpt", "a", "--in", "b", "--mask", "c", "--out", "d", "--attention", "soft"}).code, 2);
}

TEST(Cli, MissingFileExitsThree) {
    const Result r = run({"normals", "--in", "/nonexistent/d.pfm", "--out", (dir("missing") / "n.pfm").string()});
    EXPECT_EQ(r.code, 3);
    EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
    EXPECT_EQ(r.err.rfind("error: io:", 0), 0u);
}

TEST(Cli, SynthWritesScenesAndManifest) {
    const fs::path d = dir("synth");
    const Result r = run({"synth", "--n", "3", "--size", "32", "--hole", "8", "--seed", "4", "--out", d.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto entries = io::read_manifest(d / "manifest.txt");
    ASSERT_EQ(entries.size(), 3u);
    EXPECT_EQ(io::read_disparity(entries[2].disparity).width, 32u);
    EXPECT_EQ(io::read_mask(entries[2].mask).count(), 64u);
    const std::string manifest = slurp(d / "manifest.txt");
    EXPECT_EQ(manifest.rfind("# depthgan synth", 0), 0u);
    EXPECT_NE(manifest.find("seed=4"), std::string::npos);
    EXPECT_NE(manifest.find("sigma=0"), std::string::npos);
    EXPECT_TRUE(fs::exists(d / "normals_000.pfm"));

    const fs::path d2 = dir("synth2");
    run({"synth", "--n", "3", "--size", "32", "--hole", "8", "--seed", "4", "--out", d2.string()});
    EXPECT_EQ(slurp(d / "scene_001.pfm"), slurp(d2 / "scene_001.pfm"));
}

TEST(Cli, NormalsOnFlatPgm) {
    const fs::path d = dir("normals");
    io::write_pgm16(d / "flat.pgm", DisparityImage(6, 7, 12.0));
    ASSERT_EQ(run({"normals", "--in", (d / "flat.pgm").string(), "--out", (d / "n.pfm").string()}).code, 0);
    const Tensor n = io::read_pfm_tensor(d / "n.pfm");
    ASSERT_EQ(n.shape(), (Shape{3, 6, 7}));
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 7; ++j) {
            EXPECT_EQ(n.at(0, i, j), 0.0);
            EXPECT_EQ(n.at(1, i, j), 0.0);
            EXPECT_EQ(n.at(2, i, j), 1.0);
        }
}

TEST(Cli, EvalIdenticalPairIsPerfect) {
    const fs::path d = dir("eval");
    ASSERT_EQ(run({"synth", "--n", "2", "--size", "32", "--hole", "8", "--out", d.string()}).code, 0);
    const std::string s0 = (d / "scene_000.pfm").string(), s1 = (d / "scene_001.pfm").string();
    const std::string m0 = (d / "mask_000.pgm").string(), m1 = (d / "mask_001.pgm").string();
    const Result r = run({"eval", "--gt", s0, s1, "--gen", s0, s1, "--mask", m0, m1, "--label", "same", "--out",
                          (d / "report").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(csv_column(r.out, "mse", 0), "0");
    const std::string dist = slurp(d / "report.distance.csv");
    EXPECT_EQ(csv_column(dist, "intersection_depth", 0), "1");
    EXPECT_EQ(csv_column(dist, "intersection_surface", 0), "1");
    EXPECT_NE(dist.find("# depthgan eval"), std::string::npos);
    EXPECT_TRUE(fs::exists(d / "report.pixel.md"));
    EXPECT_TRUE(fs::exists(d / "report.distance.md"));
    EXPECT_EQ(run({"eval", "--gt", s0, "--gen", s0, s1, "--mask", m0, "--out", (d / "r2").string()}).code, 2);
}

TEST(Cli, TrainAlphaPairDiffersOnlyInVectorialTotals) {
    const fs::path d = dir("train");
    auto train = [&](const std::string& alpha) {
        const fs::path o = d / ("a" + alpha);
        const Result r = run({"train", "--steps", "2", "--batch", "1", "--size", "32", "--hole", "8", "--channels", "2",
                              "--n-critic", "1", "--no-surface-attention", "--alpha", alpha, "--seed", "3", "--out",
                              o.string()});
        EXPECT_EQ(r.code, 0) << r.err;
        return slurp(o / "log.csv");
    };
    const std::string a0 = train("0"), a1 = train("1");
    EXPECT_NE(a0.find("alpha=0"), std::string::npos);
    // step 0: same initial state, so only the total differs, by exactly g_vec
    const double g0 = std::stod(csv_column(a0, "g_total", 1)), g1 = std::stod(csv_column(a1, "g_total", 1));
    EXPECT_EQ(csv_column(a0, "g_l1", 1), csv_column(a1, "g_l1", 1));
    EXPECT_EQ(csv_column(a0, "g_vec", 1), csv_column(a1, "g_vec", 1));
    EXPECT_EQ(csv_column(a0, "d_total", 0), csv_column(a1, "d_total", 0));
    EXPECT_NEAR(g1 - g0, std::stod(csv_column(a1, "g_vec", 1)), 1e-12);
    EXPECT_TRUE(fs::exists(d / "a1" / "checkpoint.dgan"));
}

TEST(Cli, ConfigFileWithFlagOverride) {
    const fs::path d = dir("config");
    std::ofstream(d / "train.cfg") << "# small run\nsteps = 1\nbatch=1\nsize=32\nhole=8\nchannels=2\nn-critic=1\n"
                                      "no-surface-attention=true\nseed=9\n";
    const Result r = run({"train", "--config", (d / "train.cfg").string(), "--seed", "5", "--out", (d / "o").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string log = slurp(d / "o" / "log.csv");
    EXPECT_NE(log.find("seed=5"), std::string::npos);
    EXPECT_NE(log.find("no-surface-attention=true"), std::string::npos);
    EXPECT_NE(log.find("steps=1"), std::string::npos);
    std::ofstream(d / "bad.cfg") << "wings=2\n";
    EXPECT_EQ(run({"train", "--config", (d / "bad.cfg").string(), "--out", (d / "o").string()}).code, 2);
    EXPECT_EQ(run({"train", "--config", (d / "none.cfg").string(), "--out", (d / "o").string()}).code, 3);
}

TEST(Cli, InpaintFromCheckpoint) {
    const fs::path d = dir("inpaint");
    ASSERT_EQ(run({"synth", "--n", "1", "--size", "32", "--hole", "8", "--out", d.string()}).code, 0);
    ASSERT_EQ(run({"train", "--steps", "1", "--batch", "1", "--size", "32", "--hole", "8", "--channels", "2",
                   "--n-critic", "1", "--out", (d / "run").string()})
                  .code,
              0);
    const std::string ck = (d / "run" / "checkpoint.dgan").string();
    const Result r = run({"inpaint", "--ckpt", ck, "--in", (d / "scene_000.pfm").string(), "--mask",
                          (d / "mask_000.pgm").string(), "--attention", "blend", "--dump-scores",
                          (d / "scores.pfm").string(), "--out", (d / "filled.pfm").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const DisparityImage in = io::read_pfm(d / "scene_000.pfm"), out = io::read_pfm(d / "filled.pfm");
    const HoleMask m = io::read_mask(d / "mask_000.pgm");
    for (std::size_t k = 0; k < in.size(); ++k)
        if (!m.hole[k]) {
            EXPECT_EQ(out.values[k], in.values[k]);
        }
    EXPECT_EQ(io::read_pfm_tensor(d / "scores.pfm").dim(1), 8u);
    std::ofstream(d / "junk.dgan") << "junk";
    EXPECT_EQ(run({"inpaint", "--ckpt", (d / "junk.dgan").string(), "--in", (d / "scene_000.pfm").string(), "--mask",
                   (d / "mask_000.pgm").string(), "--out", (d / "f2.pfm").string()})
                  .code,
              1);
}
