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

// depthgan command line: synth, normals, train, inpaint, eval.
//
// Exit codes: 0 ok, 1 runtime error, 2 usage error, 3 missing or
// unwritable file. Errors are reported as a single "error: <kind>: <what>"
// line on stderr.

#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "depthgan/depthgan.hpp"

namespace depthgan::cli {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline bool truthy(std::string v) {
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw UsageError("config: '" + v + "' is not a boolean");
}

/// key=value lines turned into command-line tokens for `sub`.
inline std::vector<std::string> config_tokens(const CLI::App& sub, const fs::path& path) {
    std::istringstream in(io::read_file(path));
    std::vector<std::string> tokens;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError("config " + path.string() + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        const CLI::Option* opt = sub.get_option_no_throw("--" + key);
        if (!opt || key == "config")
            throw UsageError("config " + path.string() + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        if (opt->get_expected_min() == 0) {
            if (truthy(value)) tokens.push_back("--" + key);
        } else {
            tokens.push_back("--" + key);
            tokens.push_back(value);
        }
    }
    return tokens;
}

/// "name k1=v1 k2=v2 ..." from the parsed options of `sub`, defaults included.
inline std::string echo(const CLI::App& sub) {
    std::ostringstream os;
    os << "depthgan " << sub.get_name();
    for (const CLI::Option* opt : sub.get_options()) {
        const std::string name = opt->get_single_name();
        if (name == "help" || name == "config") continue;
        os << ' ' << name << '=';
        if (opt->get_expected_min() == 0) {
            os << (opt->count() > 0 ? "true" : "false");
        } else if (opt->count() > 0) {
            const auto r = opt->reduced_results();
            for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
        } else {
            os << opt->get_default_str();
        }
    }
    return os.str();
}

inline void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + p.parent_path().string() + ": " + ec.message());
    }
}

inline std::string numbered(const std::string& stem, std::size_t k, const std::string& ext) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "_%03zu", k);
    return stem + buf + ext;
}

}  // namespace detail

struct SynthArgs {
    std::size_t n = 8, size = 64, hole = 24;
    double sigma = 0.0;
    std::uint64_t seed = 0;
    std::string out;
};

struct NormalsArgs {
    std::string in, out;
};

struct TrainArgs {
    long steps = 300;
    std::size_t batch = 4, size = 64, hole = 24, channels = 8;
    double alpha = 1.0, beta = 0.001, phi = 1.0, lambda_gp = 10.0, lr = 1e-4, sigma = 0.0, disparity_max = 64.0;
    int n_critic = 5;
    bool no_sa = false, no_sd = false, no_vl = false, vl_hole_only = false;
    std::uint64_t seed = 0;
    std::string manifest, out;
};

struct InpaintArgs {
    std::string ckpt, in, mask, out, attention = "argmax", dump_scores;
};

struct EvalArgs {
    std::vector<std::string> gt, gen, mask;
    std::size_t bins = 256, normal_bins = 64;
    std::string region = "hole", log_base = "e", surface = "pooled", label = "run", out;
};

// ---- commands ------------------------------------------------------------

inline void run_synth(const SynthArgs& a, const std::string& header, std::ostream& out) {
    const fs::path dir(a.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    model::SceneStream stream(a.size, a.size, a.hole, a.sigma, a.seed);
    std::vector<io::ManifestEntry> entries;
    for (std::size_t k = 0; k < a.n; ++k) {
        const model::Sample s = stream.next();
        const std::string d = detail::numbered("scene", k, ".pfm"), m = detail::numbered("mask", k, ".pgm");
        io::write_pfm(dir / d, s.disparity);
        io::write_mask(dir / m, s.mask);
        io::write_pfm(dir / detail::numbered("normals", k, ".pfm"), normals_from_disparity(s.disparity).vectors);
        entries.push_back({d, m});
    }
    io::write_manifest(dir / "manifest.txt", entries, header);
    out << "wrote " << a.n << " scenes to " << dir.string() << "\n";
}

inline void run_normals(const NormalsArgs& a, std::ostream& out) {
    const DisparityImage d = io::read_disparity(a.in);
    detail::ensure_parent(a.out);
    io::write_pfm(a.out, normals_from_disparity(d).vectors);
    out << "wrote " << a.out << "\n";
}

inline model::TrainConfig train_config(const TrainArgs& a) {
    model::TrainConfig c;
    c.height = c.width = a.size;
    c.hole = a.hole;
    c.batch = a.batch;
    c.steps = a.steps;
    c.adam.lr = a.lr;
    c.weights.alpha = a.alpha;
    c.weights.beta = a.beta;
    c.weights.phi = a.phi;
    c.weights.lambda_gp = a.lambda_gp;
    c.weights.n_critic = a.n_critic;
    c.seed = a.seed;
    c.vectorial_loss_on = !a.no_vl;
    c.surface_attention_on = !a.no_sa;
    c.surface_discrimination_on = !a.no_sd;
    c.vectorial_hole_only = a.vl_hole_only;
    c.channels = a.channels;
    c.disparity_max = a.disparity_max;
    c.noise_sigma = a.sigma;
    return c;
}

/// Samples drawn uniformly (seeded) from the manifest pairs.
inline model::Dataset manifest_dataset(const fs::path& path, model::TrainConfig& cfg) {
    auto samples = std::make_shared<std::vector<model::Sample>>();
    for (const auto& e : io::read_manifest(path)) {
        model::Sample s{io::read_disparity(e.disparity), io::read_mask(e.mask)};
        if (s.disparity.height != s.mask.height || s.disparity.width != s.mask.width)
            throw DimensionError("manifest: " + e.mask.string() + " does not match " + e.disparity.string());
        if (!samples->empty() && (s.disparity.height != samples->front().disparity.height ||
                                  s.disparity.width != samples->front().disparity.width))
            throw DimensionError("manifest: images differ in size");
        samples->push_back(std::move(s));
    }
    if (samples->empty()) throw SpecError("manifest lists no images");
    cfg.height = samples->front().disparity.height;
    cfg.width = samples->front().disparity.width;
    std::size_t widest = 0;
    for (const auto& s : *samples) {
        const Box b = bounding_box(s.mask);
        widest = std::max({widest, b.height, b.width});
    }
    cfg.hole = std::max<std::size_t>(widest, 1);
    auto rng = std::make_shared<std::mt19937_64>(model::seeded_rng(cfg.seed, 0x6d616e));
    return [samples, rng] {
        std::uniform_int_distribution<std::size_t> pick(0, samples->size() - 1);
        return (*samples)[pick(*rng)];
    };
}

inline void run_train(const TrainArgs& a, const std::string& header, std::ostream& out) {
    model::TrainConfig cfg = train_config(a);
    model::Dataset data = a.manifest.empty() ? model::Dataset{} : manifest_dataset(a.manifest, cfg);
    const fs::path dir(a.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    const model::TrainResult r = model::train(cfg, std::move(data));
    model::save_checkpoint(dir / "checkpoint.dgan", r.generator, r.critic, {{"command", header}});
    io::write_file(dir / "log.csv", model::log_csv(r.log, header));
    out << "trained " << cfg.steps << " steps; checkpoint " << (dir / "checkpoint.dgan").string() << "\n";
}

inline void run_inpaint(const InpaintArgs& a, std::ostream& out, std::ostream& err) {
    const model::Checkpoint c = model::load_checkpoint(a.ckpt);
    const DisparityImage d = io::read_disparity(a.in);
    const HoleMask m = io::read_mask(a.mask);
    model::GenerateOptions opt;
    opt.attention.mode = a.attention == "blend" ? attention::TransferMode::blend : attention::TransferMode::argmax;
    attention::AttentionResult detail;
    if (!a.dump_scores.empty()) opt.detail = &detail;
    std::string warning;
    const DisparityImage filled = model::inpaint(c.generator, d, m, opt, &warning);
    if (!warning.empty()) err << "warning: " << warning << "\n";
    detail::ensure_parent(a.out);
    io::write_disparity(a.out, filled);
    if (!a.dump_scores.empty()) {
        if (detail.propagated.size() == 0) throw ContractError("no attention scores: checkpoint has surface attention off or mask is empty");
        // best propagated score per foreground pixel
        const std::size_t Q = detail.propagated.dim(0), Hf = detail.propagated.dim(1), Wf = detail.propagated.dim(2);
        Tensor best(Shape{1, Hf, Wf});
        for (std::size_t i = 0; i < Hf * Wf; ++i) {
            double v = 0.0;
            for (std::size_t q = 0; q < Q; ++q) v = std::max(v, detail.propagated[q * Hf * Wf + i]);
            best[i] = v;
        }
        detail::ensure_parent(a.dump_scores);
        io::write_pfm(a.dump_scores, best);
    }
    out << "wrote " << a.out << "\n";
}

inline void run_eval(const EvalArgs& a, const std::string& header, std::ostream& out) {
    if (a.gt.size() != a.gen.size() || a.gt.size() != a.mask.size())
        throw UsageError("eval: --gt, --gen and --mask need the same number of files");
    metrics::EvalOptions opt;
    opt.depth_bins = a.bins;
    opt.normal_bins = a.normal_bins;
    opt.log_base = a.log_base == "2" ? metrics::LogBase::two : metrics::LogBase::e;
    opt.surface = a.surface == "per-component" ? metrics::SurfaceSampling::per_component : metrics::SurfaceSampling::pooled;
    std::vector<metrics::MetricReport> reports;
    for (std::size_t k = 0; k < a.gt.size(); ++k) {
        const DisparityImage gt = io::read_disparity(a.gt[k]), gen = io::read_disparity(a.gen[k]);
        const HoleMask m = io::read_mask(a.mask[k]);
        const HoleMask region = a.region == "full" ? HoleMask::full(m.height, m.width) : m;
        reports.push_back(metrics::evaluate_pair(gt, gen, region, opt));
    }
    const std::vector<metrics::ReportRow> rows{{a.label, metrics::mean_report(reports)}};
    const fs::path base(a.out);
    detail::ensure_parent(base);
    io::write_file(base.string() + ".pixel.csv", metrics::pixel_table_csv(rows, header));
    io::write_file(base.string() + ".pixel.md", metrics::pixel_table_markdown(rows, header));
    io::write_file(base.string() + ".distance.csv", metrics::distance_table_csv(rows, header));
    io::write_file(base.string() + ".distance.md", metrics::distance_table_markdown(rows, header));
    out << metrics::pixel_table_csv(rows);
}

// ---- entry point ---------------------------------------------------------

inline int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Disparity inpainting with surface-aware attention and losses", "depthgan"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    std::string config_path;

    SynthArgs sa;
    CLI::App* synth = app.add_subcommand("synth", "Write synthetic scenes, hole masks and a manifest");
    synth->add_option("--n", sa.n, "number of scenes")->capture_default_str();
    synth->add_option("--size", sa.size, "image side in pixels")->capture_default_str();
    synth->add_option("--hole", sa.hole, "square hole side")->capture_default_str();
    synth->add_option("--sigma", sa.sigma, "Gaussian noise sigma")->capture_default_str();
    synth->add_option("--seed", sa.seed)->capture_default_str();
    synth->add_option("--out", sa.out, "output directory")->required();

    NormalsArgs na;
    CLI::App* normals = app.add_subcommand("normals", "Surface normals of a disparity map as a 3-channel PFM");
    normals->add_option("--in", na.in, "disparity (.pfm or .pgm)")->required();
    normals->add_option("--out", na.out, "normal map (.pfm)")->required();

    TrainArgs ta;
    CLI::App* train = app.add_subcommand("train", "Train generator and critic");
    train->add_option("--steps", ta.steps)->capture_default_str();
    train->add_option("--batch", ta.batch)->capture_default_str();
    train->add_option("--alpha", ta.alpha, "vectorial loss weight")->capture_default_str();
    train->add_option("--beta", ta.beta, "adversarial weight")->capture_default_str();
    train->add_option("--phi", ta.phi, "L1 weight")->capture_default_str();
    train->add_option("--lambda-gp", ta.lambda_gp, "gradient penalty weight")->capture_default_str();
    train->add_option("--n-critic", ta.n_critic, "critic updates per generator update")->capture_default_str();
    train->add_option("--lr", ta.lr, "Adam learning rate")->capture_default_str();
    train->add_option("--size", ta.size, "synthetic image side")->capture_default_str();
    train->add_option("--hole", ta.hole, "synthetic hole side")->capture_default_str();
    train->add_option("--sigma", ta.sigma, "synthetic noise sigma")->capture_default_str();
    train->add_option("--channels", ta.channels, "base network width")->capture_default_str();
    train->add_option("--disparity-max", ta.disparity_max, "disparity normalization")->capture_default_str();
    train->add_flag("--no-surface-attention", ta.no_sa);
    train->add_flag("--no-surface-discrimination", ta.no_sd);
    train->add_flag("--no-vectorial-loss", ta.no_vl);
    train->add_flag("--vectorial-hole-only", ta.vl_hole_only, "vectorial loss over the hole only");
    train->add_option("--seed", ta.seed)->capture_default_str();
    train->add_option("--manifest", ta.manifest, "train on listed files instead of synthetic scenes");
    train->add_option("--out", ta.out, "output directory")->required();

    InpaintArgs ia;
    CLI::App* inpaint = app.add_subcommand("inpaint", "Fill the masked region of a disparity map");
    inpaint->add_option("--ckpt", ia.ckpt)->required();
    inpaint->add_option("--in", ia.in)->required();
    inpaint->add_option("--mask", ia.mask)->required();
    inpaint->add_option("--attention", ia.attention)->check(CLI::IsMember({"argmax", "blend"}))->capture_default_str();
    inpaint->add_option("--dump-scores", ia.dump_scores, "PFM of the best attention score per hole-box pixel");
    inpaint->add_option("--out", ia.out)->required();

    EvalArgs ea;
    CLI::App* eval = app.add_subcommand("eval", "Pixel and distribution metrics between ground truth and fills");
    eval->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    eval->add_option("--gt", ea.gt)->required();
    eval->add_option("--gen", ea.gen)->required();
    eval->add_option("--mask", ea.mask)->required();
    eval->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    eval->add_option("--bins", ea.bins, "disparity histogram bins")->capture_default_str();
    eval->add_option("--normal-bins", ea.normal_bins, "normal component histogram bins")->capture_default_str();
    eval->add_option("--region", ea.region)->check(CLI::IsMember({"hole", "full"}))->capture_default_str();
    eval->add_option("--log-base", ea.log_base)->check(CLI::IsMember({"e", "2"}))->capture_default_str();
    eval->add_option("--surface", ea.surface)->check(CLI::IsMember({"pooled", "per-component"}))->capture_default_str();
    eval->add_option("--label", ea.label, "row label")->capture_default_str();
    eval->add_option("--out", ea.out, "output prefix")->required();

    for (CLI::App* s : {synth, normals, train, inpaint, eval})
        s->add_option("--config", config_path, "key=value file; command-line flags take precedence");

    int code = 0;
    try {
        std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
        // splice config values in right after the subcommand so later flags win
        for (std::size_t i = 0; i < args.size(); ++i) {
            std::string path;
            if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
            else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
            if (path.empty()) continue;
            CLI::App* sub = args.empty() ? nullptr : app.get_subcommand_no_throw(args[0]);
            if (!sub) throw UsageError("--config must follow a subcommand");
            const auto extra = detail::config_tokens(*sub, path);
            args.insert(args.begin() + 1, extra.begin(), extra.end());
            break;
        }
        std::reverse(args.begin(), args.end());
        try {
            app.parse(args);
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return 0;
        } catch (const CLI::ParseError& e) {
            const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
            err << "error: usage: " << e.what() << "\n" << sub->help();
            return 2;
        }
        CLI::App* sub = app.get_subcommands().front();
        const std::string header = detail::echo(*sub);
        if (sub == synth) run_synth(sa, header, out);
        else if (sub == normals) run_normals(na, out);
        else if (sub == train) run_train(ta, header, out);
        else if (sub == inpaint) run_inpaint(ia, out, err);
        else run_eval(ea, header, out);
    } catch (const UsageError& e) {
        err << "error: usage: " << e.what() << "\n";
        code = 2;
    } catch (const IoError& e) {
        err << "error: io: " << e.what() << "\n";
        code = 3;
    } catch (const ParseError& e) {
        err << "error: parse: " << e.what() << "\n";
        code = 1;
    } catch (const TrainingDiverged& e) {
        err << "error: diverged: " << e.what() << "\n";
        code = 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        code = 1;
    }
    return code;
}

}  // namespace depthgan::cli
