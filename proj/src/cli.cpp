// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "snrq/cli.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "snrq/errors.hpp"
#include "snrq/matrix_io.hpp"
#include "snrq/oracle.hpp"
#include "snrq/pipeline.hpp"
#include "snrq/rng.hpp"

namespace snrq {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

/// Missing inputs are usage errors (exit 1), not numerical ones.
struct MissingInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_text(const fs::path& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw MissingInput(std::string("cannot read ") + what + " '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void require_dir(const fs::path& dir, const char* what) {
    if (!fs::is_directory(dir)) throw MissingInput(std::string(what) + " '" + dir.string() + "' does not exist");
}

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::size_t threads = 0;
};

RunConfig load_config(const Globals& g) {
    RunConfig cfg = g.config_path.empty() ? parse_run_config("{}") : parse_run_config(read_text(g.config_path, "config file"));
    if (g.seed) cfg.seed = *g.seed;
    if (g.threads > 0) cfg.solver.threads = g.threads;
    return cfg;
}

ToyNetwork network_for(const RunConfig& cfg, const std::string& network_dir) {
    if (network_dir.empty()) return synth_network(cfg.network, cfg.seed);
    require_dir(network_dir, "network directory");
    return load_network(network_dir);
}

/// Prints `text` and, when an output directory was given, also stores it.
void emit(const Globals& g, const std::string& file_name, const std::string& text, std::ostream& out) {
    out << text << "\n";
    if (g.out_dir.empty()) return;
    fs::create_directories(g.out_dir);
    const fs::path path = fs::path(g.out_dir) / file_name;
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << text << "\n";
}

std::vector<double> parse_values(const std::string& csv) {
    std::vector<double> values;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            values.push_back(std::stod(item, &used));
            if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw CLI::ValidationError("--values", "cannot parse '" + item + "'");
        }
    }
    if (values.empty()) throw CLI::ValidationError("--values", "no values given");
    return values;
}

json solution_json(const RowSolution& s, double cost) {
    return {{"index", s.index}, {"values", s.values}, {"cost", cost}};
}

int run_oracle(const Globals& g, const std::string& problem_path, std::ostream& out) {
    json p;
    try {
        p = json::parse(read_text(problem_path, "problem file"));
    } catch (const json::exception& e) {
        throw FormatError(problem_path + ": " + e.what());
    }
    Matrix r;
    std::vector<double> y;
    LevelLists levels;
    std::size_t beam = 0;
    try {
        const auto rows = p.at("r").get<std::vector<std::vector<double>>>();
        std::vector<double> flat;
        for (const auto& row : rows) {
            if (row.size() != rows.size()) throw ShapeMismatch("oracle problem: R must be square");
            flat.insert(flat.end(), row.begin(), row.end());
        }
        r = Matrix(rows.size(), rows.size(), std::move(flat));
        y = p.at("y").get<std::vector<double>>();
        levels = p.at("levels").get<LevelLists>();
        if (p.contains("beam_width")) beam = p["beam_width"].get<std::size_t>();
    } catch (const json::exception& e) {
        throw FormatError(problem_path + ": " + e.what());
    }
    for (auto& l : levels) std::sort(l.begin(), l.end());

    const OracleResult best = exhaustive_row(r, y, levels);
    const RowInstance inst = row_instance_from_ils(r, y);
    const RowSolution greedy = greedy_row(inst.factor, inst.target, levels);
    json j;
    j["oracle"] = {{"index", best.best_index},
                   {"values", best.best_values},
                   {"cost", best.best_cost},
                   {"n_evaluated", best.n_evaluated}};
    j["greedy"] = solution_json(greedy, ils_cost(r, y, greedy.values));
    if (beam > 0) {
        const RowSolution b = beam_row(inst.factor, inst.target, levels, beam, r.rows());
        j["beam"] = solution_json(b, ils_cost(r, y, b.values));
        j["beam"]["width"] = beam;
    }
    emit(g, "oracle.json", j.dump(2), out);
    return 0;
}

int run_alpha_scan(const Globals& g, const std::string& w_path, const std::string& what_path,
                   const std::string& xf_path, const std::string& xq_path, std::size_t points, std::ostream& out) {
    const RunConfig cfg = load_config(g);
    Matrix w;
    Matrix w_hat;
    CalibBatch batch;
    const bool from_files = !w_path.empty();
    if (from_files) {
        for (const auto* p : {&w_path, &what_path, &xf_path, &xq_path}) {
            if (p->empty()) throw CLI::ValidationError("alpha-scan", "--w, --w-hat, --xf and --xq go together");
            if (!fs::exists(*p)) throw MissingInput("matrix file '" + *p + "' does not exist");
        }
        w = read_matrix(w_path);
        w_hat = read_matrix(what_path);
        batch = {read_matrix(xf_path), read_matrix(xq_path)};
    } else {
        // Synthetic layer: student inputs are teacher inputs plus noise,
        // and w_hat is the round-to-nearest weight.
        SeededRng rng(cfg.seed, 11);
        const std::size_t n = cfg.network.width;
        w = rng.normal_matrix(n, n, 1.0 / std::sqrt(static_cast<double>(n)));
        Matrix xf = rng.normal_matrix(n, cfg.calibration.n_sequences);
        Matrix xq = xf + rng.normal_matrix(n, cfg.calibration.n_sequences, 0.1);
        batch = {std::move(xf), std::move(xq)};
        w_hat = quantize_nearest(w, fit_grid(w, cfg.grid)).dequant;
    }
    const AlphaScan scan = alpha_grid_scan(w, w_hat, batch, points);
    const AlphaEstimate est = closed_form_alpha(w, w_hat, batch, cfg.alpha.alpha_value);
    json j;
    j["source"] = from_files ? "files" : "synthetic";
    j["alpha_best_grid"] = scan.alpha_best;
    j["alpha_closed_form"] = est.alpha;
    j["alpha_unconstrained"] = std::isfinite(est.unconstrained) ? json(est.unconstrained) : json(nullptr);
    j["degenerate"] = est.degenerate;
    j["alphas"] = scan.alphas;
    j["curve"] = scan.curve;
    emit(g, "alpha_scan.json", j.dump(2), out);
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Post-training quantization solver lab", "snrq"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", std::string(version()));

    Globals g;
    app.add_option("--config", g.config_path, "JSON run configuration");
    app.add_option("--seed", g.seed, "Override the configured seed");
    app.add_option("--out-dir", g.out_dir, "Directory for reports and artifacts");
    app.add_option("--threads", g.threads, "Row workers (0 = SNRQ_THREADS or auto)");

    std::string network_dir;
    auto* quantize = app.add_subcommand("quantize", "Quantize a toy network layer by layer");
    quantize->add_option("--network", network_dir, "Network directory written by synth");

    NetworkSpec synth_spec;
    std::optional<std::size_t> synth_depth, synth_dim, synth_input;
    std::string synth_nl;
    auto* synth = app.add_subcommand("synth", "Generate a toy network");
    synth->add_option("--depth", synth_depth, "Number of layers");
    synth->add_option("--dim", synth_dim, "Layer width");
    synth->add_option("--input-dim", synth_input, "Input dimension (defaults to --dim)");
    synth->add_option("--nonlinearity", synth_nl, "relu or none");

    std::string problem_path;
    auto* oracle = app.add_subcommand("oracle", "Exhaustive search on a single-row problem");
    oracle->add_option("--problem", problem_path, "JSON with r, y, levels and optional beam_width")->required();

    std::string w_path, what_path, xf_path, xq_path;
    std::size_t points = 101;
    auto* scan = app.add_subcommand("alpha-scan", "Objective over an alpha grid versus the closed form");
    scan->add_option("--w", w_path, "Full-precision weights");
    scan->add_option("--w-hat", what_path, "Quantized weights");
    scan->add_option("--xf", xf_path, "Teacher activations");
    scan->add_option("--xq", xq_path, "Student activations");
    scan->add_option("--points", points, "Grid points")->check(CLI::Range(3, 100000));

    DitherSetup dither;
    auto* dither_cmd = app.add_subcommand("dither-demo", "Monte Carlo of fixed versus dithered rounding variance");
    dither_cmd->add_option("--w", dither.w, "Scalar weight");
    dither_cmd->add_option("--x", dither.x, "Scalar activation");
    dither_cmd->add_option("--tau-s", dither.tau_s, "Calibration fluctuation scale");
    dither_cmd->add_option("--tau-z", dither.tau_z, "Dither scale");
    dither_cmd->add_option("--n", dither.n_sequences, "Calibration sequences");
    dither_cmd->add_option("--trials", dither.n_trials, "Monte Carlo trials");

    std::size_t repeats = 50;
    bool same_seed = false;
    auto* vsweep = app.add_subcommand("variance-sweep", "Run-to-run spread of fixed versus sampled alpha");
    vsweep->add_option("--repeats", repeats, "Repeats per mode");
    vsweep->add_flag("--same-seed", same_seed, "Reuse the calibration seed in every repeat");
    vsweep->add_option("--network", network_dir, "Network directory written by synth");

    std::string axis_name, values_csv;
    auto* sweep_cmd = app.add_subcommand("sweep", "Quantize once per value along one axis");
    sweep_cmd->add_option("--axis", axis_name, "alpha, beta_lambda, K or cd_passes")->required();
    sweep_cmd->add_option("--values", values_csv, "Comma-separated values")->required();
    sweep_cmd->add_option("--network", network_dir, "Network directory written by synth");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 1;
    }

    try {
        if (*quantize) {
            const RunConfig cfg = load_config(g);
            const ToyNetwork net = network_for(cfg, network_dir);
            const QuantReport report = quantize_network(net, cfg);
            const fs::path dir = g.out_dir.empty() ? fs::path("snrq_out") : fs::path(g.out_dir);
            const fs::path path = write_report(report, dir);
            out << "report: " << path.string() << "\n"
                << "total_proxy_loss: " << report.total_proxy_loss << "\n"
                << "heldout_output_mse: " << report.heldout_output_mse << "\n";
            return 0;
        }
        if (*synth) {
            RunConfig cfg = load_config(g);
            synth_spec = cfg.network;
            if (synth_depth) synth_spec.depth = *synth_depth;
            if (synth_dim) {
                synth_spec.width = *synth_dim;
                synth_spec.input_dim = *synth_dim;
            }
            if (synth_input) synth_spec.input_dim = *synth_input;
            if (!synth_nl.empty()) synth_spec.nonlinearity = parse_nonlinearity(synth_nl);
            const fs::path dir = g.out_dir.empty() ? fs::path("snrq_network") : fs::path(g.out_dir);
            save_network(synth_network(synth_spec, cfg.seed), dir);
            out << "network: " << (dir / "network.json").string() << "\n";
            return 0;
        }
        if (*oracle) return run_oracle(g, problem_path, out);
        if (*scan) return run_alpha_scan(g, w_path, what_path, xf_path, xq_path, points, out);
        if (*dither_cmd) {
            const RunConfig cfg = load_config(g);
            const DitherOutcome r = dither_experiment(dither, SeededRng(cfg.seed, 21), cfg.solver.threads);
            json j;
            j["setup"] = {{"w", dither.w},
                          {"x", dither.x},
                          {"tau_s", dither.tau_s},
                          {"tau_z", dither.tau_z},
                          {"n_sequences", dither.n_sequences},
                          {"n_trials", dither.n_trials}};
            j["var_fixed"] = r.var_fixed_hat;
            j["var_fixed_se"] = r.var_fixed_se;
            j["var_fixed_closed"] = r.var_fixed_closed;
            j["var_smoothed"] = r.var_smoothed_hat;
            j["var_smoothed_se"] = r.var_smoothed_se;
            j["var_bound"] = r.var_bound;
            emit(g, "dither.json", j.dump(2), out);
            return 0;
        }
        if (*vsweep) {
            const RunConfig cfg = load_config(g);
            const ToyNetwork net = network_for(cfg, network_dir);
            emit(g, "variance_sweep.json", variance_sweep_to_json(sampling_variance_sweep(net, cfg, repeats, same_seed)),
                 out);
            return 0;
        }
        if (*sweep_cmd) {
            const RunConfig cfg = load_config(g);
            const SweepAxis axis = parse_sweep_axis(axis_name);
            const std::vector<double> values = parse_values(values_csv);
            const ToyNetwork net = network_for(cfg, network_dir);
            emit(g, "sweep.json", sweep_to_json(axis, sweep(net, cfg, axis, values)), out);
            return 0;
        }
    } catch (const MissingInput& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        err << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace snrq
