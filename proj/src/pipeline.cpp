// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "snrq/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <json.hpp>

#include "snrq/errors.hpp"
#include "snrq/matrix_io.hpp"
#include "snrq/rng.hpp"

namespace snrq {

using json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kCalibrationStream = 2;
constexpr std::uint64_t kHeldoutStream = 3;
constexpr std::uint64_t kAlphaStream = 4;
constexpr std::uint64_t kRepeatStream = 5;

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void apply_nonlinearity(Matrix& a, Nonlinearity nl) {
    if (nl == Nonlinearity::Relu) {
        for (double& v : a.data()) v = std::max(v, 0.0);
    }
}

double mean_sq_diff(const Matrix& a, const Matrix& b) {
    return frobenius_norm_sq(a - b) / static_cast<double>(a.size());
}

double mean_abs_diff(const Matrix& a, const Matrix& b) {
    double s = 0.0;
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
    return s / static_cast<double>(x.size());
}

/// Rethrows `e` as the same error kind with a prefix on the message.
[[noreturn]] void rethrow_with_context(const Error& e, const std::string& prefix) {
    const std::string msg = prefix + e.what();
    switch (e.kind()) {
        case ErrorKind::NotPositiveDefinite: throw NotPositiveDefinite(msg);
        case ErrorKind::Format: throw FormatError(msg);
        case ErrorKind::Io: throw IoError(msg);
        case ErrorKind::InvalidSpec: throw InvalidSpec(msg);
        case ErrorKind::ShapeMismatch: throw ShapeMismatch(msg);
        case ErrorKind::NonFinite: throw NonFinite(msg);
        case ErrorKind::MemoryBudget: throw MemoryBudget(msg);
        case ErrorKind::BudgetExceeded: throw BudgetExceeded(msg);
        case ErrorKind::InvalidArgument: throw InvalidArgument(msg);
    }
    throw Error(e.kind(), msg);
}

// ---- JSON config helpers -------------------------------------------------

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        if (!known.count(key)) throw InvalidSpec("unknown config key '" + where + key + "'");
    }
}

std::size_t get_count(const json& obj, const char* key, std::size_t fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw InvalidSpec(std::string("config key '") + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

double get_number(const json& obj, const char* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) throw InvalidSpec(std::string("config key '") + key + "' must be a number");
    return v.get<double>();
}

bool get_bool(const json& obj, const char* key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_boolean()) throw InvalidSpec(std::string("config key '") + key + "' must be a boolean");
    return v.get<bool>();
}

std::string get_string(const json& obj, const char* key, const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_string()) throw InvalidSpec(std::string("config key '") + key + "' must be a string");
    return v.get<std::string>();
}

json config_json(const RunConfig& c) {
    json j;
    j["bits"] = c.grid.bits;
    j["symmetric"] = c.grid.symmetric;
    j["group_size"] = c.grid.group_size;
    j["mse_clip"] = c.grid.mse_clip;
    j["alpha_mode"] = to_string(c.alpha.mode);
    j["alpha_value"] = c.alpha.alpha_value;
    j["beta_lambda"] = c.alpha.beta_lambda;
    j["damping"] = c.damping;
    j["seed"] = c.seed;
    j["solver"] = to_string(c.solver.solver);
    j["beam_width"] = c.solver.beam_width;
    j["block_size"] = c.solver.block_size;
    j["act_order"] = c.solver.act_order;
    j["cd_passes"] = c.solver.cd_passes;
    j["memory_budget_mb"] = c.solver.memory_budget_mb;
    j["network"] = {{"depth", c.network.depth},
                    {"width", c.network.width},
                    {"input_dim", c.network.input_dim},
                    {"nonlinearity", to_string(c.network.nonlinearity)}};
    j["calibration"] = {{"n_sequences", c.calibration.n_sequences},
                        {"heldout_sequences", c.calibration.heldout_sequences},
                        {"input_scale", c.calibration.input_scale}};
    return j;
}

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void strip_timing(json& j) {
    if (j.is_object()) {
        j.erase("timing");
        for (auto& [_, v] : j.items()) strip_timing(v);
    } else if (j.is_array()) {
        for (auto& v : j) strip_timing(v);
    }
}

RoundResult run_solver(const Matrix& w, const CalibBatch& batch, const CalibStats& stats, const TriangularProxy& proxy,
                       const GridParams& params, const RunConfig& cfg) {
    const SolverConfig& sc = cfg.solver;
    RoundResult result;
    switch (sc.solver) {
        case SolverKind::Rtn: result = rtn_round(w, params, proxy); break;
        case SolverKind::Snrq: result = snrq_greedy(proxy, params, sc); break;
        case SolverKind::SnrqLazy: result = snrq_lazy(proxy, params, sc); break;
        case SolverKind::KSnrq: result = ksnrq_beam(proxy, params, sc); break;
        case SolverKind::Gptq:
            result = gptq_round(w, stats.h, params, sc);
            rescore(result, proxy);
            break;
        case SolverKind::Gptaq:
            result = gptaq_round(w, batch, cfg.damping, params, sc).result;
            rescore(result, proxy);
            break;
    }
    if (sc.cd_passes > 0) result = cd_refine(std::move(result), proxy, params, sc.cd_passes, sc.threads);
    return result;
}

/// Shifted by the first entry so that identical samples give exactly 0.
double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double shift = v.front();
    double sum = 0.0;
    double sum_sq = 0.0;
    for (double x : v) {
        sum += x - shift;
        sum_sq += (x - shift) * (x - shift);
    }
    const double n = static_cast<double>(v.size());
    return std::sqrt(std::max(0.0, (sum_sq - sum * sum / n) / (n - 1)));
}

}  // namespace

const char* version() noexcept { return SNRQ_VERSION; }

Nonlinearity parse_nonlinearity(const std::string& s) {
    if (s == "relu") return Nonlinearity::Relu;
    if (s == "none") return Nonlinearity::None;
    throw InvalidSpec("unknown nonlinearity '" + s + "' (expected relu|none)");
}

const char* to_string(Nonlinearity nl) { return nl == Nonlinearity::Relu ? "relu" : "none"; }

void NetworkSpec::validate() const {
    if (depth < 1 || width < 1 || input_dim < 1) throw InvalidSpec("network depth, width and input_dim must be >= 1");
}

void ToyNetwork::validate() const {
    if (layers.empty()) throw InvalidSpec("network has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (layers[l].empty()) throw InvalidSpec("layer " + std::to_string(l) + " is empty");
        if (!layers[l].all_finite()) throw NonFinite("layer " + std::to_string(l) + " has non-finite weights");
        if (l > 0 && layers[l].cols() != layers[l - 1].rows()) {
            throw ShapeMismatch("layer " + std::to_string(l) + " expects " + std::to_string(layers[l].cols()) +
                                " inputs but layer " + std::to_string(l - 1) + " produces " +
                                std::to_string(layers[l - 1].rows()));
        }
    }
}

ToyNetwork synth_network(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    SeededRng rng(seed, 1);
    ToyNetwork net;
    net.nonlinearity = spec.nonlinearity;
    std::size_t fan_in = spec.input_dim;
    for (std::size_t l = 0; l < spec.depth; ++l) {
        SeededRng layer_rng = rng.substream(l);
        net.layers.push_back(layer_rng.normal_matrix(spec.width, fan_in, 1.0 / std::sqrt(static_cast<double>(fan_in))));
        fan_in = spec.width;
    }
    return net;
}

void save_network(const ToyNetwork& net, const std::filesystem::path& dir) {
    net.validate();
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    json j;
    j["nonlinearity"] = to_string(net.nonlinearity);
    j["layers"] = json::array();
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const std::string name = "layer_" + std::to_string(l) + ".snrq";
        write_matrix(dir / name, net.layers[l], DType::F64);
        j["layers"].push_back(name);
    }
    std::ofstream out(dir / "network.json");
    if (!out) throw IoError("cannot write " + (dir / "network.json").string());
    out << j.dump(2) << "\n";
}

ToyNetwork load_network(const std::filesystem::path& dir) {
    const auto meta = dir / "network.json";
    std::ifstream in(meta);
    if (!in) throw IoError("cannot open " + meta.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(meta.string() + ": " + e.what());
    }
    ToyNetwork net;
    try {
        net.nonlinearity = parse_nonlinearity(j.at("nonlinearity").get<std::string>());
        for (const auto& name : j.at("layers")) net.layers.push_back(read_matrix(dir / name.get<std::string>()));
    } catch (const json::exception& e) {
        throw FormatError(meta.string() + ": " + e.what());
    }
    net.validate();
    return net;
}

Matrix forward(std::span<const Matrix> weights, const Matrix& inputs, Nonlinearity nl) {
    Matrix a = inputs;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        a = matmul(weights[l], a);
        if (l + 1 < weights.size()) apply_nonlinearity(a, nl);
    }
    return a;
}

CalibBatch forward_collect(const ToyNetwork& net, const Matrix& inputs, std::span<const Matrix> quantized_prefix) {
    net.validate();
    const std::size_t p = quantized_prefix.size();
    if (p >= net.depth()) throw ShapeMismatch("quantized prefix must be shorter than the network");
    if (inputs.rows() != net.input_dim()) throw ShapeMismatch("inputs do not match the network input dimension");
    Matrix xf = inputs;
    Matrix xq = inputs;
    for (std::size_t l = 0; l < p; ++l) {
        const Matrix& q = quantized_prefix[l];
        if (q.rows() != net.layers[l].rows() || q.cols() != net.layers[l].cols()) {
            throw ShapeMismatch("quantized layer " + std::to_string(l) + " has the wrong shape");
        }
        xf = matmul(net.layers[l], xf);
        xq = matmul(q, xq);
        apply_nonlinearity(xf, net.nonlinearity);
        apply_nonlinearity(xq, net.nonlinearity);
    }
    return {std::move(xf), std::move(xq)};
}

void CalibrationSpec::validate() const {
    if (n_sequences < 1 || heldout_sequences < 1) throw InvalidSpec("calibration sequence counts must be >= 1");
    if (!(input_scale > 0.0) || !std::isfinite(input_scale)) throw InvalidSpec("input_scale must be positive");
}

void RunConfig::validate() const {
    // Layer 0 has input_dim columns, every later layer has width columns.
    grid.validate(network.input_dim);
    grid.validate(network.width);
    alpha.validate();
    if (!(damping >= 0.0) || !std::isfinite(damping)) throw InvalidSpec("damping must be non-negative");
    solver.validate();
    network.validate();
    calibration.validate();
}

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw InvalidSpec(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw InvalidSpec("config must be a JSON object");
    reject_unknown(j,
                   {"bits", "symmetric", "group_size", "mse_clip", "alpha_mode", "alpha_value", "beta_lambda",
                    "damping", "seed", "solver", "beam_width", "block_size", "act_order", "cd_passes",
                    "memory_budget_mb", "threads", "network", "calibration"},
                   "");
    RunConfig c;
    c.grid.bits = static_cast<int>(get_count(j, "bits", static_cast<std::size_t>(c.grid.bits)));
    c.grid.symmetric = get_bool(j, "symmetric", c.grid.symmetric);
    c.grid.group_size = get_count(j, "group_size", c.grid.group_size);
    c.grid.mse_clip = get_bool(j, "mse_clip", c.grid.mse_clip);
    c.alpha.mode = parse_alpha_mode(get_string(j, "alpha_mode", to_string(c.alpha.mode)));
    c.alpha.alpha_value = get_number(j, "alpha_value", c.alpha.alpha_value);
    c.alpha.beta_lambda = get_number(j, "beta_lambda", c.alpha.beta_lambda);
    c.damping = get_number(j, "damping", c.damping);
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) throw InvalidSpec("config key 'seed' must be a non-negative integer");
        c.seed = j["seed"].get<std::uint64_t>();
    }
    c.solver.solver = parse_solver_kind(get_string(j, "solver", to_string(c.solver.solver)));
    c.solver.beam_width = get_count(j, "beam_width", c.solver.beam_width);
    c.solver.block_size = get_count(j, "block_size", c.solver.block_size);
    c.solver.act_order = get_bool(j, "act_order", c.solver.act_order);
    c.solver.cd_passes = get_count(j, "cd_passes", c.solver.cd_passes);
    c.solver.memory_budget_mb = get_count(j, "memory_budget_mb", c.solver.memory_budget_mb);
    c.solver.threads = get_count(j, "threads", c.solver.threads);
    if (j.contains("network")) {
        const json& n = j["network"];
        if (!n.is_object()) throw InvalidSpec("config key 'network' must be an object");
        reject_unknown(n, {"depth", "width", "input_dim", "nonlinearity"}, "network.");
        c.network.depth = get_count(n, "depth", c.network.depth);
        c.network.width = get_count(n, "width", c.network.width);
        c.network.input_dim = get_count(n, "input_dim", c.network.width);
        c.network.nonlinearity = parse_nonlinearity(get_string(n, "nonlinearity", to_string(c.network.nonlinearity)));
    }
    if (j.contains("calibration")) {
        const json& n = j["calibration"];
        if (!n.is_object()) throw InvalidSpec("config key 'calibration' must be an object");
        reject_unknown(n, {"n_sequences", "heldout_sequences", "input_scale"}, "calibration.");
        c.calibration.n_sequences = get_count(n, "n_sequences", c.calibration.n_sequences);
        c.calibration.heldout_sequences = get_count(n, "heldout_sequences", c.calibration.heldout_sequences);
        c.calibration.input_scale = get_number(n, "input_scale", c.calibration.input_scale);
    }
    c.validate();
    return c;
}

std::string run_config_to_json(const RunConfig& cfg) { return config_json(cfg).dump(2); }

std::string strip_timing_fields(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("report is not valid JSON: ") + e.what());
    }
    strip_timing(j);
    return j.dump(2);
}

Matrix calibration_inputs(const RunConfig& cfg, std::size_t input_dim) {
    SeededRng rng(cfg.seed, kCalibrationStream);
    return rng.normal_matrix(input_dim, cfg.calibration.n_sequences, cfg.calibration.input_scale);
}

Matrix heldout_inputs(const RunConfig& cfg, std::size_t input_dim) {
    SeededRng rng(cfg.seed, kHeldoutStream);
    return rng.normal_matrix(input_dim, cfg.calibration.heldout_sequences, cfg.calibration.input_scale);
}

QuantReport quantize_network(const ToyNetwork& net, const RunConfig& cfg) {
    net.validate();
    cfg.alpha.validate();
    cfg.solver.validate();
    cfg.calibration.validate();
    const auto start = Clock::now();

    QuantReport report;
    report.config = cfg;
    const Matrix inputs = calibration_inputs(cfg, net.input_dim());
    SeededRng alpha_rng(cfg.seed, kAlphaStream);
    AlphaSchedule schedule(cfg.alpha.alpha_value);
    std::vector<Matrix> quantized;

    Matrix xf = inputs;
    Matrix xq = inputs;
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const Matrix& w = net.layers[l];
        try {
            const CalibBatch batch{xf, xq};
            AlphaStrategy strategy = cfg.alpha;
            if (strategy.mode == AlphaMode::ClosedForm) strategy.alpha_value = schedule.next_alpha();
            SeededRng layer_rng = alpha_rng.substream(l);
            const CalibStats stats = accumulate_stats(batch, strategy, cfg.damping, &layer_rng);

            const GridParams params = fit_grid(w, cfg.grid);
            const Matrix target = shifted_target(w, stats);
            const TriangularProxy proxy = prepare_proxy(target, stats.h, cfg.solver.act_order);

            LayerReport lr;
            lr.index = l;
            lr.rows = w.rows();
            lr.cols = w.cols();
            lr.alpha_trace = stats.alpha_trace;
            lr.alpha_used = std::accumulate(stats.alpha_trace.begin(), stats.alpha_trace.end(), 0.0) /
                            static_cast<double>(stats.alpha_trace.size());
            lr.activation_mae = mean_abs_diff(xf, xq);
            lr.result = run_solver(w, batch, stats, proxy, params, cfg);
            lr.dequant = lr.result.q_dequant;
            lr.proxy_loss = lr.result.proxy_loss;
            lr.weight_mse = mean_sq_diff(w, lr.dequant);
            schedule.record(w, lr.dequant, batch);
            lr.alpha_star = schedule.last()->alpha;
            lr.alpha_star_degenerate = schedule.last()->degenerate;
            report.total_proxy_loss += lr.proxy_loss;

            xf = matmul(w, xf);
            xq = matmul(lr.dequant, xq);
            if (l + 1 < net.depth()) {
                apply_nonlinearity(xf, net.nonlinearity);
                apply_nonlinearity(xq, net.nonlinearity);
            }
            quantized.push_back(lr.dequant);
            report.layers.push_back(std::move(lr));
        } catch (const Error& e) {
            rethrow_with_context(e, "layer " + std::to_string(l) + ": ");
        }
    }

    report.calibration_output_mse = mean_sq_diff(xf, xq);
    const Matrix held = heldout_inputs(cfg, net.input_dim());
    report.heldout_output_mse =
        mean_sq_diff(forward(net.layers, held, net.nonlinearity), forward(quantized, held, net.nonlinearity));
    report.total_ms = ms_since(start);
    return report;
}

std::string report_to_json(const QuantReport& report, bool with_timing,
                           const std::vector<std::string>& artifact_names) {
    json j;
    j["schema_version"] = kReportSchemaVersion;
    j["tool"] = "snrq";
    j["tool_version"] = version();
    j["config"] = config_json(report.config);
    j["layers"] = json::array();
    for (std::size_t i = 0; i < report.layers.size(); ++i) {
        const LayerReport& lr = report.layers[i];
        json l;
        l["index"] = lr.index;
        l["rows"] = lr.rows;
        l["cols"] = lr.cols;
        l["alpha_mode"] = to_string(report.config.alpha.mode);
        l["alpha_used"] = lr.alpha_used;
        const auto [mn, mx] = std::minmax_element(lr.alpha_trace.begin(), lr.alpha_trace.end());
        l["alpha_trace"] = {{"count", lr.alpha_trace.size()}, {"mean", lr.alpha_used}, {"min", *mn}, {"max", *mx}};
        l["alpha_star"] = lr.alpha_star;
        l["alpha_star_degenerate"] = lr.alpha_star_degenerate;
        l["proxy_loss"] = lr.proxy_loss;
        l["per_row_scores_sum"] =
            std::accumulate(lr.result.per_row_scores.begin(), lr.result.per_row_scores.end(), 0.0);
        l["weight_mse"] = lr.weight_mse;
        l["activation_mae"] = lr.activation_mae;
        l["permutation"] = lr.result.permutation_used;
        if (2 * i + 1 < artifact_names.size()) {
            l["codes_path"] = artifact_names[2 * i];
            l["dequant_path"] = artifact_names[2 * i + 1];
        }
        if (with_timing) l["timing"] = {{"solver_ms", lr.result.elapsed_ms}};
        j["layers"].push_back(std::move(l));
    }
    j["end_to_end"] = {{"total_proxy_loss", report.total_proxy_loss},
                       {"calibration_output_mse", report.calibration_output_mse},
                       {"heldout_output_mse", report.heldout_output_mse}};
    if (with_timing) j["timing"] = {{"total_ms", report.total_ms}};
    return j.dump(2);
}

std::filesystem::path write_report(const QuantReport& report, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create directory " + out_dir.string() + ": " + ec.message());
    std::vector<std::string> names;
    for (const LayerReport& lr : report.layers) {
        const std::string stem = "layer_" + std::to_string(lr.index);
        names.push_back(stem + "_codes.snrq");
        names.push_back(stem + "_dequant.snrq");
        write_int_matrix(out_dir / names[names.size() - 2], lr.result.codes);
        write_matrix(out_dir / names.back(), lr.dequant, DType::F64);
    }
    const auto path = out_dir / "report.json";
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << report_to_json(report, true, names) << "\n";
    if (!out) throw IoError("write failed: " + path.string());
    return path;
}

SweepAxis parse_sweep_axis(const std::string& s) {
    if (s == "alpha") return SweepAxis::Alpha;
    if (s == "beta_lambda") return SweepAxis::BetaLambda;
    if (s == "K" || s == "k" || s == "beam_width") return SweepAxis::BeamWidth;
    if (s == "cd_passes") return SweepAxis::CdPasses;
    throw InvalidSpec("unknown sweep axis '" + s + "' (expected alpha|beta_lambda|K|cd_passes)");
}

const char* to_string(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::Alpha: return "alpha";
        case SweepAxis::BetaLambda: return "beta_lambda";
        case SweepAxis::BeamWidth: return "K";
        case SweepAxis::CdPasses: return "cd_passes";
    }
    return "alpha";
}

std::vector<SweepRow> sweep(const ToyNetwork& net, const RunConfig& base, SweepAxis axis,
                            const std::vector<double>& values) {
    if (values.empty()) throw InvalidArgument("sweep: no values given");
    auto as_count = [](double v, std::size_t min) {
        if (!(v >= static_cast<double>(min)) || v != std::floor(v)) {
            throw InvalidSpec("sweep: value " + std::to_string(v) + " must be an integer >= " + std::to_string(min));
        }
        return static_cast<std::size_t>(v);
    };
    std::vector<SweepRow> rows;
    for (double v : values) {
        RunConfig cfg = base;
        switch (axis) {
            case SweepAxis::Alpha:
                cfg.alpha.mode = AlphaMode::Fixed;
                cfg.alpha.alpha_value = v;
                break;
            case SweepAxis::BetaLambda:
                cfg.alpha.mode = AlphaMode::Sampled;
                cfg.alpha.beta_lambda = v;
                break;
            case SweepAxis::BeamWidth:
                cfg.solver.solver = SolverKind::KSnrq;
                cfg.solver.beam_width = as_count(v, 1);
                break;
            case SweepAxis::CdPasses: cfg.solver.cd_passes = as_count(v, 0); break;
        }
        const QuantReport r = quantize_network(net, cfg);
        SweepRow row{v, r.total_proxy_loss, r.calibration_output_mse, r.heldout_output_mse, r.total_ms, std::nullopt};
        const bool marginal_axis = axis == SweepAxis::BeamWidth || axis == SweepAxis::CdPasses;
        if (marginal_axis && !rows.empty()) {
            const double dt = (row.wall_ms - rows.back().wall_ms) / 1000.0;
            row.marginal_per_second = (rows.back().proxy_loss - row.proxy_loss) / dt;
        }
        rows.push_back(row);
    }
    return rows;
}

std::string sweep_to_json(SweepAxis axis, const std::vector<SweepRow>& rows, bool with_timing) {
    json j;
    j["schema_version"] = kReportSchemaVersion;
    j["tool_version"] = version();
    j["axis"] = to_string(axis);
    j["rows"] = json::array();
    for (const SweepRow& r : rows) {
        json row = {{"value", r.value},
                    {"proxy_loss", r.proxy_loss},
                    {"calibration_output_mse", r.calibration_output_mse},
                    {"heldout_output_mse", r.heldout_output_mse}};
        if (with_timing) {
            row["timing"] = {{"wall_ms", r.wall_ms}};
            if (r.marginal_per_second) row["timing"]["marginal_per_second"] = nullable(*r.marginal_per_second);
        }
        j["rows"].push_back(std::move(row));
    }
    return j.dump(2);
}

double folded_beta_mean(double lambda) {
    if (!(lambda > 0.0)) throw InvalidArgument("folded_beta_mean: lambda must be positive");
    // E[min(β, 1 − β)] = 2 ∫_0^{1/2} b f(b) db, composite Simpson.
    constexpr int kIntervals = 20000;
    const double log_norm = 2.0 * std::lgamma(lambda) - std::lgamma(2.0 * lambda);
    auto integrand = [&](double b) {
        if (b <= 0.0) return 0.0;
        return std::exp(lambda * std::log(b) + (lambda - 1.0) * std::log1p(-b) - log_norm);
    };
    const double h = 0.5 / kIntervals;
    double s = integrand(0.0) + integrand(0.5);
    for (int i = 1; i < kIntervals; ++i) s += integrand(i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    return 2.0 * s * h / 3.0;
}

VarianceSweep sampling_variance_sweep(const ToyNetwork& net, const RunConfig& base, std::size_t n_repeats,
                                      bool same_seed) {
    if (n_repeats < 1) throw InvalidArgument("variance sweep needs at least one repeat");
    VarianceSweep out;
    out.fixed_alpha = folded_beta_mean(base.alpha.beta_lambda);
    const SeededRng seeds(base.seed, kRepeatStream);
    for (std::size_t r = 0; r < n_repeats; ++r) {
        RunConfig cfg = base;
        if (!same_seed) cfg.seed = seeds.substream(r).next_u64();
        cfg.alpha.mode = AlphaMode::Fixed;
        cfg.alpha.alpha_value = out.fixed_alpha;
        out.fixed.losses.push_back(quantize_network(net, cfg).total_proxy_loss);
        cfg.alpha.mode = AlphaMode::Sampled;
        out.sampled.losses.push_back(quantize_network(net, cfg).total_proxy_loss);
    }
    for (ModeSpread* m : {&out.fixed, &out.sampled}) {
        m->mean = std::accumulate(m->losses.begin(), m->losses.end(), 0.0) / static_cast<double>(n_repeats);
        m->stddev = sample_std(m->losses);
    }
    if (n_repeats == 1) out.warnings.push_back("n_repeats = 1: standard deviations are reported as 0");
    else if (n_repeats < 20) out.warnings.push_back("fewer than 20 repeats: spread estimates are noisy");
    out.sampled_std_le_fixed = out.sampled.stddev <= out.fixed.stddev;
    return out;
}

std::string variance_sweep_to_json(const VarianceSweep& v) {
    auto mode = [](const ModeSpread& m) { return json{{"mean", m.mean}, {"std", m.stddev}, {"losses", m.losses}}; };
    json j;
    j["schema_version"] = kReportSchemaVersion;
    j["tool_version"] = version();
    j["fixed_alpha"] = v.fixed_alpha;
    j["fixed"] = mode(v.fixed);
    j["sampled"] = mode(v.sampled);
    j["sampled_std_le_fixed"] = v.sampled_std_le_fixed;
    j["warnings"] = v.warnings;
    return j.dump(2);
}

}  // namespace snrq
