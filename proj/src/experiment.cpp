#include "meanfield2nn/experiment.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <memory>
#include <fstream>
#include <set>
#include <sstream>

#include "meanfield2nn/csv.hpp"
#include "meanfield2nn/dd.hpp"
#include "meanfield2nn/diagnostics.hpp"
#include "meanfield2nn/parallel.hpp"
#include "meanfield2nn/sgd.hpp"
#include "meanfield2nn/statics.hpp"

namespace mf {

namespace fs = std::filesystem;
using nlohmann::json;

const char* version() { return "1.0.0"; }

namespace {

// Separate init stream for the reduced-dynamics atoms, so they are an
// independent draw from the law of the SGD initialization.
constexpr std::uint64_t kDdInitTag = 0x4444494eULL;

// ---------------------------------------------------------------------------
// Config reading
// ---------------------------------------------------------------------------

class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) const { return j_.contains(key); }

    const json& at(const std::string& key) {
        used_.insert(key);
        if (!j_.contains(key)) throw ConfigError(where(key), "required field is missing");
        return j_.at(key);
    }

    Fields child(const std::string& key) {
        static const json empty = json::object();
        if (!has(key)) return Fields(empty, where(key));
        return Fields(at(key), where(key));
    }

    double real(const std::string& key, std::optional<double> def = std::nullopt) {
        if (!has(key)) return require_default(key, def);
        return to_real(at(key), where(key), false);
    }

    /// A number or the string "inf".
    double real_or_inf(const std::string& key, std::optional<double> def = std::nullopt) {
        if (!has(key)) return require_default(key, def);
        return to_real(at(key), where(key), true);
    }

    std::optional<double> optional_real(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return to_real(at(key), where(key), false);
    }

    std::uint64_t count(const std::string& key, std::optional<std::uint64_t> def = std::nullopt) {
        if (!has(key)) {
            if (!def) throw ConfigError(where(key), "required field is missing");
            return *def;
        }
        return to_count(at(key), where(key));
    }

    bool boolean(const std::string& key, bool def) {
        if (!has(key)) return def;
        const json& v = at(key);
        if (!v.is_boolean()) throw ConfigError(where(key), "expected true or false");
        return v.get<bool>();
    }

    std::string string(const std::string& key, std::optional<std::string> def = std::nullopt) {
        if (!has(key)) {
            if (!def) throw ConfigError(where(key), "required field is missing");
            return *def;
        }
        const json& v = at(key);
        if (!v.is_string()) throw ConfigError(where(key), "expected a string");
        return v.get<std::string>();
    }

    /// A number or a non-empty list of numbers.
    std::vector<double> reals(const std::string& key, std::vector<double> def) {
        if (!has(key)) return def;
        const json& v = at(key);
        if (!v.is_array()) return {to_real(v, where(key), false)};
        if (v.empty()) throw ConfigError(where(key), "expected a non-empty list");
        std::vector<double> out;
        for (std::size_t k = 0; k < v.size(); ++k) out.push_back(to_real(v[k], where(key) + "[" + std::to_string(k) + "]", false));
        return out;
    }

    std::vector<std::uint64_t> counts(const std::string& key) {
        if (!has(key)) return {};
        const json& v = at(key);
        if (!v.is_array()) throw ConfigError(where(key), "expected a list");
        std::vector<std::uint64_t> out;
        for (std::size_t k = 0; k < v.size(); ++k) out.push_back(to_count(v[k], where(key) + "[" + std::to_string(k) + "]"));
        return out;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) throw ConfigError(where(it.key()), "unknown field");
    }

    static double to_real(const json& v, const std::string& where, bool allow_inf) {
        if (v.is_number()) return v.get<double>();
        if (allow_inf && v.is_string() && (v == "inf" || v == "infinity")) return std::numeric_limits<double>::infinity();
        throw ConfigError(where, allow_inf ? "expected a number or \"inf\"" : "expected a number");
    }

    static std::uint64_t to_count(const json& v, const std::string& where) {
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer()) {
            const std::int64_t x = v.get<std::int64_t>();
            if (x < 0) throw ConfigError(where, "must be non-negative");
            return static_cast<std::uint64_t>(x);
        }
        if (v.is_number_float()) {
            const double x = v.get<double>();
            if (!(x >= 0.0) || x != std::floor(x) || x > 9.2e18) throw ConfigError(where, "expected a non-negative integer");
            return static_cast<std::uint64_t>(x);
        }
        throw ConfigError(where, "expected a non-negative integer");
    }

private:
    double require_default(const std::string& key, std::optional<double> def) const {
        if (!def) throw ConfigError(where(key), "required field is missing");
        return *def;
    }

    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

void require(bool ok, const std::string& where, const std::string& what) {
    if (!ok) throw ConfigError(where, what);
}

Dim parse_dim(const json& v, const std::string& where) {
    if (v.is_string() && (v == "inf" || v == "infinity")) return Dim::infinity();
    const std::uint64_t d = Fields::to_count(v, where);
    require(d >= 1 && d <= 1000000, where, "dimension must be a positive integer or \"inf\"");
    return Dim(static_cast<int>(d));
}

Schedule parse_schedule(Fields f) {
    const std::string kind = f.string("kind", "constant");
    Schedule s = Schedule::constant(1.0);
    if (kind == "constant") {
        const double c = f.real("value", 1.0);
        require(c > 0.0 && std::isfinite(c), f.where("value"), "must be positive");
        s = Schedule::constant(c);
    } else if (kind == "power_law") {
        const double e = f.real("exponent");
        require(e >= 0.0 && e < 1.0, f.where("exponent"), "must lie in [0, 1)");
        s = Schedule::power_law(e);
    } else {
        throw ConfigError(f.where("kind"), "expected \"constant\" or \"power_law\"");
    }
    f.finish();
    return s;
}

Activation parse_activation(Fields f) {
    const std::string kind = f.string("kind", "PiecewiseLinear");
    std::vector<Knot> knots;
    if (f.has("knots")) {
        const json& v = f.at("knots");
        require(v.is_array(), f.where("knots"), "expected a list of [t, s] pairs");
        for (std::size_t k = 0; k < v.size(); ++k) {
            const std::string w = f.where("knots") + "[" + std::to_string(k) + "]";
            require(v[k].is_array() && v[k].size() == 2, w, "expected a [t, s] pair");
            knots.push_back({Fields::to_real(v[k][0], w, false), Fields::to_real(v[k][1], w, false)});
        }
    }
    f.finish();
    const std::string where = f.where("knots");
    if (kind == "PiecewiseLinear") {
        if (knots.empty()) return Activation::default_sigmoid();
        require(knots.size() == 2, where, "the piecewise-linear sigmoid takes exactly two knots");
        require(knots[0].t < knots[1].t, where, "knots must be strictly increasing in t");
        return Activation::piecewise_linear(knots[0].s, knots[1].s, knots[0].t, knots[1].t);
    }
    if (kind == "NonMonotone") {
        const Activation act = Activation::non_monotone();
        if (!knots.empty()) {
            const auto fixed = act.knots();
            bool same = knots.size() == fixed.size();
            for (std::size_t k = 0; same && k < knots.size(); ++k)
                same = knots[k].t == fixed[k].t && knots[k].s == fixed[k].s;
            require(same, where, "the non-monotone activation has the fixed knots (0,-2.5), (0.5,-4), (1.5,7.5)");
        }
        return act;
    }
    if (kind == "ReluAffine") {
        require(knots.empty(), where, "the ReLU activation takes no knots");
        return Activation::relu();
    }
    throw ConfigError(f.where("kind"), "expected PiecewiseLinear, NonMonotone or ReluAffine");
}

bool runs_sgd(const std::string& e) {
    return e == "sgd" || e == "figure1" || e == "figure2" || e == "figure3" || e == "figure4" || e == "chaos";
}
bool runs_dd(const std::string& e) { return e == "dd" || e == "figure1" || e == "figure3" || e == "figure4"; }
bool sweeps(const std::string& e) { return e == "statics" || e == "thresholds" || e == "figure2" || e == "figure3"; }

ReducedSpace reduced_space(const ExperimentConfig& cfg) {
    if (cfg.activation.kind() == ActivationKind::ReluAffine) return ReducedSpace::Relu4D;
    return cfg.model.s0 ? ReducedSpace::Aniso2D : ReducedSpace::Radial1D;
}

Dim dd_dim(const ExperimentConfig& cfg) {
    if (cfg.dd.d) return *cfg.dd.d;
    return reduced_space(cfg) == ReducedSpace::Radial1D ? cfg.model.d : Dim::infinity();
}

void check_consistency(const ExperimentConfig& cfg) {
    const std::string& e = cfg.experiment;
    if (!sweeps(e)) {
        require(cfg.deltas.size() == 1, "model.delta", "this experiment takes a single delta");
        require(cfg.dims.size() == 1, "model.d", "this experiment takes a single dimension");
    }
    if (cfg.model.s0)
        for (Dim d : cfg.dims)
            require(d.is_infinite() || *cfg.model.s0 <= d.value(), "model.s0", "must not exceed d");

    const bool piecewise = cfg.activation.is_piecewise();
    if (runs_sgd(e)) {
        for (Dim d : cfg.dims) require(!d.is_infinite(), "model.d", "SGD needs a finite dimension");
        require(cfg.sgd.exact_risk == false || (piecewise && !cfg.model.s0), "sgd.exact_risk",
                "the exact risk needs isotropic data and a piecewise activation");
    }
    if (runs_dd(e)) {
        const ReducedSpace space = reduced_space(cfg);
        require(space == ReducedSpace::Radial1D || dd_dim(cfg).is_infinite(), "dd.d",
                "anisotropic and ReLU reduced dynamics exist only at d = inf");
        require(space == ReducedSpace::Radial1D || !cfg.model.d.is_infinite(), "model.d",
                "the split initialization needs a finite d");
        if (cfg.dd.t_min && cfg.dd.t_max) require(*cfg.dd.t_max > *cfg.dd.t_min, "dd.t_max", "must exceed dd.t_min");
        if (e == "dd") {
            require(cfg.dd.t_max.has_value(), "dd.t_max", "required for the dd experiment");
        }
    }
    if (e == "langevin") {
        require(reduced_space(cfg) == ReducedSpace::Radial1D && piecewise, "activation.kind",
                "the Langevin model system needs radial atoms and a piecewise activation");
        require(std::isfinite(cfg.dd.beta) && cfg.dd.beta > 0.0, "dd.beta", "must be finite and positive");
        require(cfg.dd.lambda > 0.0, "dd.lambda", "must be positive");
        require(cfg.dd.t_max.has_value(), "dd.t_max", "required for the langevin experiment");
    }
    if (e == "statics" || e == "thresholds" || e == "figure2") {
        require(piecewise, "activation.kind", "the statics need a piecewise activation");
        require(!cfg.model.s0, "model.s0", "the statics need isotropic data");
    }
    if (e == "figure2") require(cfg.sgd.mc_samples > 0 || cfg.sgd.steps == 0, "sgd.mc_samples", "must be positive");
    if (e == "chaos") {
        require(piecewise && !cfg.model.s0, "model", "the chaos sweep needs isotropic data and a piecewise activation");
        for (int n : cfg.chaos.n_list) require(n >= 1, "chaos.n_list", "entries must be positive");
        for (double x : cfg.chaos.eps_list) require(x > 0.0 && std::isfinite(x), "chaos.eps_list", "entries must be positive");
    }
    if (e == "figure4") require(cfg.sgd.mc_samples > 0, "sgd.mc_samples", "must be positive");
}

} // namespace

ExperimentConfig parse_config(const json& doc) {
    ExperimentConfig cfg;
    cfg.source = doc;
    Fields root(doc, "");

    cfg.experiment = root.string("experiment");
    const auto& names = experiment_names();
    require(std::find(names.begin(), names.end(), cfg.experiment) != names.end(), "experiment",
            "unknown experiment '" + cfg.experiment + "'");
    cfg.seed = root.count("seed", 1);
    cfg.output_dir = root.string("output_dir", "out");
    require(!cfg.output_dir.empty(), "output_dir", "must not be empty");

    {
        Fields m = root.child("model");
        cfg.deltas = m.reals("delta", {0.5});
        for (double delta : cfg.deltas) require(delta >= 0.0 && delta < 1.0, m.where("delta"), "must lie in [0, 1)");
        if (m.has("d")) {
            const json& v = m.at("d");
            if (v.is_array()) {
                require(!v.empty(), m.where("d"), "expected a non-empty list");
                for (std::size_t k = 0; k < v.size(); ++k) cfg.dims.push_back(parse_dim(v[k], m.where("d")));
            } else {
                cfg.dims.push_back(parse_dim(v, m.where("d")));
            }
        } else {
            cfg.dims.push_back(Dim(40));
        }
        if (m.has("s0")) {
            const std::uint64_t s0 = Fields::to_count(m.at("s0"), m.where("s0"));
            require(s0 >= 1, m.where("s0"), "must be positive");
            cfg.model.s0 = static_cast<int>(s0);
        }
        m.finish();
        cfg.model.delta = cfg.deltas.front();
        cfg.model.d = cfg.dims.front();
    }
    cfg.activation = parse_activation(root.child("activation"));

    {
        Fields s = root.child("sgd");
        SgdSection& o = cfg.sgd;
        const std::uint64_t n = s.count("n", 800);
        require(n >= 1 && n <= 100000000, s.where("n"), "must be a positive integer");
        o.n = static_cast<int>(n);
        o.epsilon = s.real("epsilon", 1e-6);
        require(o.epsilon > 0.0 && std::isfinite(o.epsilon), s.where("epsilon"), "must be positive");
        if (s.has("schedule")) o.schedule = parse_schedule(s.child("schedule"));
        o.steps = s.count("steps", 1000);
        o.beta = s.real_or_inf("beta", std::numeric_limits<double>::infinity());
        require(o.beta > 0.0, s.where("beta"), "must be positive");
        o.lambda = s.real("lambda", 0.0);
        require(o.lambda >= 0.0 && std::isfinite(o.lambda), s.where("lambda"), "must be non-negative");
        o.init_scales = s.reals("init_scale", {0.8});
        for (double k : o.init_scales) require(k > 0.0 && std::isfinite(k), s.where("init_scale"), "must be positive");
        o.a0 = s.real("a0", 1.0);
        o.b0 = s.real("b0", 1.0);
        o.risk_eval_stride = s.count("risk_eval_stride", 0);
        o.checkpoints = s.counts("checkpoints");
        o.mc_samples = s.count("mc_samples", 0);
        o.exact_risk = s.boolean("exact_risk", false);
        o.dump_radial = s.boolean("dump_radial", true);
        s.finish();
    }
    {
        Fields s = root.child("dd");
        DdSection& o = cfg.dd;
        o.atoms = s.count("atoms", 400);
        require(o.atoms >= 1, s.where("atoms"), "must be positive");
        o.init = s.string("init", "sampled");
        require(o.init == "sampled" || o.init == "quantile", s.where("init"), "expected \"sampled\" or \"quantile\"");
        o.t_min = s.optional_real("t_min");
        if (o.t_min) require(*o.t_min > 0.0 && std::isfinite(*o.t_min), s.where("t_min"), "must be positive");
        o.t_max = s.optional_real("t_max");
        if (o.t_max) require(*o.t_max > 0.0 && std::isfinite(*o.t_max), s.where("t_max"), "must be positive");
        o.grid_points = s.count("grid_points", 100000);
        require(o.grid_points >= 2, s.where("grid_points"), "must be at least 2");
        o.record_times = s.reals("record_times", {});
        for (double t : o.record_times) require(t >= 0.0 && std::isfinite(t), s.where("record_times"), "must be non-negative");
        o.lambda = s.real("lambda", 0.0);
        require(o.lambda >= 0.0 && std::isfinite(o.lambda), s.where("lambda"), "must be non-negative");
        o.beta = s.real_or_inf("beta", 50.0);
        require(o.beta > 0.0, s.where("beta"), "must be positive");
        o.r_max = s.real("r_max", 6.0);
        require(o.r_max > 0.0 && std::isfinite(o.r_max), s.where("r_max"), "must be positive");
        const std::uint64_t cells = s.count("cells", 120);
        require(cells >= 2 && cells <= 10000, s.where("cells"), "must lie in [2, 10000]");
        o.cells = static_cast<int>(cells);
        if (s.has("d")) o.d = parse_dim(s.at("d"), s.where("d"));
        o.format = s.string("format", "long");
        require(o.format == "long" || o.format == "wide", s.where("format"), "expected \"long\" or \"wide\"");
        s.finish();
    }
    {
        Fields s = root.child("statics");
        StaticsSection& o = cfg.statics;
        o.grid_lo = s.real("grid_lo", 0.01);
        o.grid_hi = s.real("grid_hi", 10.0);
        o.grid_k = s.count("grid_k", 100);
        require(o.grid_lo > 0.0 && o.grid_hi > o.grid_lo && o.grid_k >= 2, s.where("grid_k"),
                "the radius grid needs 0 < grid_lo < grid_hi and grid_k >= 2");
        o.check_lo = s.real("check_lo", 0.1);
        o.check_hi = s.real("check_hi", 10.0);
        o.check_k = s.count("check_k", 100);
        require(o.check_lo > 0.0 && o.check_hi > o.check_lo && o.check_k >= 2, s.where("check_k"),
                "the check grid needs 0 < check_lo < check_hi and check_k >= 2");
        o.scan_lo = s.real("scan_lo", 0.01);
        o.scan_hi = s.real("scan_hi", 0.99);
        o.scan_k = s.count("scan_k", 99);
        require(o.scan_lo >= 0.0 && o.scan_hi > o.scan_lo && o.scan_hi < 1.0 && o.scan_k >= 2, s.where("scan_k"),
                "the delta scan needs 0 <= scan_lo < scan_hi < 1 and scan_k >= 2");
        o.qp_tol = s.real("qp_tol", 1e-10);
        require(o.qp_tol > 0.0, s.where("qp_tol"), "must be positive");
        o.write_kernels = s.boolean("write_kernels", false);
        s.finish();
    }
    {
        Fields s = root.child("chaos");
        ChaosSection& o = cfg.chaos;
        if (s.has("n_list")) {
            o.n_list.clear();
            for (std::uint64_t n : s.counts("n_list")) o.n_list.push_back(static_cast<int>(std::min<std::uint64_t>(n, 1u << 30)));
            require(!o.n_list.empty(), s.where("n_list"), "expected a non-empty list");
        }
        o.eps_list = s.reals("eps_list", o.eps_list);
        o.t_final = s.real("t_final", 0.5);
        require(o.t_final > 0.0 && std::isfinite(o.t_final), s.where("t_final"), "must be positive");
        o.reference_atoms = s.count("reference_atoms", 1000);
        require(o.reference_atoms >= 1, s.where("reference_atoms"), "must be positive");
        o.r_max = s.real("r_max", 3.0);
        require(o.r_max > 0.0, s.where("r_max"), "must be positive");
        const std::uint64_t cells = s.count("cells", 150);
        require(cells >= 2 && cells <= 10000, s.where("cells"), "must lie in [2, 10000]");
        o.cells = static_cast<int>(cells);
        s.finish();
    }
    root.finish();

    try {
        cfg.model.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("model", e.what());
    }
    check_consistency(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path, "cannot read the config file");
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
        const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
        throw ConfigError(path + ":" + std::to_string(line), "invalid JSON");
    }
    return parse_config(doc);
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

namespace {

std::vector<std::uint64_t> log_checkpoints(std::uint64_t steps) {
    std::vector<std::uint64_t> out;
    for (std::uint64_t decade = 1; decade <= steps; decade *= 10)
        for (std::uint64_t m : {1, 2, 5})
            if (m * decade <= steps) out.push_back(m * decade);
    if (out.empty() || out.back() != steps) out.push_back(steps);
    return out;
}

} // namespace

json preset_document(const std::string& name, const std::string& scale) {
    if (scale != "paper" && scale != "small") throw ConfigError("scale", "expected \"paper\" or \"small\"");
    const bool small = scale == "small";
    json doc;
    doc["experiment"] = name;
    doc["seed"] = 1;
    doc["output_dir"] = "out/" + name + "-" + scale;
    const json power_law = {{"kind", "power_law"}, {"exponent", 0.25}};

    if (name == "figure1") {
        const std::uint64_t steps = small ? 1000000 : 10000000;
        const double eps = 1e-6;
        doc["model"] = {{"delta", 0.8}, {"d", 40}};
        doc["activation"] = {{"kind", "PiecewiseLinear"}};
        doc["sgd"] = {{"n", small ? 200 : 800},
                      {"epsilon", eps},
                      {"schedule", {{"kind", "constant"}, {"value", 1.0}}},
                      {"steps", steps},
                      {"init_scale", 0.8},
                      {"checkpoints", small ? std::vector<std::uint64_t>{1000, 10000, 100000, 1000000}
                                            : std::vector<std::uint64_t>{1000, 10000, 100000, 1000000, 4000000, 10000000}},
                      {"exact_risk", true}};
        doc["dd"] = {{"atoms", small ? 100 : 400},
                     {"t_min", eps},
                     {"t_max", eps * static_cast<double>(steps)},
                     {"grid_points", small ? 10000 : 100000},
                     {"r_max", 6.0},
                     {"cells", 120}};
    } else if (name == "figure2") {
        const std::uint64_t steps = small ? 1000000 : 10000000;
        doc["model"] = {{"delta", {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}}, {"d", {20, 40, 80}}};
        doc["activation"] = {{"kind", "PiecewiseLinear"}};
        doc["sgd"] = {{"n", small ? 80 : 800},   {"epsilon", 3e-3},    {"schedule", power_law},
                      {"steps", steps},          {"init_scale", 0.4}, {"mc_samples", small ? 1000 : 10000},
                      {"dump_radial", false}};
        doc["statics"] = {{"grid_lo", 0.01}, {"grid_hi", 10.0}, {"grid_k", 100}};
    } else if (name == "figure3") {
        const std::uint64_t steps = small ? 1000000 : 10000000;
        doc["model"] = {{"delta", {0.2, 0.4, 0.6}}, {"d", 320}, {"s0", 60}};
        doc["activation"] = {{"kind", "ReluAffine"}};
        doc["sgd"] = {{"n", small ? 80 : 800},
                      {"epsilon", 2e-4},
                      {"schedule", power_law},
                      {"steps", steps},
                      {"init_scale", 0.8},
                      {"a0", 1.0},
                      {"b0", 1.0},
                      {"checkpoints", log_checkpoints(steps)},
                      {"mc_samples", small ? 1000 : 10000},
                      {"dump_radial", false}};
        doc["dd"] = {{"atoms", small ? 40 : 400}, {"grid_points", small ? 10000 : 100000}, {"d", "inf"}};
    } else if (name == "figure4") {
        // The larger initialization needs ~1.2e6 steps at d = 80 to pass the
        // risk bar, so the small scale runs 2e6.
        const std::uint64_t steps = small ? 2000000 : 10000000;
        doc["model"] = {{"delta", 0.5}, {"d", small ? 80 : 320}};
        doc["activation"] = {{"kind", "NonMonotone"}};
        doc["sgd"] = {{"n", small ? 200 : 800},
                      {"epsilon", 1e-5},
                      {"schedule", power_law},
                      {"steps", steps},
                      {"init_scale", {0.1, 0.4}},
                      {"checkpoints", log_checkpoints(steps)},
                      {"mc_samples", 10000},
                      {"dump_radial", false}};
        doc["dd"] = {{"atoms", small ? 40 : 400}, {"grid_points", small ? 10000 : 100000}, {"d", "inf"}};
    } else {
        throw ConfigError("preset", "expected figure1, figure2, figure3 or figure4");
    }
    return doc;
}

// ---------------------------------------------------------------------------
// Runners
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> coordinate_names(ReducedSpace space) {
    switch (space) {
    case ReducedSpace::Radial1D: return {"r"};
    case ReducedSpace::Aniso2D: return {"r1", "r2"};
    case ReducedSpace::Relu4D: return {"a", "b", "r1", "r2"};
    }
    return {};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

std::vector<std::string> prefixed(const std::string& prefix, const std::vector<std::string>& names) {
    std::vector<std::string> out;
    for (const auto& n : names) out.push_back(prefix + n);
    return out;
}

class Context {
public:
    Context(const ExperimentConfig& cfg, fs::path dir, int threads) : cfg(cfg), dir(std::move(dir)), threads(threads) {}

    CsvWriter csv(const std::string& name, const std::vector<std::string>& header) {
        artifacts.push_back(name);
        return CsvWriter((dir / name).string(), header);
    }

    const ExperimentConfig& cfg;
    fs::path dir;
    int threads;
    std::vector<std::string> artifacts;
    json results = json::object();
};

SgdConfig sgd_config(const ExperimentConfig& cfg, int threads) {
    SgdConfig c;
    c.epsilon = cfg.sgd.epsilon;
    c.schedule = cfg.sgd.schedule;
    c.steps = cfg.sgd.steps;
    c.beta = cfg.sgd.beta;
    c.lambda = cfg.sgd.lambda;
    c.seed = cfg.seed;
    c.risk_eval_stride = cfg.sgd.risk_eval_stride;
    c.checkpoints = cfg.sgd.checkpoints;
    c.mc_samples = cfg.sgd.mc_samples;
    c.exact_risk = cfg.sgd.exact_risk;
    c.threads = threads;
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("sgd", e.what());
    }
    return c;
}

double summary_risk(const SgdSummary& s) { return std::isfinite(s.risk_exact) ? s.risk_exact : s.risk_mc; }

std::vector<std::string> sgd_header() {
    return {"init_scale", "delta",    "d",         "iteration", "t",      "risk_exact", "risk_mc",
            "mc_se",      "error_rate", "mean_norm", "a_mean",  "b_mean", "r1_mean",    "r2_mean"};
}

void sgd_rows(CsvWriter& out, double kappa, const DataModel& model, const std::vector<SgdSummary>& traj) {
    for (const SgdSummary& s : traj)
        out.row({kappa, model.delta, model.d.str(), static_cast<unsigned long long>(s.iteration), s.t, s.risk_exact, s.risk_mc,
                 s.mc_se, s.error_rate, s.mean_norm, s.a_mean, s.b_mean, s.r1_mean, s.r2_mean});
}

std::vector<std::string> snapshot_header(ReducedSpace space) {
    return concat({"init_scale", "delta", "t", "atom", "weight"}, coordinate_names(space));
}

void snapshot_rows(CsvWriter& out, double kappa, double delta, double t, const AtomEnsemble& atoms) {
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        std::vector<CsvWriter::Cell> row = {kappa, delta, t, static_cast<unsigned long long>(i), atoms.weight(i)};
        for (double x : atoms.point(i)) row.emplace_back(x);
        out.row(row);
    }
}

WeightEnsemble initial_weights(const ExperimentConfig& cfg, const DataModel& model, double kappa) {
    const int d = model.d.value();
    return WeightEnsemble::gaussian(cfg.sgd.n, d, kappa / std::sqrt(static_cast<double>(d)), cfg.seed,
                                    cfg.activation.kind() == ActivationKind::ReluAffine, cfg.sgd.a0, cfg.sgd.b0);
}

AtomEnsemble initial_atoms(const ExperimentConfig& cfg, const DataModel& model, double kappa) {
    const std::size_t j = cfg.dd.atoms;
    const std::uint64_t seed = stream_key(cfg.seed, kTagInit, kDdInitTag);
    const ReducedSpace space = reduced_space(cfg);
    if (space == ReducedSpace::Radial1D) {
        // At d = inf the norm of N(0, kappa^2/d I_d) concentrates at kappa.
        if (model.d.is_infinite()) return AtomEnsemble::uniform(space, std::vector<double>(j, kappa));
        const int d = model.d.value();
        const double sd = kappa / std::sqrt(static_cast<double>(d));
        return cfg.dd.init == "quantile" ? chi_quantile_atoms(d, sd, j) : sampled_radial_atoms(d, sd, j, seed);
    }
    // Split norms of the first s0 and the remaining coordinates.
    const int d = model.d.value();
    const WeightEnsemble w = WeightEnsemble::gaussian(static_cast<int>(j), d, kappa / std::sqrt(static_cast<double>(d)), seed,
                                                      space == ReducedSpace::Relu4D, cfg.sgd.a0, cfg.sgd.b0);
    return w.summarize(model.s0);
}

struct DdRun {
    DdTrajectory trajectory;
    double t_max;
};

std::vector<double> coordinate_weights(const AtomEnsemble& a) { return {a.weights().begin(), a.weights().end()}; }

DdRun run_dd(Context& ctx, const DataModel& model, const AtomEnsemble& atoms0, const std::vector<double>& record_times,
             double default_t_min, double default_t_max) {
    const ExperimentConfig& cfg = ctx.cfg;
    const Dim d = dd_dim(cfg);
    std::unique_ptr<RadialKernelTable> table;
    if (!d.is_infinite())
        table = std::make_unique<RadialKernelTable>(cfg.activation, model.delta, d, cfg.dd.r_max, cfg.dd.cells, ctx.threads);
    DdOptions opt;
    opt.schedule = cfg.sgd.schedule;
    opt.lambda = cfg.dd.lambda;
    opt.record_times = record_times;
    opt.record_times.insert(opt.record_times.end(), cfg.dd.record_times.begin(), cfg.dd.record_times.end());
    opt.record_stride = std::max<std::size_t>(1, cfg.dd.grid_points / 100);
    opt.table = table.get();
    opt.threads = ctx.threads;
    const double t_min = cfg.dd.t_min.value_or(default_t_min);
    const double t_max = cfg.dd.t_max.value_or(default_t_max);
    if (!(t_max > t_min)) throw ConfigError("dd.t_max", "must exceed dd.t_min");
    return {dd_integrate(cfg.activation, model.delta, d, atoms0, log_time_grid(t_min, t_max, cfg.dd.grid_points), opt), t_max};
}

void write_dd(Context& ctx, CsvWriter& traj_out, CsvWriter& atoms_out, double kappa, double delta, const DdTrajectory& traj) {
    const ReducedSpace space = traj.snapshots.front().space();
    const int dim = space_dim(space);
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        const AtomEnsemble& a = traj.snapshots[k];
        std::vector<CsvWriter::Cell> row = {kappa, delta, traj.times[k], traj.risk[k]};
        for (int c = 0; c < dim; ++c) row.emplace_back(a.mean(c));
        traj_out.row(row);
        if (ctx.cfg.dd.format == "long") {
            snapshot_rows(atoms_out, kappa, delta, traj.times[k], a);
        } else {
            std::vector<CsvWriter::Cell> wide = {kappa, delta, traj.times[k], traj.risk[k]};
            for (int c = 0; c < dim; ++c)
                for (double x : a.coordinate(c)) wide.emplace_back(x);
            atoms_out.row(wide);
        }
    }
}

std::vector<std::string> dd_trajectory_header(ReducedSpace space) {
    return concat({"init_scale", "delta", "t", "risk"}, prefixed("mean_", coordinate_names(space)));
}

std::vector<std::string> dd_atoms_header(const ExperimentConfig& cfg, ReducedSpace space) {
    if (cfg.dd.format == "long") return snapshot_header(space);
    std::vector<std::string> h = {"init_scale", "delta", "t", "risk"};
    for (const auto& c : coordinate_names(space))
        for (std::size_t j = 0; j < cfg.dd.atoms; ++j) h.push_back(c + "_" + std::to_string(j));
    return h;
}

// SGD and reduced dynamics side by side, for the figure experiments.
void run_sgd_vs_dd(Context& ctx, const DataModel& model, CsvWriter& sgd_out, CsvWriter* snap_out, CsvWriter& dd_out,
                   CsvWriter& atoms_out, CsvWriter& cmp_out, json& result) {
    const ExperimentConfig& cfg = ctx.cfg;
    const SgdConfig scfg = sgd_config(cfg, ctx.threads);
    for (double kappa : cfg.sgd.init_scales) {
        const SgdResult run = sgd_run(model, cfg.activation, scfg, initial_weights(cfg, model, kappa));
        sgd_rows(sgd_out, kappa, model, run.trajectory);
        if (snap_out)
            for (const SgdSummary& s : run.trajectory) snapshot_rows(*snap_out, kappa, model.delta, s.t, s.radial);

        std::vector<double> times;
        for (const SgdSummary& s : run.trajectory) times.push_back(s.t);
        const double t_first = iteration_to_time(cfg.sgd.schedule, cfg.sgd.epsilon, 1);
        const double t_last = iteration_to_time(cfg.sgd.schedule, cfg.sgd.epsilon, std::max<std::uint64_t>(cfg.sgd.steps, 2));
        const DdRun dd = run_dd(ctx, model, initial_atoms(cfg, model, kappa), times, t_first, t_last);
        write_dd(ctx, dd_out, atoms_out, kappa, model.delta, dd.trajectory);

        const int dim = dd.trajectory.snapshots.front().dim();
        json rows = json::array();
        for (const SgdSummary& s : run.trajectory) {
            const std::size_t k = dd.trajectory.index_near(s.t);
            const AtomEnsemble& a = dd.trajectory.snapshots[k];
            std::vector<CsvWriter::Cell> row = {kappa, model.delta, static_cast<unsigned long long>(s.iteration), s.t,
                                                dd.trajectory.times[k], summary_risk(s), dd.trajectory.risk[k]};
            for (int c = 0; c < dim; ++c)
                row.emplace_back(wasserstein1_weighted(s.radial.coordinate(c), coordinate_weights(s.radial), a.coordinate(c),
                                                       coordinate_weights(a)));
            for (int c = 0; c < dim; ++c) row.emplace_back(s.radial.mean(c));
            for (int c = 0; c < dim; ++c) row.emplace_back(a.mean(c));
            cmp_out.row(row);
        }
        const SgdSummary& last = run.trajectory.back();
        result.push_back({{"init_scale", kappa},
                          {"delta", model.delta},
                          {"final_iteration", last.iteration},
                          {"final_risk_sgd", summary_risk(last)},
                          {"final_error_rate", last.error_rate},
                          {"final_mean_norm", last.mean_norm},
                          {"final_risk_dd", dd.trajectory.risk.back()}});
    }
}

std::vector<std::string> comparison_header(ReducedSpace space) {
    const auto names = coordinate_names(space);
    return concat(concat(concat({"init_scale", "delta", "iteration", "t", "t_dd", "risk_sgd", "risk_dd"}, prefixed("w1_", names)),
                         prefixed("sgd_mean_", names)),
                  prefixed("dd_mean_", names));
}

void run_figure_dynamics(Context& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const ReducedSpace space = reduced_space(cfg);
    CsvWriter sgd_out = ctx.csv("sgd_trajectory.csv", sgd_header());
    std::optional<CsvWriter> snap_out;
    if (cfg.sgd.dump_radial) snap_out.emplace(ctx.csv("sgd_snapshots.csv", snapshot_header(space)));
    CsvWriter dd_out = ctx.csv("dd_trajectory.csv", dd_trajectory_header(space));
    CsvWriter atoms_out = ctx.csv("dd_atoms.csv", dd_atoms_header(cfg, space));
    CsvWriter cmp_out = ctx.csv("comparison.csv", comparison_header(space));
    json runs = json::array();
    for (double delta : cfg.deltas) {
        DataModel model = cfg.model;
        model.delta = delta;
        run_sgd_vs_dd(ctx, model, sgd_out, snap_out ? &*snap_out : nullptr, dd_out, atoms_out, cmp_out, runs);
    }
    ctx.results["runs"] = runs;
    if (cfg.experiment == "figure4") {
        ctx.results["origin_instability_criterion"] = origin_instability_criterion(cfg.activation, cfg.model.delta, 0.25);
        ctx.results["origin_instability_criterion_default_sigmoid"] =
            origin_instability_criterion(Activation::default_sigmoid(), cfg.model.delta, 0.25);
    }
}

void run_sgd_experiment(Context& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const SgdConfig scfg = sgd_config(cfg, ctx.threads);
    CsvWriter out = ctx.csv("sgd_trajectory.csv", sgd_header());
    std::optional<CsvWriter> snap;
    if (cfg.sgd.dump_radial)
        snap.emplace(ctx.csv("sgd_snapshots.csv", snapshot_header(initial_weights(cfg, cfg.model, 1.0).summarize(cfg.model.s0).space())));
    json runs = json::array();
    for (double kappa : cfg.sgd.init_scales) {
        const SgdResult run = sgd_run(cfg.model, cfg.activation, scfg, initial_weights(cfg, cfg.model, kappa));
        sgd_rows(out, kappa, cfg.model, run.trajectory);
        if (snap)
            for (const SgdSummary& s : run.trajectory) snapshot_rows(*snap, kappa, cfg.model.delta, s.t, s.radial);
        const SgdSummary& last = run.trajectory.back();
        runs.push_back({{"init_scale", kappa},
                        {"final_iteration", last.iteration},
                        {"final_t", last.t},
                        {"final_risk", summary_risk(last)},
                        {"final_error_rate", last.error_rate},
                        {"final_mean_norm", last.mean_norm}});
    }
    ctx.results["runs"] = runs;
}

void run_dd_experiment(Context& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const ReducedSpace space = reduced_space(cfg);
    CsvWriter dd_out = ctx.csv("dd_trajectory.csv", dd_trajectory_header(space));
    CsvWriter atoms_out = ctx.csv("dd_atoms.csv", dd_atoms_header(cfg, space));
    json runs = json::array();
    for (double kappa : cfg.sgd.init_scales) {
        const AtomEnsemble atoms0 = initial_atoms(cfg, cfg.model, kappa);
        const DdRun dd = run_dd(ctx, cfg.model, atoms0, {}, *cfg.dd.t_max * 1e-6, *cfg.dd.t_max);
        write_dd(ctx, dd_out, atoms_out, kappa, cfg.model.delta, dd.trajectory);
        const AtomEnsemble& last = dd.trajectory.snapshots.back();
        runs.push_back({{"init_scale", kappa},
                        {"final_t", dd.trajectory.times.back()},
                        {"final_risk", dd.trajectory.risk.back()},
                        {"fixed_point_residual", fixed_point_residual(cfg.activation, cfg.model.delta, dd_dim(cfg), last)}});
    }
    ctx.results["runs"] = runs;
}

void run_langevin_experiment(Context& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const double beta = cfg.dd.beta, lambda = cfg.dd.lambda, delta = cfg.model.delta;
    CsvWriter traj_out = ctx.csv("langevin_trajectory.csv", {"init_scale", "t", "risk", "free_risk", "mean_r"});
    CsvWriter final_out = ctx.csv("langevin_final.csv", {"init_scale", "atom", "r"});
    CsvWriter dens_out = ctx.csv("boltzmann_density.csv", {"init_scale", "r", "potential"});
    json runs = json::array();
    for (double kappa : cfg.sgd.init_scales) {
        const AtomEnsemble atoms0 = initial_atoms(cfg, cfg.model, kappa);
        const double t_max = *cfg.dd.t_max;
        std::vector<double> grid(cfg.dd.grid_points + 1);
        for (std::size_t k = 0; k < grid.size(); ++k)
            grid[k] = t_max * static_cast<double>(k) / static_cast<double>(cfg.dd.grid_points);
        LangevinOptions opt;
        opt.schedule = cfg.sgd.schedule;
        opt.record_times = cfg.dd.record_times;
        opt.record_stride = std::max<std::size_t>(1, cfg.dd.grid_points / 100);
        opt.seed = cfg.seed;
        opt.threads = ctx.threads;
        const DdTrajectory traj = langevin_mf_1d(cfg.activation, delta, beta, lambda, atoms0, grid, opt);
        for (std::size_t k = 0; k < traj.times.size(); ++k)
            traj_out.row({kappa, traj.times[k], traj.risk[k], free_risk(cfg.activation, delta, lambda, traj.snapshots[k]),
                          traj.snapshots[k].mean(0)});
        const AtomEnsemble& last = traj.snapshots.back();
        const std::vector<double> r = last.coordinate(0);
        for (std::size_t i = 0; i < r.size(); ++i) final_out.row({kappa, static_cast<unsigned long long>(i), r[i]});
        const double r_top = 1.5 * *std::max_element(r.begin(), r.end());
        for (int k = 0; k <= 200; ++k) {
            const double x = r_top * k / 200.0;
            const double p = psi_value(cfg.activation, delta, Dim::infinity(), std::span<const double>(&x, 1), last);
            dens_out.row({kappa, x, p + 0.5 * lambda * x * x});
        }
        runs.push_back({{"init_scale", kappa},
                        {"boltzmann_residual", boltzmann_residual(r, cfg.activation, delta, beta, lambda)},
                        {"free_risk_start", free_risk(cfg.activation, delta, lambda, traj.snapshots.front())},
                        {"free_risk_end", free_risk(cfg.activation, delta, lambda, last)},
                        {"risk_end", traj.risk.back()}});
    }
    ctx.results["runs"] = runs;
}

struct StaticsRow {
    double risk_qp;
    double risk_single;
    double r_star;
    bool point_mass_optimal;
    QpResult qp;
    KernelGrid kernel;
};

StaticsRow statics_row(const ExperimentConfig& cfg, double delta, Dim d, int threads) {
    const auto grid = linear_grid(cfg.statics.grid_lo, cfg.statics.grid_hi, cfg.statics.grid_k);
    KernelGrid kernel = build_kernel_grid(cfg.activation, delta, d, grid, threads);
    QpResult qp = solve_simplex_qp(kernel, cfg.statics.qp_tol);
    const SingleDelta sd = minimize_single_delta(cfg.activation, delta, d, grid, &kernel);
    const bool pass = check_point_mass_optimality(cfg.activation, delta, d, sd.r_star,
                                                  linear_grid(cfg.statics.check_lo, cfg.statics.check_hi, cfg.statics.check_k),
                                                  1e-8, threads);
    const double risk_qp = qp.risk;
    return {risk_qp, sd.risk, sd.r_star, pass, std::move(qp), std::move(kernel)};
}

std::string number_tag(double x) {
    std::string s = CsvWriter::format(x);
    std::replace(s.begin(), s.end(), '.', 'p');
    return s;
}

void run_statics_experiment(Context& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    CsvWriter out = ctx.csv("statics.csv", {"d", "delta", "risk_qp", "risk_single", "r_star", "point_mass_optimal", "qp_gap",
                                            "qp_iterations", "qp_converged", "u_min_eigenvalue", "u_max_asymmetry"});
    CsvWriter weights = ctx.csv("qp_weights.csv", {"d", "delta", "r", "p"});
    for (Dim d : cfg.dims)
        for (double delta : cfg.deltas) {
            const StaticsRow row = statics_row(cfg, delta, d, ctx.threads);
            out.row({d.str(), delta, row.risk_qp, row.risk_single, row.r_star, row.point_mass_optimal, row.qp.gap,
                     static_cast<unsigned long long>(row.qp.iterations), row.qp.converged, row.kernel.min_eigenvalue(),
                     row.kernel.max_asymmetry()});
            for (std::size_t i = 0; i < row.kernel.size(); ++i) weights.row({d.str(), delta, row.kernel.grid[i], row.qp.p[i]});
            if (cfg.statics.write_kernels) {
                const std::string name = "kernel_d" + d.str() + "_delta" + number_tag(delta) + ".csv";
                ctx.artifacts.push_back(name);
                row.kernel.write_csv((ctx.dir / name).string());
            }
        }
}

void run_thresholds_experiment(Context& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const StaticsSection& s = cfg.statics;
    const auto delta_grid = linear_grid(s.scan_lo, s.scan_hi, s.scan_k);
    const auto r_grid = linear_grid(s.check_lo, s.check_hi, s.check_k);
    const auto single_grid = linear_grid(s.grid_lo, s.grid_hi, s.grid_k);
    CsvWriter rows = ctx.csv("threshold_rows.csv", {"d", "delta", "r_star", "risk_single", "passes"});
    CsvWriter table = ctx.csv("thresholds.csv", {"d", "delta_low", "delta_high", "contiguous"});
    json res = json::array();
    for (Dim d : cfg.dims) {
        const ThresholdScan scan = delta_threshold_scan(cfg.activation, d, delta_grid, r_grid, single_grid, ctx.threads);
        for (const ThresholdRow& r : scan.rows) rows.row({d.str(), r.delta, r.r_star, r.risk_single, r.passes});
        const std::string low = scan.delta_low ? CsvWriter::format(*scan.delta_low) : "none";
        const std::string high = scan.delta_high ? CsvWriter::format(*scan.delta_high) : "none";
        table.row({d.str(), low, high, scan.contiguous});
        res.push_back({{"d", d.str()}, {"delta_low", low}, {"delta_high", high}});
    }
    ctx.results["thresholds"] = res;
    ctx.results["delta_infty"] = delta_infty(cfg.activation);
}

void run_chaos_experiment(Context& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const RadialKernelTable table(cfg.activation, cfg.model.delta, cfg.model.d, cfg.chaos.r_max, cfg.chaos.cells, ctx.threads);
    SgdConfig base = sgd_config(cfg, 1);
    ChaosOptions opt;
    opt.init_sd = cfg.sgd.init_scales.front() / std::sqrt(static_cast<double>(cfg.model.d.value()));
    opt.reference_atoms = cfg.chaos.reference_atoms;
    opt.table = &table;
    opt.threads = ctx.threads;
    const ChaosReport rep =
        chaos_sweep(cfg.model, cfg.activation, base, cfg.chaos.n_list, cfg.chaos.eps_list, cfg.chaos.t_final, opt);
    CsvWriter out = ctx.csv("chaos.csv", {"n", "epsilon", "t", "max_risk_gap", "w1_gap", "error"});
    for (const ChaosRow& r : rep.rows) out.row({r.n, r.epsilon, r.t, r.max_risk_gap, r.w1_gap, r.error});
    CsvWriter summary = ctx.csv("chaos_summary.csv", {"slope", "reference_self_gap"});
    summary.row({rep.slope, rep.reference_self_gap});
    ctx.results["slope"] = rep.slope;
    ctx.results["reference_self_gap"] = rep.reference_self_gap;
}

void run_figure2(Context& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    CsvWriter out = ctx.csv("figure2.csv", {"d", "delta", "risk_qp", "risk_single", "r_star", "point_mass_optimal", "risk_sgd",
                                            "risk_sgd_se", "error_rate_sgd"});
    CsvWriter weights = ctx.csv("qp_weights.csv", {"d", "delta", "r", "p"});
    const SgdConfig scfg = sgd_config(cfg, ctx.threads);
    for (Dim d : cfg.dims)
        for (double delta : cfg.deltas) {
            const StaticsRow row = statics_row(cfg, delta, d, ctx.threads);
            for (std::size_t i = 0; i < row.kernel.size(); ++i) weights.row({d.str(), delta, row.kernel.grid[i], row.qp.p[i]});
            double risk = std::numeric_limits<double>::quiet_NaN(), se = risk, err = risk;
            if (cfg.sgd.steps > 0) {
                DataModel model = cfg.model;
                model.delta = delta;
                model.d = d;
                const SgdResult run = sgd_run(model, cfg.activation, scfg, initial_weights(cfg, model, cfg.sgd.init_scales.front()));
                risk = run.trajectory.back().risk_mc;
                se = run.trajectory.back().mc_se;
                err = run.trajectory.back().error_rate;
            }
            out.row({d.str(), delta, row.risk_qp, row.risk_single, row.r_star, row.point_mass_optimal, risk, se, err});
        }
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json versions() {
    return {{"meanfield2nn", version()},
            {"compiler", __VERSION__},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"boost", BOOST_LIB_VERSION},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                                  "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

} // namespace

void run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
    const fs::path dir = options.output_dir.value_or(cfg.output_dir);
    const int threads = options.threads > 0 ? options.threads : default_threads();
    fs::create_directories(dir);
    Context ctx(cfg, dir, threads);
    const std::string started = utc_timestamp();
    const auto t0 = std::chrono::steady_clock::now();

    auto write_manifest = [&](const std::string& status, const std::string& error) {
        json m;
        m["experiment"] = cfg.experiment;
        m["seed"] = cfg.seed;
        m["status"] = status;
        if (!error.empty()) m["error"] = error;
        m["config"] = cfg.source;
        m["versions"] = versions();
        m["threads"] = threads;
        m["started_utc"] = started;
        m["wall_time_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        m["artifacts"] = ctx.artifacts;
        m["results"] = ctx.results;
        std::ofstream out(dir / "manifest.json", std::ios::binary);
        out << m.dump(2) << '\n';
    };

    try {
        const std::string& e = cfg.experiment;
        if (e == "sgd") run_sgd_experiment(ctx);
        else if (e == "dd") run_dd_experiment(ctx);
        else if (e == "langevin") run_langevin_experiment(ctx);
        else if (e == "statics") run_statics_experiment(ctx);
        else if (e == "thresholds") run_thresholds_experiment(ctx);
        else if (e == "chaos") run_chaos_experiment(ctx);
        else if (e == "figure2") run_figure2(ctx);
        else run_figure_dynamics(ctx);
    } catch (const DivergenceError& err) {
        write_manifest("diverged", err.what());
        throw;
    } catch (const std::exception& err) {
        write_manifest("failed", err.what());
        throw;
    }
    write_manifest("ok", "");
}

} // namespace mf
