#include "chancal/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <thread>

#include <CLI11.hpp>

#include "chancal/error.hpp"
#include "chancal/random.hpp"

namespace chancal {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kValidateStream = 4ull << 40;

std::vector<double> prior_midpoint(const PriorBox& prior)
{
    std::vector<double> mid(prior.size());
    for (std::size_t k = 0; k < mid.size(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        mid[k] = 0.5 * (prior.lower[kk] + prior.upper[kk]);
    }
    return mid;
}

void ensure_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw ValidationError("cannot create output directory '" + dir.string() + "'");
}

// Summary coordinate labels matching the SummaryVector layout.
std::vector<std::string> summary_labels(std::size_t i_moments)
{
    std::vector<std::string> out;
    for (std::size_t i = 0; i < i_moments; ++i)
        out.push_back("mean[" + std::to_string(i) + "]");
    for (std::size_t i = 0; i < i_moments; ++i)
        for (std::size_t j = i; j < i_moments; ++j)
            out.push_back("cov[" + std::to_string(i) + "," + std::to_string(j) + "]");
    return out;
}

Json vec_json(const Eigen::VectorXd& v)
{
    return std::vector<double>(v.data(), v.data() + v.size());
}

std::string sig2(double v, bool& exponent_form)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1e", v);
    const std::string s(buf);
    const auto epos = s.find('e');
    if (epos == std::string::npos) { // inf / nan
        exponent_form = false;
        return s;
    }
    const int e = std::stoi(s.substr(epos + 1));
    if (v == 0.0) {
        exponent_form = false;
        return "0";
    }
    if (e >= -3 && e < 3) {
        exponent_form = false;
        std::snprintf(buf, sizeof buf, "%.*f", std::max(0, 1 - e), v);
        return buf;
    }
    exponent_form = true;
    return s.substr(0, epos) + "e" + std::to_string(e);
}

} // namespace

std::size_t workers_from_env()
{
    const char* raw = std::getenv(kWorkersEnv);
    if (raw == nullptr || *raw == '\0')
        return std::max(1u, std::thread::hardware_concurrency());
    char* end = nullptr;
    const long v = std::strtol(raw, &end, 10);
    if (*end != '\0' || v < 1)
        throw ValidationError(std::string(kWorkersEnv) + " must be a positive integer, got '" + raw + "'");
    return static_cast<std::size_t>(v);
}

std::string format_estimate(double mean, double sd)
{
    bool unused = false;
    return sig2(mean, unused) + " (" + sig2(sd, unused) + ")";
}

std::vector<std::pair<double, double>> empirical_cdf(std::vector<double> values)
{
    std::sort(values.begin(), values.end());
    std::vector<std::pair<double, double>> out;
    out.reserve(values.size());
    const auto n = static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        out.emplace_back(values[i], static_cast<double>(i + 1) / n);
    return out;
}

double ks_distance(std::vector<double> a, std::vector<double> b)
{
    if (a.empty() || b.empty())
        throw ValidationError("KS distance needs two non-empty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const auto na = static_cast<double>(a.size());
    const auto nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x)
            ++i;
        while (j < b.size() && b[j] <= x)
            ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

SimulateReport cmd_simulate(const RunConfig& config, const fs::path& out, std::ostream& log)
{
    config.validate();
    SimulateReport report;
    report.seed = config.pmc.seed;
    report.theta = config.theta.empty() ? prior_midpoint(config.prior) : config.theta;
    if (!config.prior.contains(report.theta))
        log << "warning: theta lies outside the prior box\n";

    const auto model = make_model(config);
    std::optional<TransferFunctionDataset> ds;
    if (config.model == "pg" && config.pg_calls > 0) {
        const RoomGeometry geometry = config.geometry ? *config.geometry : RoomGeometry::conference_room();
        ds.emplace(simulate_pg_pooled(PropagationGraphParams::from_vector(report.theta), geometry, config.grid,
                                      config.pg_calls, config.pmc.seed, config.pg));
    } else {
        ds.emplace(model->simulate(report.theta, config.n_realizations, config.grid, config.pmc.seed));
    }
    report.rows = ds->n_obs();

    Json meta = {{"model", config.model}, {"seed", config.pmc.seed}, {"theta", report.theta},
                 {"parameters", model->parameter_names()}};
    if (config.model == "pg")
        meta["pg_calls"] = config.pg_calls;
    write_dataset(*ds, out, meta);
    return report;
}

PmcResult cmd_calibrate(const RunConfig& config, const fs::path& data, const fs::path& out_dir, std::ostream& log)
{
    config.validate();
    const TransferFunctionDataset observed = read_dataset(data);
    const auto model = make_model(config);
    ensure_dir(out_dir);

    write_json(run_config_to_json(config), out_dir / "config.json");

    const auto names = model->parameter_names();
    const auto start = std::chrono::steady_clock::now();
    const PmcResult result = run_pmc_abc(*model, observed, config.prior, config.pmc, [&](const WeightedPopulation& pop) {
        write_posterior_csv(pop, names, out_dir / ("posterior_t" + std::to_string(pop.iteration) + ".csv"));
        log << "iteration " << pop.iteration << ": accepted " << pop.thetas_adjusted.rows() << ", max mmd2 "
            << format_double(pop.mmd2.maxCoeff()) << '\n';
    });
    const double runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const auto& d = result.diagnostics;
    Json offending = Json::array();
    const auto labels = summary_labels(config.pmc.i_moments);
    for (std::size_t k = 0; k < d.misspecification.outside.size(); ++k)
        if (d.misspecification.outside[k])
            offending.push_back({{"index", k}, {"label", labels[k]}});
    Json sigma = Json::array(), s_used = Json::array();
    for (const auto& pop : result.populations)
        sigma.push_back({{"iteration", pop.iteration}, {"sigma_diag", vec_json(pop.sigma_diag)}});
    for (const auto& s : d.s_obs_used)
        s_used.push_back(vec_json(s.values));
    Json diag = {
        {"misspecified", d.misspecification.misspecified},
        {"offending_summaries", offending},
        {"lengthscale", d.lengthscale},
        {"s_obs", vec_json(d.s_obs.values)},
        {"s_obs_used", s_used},
        {"proposal_variances", sigma},
        {"iteration_seconds", d.iteration_seconds},
        {"runtime_seconds", runtime},
        {"warnings", d.warnings},
        {"seed", config.pmc.seed},
        {"data", fs::absolute(data).string()},
        {"workers", config.pmc.workers},
    };
    if (result.failure)
        diag["failure"] = {{"iteration", result.failure->iteration},
                           {"message", result.failure->message},
                           {"numerical", result.failure->numerical}};
    write_json(diag, out_dir / "diagnostics.json");

    if (!result.populations.empty()) {
        const auto& last = result.populations.back();
        const Eigen::VectorXd mean = posterior_mean(last);
        const Eigen::VectorXd sd = posterior_std(last);
        Json params = Json::object();
        for (std::size_t k = 0; k < names.size(); ++k) {
            const auto kk = static_cast<Eigen::Index>(k);
            params[names[k]] = {{"mean", mean[kk]}, {"std", sd[kk]}, {"estimate", format_estimate(mean[kk], sd[kk])}};
        }
        write_json({{"iteration", last.iteration}, {"parameters", params}}, out_dir / "estimate.json");
    }
    for (const auto& w : d.warnings)
        log << "warning: " << w << '\n';
    return result;
}

Mmd2Estimate cmd_mmd(const fs::path& a, const fs::path& b, std::size_t i_moments)
{
    const TransferFunctionDataset da = read_dataset(a);
    const TransferFunctionDataset db = read_dataset(b);
    if (!da.grid().compatible_with(db.grid()))
        throw ValidationError("datasets were sampled on different frequency grids");
    const LogMomentMatrix za = log_moment_matrix(da, i_moments);
    const LogMomentMatrix zb = log_moment_matrix(db, i_moments);
    return mmd2_unbiased(za.rows, zb.rows, median_heuristic(za.rows));
}

ValidateReport cmd_validate(const RunConfig& config, const fs::path& data, const fs::path& posterior,
                            const fs::path& out_dir, std::ostream& log)
{
    config.validate();
    const TransferFunctionDataset observed = read_dataset(data);
    const PosteriorTable table = read_posterior_csv(posterior);
    const auto model = make_model(config);
    if (table.names != model->parameter_names())
        throw ValidationError("posterior columns do not match the parameters of model '" + config.model + "'");
    ensure_dir(out_dir);

    ValidateReport report;
    const Eigen::VectorXd mean = table.thetas.colwise().mean().transpose();
    report.theta.assign(mean.data(), mean.data() + mean.size());
    const TransferFunctionDataset simulated =
        model->simulate(report.theta, observed.n_obs(), observed.grid(), derive_seed(config.pmc.seed, kValidateStream));

    {
        const Eigen::VectorXd a = apdp(observed);
        const Eigen::VectorXd b = apdp(simulated);
        std::ofstream f(out_dir / "apdp.csv");
        f << "delay_s,data_db,model_db\n";
        for (Eigen::Index k = 0; k < a.size(); ++k)
            f << format_double(observed.grid().delay_s(static_cast<std::size_t>(k))) << ','
              << format_double(10.0 * std::log10(a[k])) << ',' << format_double(10.0 * std::log10(b[k])) << '\n';
        if (!f)
            throw ValidationError("failed writing apdp.csv");
    }

    const auto sa = realization_stats(observed);
    const auto sb = realization_stats(simulated);
    auto column = [](const std::vector<ValidationStats>& s, auto field) {
        std::vector<double> out;
        out.reserve(s.size());
        for (const auto& v : s)
            out.push_back(field(v));
        return out;
    };
    auto write_cdf = [&](const std::string& name, const std::vector<double>& x, const std::vector<double>& y) {
        std::ofstream f(out_dir / ("cdf_" + name + ".csv"));
        f << "source,value,cdf\n";
        for (const auto& [v, c] : empirical_cdf(x))
            f << "data," << format_double(v) << ',' << format_double(c) << '\n';
        for (const auto& [v, c] : empirical_cdf(y))
            f << "model," << format_double(v) << ',' << format_double(c) << '\n';
        if (!f)
            throw ValidationError("failed writing cdf_" + name + ".csv");
        return ks_distance(x, y);
    };
    auto p0_db = [](const ValidationStats& s) { return 10.0 * std::log10(s.p0); };
    auto mean_delay = [](const ValidationStats& s) { return s.mean_delay_s; };
    auto rms = [](const ValidationStats& s) { return s.rms_delay_spread_s; };
    report.ks_p0 = write_cdf("p0_db", column(sa, p0_db), column(sb, p0_db));
    report.ks_mean_delay = write_cdf("mean_delay_s", column(sa, mean_delay), column(sb, mean_delay));
    report.ks_rms_delay_spread = write_cdf("rms_delay_spread_s", column(sa, rms), column(sb, rms));

    write_json({{"model", config.model},
                {"theta", report.theta},
                {"parameters", model->parameter_names()},
                {"seed", config.pmc.seed},
                {"n_realizations", observed.n_obs()},
                {"ks_p0", report.ks_p0},
                {"ks_mean_delay", report.ks_mean_delay},
                {"ks_rms_delay_spread", report.ks_rms_delay_spread}},
               out_dir / "validation.json");
    log << "KS distances: P0 " << report.ks_p0 << ", mean delay " << report.ks_mean_delay << ", rms delay spread "
        << report.ks_rms_delay_spread << '\n';
    return report;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Likelihood-free calibration of stochastic radio channel models"};
    app.require_subcommand(1);

    std::string config_path, model, out_path, posterior_path, theta_text;
    std::vector<std::string> data_paths;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> n_realizations, calls, i_moments;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
        sub->add_option("--model", model, "sv or pg (overrides the config)")->check(CLI::IsMember({"sv", "pg"}));
        sub->add_option("--seed", seed, "master seed (overrides the config)");
    };

    CLI::App* sim = app.add_subcommand("simulate", "simulate a dataset from the model");
    common(sim);
    sim->add_option("--out", out_path, "output dataset path")->required();
    sim->add_option("--theta", theta_text, "comma-separated parameter vector");
    sim->add_option("-n,--realizations", n_realizations, "number of realizations");
    sim->add_option("--calls", calls, "pg: pool one dataset of n_pairs rows from this many model calls");

    CLI::App* cal = app.add_subcommand("calibrate", "run PMC-ABC against a dataset");
    common(cal);
    cal->add_option("--data", data_paths, "observed dataset")->required()->expected(1);
    cal->add_option("--out", out_path, "output directory")->required();

    CLI::App* mmd = app.add_subcommand("mmd", "MMD^2 between two datasets");
    common(mmd);
    mmd->add_option("--data", data_paths, "two datasets; the lengthscale comes from the first")->required()->expected(2);
    mmd->add_option("--moments", i_moments, "number of temporal moments");

    CLI::App* val = app.add_subcommand("validate", "compare data with simulations at the posterior mean");
    common(val);
    val->add_option("--data", data_paths, "observed dataset")->required()->expected(1);
    val->add_option("--posterior", posterior_path, "posterior_t<k>.csv from calibrate")->required();
    val->add_option("--out", out_path, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        const std::optional<std::string> model_override = model.empty() ? std::nullopt : std::optional(model);
        RunConfig config = config_path.empty() ? default_run_config(model.empty() ? "sv" : model)
                                               : load_run_config(config_path, model_override);
        if (seed)
            config.pmc.seed = *seed;
        if (n_realizations)
            config.n_realizations = *n_realizations;
        if (calls)
            config.pg_calls = *calls;
        if (i_moments)
            config.pmc.i_moments = *i_moments;
        if (!theta_text.empty()) {
            config.theta.clear();
            std::string_view rest = theta_text;
            for (;;) {
                const auto pos = rest.find(',');
                config.theta.push_back(parse_double(rest.substr(0, pos)));
                if (pos == std::string_view::npos)
                    break;
                rest.remove_prefix(pos + 1);
            }
        }
        config.pmc.workers = workers_from_env();
        config.validate();

        if (sim->parsed()) {
            const SimulateReport r = cmd_simulate(config, out_path, err);
            out << "seed=" << r.seed << " rows=" << r.rows << " out=" << out_path << '\n';
        } else if (cal->parsed()) {
            const PmcResult r = cmd_calibrate(config, data_paths.front(), out_path, err);
            out << "seed=" << config.pmc.seed << " iterations=" << r.populations.size() << " out=" << out_path << '\n';
            if (r.failure) {
                err << "error in iteration " << r.failure->iteration << ": " << r.failure->message << '\n';
                return r.failure->numerical ? 3 : 2;
            }
        } else if (mmd->parsed()) {
            const Mmd2Estimate e = cmd_mmd(data_paths[0], data_paths[1], config.pmc.i_moments);
            out << "mmd2=" << format_double(e.value) << " lengthscale=" << format_double(e.lengthscale.value())
                << " n_a=" << e.n_x << " n_b=" << e.n_y << '\n';
        } else if (val->parsed()) {
            const ValidateReport r = cmd_validate(config, data_paths.front(), posterior_path, out_path, err);
            out << "ks_p0=" << format_double(r.ks_p0) << " ks_mean_delay=" << format_double(r.ks_mean_delay)
                << " ks_rms_delay_spread=" << format_double(r.ks_rms_delay_spread) << '\n';
        }
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

} // namespace chancal
