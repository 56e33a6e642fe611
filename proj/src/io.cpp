#include "chancal/io.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "chancal/error.hpp"

namespace chancal {

namespace fs = std::filesystem;

namespace {

constexpr int kDigits = 17;

std::ofstream open_out(const fs::path& path)
{
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw ValidationError("cannot open '" + path.string() + "' for writing");
    return f;
}

std::ifstream open_in(const fs::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw ValidationError("cannot open '" + path.string() + "' for reading");
    return f;
}

std::vector<std::string_view> split(std::string_view line, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos - start));
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return out;
}

std::string_view trim_cr(std::string_view s)
{
    if (!s.empty() && s.back() == '\r')
        s.remove_suffix(1);
    return s;
}

void reject_unknown_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where)
{
    if (!j.is_object())
        throw ValidationError(where + " must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!allowed.contains(key))
            throw ValidationError("unknown key '" + key + "' in " + where);
}

template <class T>
T get_as(const Json& j, const std::string& key, const std::string& where)
{
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(where + "." + key + ": " + e.what());
    }
}

std::size_t get_count(const Json& j, const std::string& key, const std::string& where)
{
    const Json& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw ValidationError(where + "." + key + " must be a non-negative integer");
    return v.get<std::size_t>();
}

Eigen::Vector3d vec3(const Json& j, const std::string& where)
{
    if (!j.is_array() || j.size() != 3)
        throw ValidationError(where + " must be a 3-element array");
    Eigen::Vector3d v;
    for (int i = 0; i < 3; ++i) {
        if (!j[static_cast<std::size_t>(i)].is_number())
            throw ValidationError(where + " must contain numbers");
        v[i] = j[static_cast<std::size_t>(i)].get<double>();
    }
    return v;
}

std::vector<Eigen::Vector3d> positions(const Json& j, const std::string& where)
{
    if (!j.is_array())
        throw ValidationError(where + " must be an array of 3-element arrays");
    std::vector<Eigen::Vector3d> out;
    for (const auto& e : j)
        out.push_back(vec3(e, where));
    return out;
}

Json vec3_json(const Eigen::Vector3d& v) { return Json::array({v[0], v[1], v[2]}); }

} // namespace

std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, kDigits);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view text)
{
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t'))
        text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t'))
        text.remove_suffix(1);
    if (!text.empty() && text.front() == '+')
        text.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
        throw ValidationError("not a number: '" + std::string(text) + "'");
    return v;
}

fs::path meta_path_for(const fs::path& data_path)
{
    return fs::path(data_path.string() + ".meta.json");
}

void write_dataset(const TransferFunctionDataset& ds, const fs::path& data_path, const Json& extra_meta)
{
    std::string line;
    {
        auto f = open_out(data_path);
        const auto& h = ds.samples();
        for (Eigen::Index r = 0; r < h.rows(); ++r) {
            line.clear();
            for (Eigen::Index c = 0; c < h.cols(); ++c) {
                if (c > 0)
                    line += ',';
                line += format_double(h(r, c).real());
                line += ',';
                line += format_double(h(r, c).imag());
            }
            line += '\n';
            f << line;
        }
        if (!f)
            throw ValidationError("failed writing '" + data_path.string() + "'");
    }

    Json meta = extra_meta.is_object() ? extra_meta : Json::object();
    meta["n_obs"] = ds.n_obs();
    meta["n_s"] = ds.grid().n_s();
    meta["bandwidth_hz"] = ds.grid().bandwidth_hz();
    meta["f_start_hz"] = ds.grid().f_start_hz();
    write_json(meta, meta_path_for(data_path));
}

TransferFunctionDataset read_dataset(const fs::path& data_path)
{
    const Json meta = read_json(meta_path_for(data_path));
    const std::string where = meta_path_for(data_path).string();
    for (const char* key : {"n_obs", "n_s", "bandwidth_hz", "f_start_hz"})
        if (!meta.contains(key))
            throw ValidationError(where + " lacks '" + key + "'");
    const std::size_t n_obs = get_count(meta, "n_obs", where);
    const FrequencyGrid grid = FrequencyGrid::make(get_count(meta, "n_s", where), get_as<double>(meta, "bandwidth_hz", where),
                                                   get_as<double>(meta, "f_start_hz", where));

    auto f = open_in(data_path);
    ComplexMatrix h(static_cast<Eigen::Index>(n_obs), static_cast<Eigen::Index>(grid.n_s()));
    std::string line;
    std::size_t row = 0;
    while (std::getline(f, line)) {
        const std::string_view sv = trim_cr(line);
        if (sv.empty())
            continue;
        if (row >= n_obs)
            throw ValidationError(data_path.string() + " has more rows than n_obs = " + std::to_string(n_obs));
        const auto fields = split(sv, ',');
        if (fields.size() != 2 * grid.n_s())
            throw ValidationError(data_path.string() + " row " + std::to_string(row) + " has " +
                                  std::to_string(fields.size()) + " columns, expected " + std::to_string(2 * grid.n_s()));
        for (std::size_t c = 0; c < grid.n_s(); ++c)
            h(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) =
                cdouble(parse_double(fields[2 * c]), parse_double(fields[2 * c + 1]));
        ++row;
    }
    if (row != n_obs)
        throw ValidationError(data_path.string() + " has " + std::to_string(row) + " rows, meta says " + std::to_string(n_obs));
    return TransferFunctionDataset(grid, std::move(h));
}

Json grid_to_json(const FrequencyGrid& grid)
{
    return {{"n_s", grid.n_s()}, {"bandwidth_hz", grid.bandwidth_hz()}, {"f_start_hz", grid.f_start_hz()}};
}

FrequencyGrid grid_from_json(const Json& j)
{
    reject_unknown_keys(j, {"n_s", "bandwidth_hz", "f_start_hz"}, "grid");
    const FrequencyGrid d = FrequencyGrid::measurement_default();
    return FrequencyGrid::make(j.contains("n_s") ? get_count(j, "n_s", "grid") : d.n_s(),
                               j.contains("bandwidth_hz") ? get_as<double>(j, "bandwidth_hz", "grid") : d.bandwidth_hz(),
                               j.contains("f_start_hz") ? get_as<double>(j, "f_start_hz", "grid") : d.f_start_hz());
}

Json geometry_to_json(const RoomGeometry& geometry)
{
    Json tx = Json::array(), rx = Json::array();
    for (const auto& p : geometry.tx_positions_m)
        tx.push_back(vec3_json(p));
    for (const auto& p : geometry.rx_positions_m)
        rx.push_back(vec3_json(p));
    return {{"room_m", vec3_json(geometry.dimensions_m)}, {"tx_m", tx}, {"rx_m", rx}};
}

RoomGeometry geometry_from_json(const Json& j)
{
    if (j.is_object() && j.contains("preset")) {
        reject_unknown_keys(j, {"preset", "elements_per_side", "spacing_m"}, "geometry");
        if (get_as<std::string>(j, "preset", "geometry") != "conference_room")
            throw ValidationError("unknown geometry preset; only 'conference_room' is available");
        const std::size_t n = j.contains("elements_per_side") ? get_count(j, "elements_per_side", "geometry") : 5;
        const double spacing = j.contains("spacing_m") ? get_as<double>(j, "spacing_m", "geometry") : 0.0;
        return RoomGeometry::conference_room(n, spacing);
    }
    reject_unknown_keys(j, {"room_m", "tx_m", "rx_m"}, "geometry");
    for (const char* key : {"room_m", "tx_m", "rx_m"})
        if (!j.contains(key))
            throw ValidationError(std::string("geometry lacks '") + key + "'");
    RoomGeometry g;
    g.dimensions_m = vec3(j.at("room_m"), "geometry.room_m");
    g.tx_positions_m = positions(j.at("tx_m"), "geometry.tx_m");
    g.rx_positions_m = positions(j.at("rx_m"), "geometry.rx_m");
    g.validate();
    return g;
}

void RunConfig::validate() const
{
    if (model != "sv" && model != "pg")
        throw ValidationError("model must be 'sv' or 'pg', got '" + model + "'");
    prior.validate();
    pmc.validate();
    const std::size_t p = model == "sv" ? 6 : 4;
    if (prior.size() != p)
        throw ValidationError("prior must have " + std::to_string(p) + " parameters for model '" + model + "'");
    if (!theta.empty() && theta.size() != p)
        throw ValidationError("theta must have " + std::to_string(p) + " entries for model '" + model + "'");
    if (n_realizations < 1)
        throw ValidationError("n_realizations must be at least 1");
    if (model == "pg") {
        if (!(grid.f_start_hz() > 0.0))
            throw ValidationError("the propagation graph model needs an absolute grid with f_start_hz > 0");
        if (geometry)
            geometry->validate();
        if (pg.pooled_calls < 1)
            throw ValidationError("pg.pooled_calls must be at least 1");
    }
}

RunConfig default_run_config(const std::string& model)
{
    RunConfig c;
    c.model = model;
    if (model == "pg")
        c.prior = PriorBox::propagation_graph_default();
    else if (model != "sv")
        throw ValidationError("model must be 'sv' or 'pg', got '" + model + "'");
    return c;
}

RunConfig run_config_from_json(const Json& j, const std::optional<std::string>& model_override)
{
    reject_unknown_keys(j, {"model", "prior", "pmc", "grid", "geometry", "pg", "sv", "seed", "theta", "n_realizations", "pg_calls"},
                        "config");
    std::string model = j.contains("model") ? get_as<std::string>(j, "model", "config") : "sv";
    if (model_override)
        model = *model_override;
    RunConfig c = default_run_config(model);

    if (j.contains("prior")) {
        const Json& pj = j.at("prior");
        if (!pj.is_object())
            throw ValidationError("config.prior must map parameter names to [lower, upper]");
        for (const auto& [name, bounds] : pj.items()) {
            const auto it = std::find(c.prior.names.begin(), c.prior.names.end(), name);
            if (it == c.prior.names.end())
                throw ValidationError("prior names unknown parameter '" + name + "' for model '" + model + "'");
            if (!bounds.is_array() || bounds.size() != 2 || !bounds[0].is_number() || !bounds[1].is_number())
                throw ValidationError("prior bounds for '" + name + "' must be [lower, upper]");
            const auto k = static_cast<Eigen::Index>(it - c.prior.names.begin());
            c.prior.lower[k] = bounds[0].get<double>();
            c.prior.upper[k] = bounds[1].get<double>();
        }
    }
    if (j.contains("pmc")) {
        const Json& pj = j.at("pmc");
        reject_unknown_keys(pj, {"m", "m_eps", "t_iterations", "n_sim", "i_moments", "regression"}, "pmc");
        if (pj.contains("m"))
            c.pmc.m = get_count(pj, "m", "pmc");
        if (pj.contains("m_eps"))
            c.pmc.m_eps = get_count(pj, "m_eps", "pmc");
        if (pj.contains("t_iterations"))
            c.pmc.t_iterations = get_count(pj, "t_iterations", "pmc");
        if (pj.contains("n_sim"))
            c.pmc.n_sim = get_count(pj, "n_sim", "pmc");
        if (pj.contains("i_moments"))
            c.pmc.i_moments = get_count(pj, "i_moments", "pmc");
        if (pj.contains("regression"))
            c.pmc.regression = get_as<bool>(pj, "regression", "pmc");
    }
    if (j.contains("seed"))
        c.pmc.seed = get_as<std::uint64_t>(j, "seed", "config");
    if (j.contains("grid"))
        c.grid = grid_from_json(j.at("grid"));
    if (j.contains("geometry"))
        c.geometry = geometry_from_json(j.at("geometry"));
    if (j.contains("pg")) {
        const Json& pj = j.at("pg");
        reject_unknown_keys(pj, {"direct_edges", "illumination_gain", "pooled_calls"}, "pg");
        if (pj.contains("direct_edges"))
            c.pg.direct_edges = get_as<bool>(pj, "direct_edges", "pg");
        if (pj.contains("illumination_gain"))
            c.pg.illumination_gain = get_as<double>(pj, "illumination_gain", "pg");
        if (pj.contains("pooled_calls"))
            c.pg.pooled_calls = get_count(pj, "pooled_calls", "pg");
    }
    if (j.contains("sv")) {
        const Json& sj = j.at("sv");
        reject_unknown_keys(sj, {"max_expected_paths"}, "sv");
        if (sj.contains("max_expected_paths"))
            c.sv.max_expected_paths = get_as<double>(sj, "max_expected_paths", "sv");
    }
    if (j.contains("theta")) {
        const Json& tj = j.at("theta");
        if (tj.is_array()) {
            c.theta = get_as<std::vector<double>>(j, "theta", "config");
        } else if (tj.is_object()) {
            c.theta.assign(c.prior.size(), std::numeric_limits<double>::quiet_NaN());
            for (const auto& [name, v] : tj.items()) {
                const auto it = std::find(c.prior.names.begin(), c.prior.names.end(), name);
                if (it == c.prior.names.end() || !v.is_number())
                    throw ValidationError("theta entry '" + name + "' is not a numeric parameter of model '" + model + "'");
                c.theta[static_cast<std::size_t>(it - c.prior.names.begin())] = v.get<double>();
            }
            for (std::size_t k = 0; k < c.theta.size(); ++k)
                if (std::isnan(c.theta[k]))
                    throw ValidationError("theta lacks parameter '" + c.prior.names[k] + "'");
        } else {
            throw ValidationError("config.theta must be an array or an object keyed by parameter name");
        }
    }
    if (j.contains("n_realizations"))
        c.n_realizations = get_count(j, "n_realizations", "config");
    if (j.contains("pg_calls"))
        c.pg_calls = get_count(j, "pg_calls", "config");
    c.validate();
    return c;
}

RunConfig load_run_config(const fs::path& path, const std::optional<std::string>& model_override)
{
    return run_config_from_json(read_json(path), model_override);
}

Json run_config_to_json(const RunConfig& c)
{
    Json prior = Json::object();
    for (std::size_t k = 0; k < c.prior.size(); ++k)
        prior[c.prior.names[k]] = {c.prior.lower[static_cast<Eigen::Index>(k)], c.prior.upper[static_cast<Eigen::Index>(k)]};
    Json j = {
        {"model", c.model},
        {"seed", c.pmc.seed},
        {"prior", prior},
        {"pmc",
         {{"m", c.pmc.m},
          {"m_eps", c.pmc.m_eps},
          {"t_iterations", c.pmc.t_iterations},
          {"n_sim", c.pmc.n_sim},
          {"i_moments", c.pmc.i_moments},
          {"regression", c.pmc.regression}}},
        {"grid", grid_to_json(c.grid)},
        {"n_realizations", c.n_realizations},
        {"pg_calls", c.pg_calls},
    };
    if (!c.theta.empty())
        j["theta"] = c.theta;
    if (c.model == "pg") {
        j["pg"] = {{"direct_edges", c.pg.direct_edges}, {"illumination_gain", c.pg.illumination_gain},
                   {"pooled_calls", c.pg.pooled_calls}};
        j["geometry"] = geometry_to_json(c.geometry ? *c.geometry : RoomGeometry::conference_room());
    } else {
        j["sv"] = {{"max_expected_paths", c.sv.max_expected_paths}};
    }
    return j;
}

std::unique_ptr<ChannelModel> make_model(const RunConfig& config)
{
    if (config.model == "sv")
        return std::make_unique<SalehValenzuelaModel>(config.sv);
    if (config.model == "pg")
        return std::make_unique<PropagationGraphModel>(config.geometry ? *config.geometry : RoomGeometry::conference_room(),
                                                       config.pg);
    throw ValidationError("model must be 'sv' or 'pg', got '" + config.model + "'");
}

void write_posterior_csv(const WeightedPopulation& pop, const std::vector<std::string>& names, const fs::path& path)
{
    if (static_cast<Eigen::Index>(names.size()) != pop.thetas_adjusted.cols())
        throw ValidationError("parameter name count does not match the population");
    auto f = open_out(path);
    for (const auto& n : names)
        f << n << ',';
    f << "weight,mmd2\n";
    for (Eigen::Index i = 0; i < pop.thetas_adjusted.rows(); ++i) {
        for (Eigen::Index k = 0; k < pop.thetas_adjusted.cols(); ++k)
            f << format_double(pop.thetas_adjusted(i, k)) << ',';
        f << format_double(pop.weights[i]) << ',' << format_double(pop.mmd2[i]) << '\n';
    }
    if (!f)
        throw ValidationError("failed writing '" + path.string() + "'");
}

PosteriorTable read_posterior_csv(const fs::path& path)
{
    auto f = open_in(path);
    std::string line;
    if (!std::getline(f, line))
        throw ValidationError(path.string() + " is empty");
    const auto header = split(trim_cr(line), ',');
    if (header.size() < 3 || header[header.size() - 2] != "weight" || header.back() != "mmd2")
        throw ValidationError(path.string() + " header must end with 'weight,mmd2'");
    PosteriorTable t;
    for (std::size_t k = 0; k + 2 < header.size(); ++k)
        t.names.emplace_back(header[k]);

    std::vector<std::vector<double>> rows;
    while (std::getline(f, line)) {
        const std::string_view sv = trim_cr(line);
        if (sv.empty())
            continue;
        const auto fields = split(sv, ',');
        if (fields.size() != header.size())
            throw ValidationError(path.string() + " has a row with " + std::to_string(fields.size()) + " columns, expected " +
                                  std::to_string(header.size()));
        std::vector<double> r;
        for (auto fld : fields)
            r.push_back(parse_double(fld));
        rows.push_back(std::move(r));
    }
    if (rows.empty())
        throw ValidationError(path.string() + " holds no samples");
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto p = static_cast<Eigen::Index>(t.names.size());
    t.thetas.resize(n, p);
    t.weights.resize(n);
    t.mmd2.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        for (Eigen::Index k = 0; k < p; ++k)
            t.thetas(i, k) = r[static_cast<std::size_t>(k)];
        t.weights[i] = r[static_cast<std::size_t>(p)];
        t.mmd2[i] = r[static_cast<std::size_t>(p + 1)];
    }
    return t;
}

void write_json(const Json& j, const fs::path& path)
{
    auto f = open_out(path);
    f << j.dump(2) << '\n';
    if (!f)
        throw ValidationError("failed writing '" + path.string() + "'");
}

Json read_json(const fs::path& path)
{
    auto f = open_in(path);
    try {
        return Json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

} // namespace chancal
