#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "chancal/abc.hpp"
#include "chancal/propagation_graph.hpp"
#include "chancal/saleh_valenzuela.hpp"
#include "chancal/signal.hpp"

namespace chancal {

using Json = nlohmann::json;

// 17 significant digits, so the text parses back to the identical double.
std::string format_double(double v);
double parse_double(std::string_view text);

// Dataset files: `<path>` holds one realization per line as
// re_0,im_0,re_1,im_1,... and `<path>.meta.json` the grid and row count.
std::filesystem::path meta_path_for(const std::filesystem::path& data_path);
void write_dataset(const TransferFunctionDataset& ds, const std::filesystem::path& data_path, const Json& extra_meta = {});
TransferFunctionDataset read_dataset(const std::filesystem::path& data_path);

Json grid_to_json(const FrequencyGrid& grid);
FrequencyGrid grid_from_json(const Json& j);

// {"room_m": [x, y, z], "tx_m": [[x, y, z], ...], "rx_m": [...]}
// or {"preset": "conference_room", "elements_per_side": n, "spacing_m": d}.
Json geometry_to_json(const RoomGeometry& geometry);
RoomGeometry geometry_from_json(const Json& j);

struct RunConfig {
    std::string model = "sv"; // "sv" or "pg"
    PriorBox prior = PriorBox::saleh_valenzuela_default();
    PmcConfig pmc;
    FrequencyGrid grid = FrequencyGrid::measurement_default();
    std::optional<RoomGeometry> geometry; // pg only; conference room with 5 x 5 arrays when absent
    PgOptions pg;
    SvOptions sv;

    // simulate subcommand
    std::vector<double> theta;     // empty: prior midpoint
    std::size_t n_realizations = 625;
    std::size_t pg_calls = 0;      // > 0: pooled pg dataset of n_pairs rows from this many calls

    void validate() const;
};

RunConfig default_run_config(const std::string& model);

// Unknown keys are rejected. Missing keys keep the model defaults; the prior
// may override a subset of parameters by name: {"prior": {"g": [0, 1]}}.
RunConfig run_config_from_json(const Json& j, const std::optional<std::string>& model_override = {});
RunConfig load_run_config(const std::filesystem::path& path, const std::optional<std::string>& model_override = {});
Json run_config_to_json(const RunConfig& config);

std::unique_ptr<ChannelModel> make_model(const RunConfig& config);

struct PosteriorTable {
    std::vector<std::string> names; // parameter columns
    RealMatrix thetas;
    Eigen::VectorXd weights;
    Eigen::VectorXd mmd2;
};

void write_posterior_csv(const WeightedPopulation& pop, const std::vector<std::string>& names,
                         const std::filesystem::path& path);
PosteriorTable read_posterior_csv(const std::filesystem::path& path);

void write_json(const Json& j, const std::filesystem::path& path);
Json read_json(const std::filesystem::path& path);

} // namespace chancal
