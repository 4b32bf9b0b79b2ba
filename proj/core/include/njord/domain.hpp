/**
 * @file domain.hpp
 * @brief Ocean data model: masked grid, channel registry, state/forcing
 *        sequences, standardization, and the NJD dataset container.
 */
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "njord/sphere.hpp"

namespace njord::domain {

struct ChannelSpec {
    std::string name;       // unique, e.g. "thetao_47m"
    std::string variable;   // grouping key, e.g. "thetao"
    bool surface = true;
    double depth_m = 0.0;   // meaningful when !surface
    std::optional<double> lower;
    std::optional<double> upper;
    bool is_density = false;
    // Standardization and one-step-difference statistics, physical units,
    // computed over the training split.
    double mean = 0.0;
    double stdev = 1.0;
    double diff_std = 1.0;
};

class ChannelRegistry {
public:
    /// Throws on duplicate names, inverted bounds, or a second density channel.
    void add(ChannelSpec spec);

    int size() const { return static_cast<int>(entries_.size()); }
    const ChannelSpec& operator[](int i) const { return entries_[i]; }
    ChannelSpec& mut(int i) { return entries_[i]; }

    int index_of(const std::string& name) const;  // -1 when missing
    int density_index() const;                    // -1 when absent

    /// Distinct variable names in first-appearance order.
    std::vector<std::string> variables() const;
    std::vector<int> channels_of(const std::string& variable) const;

    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

private:
    std::vector<ChannelSpec> entries_;
};

struct GridSpec {
    double lat0 = 0.0;  // cell-center latitude of row 0 (southernmost)
    double lon0 = 0.0;  // cell-center longitude of column 0
    double dlat = 0.25;
    double dlon = 0.25;
    int nlat = 0;
    int nlon = 0;
    std::vector<uint8_t> sea_mask;  // nlat*nlon row-major, 1 = sea
    bool regional = false;          // attach tangent-plane projected coordinates
};

/// Masked geodesic grid. Immutable after construction.
struct OceanGrid {
    std::vector<sphere::GeoPoint> points;  // sea points only
    std::vector<sphere::UnitVec3> cart;
    std::vector<double> area_weight;  // proportional to cos(lat), unit mean
    std::vector<sphere::GeoPoint> land_points;
    std::vector<sphere::UnitVec3> land_cart;
    /// Named per-point fields (depth, coast_dist, sin/cos lon/lat, mdt, ...).
    std::map<std::string, std::vector<double>> static_fields;

    bool regional = false;
    sphere::GeoPoint proj_center{};
    std::vector<double> x_m, y_m;            // projected sea coords (regional)
    std::vector<double> land_x_m, land_y_m;  // projected land coords (regional)

    int n() const { return static_cast<int>(points.size()); }
    int n_static() const { return static_cast<int>(static_fields.size()); }
};

/// Extracts sea points, attaches cos-lat unit-mean area weights and the
/// geometric static fields (sin/cos of lon/lat, coast_dist). Throws when the
/// mask has no sea cell.
OceanGrid build_grid(const GridSpec& spec);

/// Minimum great-circle distance to any land point, in meters. With no land
/// points every entry is the open-ocean sentinel (the approximate domain
/// diameter, returned via `sentinel_out` when non-null).
std::vector<double> compute_coast_distance(const OceanGrid& grid,
                                           double* sentinel_out = nullptr);

/// Time-indexed values on the grid: [n_time x n_grid x channels], physical
/// units. Also used for forcing and boundary channels.
struct StateSequence {
    ChannelRegistry registry;
    int n_time = 0;
    int n_grid = 0;
    std::vector<double> values;

    int n_chan() const { return registry.size(); }
    void resize(int t, int n) {
        n_time = t;
        n_grid = n;
        values.assign(static_cast<size_t>(t) * n * registry.size(), 0.0);
    }
    double at(int t, int n, int c) const {
        return values[(static_cast<size_t>(t) * n_grid + n) * registry.size() + c];
    }
    double& at(int t, int n, int c) {
        return values[(static_cast<size_t>(t) * n_grid + n) * registry.size() + c];
    }
};

using ForcingSequence = StateSequence;

/// Boundary forcing at a coarser ring of nodes disjoint from the grid.
struct BoundarySequence {
    std::vector<sphere::GeoPoint> points;
    std::vector<sphere::UnitVec3> cart;
    std::vector<double> x_m, y_m;  // projected (regional)
    StateSequence data;            // n_grid = number of boundary nodes
};

/// Fills mean/stdev/diff_std of every channel from the first `train_len`
/// time slices. diff_std is the std of one-step time differences.
void compute_channel_stats(StateSequence& seq, int train_len);

/// (x - mean) / std per channel. Throws (naming the channel) on zero std.
void standardize_inplace(StateSequence& seq);
void unstandardize_inplace(StateSequence& seq);

/// Everything one run needs, serialized as a single NJD file.
struct Dataset {
    OceanGrid grid;
    StateSequence state;
    ForcingSequence forcing;
    std::optional<BoundarySequence> boundary;
    int train_len = 0;  // stats cover [0, train_len)
    uint64_t seed = 0;
    std::string config_echo;  // one-line config summary echoed to the header
};

void save_njd(const Dataset& ds, const std::string& path);
Dataset load_njd(const std::string& path);

/// Ensemble forecast written in NJD format with a member axis.
struct ForecastFile {
    ChannelRegistry registry;
    int n_members = 0;
    int n_lead = 0;
    int n_grid = 0;
    int init_time = 0;  // index of the initialization slice in the dataset
    uint64_t seed = 0;
    std::string config_hash;
    std::vector<double> values;  // [member][lead][grid][channel]

    double at(int m, int t, int n, int c) const {
        return values[((static_cast<size_t>(m) * n_lead + t) * n_grid + n) *
                          registry.size() +
                      c];
    }
    double& at(int m, int t, int n, int c) {
        return values[((static_cast<size_t>(m) * n_lead + t) * n_grid + n) *
                          registry.size() +
                      c];
    }
};

void save_forecast_njd(const ForecastFile& fc, const std::string& path);
ForecastFile load_forecast_njd(const std::string& path);

}  // namespace njord::domain
