#include "njord/domain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace njord::domain {

void ChannelRegistry::add(ChannelSpec spec) {
    if (spec.name.empty()) throw std::invalid_argument("channel name empty");
    if (index_of(spec.name) >= 0) {
        throw std::invalid_argument("duplicate channel name: " + spec.name);
    }
    if (spec.lower && spec.upper && !(*spec.lower < *spec.upper)) {
        throw std::invalid_argument("channel " + spec.name + ": lower bound " +
                                    std::to_string(*spec.lower) + " >= upper bound " +
                                    std::to_string(*spec.upper));
    }
    if (spec.is_density && density_index() >= 0) {
        throw std::invalid_argument("second density channel: " + spec.name);
    }
    if (spec.variable.empty()) spec.variable = spec.name;
    entries_.push_back(std::move(spec));
}

int ChannelRegistry::index_of(const std::string& name) const {
    for (size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name == name) return static_cast<int>(i);
    }
    return -1;
}

int ChannelRegistry::density_index() const {
    for (size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].is_density) return static_cast<int>(i);
    }
    return -1;
}

std::vector<std::string> ChannelRegistry::variables() const {
    std::vector<std::string> out;
    for (const ChannelSpec& c : entries_) {
        if (std::find(out.begin(), out.end(), c.variable) == out.end()) {
            out.push_back(c.variable);
        }
    }
    return out;
}

std::vector<int> ChannelRegistry::channels_of(const std::string& variable) const {
    std::vector<int> out;
    for (size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].variable == variable) out.push_back(static_cast<int>(i));
    }
    return out;
}

OceanGrid build_grid(const GridSpec& spec) {
    if (spec.nlat <= 0 || spec.nlon <= 0) {
        throw std::invalid_argument("grid dimensions must be positive");
    }
    if (spec.sea_mask.size() != static_cast<size_t>(spec.nlat) * spec.nlon) {
        throw std::invalid_argument("sea mask size does not match grid dimensions");
    }
    OceanGrid grid;
    grid.regional = spec.regional;
    for (int j = 0; j < spec.nlat; ++j) {
        for (int i = 0; i < spec.nlon; ++i) {
            sphere::GeoPoint p{spec.lat0 + j * spec.dlat,
                               sphere::normalize_lon_deg(spec.lon0 + i * spec.dlon)};
            if (spec.sea_mask[static_cast<size_t>(j) * spec.nlon + i]) {
                grid.points.push_back(p);
            } else {
                grid.land_points.push_back(p);
            }
        }
    }
    if (grid.points.empty()) throw std::invalid_argument("sea mask has no sea cell");

    grid.cart.reserve(grid.points.size());
    for (const auto& p : grid.points) grid.cart.push_back(sphere::to_cartesian(p));
    grid.land_cart.reserve(grid.land_points.size());
    for (const auto& p : grid.land_points) {
        grid.land_cart.push_back(sphere::to_cartesian(p));
    }

    grid.area_weight = sphere::latitude_weights_unit_mean(grid.points);

    const int n = grid.n();
    std::vector<double> sin_lon(n), cos_lon(n), sin_lat(n), cos_lat(n);
    for (int i = 0; i < n; ++i) {
        const double lon = grid.points[i].lon_deg * M_PI / 180.0;
        const double lat = grid.points[i].lat_deg * M_PI / 180.0;
        sin_lon[i] = std::sin(lon);
        cos_lon[i] = std::cos(lon);
        sin_lat[i] = std::sin(lat);
        cos_lat[i] = std::cos(lat);
    }
    grid.static_fields["sin_lon"] = std::move(sin_lon);
    grid.static_fields["cos_lon"] = std::move(cos_lon);
    grid.static_fields["sin_lat"] = std::move(sin_lat);
    grid.static_fields["cos_lat"] = std::move(cos_lat);

    if (spec.regional) {
        double lat_sum = 0.0, lon_sum = 0.0;
        for (const auto& p : grid.points) {
            lat_sum += p.lat_deg;
            lon_sum += p.lon_deg;
        }
        grid.proj_center = {lat_sum / n, sphere::normalize_lon_deg(lon_sum / n)};
        sphere::TangentPlane tp(grid.proj_center);
        grid.x_m.resize(n);
        grid.y_m.resize(n);
        for (int i = 0; i < n; ++i) tp.project(grid.points[i], grid.x_m[i], grid.y_m[i]);
        grid.land_x_m.resize(grid.land_points.size());
        grid.land_y_m.resize(grid.land_points.size());
        for (size_t i = 0; i < grid.land_points.size(); ++i) {
            tp.project(grid.land_points[i], grid.land_x_m[i], grid.land_y_m[i]);
        }
        grid.static_fields["x_coord"] = grid.x_m;
        grid.static_fields["y_coord"] = grid.y_m;
    }

    grid.static_fields["coast_dist"] = compute_coast_distance(grid);
    return grid;
}

namespace {

/// Approximate diameter: two farthest-point sweeps over the sea points.
double domain_diameter_m(const OceanGrid& grid) {
    int far = 0;
    double best = 0.0;
    for (int i = 0; i < grid.n(); ++i) {
        const double d = sphere::great_circle_distance_m(grid.cart[0], grid.cart[i]);
        if (d > best) {
            best = d;
            far = i;
        }
    }
    double diameter = best;
    for (int i = 0; i < grid.n(); ++i) {
        diameter = std::max(
            diameter, sphere::great_circle_distance_m(grid.cart[far], grid.cart[i]));
    }
    return diameter;
}

}  // namespace

std::vector<double> compute_coast_distance(const OceanGrid& grid, double* sentinel_out) {
    std::vector<double> dist(grid.n());
    if (grid.land_points.empty()) {
        const double sentinel = domain_diameter_m(grid);
        if (sentinel_out) *sentinel_out = sentinel;
        std::fill(dist.begin(), dist.end(), sentinel);
        return dist;
    }
    if (sentinel_out) *sentinel_out = 0.0;
    // Exact brute force over land points; adequate below ~1e5 points.
    for (int i = 0; i < grid.n(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& lp : grid.land_cart) {
            best = std::min(best, sphere::great_circle_distance_m(grid.cart[i], lp));
        }
        dist[i] = best;
    }
    return dist;
}

void compute_channel_stats(StateSequence& seq, int train_len) {
    if (train_len < 1 || train_len > seq.n_time) {
        throw std::invalid_argument("train_len " + std::to_string(train_len) +
                                    " outside [1, " + std::to_string(seq.n_time) + "]");
    }
    const int C = seq.n_chan();
    for (int c = 0; c < C; ++c) {
        double sum = 0.0, sq = 0.0;
        const size_t count = static_cast<size_t>(train_len) * seq.n_grid;
        for (int t = 0; t < train_len; ++t) {
            for (int n = 0; n < seq.n_grid; ++n) {
                const double v = seq.at(t, n, c);
                sum += v;
                sq += v * v;
            }
        }
        const double mean = sum / count;
        const double var = std::max(0.0, sq / count - mean * mean);
        seq.registry.mut(c).mean = mean;
        seq.registry.mut(c).stdev = std::sqrt(var);

        if (train_len >= 2) {
            double dsum = 0.0, dsq = 0.0;
            const size_t dcount = static_cast<size_t>(train_len - 1) * seq.n_grid;
            for (int t = 1; t < train_len; ++t) {
                for (int n = 0; n < seq.n_grid; ++n) {
                    const double d = seq.at(t, n, c) - seq.at(t - 1, n, c);
                    dsum += d;
                    dsq += d * d;
                }
            }
            const double dmean = dsum / dcount;
            const double dvar = std::max(0.0, dsq / dcount - dmean * dmean);
            seq.registry.mut(c).diff_std = std::sqrt(dvar);
        } else {
            seq.registry.mut(c).diff_std = 0.0;
        }
    }
}

void standardize_inplace(StateSequence& seq) {
    for (int c = 0; c < seq.n_chan(); ++c) {
        const ChannelSpec& ch = seq.registry[c];
        if (!(ch.stdev > 0.0)) {
            throw std::invalid_argument("channel " + ch.name +
                                        " has non-positive std, cannot standardize");
        }
    }
    for (int t = 0; t < seq.n_time; ++t) {
        for (int n = 0; n < seq.n_grid; ++n) {
            for (int c = 0; c < seq.n_chan(); ++c) {
                const ChannelSpec& ch = seq.registry[c];
                seq.at(t, n, c) = (seq.at(t, n, c) - ch.mean) / ch.stdev;
            }
        }
    }
}

void unstandardize_inplace(StateSequence& seq) {
    for (int t = 0; t < seq.n_time; ++t) {
        for (int n = 0; n < seq.n_grid; ++n) {
            for (int c = 0; c < seq.n_chan(); ++c) {
                const ChannelSpec& ch = seq.registry[c];
                seq.at(t, n, c) = seq.at(t, n, c) * ch.stdev + ch.mean;
            }
        }
    }
}

}  // namespace njord::domain
