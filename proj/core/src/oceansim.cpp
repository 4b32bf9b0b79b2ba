#include "njord/oceansim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "njord/rng.hpp"

namespace njord::oceansim {

using diffcore::CounterRng;

namespace {

int idx(int j, int i, int nlon) { return j * nlon + i; }

std::vector<uint8_t> build_mask(const SynthConfig& cfg) {
    std::vector<uint8_t> sea(static_cast<size_t>(cfg.nlat) * cfg.nlon, 1);
    auto land_ellipse = [&](double cj, double ci, double rj, double ri) {
        for (int j = 0; j < cfg.nlat; ++j) {
            for (int i = 0; i < cfg.nlon; ++i) {
                const double dj = (j - cj) / rj;
                const double di = (i - ci) / ri;
                if (dj * dj + di * di <= 1.0) sea[idx(j, i, cfg.nlon)] = 0;
            }
        }
    };
    switch (cfg.mask) {
        case MaskPattern::kNone:
            break;
        case MaskPattern::kIslands:
            land_ellipse(0.30 * cfg.nlat, 0.25 * cfg.nlon, 0.12 * cfg.nlat,
                         0.10 * cfg.nlon);
            land_ellipse(0.65 * cfg.nlat, 0.60 * cfg.nlon, 0.10 * cfg.nlat,
                         0.14 * cfg.nlon);
            land_ellipse(0.20 * cfg.nlat, 0.80 * cfg.nlon, 0.08 * cfg.nlat,
                         0.07 * cfg.nlon);
            break;
        case MaskPattern::kStrait: {
            const int wall = cfg.nlat / 2;
            for (int i = 0; i < cfg.nlon; ++i) sea[idx(wall, i, cfg.nlon)] = 0;
            const int gap0 = cfg.nlon / 2 - std::max(1, cfg.nlon / 10);
            const int gap1 = cfg.nlon / 2 + std::max(1, cfg.nlon / 10);
            for (int i = gap0; i <= gap1 && i < cfg.nlon; ++i) {
                sea[idx(wall, i, cfg.nlon)] = 1;
            }
            break;
        }
    }
    return sea;
}

/// Chebyshev distance (in cells) to the nearest land cell or outer wall,
/// via two sweeps of a min-plus relaxation.
std::vector<double> wall_distance(const std::vector<uint8_t>& sea, int nlat, int nlon) {
    const double big = 1e9;
    std::vector<double> d(sea.size(), big);
    for (int j = 0; j < nlat; ++j) {
        for (int i = 0; i < nlon; ++i) {
            if (!sea[idx(j, i, nlon)]) {
                d[idx(j, i, nlon)] = 0.0;
            } else if (j == 0 || i == 0 || j == nlat - 1 || i == nlon - 1) {
                d[idx(j, i, nlon)] = 1.0;
            }
        }
    }
    auto relax = [&](int j, int i) {
        double best = d[idx(j, i, nlon)];
        for (int dj = -1; dj <= 1; ++dj) {
            for (int di = -1; di <= 1; ++di) {
                const int jj = j + dj, ii = i + di;
                if (jj < 0 || ii < 0 || jj >= nlat || ii >= nlon) continue;
                best = std::min(best, d[idx(jj, ii, nlon)] + 1.0);
            }
        }
        d[idx(j, i, nlon)] = best;
    };
    for (int j = 0; j < nlat; ++j) {
        for (int i = 0; i < nlon; ++i) relax(j, i);
    }
    for (int j = nlat - 1; j >= 0; --j) {
        for (int i = nlon - 1; i >= 0; --i) relax(j, i);
    }
    return d;
}

struct WindMode {
    double amp_u, amp_v;
    double ka, kb;  // spatial wave numbers
    double phase;
    double omega;
};

double bilinear(const std::vector<double>& f, int nlat, int nlon, double y, double x) {
    x = std::min(std::max(x, 0.0), static_cast<double>(nlon - 1));
    y = std::min(std::max(y, 0.0), static_cast<double>(nlat - 1));
    const int i0 = std::min(static_cast<int>(x), nlon - 2);
    const int j0 = std::min(static_cast<int>(y), nlat - 2);
    const double fx = x - i0, fy = y - j0;
    return f[idx(j0, i0, nlon)] * (1 - fx) * (1 - fy) +
           f[idx(j0, i0 + 1, nlon)] * fx * (1 - fy) +
           f[idx(j0 + 1, i0, nlon)] * (1 - fx) * fy +
           f[idx(j0 + 1, i0 + 1, nlon)] * fx * fy;
}

}  // namespace

void diffuse_step(std::vector<double>& field, const std::vector<uint8_t>& sea, int nlat,
                  int nlon, double kappa, const std::vector<double>& cell_area) {
    std::vector<double> next = field;
    for (int j = 0; j < nlat; ++j) {
        for (int i = 0; i < nlon; ++i) {
            if (!sea[idx(j, i, nlon)]) continue;
            const int c = idx(j, i, nlon);
            double acc = 0.0;
            const int dj[4] = {-1, 1, 0, 0};
            const int di[4] = {0, 0, -1, 1};
            for (int k = 0; k < 4; ++k) {
                const int jj = j + dj[k], ii = i + di[k];
                if (jj < 0 || ii < 0 || jj >= nlat || ii >= nlon) continue;
                const int nb = idx(jj, ii, nlon);
                if (!sea[nb]) continue;
                const double a_edge = 0.5 * (cell_area[c] + cell_area[nb]);
                acc += a_edge * (field[nb] - field[c]);
            }
            next[c] = field[c] + kappa * acc / cell_area[c];
        }
    }
    field = std::move(next);
}

void advect_step(std::vector<double>& field, const std::vector<double>& u,
                 const std::vector<double>& v, const std::vector<uint8_t>& sea,
                 int nlat, int nlon, const std::vector<double>& cell_area) {
    double before = 0.0, area = 0.0;
    for (size_t c = 0; c < field.size(); ++c) {
        if (!sea[c]) continue;
        before += field[c] * cell_area[c];
        area += cell_area[c];
    }
    std::vector<double> next = field;
    for (int j = 0; j < nlat; ++j) {
        for (int i = 0; i < nlon; ++i) {
            if (!sea[idx(j, i, nlon)]) continue;
            const double x = i - u[idx(j, i, nlon)];
            const double y = j - v[idx(j, i, nlon)];
            next[idx(j, i, nlon)] = bilinear(field, nlat, nlon, y, x);
        }
    }
    field = std::move(next);
    double after = 0.0;
    for (size_t c = 0; c < field.size(); ++c) {
        if (sea[c]) after += field[c] * cell_area[c];
    }
    if (area > 0.0) {
        const double fix = (before - after) / area;
        for (size_t c = 0; c < field.size(); ++c) {
            if (sea[c]) field[c] += fix;
        }
    }
}

std::string SynthConfig::echo() const {
    std::ostringstream ss;
    ss << nlat << "x" << nlon << " mask=" << static_cast<int>(mask)
       << " T=" << n_timesteps << " kappa=" << diffusivity << " wind=" << wind_speed
       << " rot=" << rotation_speed << " seed=" << seed
       << (regional ? " regional" : " global");
    return ss.str();
}

domain::Dataset generate_dataset(const SynthConfig& cfg) {
    if (cfg.nlat < 4 || cfg.nlon < 4) {
        throw std::invalid_argument("synthetic grid must be at least 4x4");
    }
    if (cfg.n_timesteps < 4) throw std::invalid_argument("need at least 4 timesteps");
    const double kappa_sub = cfg.diffusivity / std::max(1, cfg.n_substeps);
    if (kappa_sub > 0.24) {
        const int need = static_cast<int>(std::ceil(cfg.diffusivity / 0.24));
        throw std::invalid_argument(
            "diffusive step unstable (kappa/substep = " + std::to_string(kappa_sub) +
            " > 0.24); set n_substeps >= " + std::to_string(need));
    }

    const int nlat = cfg.nlat, nlon = cfg.nlon;
    const size_t cells = static_cast<size_t>(nlat) * nlon;
    std::vector<uint8_t> sea = build_mask(cfg);

    // Regional runs reserve an outer ring of sea cells as boundary nodes.
    std::vector<uint8_t> interior = sea;
    std::vector<int> ring_cells;
    if (cfg.regional) {
        for (int j = 0; j < nlat; ++j) {
            for (int i = 0; i < nlon; ++i) {
                const bool in_ring = j < cfg.boundary_margin || i < cfg.boundary_margin ||
                                     j >= nlat - cfg.boundary_margin ||
                                     i >= nlon - cfg.boundary_margin;
                if (in_ring && sea[idx(j, i, nlon)]) {
                    interior[idx(j, i, nlon)] = 0;
                    ring_cells.push_back(idx(j, i, nlon));
                }
            }
        }
    }

    domain::GridSpec gspec;
    gspec.lat0 = cfg.lat0;
    gspec.lon0 = cfg.lon0;
    gspec.dlat = cfg.dlat;
    gspec.dlon = cfg.dlon;
    gspec.nlat = nlat;
    gspec.nlon = nlon;
    gspec.regional = cfg.regional;
    gspec.sea_mask = interior;
    domain::Dataset ds;
    ds.grid = domain::build_grid(gspec);
    ds.seed = cfg.seed;
    ds.config_echo = cfg.echo();

    // Static ancillary fields: synthetic bathymetry and mean dynamic
    // topography, smooth and seed-deterministic.
    CounterRng srng(CounterRng::make_key(cfg.seed, 0x7374617469ULL));
    const double ph1 = srng.uniform(0, 2 * M_PI), ph2 = srng.uniform(0, 2 * M_PI);
    {
        std::vector<double> depth, mdt;
        for (int j = 0; j < nlat; ++j) {
            for (int i = 0; i < nlon; ++i) {
                if (!interior[idx(j, i, nlon)]) continue;
                const double sx = static_cast<double>(i) / nlon;
                const double sy = static_cast<double>(j) / nlat;
                depth.push_back(80.0 + 3800.0 * (0.5 + 0.5 * std::sin(2 * M_PI * sx + ph1) *
                                                           std::cos(2 * M_PI * sy + ph2)));
                mdt.push_back(0.4 * std::sin(2 * M_PI * sy + ph2) *
                              std::cos(4 * M_PI * sx + ph1));
            }
        }
        ds.grid.static_fields["depth"] = std::move(depth);
        ds.grid.static_fields["mdt"] = std::move(mdt);
    }

    // Per-cell geometry of the full rectangle.
    std::vector<double> cell_area(cells);
    for (int j = 0; j < nlat; ++j) {
        const double w = std::cos((cfg.lat0 + j * cfg.dlat) * M_PI / 180.0);
        for (int i = 0; i < nlon; ++i) cell_area[idx(j, i, nlon)] = std::max(w, 1e-6);
    }
    std::vector<double> taper = wall_distance(sea, nlat, nlon);
    for (double& t : taper) t = std::min(1.0, t / 2.0);

    // Seeded wind modes and smooth background patterns.
    CounterRng wrng(CounterRng::make_key(cfg.seed, 0x77696e64ULL));
    std::vector<WindMode> modes(cfg.n_wind_modes);
    for (WindMode& m : modes) {
        m.amp_u = wrng.uniform(0.4, 1.0);
        m.amp_v = wrng.uniform(0.4, 1.0);
        m.ka = 1 + wrng.uniform_int(3);
        m.kb = 1 + wrng.uniform_int(3);
        m.phase = wrng.uniform(0, 2 * M_PI);
        m.omega = 2 * M_PI / cfg.wind_period_days * wrng.uniform(0.5, 1.5);
    }
    const double pha = wrng.uniform(0, 2 * M_PI), phb = wrng.uniform(0, 2 * M_PI);
    std::vector<double> ssh_static(cells), ice_eq(cells);
    for (int j = 0; j < nlat; ++j) {
        for (int i = 0; i < nlon; ++i) {
            const double sx = static_cast<double>(i) / nlon;
            const double sy = static_cast<double>(j) / nlat;
            ssh_static[idx(j, i, nlon)] = std::sin(2 * M_PI * sx + pha) *
                                              std::cos(2 * M_PI * sy + phb) +
                                          0.5 * std::sin(4 * M_PI * sy + pha);
            // Ice prefers one side of the domain, like a poleward gradient.
            ice_eq[idx(j, i, nlon)] =
                1.6 * sy - 0.5 + 0.45 * std::sin(2 * M_PI * sx + phb) +
                0.25 * std::cos(4 * M_PI * sx * sy + pha);
        }
    }

    auto wind_field = [&](int t, bool ucomp) {
        std::vector<double> w(cells, 0.0);
        for (const WindMode& m : modes) {
            const double amp = ucomp ? m.amp_u : m.amp_v;
            for (int j = 0; j < nlat; ++j) {
                for (int i = 0; i < nlon; ++i) {
                    const double arg = 2 * M_PI * (m.ka * i / static_cast<double>(nlon) +
                                                   m.kb * j / static_cast<double>(nlat)) +
                                       m.phase + m.omega * t + (ucomp ? 0.0 : 1.3);
                    w[idx(j, i, nlon)] += amp * std::sin(arg);
                }
            }
        }
        return w;
    };

    // Channel registries.
    auto& sreg = ds.state.registry;
    sreg.add({"temp", "temp", true, 0, {}, {}, false, 0, 1, 1});
    sreg.add({"u", "u", true, 0, {}, {}, false, 0, 1, 1});
    sreg.add({"v", "v", true, 0, {}, {}, false, 0, 1, 1});
    sreg.add({"ssh", "ssh", true, 0, {}, {}, false, 0, 1, 1});
    sreg.add({"ice_conc", "ice_conc", true, 0, 0.0, 1.0, false, 0, 1, 1});
    sreg.add({"ice_thick", "ice_thick", true, 0, 0.0, {}, false, 0, 1, 1});
    sreg.add({"ice_density", "ice_density", true, 0, {}, {}, true, 0, 1, 1});
    auto& freg = ds.forcing.registry;
    freg.add({"wind_u", "wind_u", true, 0, {}, {}, false, 0, 1, 1});
    freg.add({"wind_v", "wind_v", true, 0, {}, {}, false, 0, 1, 1});
    freg.add({"heat", "heat", true, 0, {}, {}, false, 0, 1, 1});
    freg.add({"sin_t", "sin_t", true, 0, {}, {}, false, 0, 1, 1});
    freg.add({"cos_t", "cos_t", true, 0, {}, {}, false, 0, 1, 1});

    const int T = cfg.n_timesteps;
    ds.state.resize(T, ds.grid.n());
    ds.forcing.resize(T, ds.grid.n());

    std::optional<domain::BoundarySequence> boundary;
    std::vector<int> bnodes;
    if (cfg.regional) {
        boundary.emplace();
        for (size_t k = 0; k < ring_cells.size(); k += cfg.boundary_stride) {
            bnodes.push_back(ring_cells[k]);
            const int j = ring_cells[k] / nlon, i = ring_cells[k] % nlon;
            sphere::GeoPoint p{cfg.lat0 + j * cfg.dlat,
                               sphere::normalize_lon_deg(cfg.lon0 + i * cfg.dlon)};
            boundary->points.push_back(p);
            boundary->cart.push_back(sphere::to_cartesian(p));
        }
        auto& breg = boundary->data.registry;
        breg.add({"temp", "temp", true, 0, {}, {}, false, 0, 1, 1});
        breg.add({"u", "u", true, 0, {}, {}, false, 0, 1, 1});
        breg.add({"v", "v", true, 0, {}, {}, false, 0, 1, 1});
        breg.add({"ssh", "ssh", true, 0, {}, {}, false, 0, 1, 1});
        boundary->data.resize(T, static_cast<int>(bnodes.size()));
        sphere::TangentPlane tp(ds.grid.proj_center);
        boundary->x_m.resize(bnodes.size());
        boundary->y_m.resize(bnodes.size());
        for (size_t k = 0; k < bnodes.size(); ++k) {
            tp.project(boundary->points[k], boundary->x_m[k], boundary->y_m[k]);
        }
    }

    // Initial fields.
    CounterRng irng(CounterRng::make_key(cfg.seed, 0x696e6974ULL));
    const double phi1 = irng.uniform(0, 2 * M_PI), phi2 = irng.uniform(0, 2 * M_PI);
    std::vector<double> temp(cells), ice_a(cells);
    for (int j = 0; j < nlat; ++j) {
        for (int i = 0; i < nlon; ++i) {
            const double sx = static_cast<double>(i) / nlon;
            const double sy = static_cast<double>(j) / nlat;
            temp[idx(j, i, nlon)] =
                15.0 + cfg.temp_amplitude * (std::sin(2 * M_PI * sx + phi1) *
                                                 std::cos(2 * M_PI * sy + phi2) -
                                             0.8 * sy);
            ice_a[idx(j, i, nlon)] = ice_eq[idx(j, i, nlon)];
        }
    }
    // Ice threshold: the configured fraction of sea cells starts exactly at
    // zero concentration.
    double ice_q = 0.0;
    {
        std::vector<double> vals;
        for (size_t c = 0; c < cells; ++c) {
            if (sea[c]) vals.push_back(ice_a[c]);
        }
        std::sort(vals.begin(), vals.end());
        const size_t pos = std::min(
            vals.size() - 1,
            static_cast<size_t>(cfg.ice_zero_fraction * static_cast<double>(vals.size())));
        ice_q = vals[pos];
    }
    double ice_span = 1e-9;
    for (size_t c = 0; c < cells; ++c) {
        if (sea[c]) ice_span = std::max(ice_span, ice_a[c] - ice_q);
    }

    auto write_step = [&](int t, const std::vector<double>& u,
                          const std::vector<double>& v, const std::vector<double>& ssh,
                          const std::vector<double>& wu, const std::vector<double>& wv,
                          const std::vector<double>& heat, double sin_t, double cos_t) {
        int n = 0;
        for (int j = 0; j < nlat; ++j) {
            for (int i = 0; i < nlon; ++i) {
                const int c = idx(j, i, nlon);
                if (!interior[c]) continue;
                const double conc =
                    std::min(1.0, std::max(0.0, (ice_a[c] - ice_q) / ice_span));
                ds.state.at(t, n, 0) = temp[c];
                ds.state.at(t, n, 1) = u[c];
                ds.state.at(t, n, 2) = v[c];
                ds.state.at(t, n, 3) = ssh[c];
                ds.state.at(t, n, 4) = conc;
                ds.state.at(t, n, 5) = cfg.ice_thick_scale * conc * conc;
                ds.state.at(t, n, 6) = conc > 0.0 ? 1.0 : 0.0;
                ds.forcing.at(t, n, 0) = 5.0 * wu[c];
                ds.forcing.at(t, n, 1) = 5.0 * wv[c];
                ds.forcing.at(t, n, 2) = heat[c];
                ds.forcing.at(t, n, 3) = sin_t;
                ds.forcing.at(t, n, 4) = cos_t;
                ++n;
            }
        }
        if (boundary) {
            for (size_t k = 0; k < bnodes.size(); ++k) {
                boundary->data.at(t, static_cast<int>(k), 0) = temp[bnodes[k]];
                boundary->data.at(t, static_cast<int>(k), 1) = u[bnodes[k]];
                boundary->data.at(t, static_cast<int>(k), 2) = v[bnodes[k]];
                boundary->data.at(t, static_cast<int>(k), 3) = ssh[bnodes[k]];
            }
        }
    };

    for (int t = 0; t < T; ++t) {
        const double season = 2 * M_PI * t / cfg.season_period_days;
        const double sin_t = std::sin(season), cos_t = std::cos(season);
        const std::vector<double> wu = wind_field(t, true);
        const std::vector<double> wv = wind_field(t, false);

        // Streamfunction / sea-surface height.
        std::vector<double> ssh(cells);
        for (size_t c = 0; c < cells; ++c) {
            ssh[c] = cfg.ssh_amplitude *
                     (ssh_static[c] * (1.0 + 0.3 * sin_t) + 0.4 * wu[c]);
        }
        // Velocity: tapered streamfunction curl plus wind drift.
        std::vector<double> psi(cells);
        for (size_t c = 0; c < cells; ++c) psi[c] = ssh[c] * taper[c];
        std::vector<double> u(cells, 0.0), vv(cells, 0.0);
        double max_speed = 1e-12;
        for (int j = 0; j < nlat; ++j) {
            for (int i = 0; i < nlon; ++i) {
                const int jm = std::max(j - 1, 0), jp = std::min(j + 1, nlat - 1);
                const int im = std::max(i - 1, 0), ip = std::min(i + 1, nlon - 1);
                const double dpdy =
                    (psi[idx(jp, i, nlon)] - psi[idx(jm, i, nlon)]) / (jp - jm);
                const double dpdx =
                    (psi[idx(j, ip, nlon)] - psi[idx(j, im, nlon)]) / (ip - im);
                u[idx(j, i, nlon)] = -dpdy;
                vv[idx(j, i, nlon)] = dpdx;
                max_speed = std::max(max_speed, std::hypot(dpdy, dpdx));
            }
        }
        for (size_t c = 0; c < cells; ++c) {
            u[c] = cfg.rotation_speed * u[c] / max_speed +
                   cfg.wind_speed * wu[c] * taper[c];
            vv[c] = cfg.rotation_speed * vv[c] / max_speed +
                    cfg.wind_speed * wv[c] * taper[c];
        }

        // Heat forcing: latitude profile plus a seasonal swing.
        std::vector<double> heat(cells);
        for (int j = 0; j < nlat; ++j) {
            for (int i = 0; i < nlon; ++i) {
                const double sy = static_cast<double>(j) / nlat;
                heat[idx(j, i, nlon)] =
                    15.0 + cfg.temp_amplitude * (-0.8 * sy + 0.6 * sin_t);
            }
        }

        write_step(t, u, vv, ssh, wu, wv, heat, sin_t, cos_t);
        if (t + 1 == T) break;

        // Advance the prognostic fields.
        advect_step(temp, u, vv, sea, nlat, nlon, cell_area);
        advect_step(ice_a, u, vv, sea, nlat, nlon, cell_area);
        for (int s = 0; s < std::max(1, cfg.n_substeps); ++s) {
            diffuse_step(temp, sea, nlat, nlon, kappa_sub, cell_area);
            diffuse_step(ice_a, sea, nlat, nlon, kappa_sub, cell_area);
        }
        if (cfg.temp_relax_rate > 0.0) {
            for (size_t c = 0; c < cells; ++c) {
                if (!sea[c]) continue;
                temp[c] += cfg.temp_relax_rate * (heat[c] - temp[c]);
                ice_a[c] += cfg.temp_relax_rate *
                            (ice_eq[c] * (1.0 + 0.5 * sin_t) - ice_a[c]);
            }
        }
    }

    ds.train_len = std::max(
        4, static_cast<int>(std::lround(cfg.train_fraction * cfg.n_timesteps)));
    ds.train_len = std::min(ds.train_len, cfg.n_timesteps);
    domain::compute_channel_stats(ds.state, ds.train_len);
    domain::compute_channel_stats(ds.forcing, ds.train_len);
    if (boundary) {
        domain::compute_channel_stats(boundary->data, ds.train_len);
        ds.boundary = std::move(boundary);
    }
    return ds;
}

}  // namespace njord::oceansim
