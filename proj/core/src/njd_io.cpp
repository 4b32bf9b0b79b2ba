// NJD dataset/forecast serialization. Layout documented in docs/njd_format.md.
#include <sstream>
#include <stdexcept>

#include "block_io.hpp"
#include "njord/domain.hpp"

namespace njord::domain {

namespace {

using detail::BlockFileReader;
using detail::BlockFileWriter;
using detail::fmt_double;

std::string channel_line(const ChannelSpec& c) {
    std::ostringstream ss;
    ss << c.name << " " << c.variable << " ";
    if (c.surface) {
        ss << "surface";
    } else {
        ss << fmt_double(c.depth_m);
    }
    ss << " " << (c.lower ? fmt_double(*c.lower) : std::string("-"));
    ss << " " << (c.upper ? fmt_double(*c.upper) : std::string("-"));
    ss << " " << (c.is_density ? 1 : 0);
    ss << " " << fmt_double(c.mean) << " " << fmt_double(c.stdev) << " "
       << fmt_double(c.diff_std);
    return ss.str();
}

ChannelSpec parse_channel_line(const std::string& line) {
    std::istringstream ss(line);
    ChannelSpec c;
    std::string level, lower, upper;
    int density = 0;
    ss >> c.name >> c.variable >> level >> lower >> upper >> density >> c.mean >>
        c.stdev >> c.diff_std;
    if (!ss) throw std::runtime_error("malformed channel line: " + line);
    if (level == "surface") {
        c.surface = true;
    } else {
        c.surface = false;
        c.depth_m = std::stod(level);
    }
    if (lower != "-") c.lower = std::stod(lower);
    if (upper != "-") c.upper = std::stod(upper);
    c.is_density = density != 0;
    return c;
}

std::vector<double> lats_of(const std::vector<sphere::GeoPoint>& pts) {
    std::vector<double> v(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) v[i] = pts[i].lat_deg;
    return v;
}

std::vector<double> lons_of(const std::vector<sphere::GeoPoint>& pts) {
    std::vector<double> v(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) v[i] = pts[i].lon_deg;
    return v;
}

std::vector<sphere::GeoPoint> points_of(const std::vector<double>& lats,
                                        const std::vector<double>& lons) {
    if (lats.size() != lons.size()) {
        throw std::runtime_error("lat/lon block size mismatch");
    }
    std::vector<sphere::GeoPoint> pts(lats.size());
    for (size_t i = 0; i < lats.size(); ++i) pts[i] = {lats[i], lons[i]};
    return pts;
}

}  // namespace

void save_njd(const Dataset& ds, const std::string& path) {
    BlockFileWriter w;
    w.line("magic NJD1");
    w.line("version 1");
    w.line("kind dataset");
    w.line("n_grid " + std::to_string(ds.grid.n()));
    w.line("n_land " + std::to_string(ds.grid.land_points.size()));
    w.line("n_time " + std::to_string(ds.state.n_time));
    w.line("train_len " + std::to_string(ds.train_len));
    w.line("seed " + std::to_string(ds.seed));
    w.line("regional " + std::to_string(ds.grid.regional ? 1 : 0));
    if (ds.grid.regional) {
        w.line("proj_center " + fmt_double(ds.grid.proj_center.lat_deg) + " " +
               fmt_double(ds.grid.proj_center.lon_deg));
    }
    if (!ds.config_echo.empty()) w.line("config " + ds.config_echo);
    for (const ChannelSpec& c : ds.state.registry) w.line("channel " + channel_line(c));
    for (const ChannelSpec& c : ds.forcing.registry) {
        w.line("forcing_channel " + channel_line(c));
    }
    for (const auto& [name, vals] : ds.grid.static_fields) {
        w.line("static_field " + name);
        (void)vals;
    }
    // Geometry at full precision; gridded values as 32-bit floats,
    // time-major with channels fastest.
    w.add_f64("grid_lat", lats_of(ds.grid.points));
    w.add_f64("grid_lon", lons_of(ds.grid.points));
    w.add_f64("area_weight", ds.grid.area_weight);
    w.add_f64("land_lat", lats_of(ds.grid.land_points));
    w.add_f64("land_lon", lons_of(ds.grid.land_points));
    for (const auto& [name, vals] : ds.grid.static_fields) {
        w.add_f64("static." + name, vals);
    }
    w.add_f32("state", ds.state.values);
    w.add_f32("forcing", ds.forcing.values);
    if (ds.boundary) {
        const BoundarySequence& b = *ds.boundary;
        w.line("n_boundary " + std::to_string(b.points.size()));
        for (const ChannelSpec& c : b.data.registry) {
            w.line("boundary_channel " + channel_line(c));
        }
        w.add_f64("boundary_lat", lats_of(b.points));
        w.add_f64("boundary_lon", lons_of(b.points));
        w.add_f32("boundary", b.data.values);
    }
    w.write(path);
}

Dataset load_njd(const std::string& path) {
    BlockFileReader r(path);
    r.require_magic("NJD1");
    if (r.get("version") != "1") {
        throw std::runtime_error(path + ": unsupported NJD version " + r.get("version"));
    }
    if (r.get("kind") != "dataset") {
        throw std::runtime_error(path + ": expected kind dataset, got " + r.get("kind"));
    }
    Dataset ds;
    const int n_grid = std::stoi(r.get("n_grid"));
    const int n_time = std::stoi(r.get("n_time"));
    ds.train_len = std::stoi(r.get("train_len"));
    ds.seed = std::stoull(r.get("seed"));
    ds.config_echo = r.get("config", false);

    OceanGrid& g = ds.grid;
    g.points = points_of(r.f64_block("grid_lat"), r.f64_block("grid_lon"));
    g.land_points = points_of(r.f64_block("land_lat"), r.f64_block("land_lon"));
    g.area_weight = r.f64_block("area_weight");
    if (static_cast<int>(g.points.size()) != n_grid) {
        throw std::runtime_error(path + ": n_grid header does not match grid_lat block");
    }
    g.cart.reserve(g.points.size());
    for (const auto& p : g.points) g.cart.push_back(sphere::to_cartesian(p));
    g.land_cart.reserve(g.land_points.size());
    for (const auto& p : g.land_points) g.land_cart.push_back(sphere::to_cartesian(p));
    for (const std::string& name : r.get_all("static_field")) {
        g.static_fields[name] = r.f64_block("static." + name);
    }
    g.regional = r.get("regional") == "1";
    if (g.regional) {
        std::istringstream ss(r.get("proj_center"));
        ss >> g.proj_center.lat_deg >> g.proj_center.lon_deg;
        auto itx = g.static_fields.find("x_coord");
        auto ity = g.static_fields.find("y_coord");
        if (itx == g.static_fields.end() || ity == g.static_fields.end()) {
            throw std::runtime_error(path + ": regional dataset missing x/y coords");
        }
        g.x_m = itx->second;
        g.y_m = ity->second;
        sphere::TangentPlane tp(g.proj_center);
        g.land_x_m.resize(g.land_points.size());
        g.land_y_m.resize(g.land_points.size());
        for (size_t i = 0; i < g.land_points.size(); ++i) {
            tp.project(g.land_points[i], g.land_x_m[i], g.land_y_m[i]);
        }
    }

    for (const std::string& line : r.get_all("channel")) {
        ds.state.registry.add(parse_channel_line(line));
    }
    for (const std::string& line : r.get_all("forcing_channel")) {
        ds.forcing.registry.add(parse_channel_line(line));
    }
    ds.state.n_time = n_time;
    ds.state.n_grid = n_grid;
    ds.state.values = r.f32_block("state");
    if (ds.state.values.size() !=
        static_cast<size_t>(n_time) * n_grid * ds.state.n_chan()) {
        throw std::runtime_error(path + ": state block size mismatch");
    }
    ds.forcing.n_time = n_time;
    ds.forcing.n_grid = n_grid;
    ds.forcing.values = r.f32_block("forcing");
    if (ds.forcing.values.size() !=
        static_cast<size_t>(n_time) * n_grid * ds.forcing.n_chan()) {
        throw std::runtime_error(path + ": forcing block size mismatch");
    }

    const std::string nb = r.get("n_boundary", false);
    if (!nb.empty()) {
        BoundarySequence b;
        b.points = points_of(r.f64_block("boundary_lat"), r.f64_block("boundary_lon"));
        b.cart.reserve(b.points.size());
        for (const auto& p : b.points) b.cart.push_back(sphere::to_cartesian(p));
        for (const std::string& line : r.get_all("boundary_channel")) {
            b.data.registry.add(parse_channel_line(line));
        }
        b.data.n_time = n_time;
        b.data.n_grid = static_cast<int>(b.points.size());
        b.data.values = r.f32_block("boundary");
        if (b.data.values.size() !=
            static_cast<size_t>(n_time) * b.data.n_grid * b.data.n_chan()) {
            throw std::runtime_error(path + ": boundary block size mismatch");
        }
        if (g.regional) {
            sphere::TangentPlane tp(g.proj_center);
            b.x_m.resize(b.points.size());
            b.y_m.resize(b.points.size());
            for (size_t i = 0; i < b.points.size(); ++i) {
                tp.project(b.points[i], b.x_m[i], b.y_m[i]);
            }
        }
        ds.boundary = std::move(b);
    }
    return ds;
}

void save_forecast_njd(const ForecastFile& fc, const std::string& path) {
    BlockFileWriter w;
    w.line("magic NJD1");
    w.line("version 1");
    w.line("kind forecast");
    w.line("n_grid " + std::to_string(fc.n_grid));
    w.line("n_time " + std::to_string(fc.n_lead));
    w.line("members " + std::to_string(fc.n_members));
    w.line("init_time " + std::to_string(fc.init_time));
    w.line("seed " + std::to_string(fc.seed));
    w.line("config_hash " + fc.config_hash);
    for (const ChannelSpec& c : fc.registry) w.line("channel " + channel_line(c));
    w.add_f32("ensemble", fc.values);
    w.write(path);
}

ForecastFile load_forecast_njd(const std::string& path) {
    BlockFileReader r(path);
    r.require_magic("NJD1");
    if (r.get("version") != "1") {
        throw std::runtime_error(path + ": unsupported NJD version " + r.get("version"));
    }
    if (r.get("kind") != "forecast") {
        throw std::runtime_error(path + ": expected kind forecast, got " + r.get("kind"));
    }
    ForecastFile fc;
    fc.n_grid = std::stoi(r.get("n_grid"));
    fc.n_lead = std::stoi(r.get("n_time"));
    fc.n_members = std::stoi(r.get("members"));
    fc.init_time = std::stoi(r.get("init_time"));
    fc.seed = std::stoull(r.get("seed"));
    fc.config_hash = r.get("config_hash");
    for (const std::string& line : r.get_all("channel")) {
        fc.registry.add(parse_channel_line(line));
    }
    fc.values = r.f32_block("ensemble");
    if (fc.values.size() != static_cast<size_t>(fc.n_members) * fc.n_lead * fc.n_grid *
                                fc.registry.size()) {
        throw std::runtime_error(path + ": ensemble block size mismatch");
    }
    return fc;
}

}  // namespace njord::domain
