#include "njord/sphere.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace njord::sphere {

namespace {
constexpr double kDegToRad = M_PI / 180.0;
constexpr double kRadToDeg = 180.0 / M_PI;
}  // namespace

UnitVec3 cross(const UnitVec3& a, const UnitVec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

double norm(const UnitVec3& a) {
    return std::sqrt(a.x * a.x + a.y * a.y + a.z * a.z);
}

UnitVec3 normalized(const UnitVec3& a) {
    const double n = norm(a);
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw std::invalid_argument("cannot normalize zero or non-finite vector");
    }
    return {a.x / n, a.y / n, a.z / n};
}

double normalize_lon_deg(double lon_deg) {
    double lon = std::fmod(lon_deg + 180.0, 360.0);
    if (lon < 0.0) lon += 360.0;
    return lon - 180.0;
}

void validate(const GeoPoint& p) {
    if (!std::isfinite(p.lat_deg) || !std::isfinite(p.lon_deg)) {
        throw std::invalid_argument("non-finite lat/lon");
    }
    if (p.lat_deg < -90.0 || p.lat_deg > 90.0) {
        throw std::invalid_argument("latitude " + std::to_string(p.lat_deg) +
                                    " outside [-90, 90]");
    }
    if (p.lon_deg < -180.0 || p.lon_deg >= 180.0) {
        throw std::invalid_argument("longitude " + std::to_string(p.lon_deg) +
                                    " outside [-180, 180)");
    }
}

UnitVec3 to_cartesian(const GeoPoint& p) {
    validate(p);
    const double lat = p.lat_deg * kDegToRad;
    const double lon = p.lon_deg * kDegToRad;
    const double cl = std::cos(lat);
    return {cl * std::cos(lon), cl * std::sin(lon), std::sin(lat)};
}

GeoPoint from_cartesian(const UnitVec3& v) {
    const double hyp = std::hypot(v.x, v.y);
    GeoPoint p;
    p.lat_deg = std::atan2(v.z, hyp) * kRadToDeg;
    // Pole: longitude is undefined, canonicalize to 0.
    p.lon_deg = (hyp == 0.0) ? 0.0 : normalize_lon_deg(std::atan2(v.y, v.x) * kRadToDeg);
    if (p.lat_deg > 90.0) p.lat_deg = 90.0;
    if (p.lat_deg < -90.0) p.lat_deg = -90.0;
    return p;
}

double chord_distance(const UnitVec3& a, const UnitVec3& b) {
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double chord_to_arc_degrees(double chord) {
    if (!std::isfinite(chord) || chord < 0.0 || chord > 2.0) {
        throw std::invalid_argument("chord length " + std::to_string(chord) +
                                    " outside [0, 2]");
    }
    return 2.0 * std::asin(0.5 * chord) * kRadToDeg;
}

double central_angle(const UnitVec3& a, const UnitVec3& b) {
    const UnitVec3 c = cross(a, b);
    return std::atan2(norm(c), dot(a, b));
}

double great_circle_distance_m(const GeoPoint& a, const GeoPoint& b) {
    return great_circle_distance_m(to_cartesian(a), to_cartesian(b));
}

double great_circle_distance_m(const UnitVec3& a, const UnitVec3& b) {
    return kEarthRadiusM * central_angle(a, b);
}

double latitude_weight(const GeoPoint& p) {
    validate(p);
    return std::cos(p.lat_deg * kDegToRad);
}

void normalize_unit_mean(std::span<double> weights) {
    if (weights.empty()) {
        throw std::invalid_argument("cannot normalize an empty weight set");
    }
    double sum = 0.0;
    for (double w : weights) sum += w;
    const double mean = sum / static_cast<double>(weights.size());
    if (!(mean > 0.0) || !std::isfinite(mean)) {
        throw std::invalid_argument("weight mean must be positive and finite");
    }
    for (double& w : weights) w /= mean;
}

std::vector<double> latitude_weights_unit_mean(std::span<const GeoPoint> points) {
    std::vector<double> w(points.size());
    for (size_t i = 0; i < points.size(); ++i) w[i] = latitude_weight(points[i]);
    normalize_unit_mean(w);
    return w;
}

TangentPlane::TangentPlane(const GeoPoint& c) : center(c) {
    validate(c);
    center_vec_ = to_cartesian(c);
    const double lat = c.lat_deg * kDegToRad;
    const double lon = c.lon_deg * kDegToRad;
    east_ = {-std::sin(lon), std::cos(lon), 0.0};
    north_ = {-std::sin(lat) * std::cos(lon), -std::sin(lat) * std::sin(lon),
              std::cos(lat)};
}

void TangentPlane::project(const GeoPoint& p, double& x_m, double& y_m) const {
    const UnitVec3 v = to_cartesian(p);
    const double e = dot(v, east_);
    const double n = dot(v, north_);
    const double angle = central_angle(center_vec_, v);
    const double planar = std::hypot(e, n);
    // Azimuthal equidistant: radial distance equals the great-circle arc.
    const double scale = (planar > 0.0) ? kEarthRadiusM * angle / planar : 0.0;
    x_m = e * scale;
    y_m = n * scale;
}

}  // namespace njord::sphere
