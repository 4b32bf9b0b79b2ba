/**
 * @file sphere.hpp
 * @brief Spherical geometry primitives: geodetic coordinates, unit vectors,
 *        arc/chord conversions and latitude-based weights.
 */
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace njord::sphere {

/// Mean Earth radius in meters, used for all great-circle distances.
inline constexpr double kEarthRadiusM = 6371000.0;

/// Geodetic point. Latitude in [-90, 90] degrees, longitude in [-180, 180).
struct GeoPoint {
    double lat_deg = 0.0;
    double lon_deg = 0.0;
};

/// Point on the unit sphere, |(x,y,z)| = 1 within 1e-12.
struct UnitVec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

inline double dot(const UnitVec3& a, const UnitVec3& b) {
    return a.x * b.x + a.y * b.y + a.z * b.z;
}

UnitVec3 cross(const UnitVec3& a, const UnitVec3& b);
double norm(const UnitVec3& a);
UnitVec3 normalized(const UnitVec3& a);

/// Wraps a longitude into the canonical [-180, 180) range.
double normalize_lon_deg(double lon_deg);

/// Throws std::invalid_argument if lat/lon are non-finite or out of range.
void validate(const GeoPoint& p);

/// (lat, lon) -> (cos lat cos lon, cos lat sin lon, sin lat).
UnitVec3 to_cartesian(const GeoPoint& p);

/// Inverse of to_cartesian. At the poles the longitude is canonicalized to 0.
GeoPoint from_cartesian(const UnitVec3& v);

/// Straight-line (chord) distance between two points on the unit sphere.
double chord_distance(const UnitVec3& a, const UnitVec3& b);

/// Great-circle arc subtended by a chord of length c on the unit sphere,
/// in degrees: 2 asin(c/2). Requires c in [0, 2].
double chord_to_arc_degrees(double chord);

/// Central angle between two unit vectors, in radians. Uses atan2 of the
/// cross/dot pair, stable for both small and near-antipodal separations.
double central_angle(const UnitVec3& a, const UnitVec3& b);

/// Great-circle distance in meters (Earth radius kEarthRadiusM).
double great_circle_distance_m(const GeoPoint& a, const GeoPoint& b);
double great_circle_distance_m(const UnitVec3& a, const UnitVec3& b);

/// cos(latitude), the per-point area weight before normalization.
double latitude_weight(const GeoPoint& p);

/// Rescales weights in place so their mean is exactly 1.
/// Throws std::invalid_argument on an empty span or non-positive mean.
void normalize_unit_mean(std::span<double> weights);

/// Batch latitude weights rescaled to unit mean.
std::vector<double> latitude_weights_unit_mean(std::span<const GeoPoint> points);

/// Local azimuthal-equidistant projection about a center point. Used for
/// regional domains where planar primitives replace spherical ones.
struct TangentPlane {
    explicit TangentPlane(const GeoPoint& center);

    /// Projects to local (x, y) in meters; x east, y north.
    void project(const GeoPoint& p, double& x_m, double& y_m) const;

    GeoPoint center;

private:
    UnitVec3 center_vec_;
    UnitVec3 east_;
    UnitVec3 north_;
};

}  // namespace njord::sphere
