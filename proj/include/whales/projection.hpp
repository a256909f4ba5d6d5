#pragma once

#include "whales/raster.hpp"

#include <optional>
#include <string>

namespace whales
{
	struct LonLat
	{
		double lon = 0.0;
		double lat = 0.0;
	};

	struct UtmZone
	{
		int zone = 0;
		bool south = false;
	};

	// WGS84 / UTM zones are EPSG:326zz (north) and EPSG:327zz (south).
	std::optional<UtmZone> utm_zone_of(const std::string &crs);

	// Transverse Mercator series on the WGS84 ellipsoid (sub-millimetre within a zone).
	LonLat utm_to_lonlat(const GeoPoint &p, const UtmZone &zone);
	GeoPoint lonlat_to_utm(const LonLat &ll, const UtmZone &zone);

	// Geographic coordinates for a point in `crs`, when the CRS is WGS84 UTM or already geographic.
	std::optional<LonLat> to_lonlat(const GeoPoint &p, const std::string &crs);
} // namespace whales
