#pragma once

#include "whales/regions.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace whales
{
	struct PointCollection
	{
		std::string crs;
		std::vector<InterestingPoint> points;
	};

	// FeatureCollection of Point features with properties {id, area_m2, mean_anomaly, scene_id}
	// and a named "crs" member holding the scene CRS verbatim.
	std::string points_to_geojson(const PointCollection &points);
	void write_points_geojson(const std::filesystem::path &path, const PointCollection &points);
	PointCollection parse_points_geojson(const std::string &text);
	PointCollection read_points_geojson(const std::filesystem::path &path);

	// Columns: id, area_m2, mean_anomaly, scene_id, x, y, lon, lat (lon/lat empty when the CRS
	// has no known geographic conversion).
	void write_points_csv(const std::filesystem::path &path, const PointCollection &points);
} // namespace whales
