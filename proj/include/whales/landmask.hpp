#pragma once

#include "whales/raster.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace whales
{
	enum class PolygonRole
	{
		Land,
		Water
	};

	// Closed ring: front() == back().
	struct Ring
	{
		std::vector<GeoPoint> vertices;
	};

	struct Polygon
	{
		Ring exterior;
		std::vector<Ring> holes;
	};

	struct PolygonSet
	{
		std::vector<Polygon> polygons;
		PolygonRole role = PolygonRole::Land;
		std::string crs; // empty when the file does not declare one
	};

	PolygonRole parse_polygon_role(const std::string &s);

	// Polygon / MultiPolygon geometries from a GeoJSON Geometry, Feature or FeatureCollection.
	// Rings must be closed; exterior rings must not self-intersect.
	PolygonSet parse_polygons(std::string_view geojson, PolygonRole role = PolygonRole::Land);
	PolygonSet load_polygons(const std::filesystem::path &path, PolygonRole role = PolygonRole::Land);

	bool ring_is_simple(const Ring &ring);

	// True for pixels whose centre is inside at least one polygon (even-odd over its rings).
	// The window may extend beyond the scene; pixels are addressed on the scene grid.
	Mask rasterize_inside(const PolygonSet &polys, const GeoTransform &transform, const Window &window);

	// Water mask for a scene window: land polygons are subtracted, water polygons are kept.
	// `land_buffer_m` dilates land by a disc of that radius (pixel-centre distance) before masking.
	Mask rasterize_water_mask(const PolygonSet &polys, const RasterScene &scene, const Window &window,
							  double land_buffer_m = 0.0);

	// Disc dilation with radius in pixels.
	Mask dilate_disc(const Mask &mask, double radius_px);
} // namespace whales
