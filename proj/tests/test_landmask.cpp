#include "support.hpp"

#include "whales/landmask.hpp"

#include <fmt/format.h>
#include <gtest/gtest.h>

using namespace whales;
using namespace whales::testing;

namespace
{
	// Scene grid: origin (0, 100), 1 m pixels, 100 x 100.
	RasterScene grid_scene(std::int64_t n = 100)
	{
		SceneInfo info;
		info.channels = 1;
		info.height = n;
		info.width = n;
		info.transform = GeoTransform::north_up(0.0, static_cast<double>(n), 1.0);
		info.crs = "EPSG:32619";
		return RasterScene(info, std::make_shared<MemorySource>(std::vector<PlaneF>{PlaneF::Zero(n, n)}));
	}

	std::string polygon_json(const std::vector<std::vector<std::pair<double, double>>> &rings,
							 const std::string &crs = "")
	{
		std::string coords;
		for (const auto &ring : rings)
		{
			std::string r;
			for (const auto &[x, y] : ring)
				r += fmt::format("{}[{},{}]", r.empty() ? "" : ",", x, y);
			coords += fmt::format("{}[{}]", coords.empty() ? "" : ",", r);
		}
		const std::string crs_member =
			crs.empty() ? "" : fmt::format(R"("crs":{{"type":"name","properties":{{"name":"{}"}}}},)", crs);
		return fmt::format(R"({{"type":"FeatureCollection",{}"features":[{{"type":"Feature","properties":{{}},
			"geometry":{{"type":"Polygon","coordinates":[{}]}}}}]}})",
						   crs_member, coords);
	}

	bool crossing_inside(const std::vector<GeoPoint> &ring, double x, double y)
	{
		bool in = false;
		for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++)
		{
			const auto &a = ring[i], &b = ring[j];
			if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x)
				in = !in;
		}
		return in;
	}
} // namespace

TEST(LoadPolygons, SquareAndHole)
{
	const auto sq = parse_polygons(polygon_json({{{0, 0}, {10, 0}, {10, 10}, {0, 10}, {0, 0}}}));
	ASSERT_EQ(sq.polygons.size(), 1u);
	EXPECT_EQ(sq.polygons[0].exterior.vertices.size(), 5u);
	EXPECT_TRUE(sq.crs.empty());

	const std::string multi = R"({"type":"MultiPolygon","coordinates":[
		[[[0,0],[10,0],[10,10],[0,10],[0,0]],[[2,2],[4,2],[4,4],[2,4],[2,2]]],
		[[[20,20],[30,20],[30,30],[20,20]]]]})";
	const auto mp = parse_polygons(multi);
	ASSERT_EQ(mp.polygons.size(), 2u);
	EXPECT_EQ(mp.polygons[0].holes.size(), 1u);
	EXPECT_EQ(mp.polygons[1].holes.size(), 0u);
}

TEST(LoadPolygons, Rejections)
{
	EXPECT_THROW(parse_polygons("{not json"), InputError);
	EXPECT_THROW(parse_polygons(R"({"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1]]]})"), InputError);
	EXPECT_THROW(parse_polygons(R"({"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1]]]})"), InputError);
	// Bow tie.
	EXPECT_THROW(parse_polygons(polygon_json({{{0, 0}, {10, 10}, {10, 0}, {0, 10}, {0, 0}}})), InputError);
	EXPECT_THROW(parse_polygon_role("sea"), InputError);
	EXPECT_EQ(parse_polygon_role("water"), PolygonRole::Water);
}

TEST(RingIsSimple, Cases)
{
	EXPECT_TRUE(ring_is_simple(Ring{{{0, 0}, {4, 0}, {4, 4}, {0, 4}, {0, 0}}}));
	EXPECT_TRUE(ring_is_simple(Ring{{{0, 0}, {4, 0}, {2, 1}, {4, 4}, {0, 4}, {0, 0}}}));
	EXPECT_FALSE(ring_is_simple(Ring{{{0, 0}, {4, 4}, {4, 0}, {0, 4}, {0, 0}}}));
}

TEST(WaterMask, NoPolygonsIsAllWater)
{
	const auto scene = grid_scene();
	const PolygonSet none;
	EXPECT_TRUE(rasterize_water_mask(none, scene, scene.full_window()).all());
}

TEST(WaterMask, CoveringPolygonIsAllLand)
{
	const auto scene = grid_scene();
	const auto land = parse_polygons(polygon_json({{{-5, -5}, {105, -5}, {105, 105}, {-5, 105}, {-5, -5}}}));
	EXPECT_FALSE(rasterize_water_mask(land, scene, scene.full_window()).any());
}

TEST(WaterMask, HalfPlane)
{
	const auto scene = grid_scene();
	const auto land = parse_polygons(polygon_json({{{-5, -5}, {50, -5}, {50, 105}, {-5, 105}, {-5, -5}}}));
	const auto water = rasterize_water_mask(land, scene, scene.full_window());
	EXPECT_EQ(water.count(), 5000);
	EXPECT_FALSE(water.leftCols(50).any());
	EXPECT_TRUE(water.rightCols(50).all());
}

TEST(WaterMask, HoleIsWater)
{
	const auto scene = grid_scene();
	const auto land = parse_polygons(polygon_json(
		{{{10, 10}, {90, 10}, {90, 90}, {10, 90}, {10, 10}}, {{40, 40}, {60, 40}, {60, 60}, {40, 60}, {40, 40}}}));
	const auto water = rasterize_water_mask(land, scene, scene.full_window());
	EXPECT_EQ(water.count(), 10000 - 80 * 80 + 20 * 20);
	EXPECT_TRUE(water(50, 50));  // inside the hole
	EXPECT_FALSE(water(20, 20)); // on land
}

TEST(WaterMask, MatchesCrossingNumberOracle)
{
	const auto scene = grid_scene(128);
	// Irregular coastline-like concave ring.
	std::vector<std::pair<double, double>> ring;
	for (int i = 0; i < 40; ++i)
	{
		const double a = 2.0 * 3.14159265358979 * i / 40.0;
		const double r = 40.0 + 15.0 * std::sin(5.0 * a) + 6.0 * std::cos(11.0 * a);
		ring.emplace_back(64.0 + r * std::cos(a), 64.0 + r * std::sin(a));
	}
	ring.push_back(ring.front());
	const auto polys = parse_polygons(polygon_json({ring}));
	const auto inside = rasterize_inside(polys, scene.transform(), scene.full_window());
	const auto &v = polys.polygons[0].exterior.vertices;
	for (int i = 0; i < 128; ++i)
		for (int j = 0; j < 128; ++j)
		{
			const auto c = pixel_to_geo(scene, i, j);
			EXPECT_EQ(inside(i, j), crossing_inside(v, c.x, c.y)) << i << "," << j;
		}
}

TEST(WaterMask, ComplementAndTileInvariance)
{
	const auto scene = grid_scene();
	const auto text = polygon_json({{{5, 7}, {80, 3}, {95, 60}, {30, 97}, {12, 50}, {5, 7}}});
	const auto land = parse_polygons(text, PolygonRole::Land);
	const auto water = parse_polygons(text, PolygonRole::Water);
	const auto full = rasterize_water_mask(land, scene, scene.full_window());
	EXPECT_TRUE((full == !rasterize_water_mask(water, scene, scene.full_window())).all());
	for (std::int64_t tile : {7, 33})
		for (std::int64_t r = 0; r < 100; r += tile)
			for (std::int64_t c = 0; c < 100; c += tile)
			{
				const auto w = scene.clamp(Window{c, r, tile, tile});
				const auto part = rasterize_water_mask(land, scene, w, 3.0);
				const auto whole = rasterize_water_mask(land, scene, scene.full_window(), 3.0);
				EXPECT_TRUE((part == whole.block(w.row_off, w.col_off, w.height, w.width)).all());
			}
}

TEST(WaterMask, LandBufferGrowsLand)
{
	const auto scene = grid_scene();
	const auto land = parse_polygons(polygon_json({{{-5, -5}, {50, -5}, {50, 105}, {-5, 105}, {-5, -5}}}));
	const auto water = rasterize_water_mask(land, scene, scene.full_window(), 4.0);
	EXPECT_EQ(water.count(), 100 * 46);
	EXPECT_THROW(rasterize_water_mask(land, scene, scene.full_window(), -1.0), InputError);
}

TEST(WaterMask, CrsMismatchRejected)
{
	const auto scene = grid_scene();
	const auto land = parse_polygons(polygon_json({{{0, 0}, {10, 0}, {10, 10}, {0, 0}}}, "EPSG:4326"));
	EXPECT_THROW(rasterize_water_mask(land, scene, scene.full_window()), InputError);
	const auto same =
		parse_polygons(polygon_json({{{0, 0}, {10, 0}, {10, 10}, {0, 0}}}, "urn:ogc:def:crs:EPSG::32619"));
	EXPECT_NO_THROW(rasterize_water_mask(same, scene, scene.full_window()));
}

TEST(DilateDisc, Radius)
{
	Mask m = Mask::Constant(11, 11, false);
	m(5, 5) = true;
	const auto d = dilate_disc(m, 2.0);
	EXPECT_EQ(d.count(), 13); // lattice points with dx^2 + dy^2 <= 4
	EXPECT_TRUE((dilate_disc(m, 0.0) == m).all());
}
