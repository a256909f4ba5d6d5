#include "support.hpp"

#include "whales/raster.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace whales;
using namespace whales::testing;

TEST(PixelToGeo, OriginPixelCentre)
{
	const auto t = GeoTransform::north_up(500000.0, 4640000.0, 0.3);
	const auto g = pixel_to_geo(t, 0, 0);
	EXPECT_DOUBLE_EQ(g.x, 500000.15);
	EXPECT_DOUBLE_EQ(g.y, 4639999.85);
}

TEST(PixelToGeo, MatchesDirectAffine)
{
	std::mt19937_64 rng(3);
	std::uniform_real_distribution<double> u(-1.0, 1.0), px(0.0, 5000.0);
	for (int trial = 0; trial < 100; ++trial)
	{
		GeoTransform t{{400000.0 + 1000 * u(rng), 0.3 + 0.01 * u(rng), 0.02 * u(rng), 4.6e6 + 1000 * u(rng),
						0.02 * u(rng), -0.3 + 0.01 * u(rng)}};
		const double r = px(rng), c = px(rng);
		const Eigen::Matrix<double, 2, 3> a{{t.c[1], t.c[2], t.c[0]}, {t.c[4], t.c[5], t.c[3]}};
		const Eigen::Vector2d expect = a * Eigen::Vector3d(c + 0.5, r + 0.5, 1.0);
		const auto g = pixel_to_geo(t, r, c);
		EXPECT_EQ(g.x, t.c[0] + (c + 0.5) * t.c[1] + (r + 0.5) * t.c[2]);
		EXPECT_NEAR(g.x, expect.x(), 1e-8);
		EXPECT_NEAR(g.y, expect.y(), 1e-8);

		const auto [rr, cc] = geo_to_pixel(t, g);
		EXPECT_NEAR(rr, r, 1e-6);
		EXPECT_NEAR(cc, c, 1e-6);
	}
}

TEST(PixelToGeo, RoundTripWithinHalfPixel)
{
	const auto t = GeoTransform::north_up(500000.0, 4640000.0, 0.3);
	std::mt19937_64 rng(5);
	std::uniform_real_distribution<double> ux(500000.0, 500300.0), uy(4639700.0, 4640000.0);
	for (int i = 0; i < 200; ++i)
	{
		const GeoPoint p{ux(rng), uy(rng)};
		const auto [r, c] = geo_to_pixel(t, p);
		const auto back = pixel_to_geo(t, std::round(r), std::round(c));
		EXPECT_LE(std::abs(back.x - p.x), 0.15 + 1e-9);
		EXPECT_LE(std::abs(back.y - p.y), 0.15 + 1e-9);
	}
}

TEST(CrsHelpers, DetectsDegrees)
{
	EXPECT_TRUE(crs_is_geographic("EPSG:4326"));
	EXPECT_FALSE(crs_is_geographic("EPSG:32619"));
	EXPECT_EQ(normalize_crs("urn:ogc:def:crs:EPSG::32619"), "EPSG:32619");
	EXPECT_EQ(normalize_crs("epsg:32619"), "EPSG:32619");
	auto info = utm_info(10, 10, 1);
	info.crs = "EPSG:4326";
	info.geographic = true;
	EXPECT_THROW(require_metric_crs(info), InputError);
}

class ReadWindowTest : public ::testing::Test
{
protected:
	void SetUp() override
	{
		std::mt19937_64 rng(11);
		for (int c = 0; c < 3; ++c)
			planes.push_back(gaussian_plane(100, 100, 400.0 + c, 5.0, rng));
		scene = std::make_unique<RasterScene>(memory_scene(planes));
	}
	std::vector<PlaneF> planes;
	std::unique_ptr<RasterScene> scene;
};

TEST_F(ReadWindowTest, FullScene)
{
	const auto b = read_window(*scene, scene->full_window());
	ASSERT_EQ(b.channel_count(), 3);
	for (int c = 0; c < 3; ++c)
		EXPECT_TRUE((b.channels[c] == planes[c]).all());
	EXPECT_TRUE(b.valid.all());
}

TEST_F(ReadWindowTest, LeftEdgeHaloReplicatesColumnZero)
{
	const auto b = read_window(*scene, Window{0, 20, 30, 30}, 5);
	ASSERT_EQ(b.rows(), 40);
	ASSERT_EQ(b.cols(), 40);
	for (int j = 0; j < 5; ++j)
		EXPECT_TRUE((b.channels[0].col(j) == b.channels[0].col(5)).all());
	EXPECT_TRUE((b.channels[0].col(5) == planes[0].block(15, 0, 40, 1)).all());
}

TEST_F(ReadWindowTest, InteriorOfPaddedWindowIsBitEqual)
{
	const auto b = read_window(*scene, Window{18, 18, 64, 64}, 25);
	ASSERT_EQ(b.rows(), 114);
	ASSERT_EQ(b.cols(), 114);
	for (int c = 0; c < 3; ++c)
	{
		EXPECT_TRUE((b.channels[c].block(25, 25, 64, 64) == planes[c].block(18, 18, 64, 64)).all());
		// Halo rows/cols inside the scene are real data, the rest replicate the edge.
		EXPECT_TRUE((b.channels[c].block(7, 7, 100, 100) == planes[c]).all());
		EXPECT_EQ(b.channels[c](0, 0), planes[c](0, 0));
		EXPECT_EQ(b.channels[c](113, 113), planes[c](99, 99));
	}
}

TEST_F(ReadWindowTest, RepeatedReadsAreIdentical)
{
	const Window w{90, 90, 10, 10};
	const auto a = read_window(*scene, w, 7), b = read_window(*scene, w, 7);
	for (int c = 0; c < 3; ++c)
		EXPECT_TRUE((a.channels[c] == b.channels[c]).all());
}

TEST_F(ReadWindowTest, TiledReadsReconstructScene)
{
	for (std::int64_t tile : {7, 32, 64, 100})
	{
		PlaneF rebuilt(100, 100);
		for (std::int64_t r = 0; r < 100; r += tile)
			for (std::int64_t c = 0; c < 100; c += tile)
			{
				const Window w = scene->clamp(Window{c, r, tile, tile});
				rebuilt.block(w.row_off, w.col_off, w.height, w.width) = read_window(*scene, w).channels[1];
			}
		EXPECT_TRUE((rebuilt == planes[1]).all()) << "tile " << tile;
	}
}

TEST(ReadWindow, NodataAndNonFiniteAreInvalid)
{
	PlaneF p = PlaneF::Constant(4, 4, 10.0f);
	p(1, 1) = -9999.0f;
	p(2, 3) = std::numeric_limits<float>::quiet_NaN();
	const auto scene = memory_scene({p}, 0.3, -9999.0);
	const auto b = read_window(scene, scene.full_window());
	EXPECT_FALSE(b.valid(1, 1));
	EXPECT_FALSE(b.valid(2, 3));
	EXPECT_EQ(b.valid.count(), 14);
}

TEST(RasterScene, RejectsBadDimensions)
{
	auto info = utm_info(0, 10, 1);
	EXPECT_THROW(RasterScene(info, std::make_shared<MemorySource>(std::vector<PlaneF>{})), InputError);
	info = utm_info(10, 10, 1);
	info.transform = GeoTransform{{0, 0, 0, 0, 0, 0}};
	EXPECT_THROW(RasterScene(info, std::make_shared<MemorySource>(std::vector<PlaneF>{})), InputError);
}

class GeoTiffRoundTrip : public ::testing::TestWithParam<SampleType>
{
};

TEST_P(GeoTiffRoundTrip, PreservesPixelsAndGeoreference)
{
	TempDir dir;
	std::mt19937_64 rng(21);
	std::uniform_int_distribution<int> u(0, 250);
	std::vector<PlaneF> planes;
	for (int c = 0; c < 3; ++c)
	{
		PlaneF p(100, 100);
		for (Eigen::Index i = 0; i < p.size(); ++i)
			p.data()[i] = static_cast<float>(u(rng));
		planes.push_back(p);
	}
	auto info = utm_info(100, 100, 3);
	GeoTiffOptions opts;
	opts.sample_type = GetParam();
	opts.tile_size = 32;
	write_geotiff(dir / "s.tif", info, planes, opts);

	const auto scene = open_scene(dir / "s.tif");
	EXPECT_EQ(scene.channels(), 3);
	EXPECT_EQ(scene.height(), 100);
	EXPECT_EQ(scene.width(), 100);
	EXPECT_NEAR(scene.resolution(), 0.3, 1e-12);
	EXPECT_EQ(scene.crs(), "EPSG:32619");
	EXPECT_EQ(scene.info().acquisition_date, "2021-04-24");
	for (int k = 0; k < 6; ++k)
		EXPECT_NEAR(scene.transform().c[k], info.transform.c[k], 1e-9);
	const auto b = read_window(scene, Window{10, 20, 50, 40}, 3);
	const auto direct = read_window(scene, scene.full_window());
	for (int c = 0; c < 3; ++c)
	{
		EXPECT_TRUE((direct.channels[c] == planes[c]).all());
		EXPECT_TRUE((b.channels[c].block(3, 3, 40, 50) == planes[c].block(20, 10, 40, 50)).all());
	}
}

INSTANTIATE_TEST_SUITE_P(SampleTypes, GeoTiffRoundTrip,
						 ::testing::Values(SampleType::UInt8, SampleType::UInt16, SampleType::Float32));

TEST(GeoTiff, MissingGeoreferencingIsRejected)
{
	TempDir dir;
	GeoTiffOptions opts;
	opts.write_georeference = false;
	const std::vector<PlaneF> planes{PlaneF::Constant(8, 8, 1.0f)};
	write_geotiff(dir / "bare.tif", utm_info(8, 8, 1), planes, opts);
	try
	{
		open_scene(dir / "bare.tif");
		FAIL() << "expected an error";
	}
	catch (const InputError &e)
	{
		EXPECT_NE(std::string(e.what()).find("missing georeferencing"), std::string::npos);
	}
}

TEST(GeoTiff, UnreadableFileIsRejected)
{
	TempDir dir;
	std::ofstream(dir / "junk.tif") << "not a tiff";
	EXPECT_THROW(open_scene(dir / "junk.tif"), InputError);
	EXPECT_THROW(open_scene(dir / "absent.tif"), InputError);
}

TEST(RawScene, RoundTripThroughSidecar)
{
	TempDir dir;
	std::mt19937_64 rng(2);
	std::vector<PlaneF> planes{gaussian_plane(30, 40, 100, 3, rng), gaussian_plane(30, 40, 200, 3, rng)};
	auto info = utm_info(30, 40, 2);
	info.nodata = -1.0;
	const auto sidecar = write_raw_scene(dir / "s.raw", info, planes);
	const auto scene = open_scene(sidecar);
	EXPECT_EQ(scene.channels(), 2);
	EXPECT_EQ(scene.width(), 40);
	ASSERT_TRUE(scene.nodata().has_value());
	EXPECT_EQ(*scene.nodata(), -1.0);
	const auto b = read_window(scene, scene.full_window());
	EXPECT_TRUE((b.channels[1] == planes[1]).all());
}

TEST(RawScene, MissingGeotransformIsRejected)
{
	TempDir dir;
	std::ofstream(dir / "s.raw.json") << R"({"channels": 1, "height": 4, "width": 4})";
	std::ofstream(dir / "s.raw") << std::string(64, '\0');
	try
	{
		open_scene(dir / "s.raw.json");
		FAIL() << "expected an error";
	}
	catch (const InputError &e)
	{
		EXPECT_NE(std::string(e.what()).find("missing georeferencing"), std::string::npos);
	}
}

// 1,083 km2 at 0.3 m/px is ~1.2e10 pixels per band; a sparse file stands in for the strip.
TEST(RawScene, StripScaleSceneOpensWithoutLoading)
{
	TempDir dir;
	const std::int64_t side = 109700;
	auto info = utm_info(side, side, 3);
	EXPECT_GT(static_cast<double>(side) * side * 0.09 / 1e6, 1083.0);
	const auto data = dir / "strip.raw";
	{
		std::ofstream touch(data, std::ios::binary);
	}
	std::filesystem::resize_file(data, static_cast<std::uintmax_t>(side) * side * 3 * sizeof(float));
	const auto scene = open_scene(write_raw_sidecar(data, info));
	EXPECT_EQ(scene.height(), side);
	const auto b = read_window(scene, Window{side - 64, side - 64, 64, 64}, 8);
	EXPECT_EQ(b.rows(), 80);
	EXPECT_TRUE((b.channels[2] == 0.0f).all());
}
