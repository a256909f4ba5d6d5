#include "support.hpp"

#include "whales/chip_service.hpp"
#include "whales/csv.hpp"

#include <fmt/format.h>
#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>
#include <png.h>

#include <fstream>
#include <sstream>
#include <thread>

using namespace whales;
using namespace whales::testing;
using nlohmann::json;

namespace
{
	RasterScene flat_scene(std::int64_t n = 1000)
	{
		std::mt19937_64 rng(3);
		return memory_scene({gaussian_plane(n, n, 400, 5, rng), gaussian_plane(n, n, 500, 5, rng),
							 gaussian_plane(n, n, 300, 5, rng)});
	}

	InterestingPoint point_at(const RasterScene &scene, std::string id, double row, double col)
	{
		InterestingPoint p;
		p.id = std::move(id);
		p.row = row;
		p.col = col;
		p.coordinate = pixel_to_geo(scene, row, col);
		p.scene_id = scene.scene_id();
		return p;
	}

	std::vector<Chip> chips_for(const RasterScene &scene, int n)
	{
		std::vector<Chip> chips;
		for (int i = n - 1; i >= 0; --i) // deliberately unsorted
			chips.push_back(make_chip(scene, point_at(scene, fmt::format("c{}", i), 200.0 + 100.0 * i, 500.0)));
		return chips;
	}

	LabelSubmission label(const std::string &chip, const std::string &who, const std::string &cls = "ship")
	{
		LabelSubmission l;
		l.chip_id = chip;
		l.labeler = who;
		l.label_class = cls;
		if (cls == "whale")
			l.confidence = "probable";
		return l;
	}

	int status_of(const std::function<void()> &f)
	{
		try
		{
			f();
		}
		catch (const ServiceError &e)
		{
			return e.status();
		}
		return 0;
	}

	struct FakeClock
	{
		std::shared_ptr<std::chrono::system_clock::time_point> now =
			std::make_shared<std::chrono::system_clock::time_point>(std::chrono::sys_days{std::chrono::year{2024} / 3 / 1});
		Clock clock() const
		{
			return [n = now] { return *n; };
		}
		void advance(std::chrono::milliseconds d) const { *now += d; }
	};
} // namespace

TEST(Chip, WindowIsHundredMetresAndClamped)
{
	const auto scene = flat_scene();
	const auto c = make_chip(scene, point_at(scene, "a", 500.0, 500.0));
	EXPECT_EQ(c.window.width, 333);
	EXPECT_EQ(c.window.height, 333);
	EXPECT_NEAR(c.window.col_off + c.window.width / 2.0, 500.5, 0.5);
	ASSERT_TRUE(c.lonlat);
	EXPECT_NEAR(c.lonlat->lat, 41.9, 0.1);
	EXPECT_EQ(c.acquisition_date, "2021-04-24");

	const auto corner = make_chip(scene, point_at(scene, "b", 3.0, 998.0));
	EXPECT_EQ(corner.window.row_off, 0);
	EXPECT_EQ(corner.window.col_end(), 1000);
	EXPECT_LT(corner.window.width, 333);
	EXPECT_LT(corner.window.height, 333);
}

TEST(Stretch, PercentilesAndConstant)
{
	PlaneF ramp(10, 10);
	for (int i = 0; i < 100; ++i)
		ramp.data()[i] = static_cast<float>(i);
	const auto scene = memory_scene({ramp, PlaneF::Constant(10, 10, 7.0f), ramp});
	const auto img = stretch_chip(scene, scene.full_window());
	auto px = [&](int i, int b) { return img.pixels[static_cast<std::size_t>(i * 3 + b)]; };
	// 2nd percentile of 0..99 is value 1, 98th is 97.
	EXPECT_EQ(px(0, 0), 0);
	EXPECT_EQ(px(1, 0), 0);
	EXPECT_EQ(px(97, 0), 255);
	EXPECT_EQ(px(99, 0), 255);
	for (int i = 1; i < 100; ++i)
		EXPECT_GE(px(i, 0), px(i - 1, 0));
	EXPECT_EQ(px(50, 1), 128);
	EXPECT_THROW(stretch_chip(scene, scene.full_window(), StretchOptions{50, 10}), InputError);
}

TEST(Stretch, NodataPixelsAreBlackAndEmptyChipIs422)
{
	PlaneF p = PlaneF::Constant(8, 8, 5.0f);
	p.topRows(4).setConstant(-9999.0f);
	const auto scene = memory_scene({p}, 0.3, -9999.0);
	const auto img = stretch_chip(scene, scene.full_window());
	EXPECT_EQ(img.pixels[0], 0);
	EXPECT_EQ(img.pixels[static_cast<std::size_t>(8 * 8 * 3 - 1)], 128);
	EXPECT_EQ(status_of([&] { stretch_chip(scene, Window{0, 0, 8, 4}); }), 422);
}

TEST(Png, SignatureAndSize)
{
	const auto scene = flat_scene(200);
	const auto chip = make_chip(scene, point_at(scene, "p", 100, 100), 30.0);
	const auto png = render_chip(scene, chip);
	ASSERT_GT(png.size(), 8u);
	EXPECT_EQ(png.substr(0, 8), std::string("\x89PNG\r\n\x1a\n", 8));

	png_image image{};
	image.version = PNG_IMAGE_VERSION;
	ASSERT_TRUE(png_image_begin_read_from_memory(&image, png.data(), png.size()));
	EXPECT_EQ(image.width, 100u);
	EXPECT_EQ(image.height, 100u);
	png_image_free(&image);
}

TEST(Pool, ServesLowestIdAndPrefersNearlyRetiredChips)
{
	TempDir dir;
	const auto scene = flat_scene();
	ChipPool pool(chips_for(scene, 3), dir / "labels.csv");
	EXPECT_EQ(pool.next("a")->chip_id, "c0");
	EXPECT_EQ(pool.next("a")->chip_id, "c0"); // still held
	pool.submit(label("c0", "a"));
	EXPECT_EQ(pool.next("b")->chip_id, "c0");
	pool.submit(label("c0", "b"));
	// c0 needs one more label, c1 needs three.
	EXPECT_EQ(pool.next("c")->chip_id, "c0");
	EXPECT_EQ(pool.next("d")->chip_id, "c1"); // c0 is held by c
	EXPECT_EQ(pool.next("a")->chip_id, "c1");
}

TEST(Pool, RetiresAfterThreeDistinctLabelers)
{
	TempDir dir;
	const auto scene = flat_scene();
	ChipPool pool(chips_for(scene, 1), dir / "labels.csv");
	for (const char *who : {"a", "b", "c"})
	{
		ASSERT_EQ(pool.next(who)->chip_id, "c0");
		pool.submit(label("c0", who));
	}
	EXPECT_FALSE(pool.next("d"));
	EXPECT_EQ(pool.snapshot().retired, std::set<std::string>{"c0"});
	EXPECT_EQ(pool.progress().retired, 1);
	EXPECT_EQ(pool.progress().labels, 3);
}

TEST(Pool, RejectsInvalidSubmissions)
{
	TempDir dir;
	const auto scene = flat_scene();
	ChipPool pool(chips_for(scene, 2), dir / "labels.csv");
	pool.next("a");
	EXPECT_EQ(status_of([&] { pool.submit(label("nope", "a")); }), 404);
	EXPECT_EQ(status_of([&] { pool.submit(label("c1", "a")); }), 409); // not held
	EXPECT_EQ(status_of([&] { pool.submit(label("c0", "")); }), 400);
	EXPECT_EQ(status_of([&] { pool.submit(label("c0", "a", "seal")); }), 400);
	auto whale = label("c0", "a", "whale");
	whale.confidence = "";
	EXPECT_EQ(status_of([&] { pool.submit(whale); }), 400);
	whale.confidence = "maybe";
	EXPECT_EQ(status_of([&] { pool.submit(whale); }), 400);
	auto ship = label("c0", "a");
	ship.confidence = "definite";
	EXPECT_EQ(status_of([&] { pool.submit(ship); }), 400);
	ship.confidence.clear();
	ship.species = "right";
	EXPECT_EQ(status_of([&] { pool.submit(ship); }), 400);
	EXPECT_EQ(status_of([&] { pool.next(""); }), 400);

	whale.confidence = "definite";
	whale.species = "North Atlantic right whale";
	pool.submit(whale);
	EXPECT_EQ(status_of([&] { pool.submit(whale); }), 409);
	EXPECT_EQ(pool.next("a")->chip_id, "c1");
}

TEST(Pool, ReplayRestoresAssignmentState)
{
	TempDir dir;
	const auto scene = flat_scene();
	AssignmentSnapshot before;
	{
		ChipPool pool(chips_for(scene, 3), dir / "labels.csv");
		for (const char *who : {"a", "b", "c", "d"})
		{
			const auto chip = pool.next(who);
			pool.submit(label(chip->chip_id, who, who[0] == 'a' ? "whale" : "ship"));
		}
		pool.next("e"); // outstanding, not durable
		before = pool.snapshot();
	}
	ChipPool again(chips_for(scene, 3), dir / "labels.csv");
	EXPECT_EQ(again.snapshot(), before);
	EXPECT_EQ(again.progress().outstanding, 0);
	EXPECT_EQ(again.progress().labels, 4);
	EXPECT_EQ(again.progress().per_class.at("whale").count, 1);
	// The chip e was holding is back in the pool.
	EXPECT_EQ(again.next("e")->chip_id, "c1");

	const auto rows = csv::read_file(dir / "labels.csv");
	ASSERT_EQ(rows.size(), 5u);
	EXPECT_EQ(rows[0], label_csv_columns());
}

TEST(Pool, TornFinalLineIsIgnored)
{
	TempDir dir;
	const auto scene = flat_scene();
	{
		ChipPool pool(chips_for(scene, 2), dir / "labels.csv");
		pool.next("a");
		pool.submit(label("c0", "a"));
	}
	std::ofstream(dir / "labels.csv", std::ios::app) << "c0,b,ship";
	ChipPool again(chips_for(scene, 2), dir / "labels.csv");
	EXPECT_EQ(again.progress().labels, 1);

	std::ofstream(dir / "other.csv") << "chip,who\n";
	EXPECT_THROW(ChipPool(chips_for(scene, 2), dir / "other.csv"), InputError);
}

TEST(Pool, StaleHoldsExpire)
{
	TempDir dir;
	const auto scene = flat_scene();
	FakeClock clock;
	ChipPoolOptions opts;
	opts.labels_to_retire = 1;
	ChipPool pool(chips_for(scene, 1), dir / "labels.csv", opts, clock.clock());
	EXPECT_EQ(pool.next("a")->chip_id, "c0");
	EXPECT_FALSE(pool.next("b"));
	clock.advance(std::chrono::minutes(29));
	EXPECT_FALSE(pool.next("b"));
	clock.advance(std::chrono::minutes(2));
	EXPECT_EQ(pool.next("b")->chip_id, "c0");
	EXPECT_EQ(status_of([&] { pool.submit(label("c0", "a")); }), 409);
	pool.submit(label("c0", "b"));
}

TEST(Pool, TimestampsAndMeanDuration)
{
	TempDir dir;
	const auto scene = flat_scene();
	FakeClock clock;
	{
		ChipPool pool(chips_for(scene, 3), dir / "labels.csv", {}, clock.clock());
		int i = 0;
		for (int seconds : {2, 4, 6})
		{
			const auto who = fmt::format("l{}", i++);
			const auto chip = pool.next(who);
			clock.advance(std::chrono::milliseconds(seconds * 1000));
			pool.submit(label(chip->chip_id, who, "wave"));
		}
		EXPECT_DOUBLE_EQ(pool.progress().per_class.at("wave").mean_duration_s, 4.0);
		EXPECT_EQ(pool.progress().per_class.at("whale").count, 0);
	}
	const auto rows = csv::read_file(dir / "labels.csv");
	EXPECT_EQ(rows[1][9], "2024-03-01T00:00:00.000Z");
	EXPECT_EQ(rows[1][10], "2024-03-01T00:00:02.000Z");
	EXPECT_EQ(rows[1][11], "2.000");
	EXPECT_EQ(rows[1][8], "test");
	EXPECT_FALSE(rows[1][6].empty());

	ChipPool again(chips_for(scene, 3), dir / "labels.csv", {}, clock.clock());
	EXPECT_DOUBLE_EQ(again.progress().per_class.at("wave").mean_duration_s, 4.0);
}

TEST(Classes, DefaultsAndFile)
{
	EXPECT_EQ(default_label_classes().size(), 16u);
	EXPECT_EQ(default_label_classes().front(), "whale");
	TempDir dir;
	std::ofstream(dir / "c.json") << R"({"classes": ["whale", "boat"]})";
	EXPECT_EQ(load_label_classes(dir / "c.json"), (std::vector<std::string>{"whale", "boat"}));
	std::ofstream(dir / "d.json") << R"(["a", "a"])";
	EXPECT_THROW(load_label_classes(dir / "d.json"), InputError);
}

TEST(Server, HttpRoundTrip)
{
	TempDir dir;
	const auto scene = flat_scene();
	ChipPool pool(chips_for(scene, 2), dir / "labels.csv");
	ChipServer server(pool, scene);
	ASSERT_TRUE(server.bind("127.0.0.1", 0));
	std::thread t([&] { server.listen(); });

	httplib::Client cli("127.0.0.1", server.port());
	auto next = cli.Get("/api/next?labeler=ann");
	ASSERT_TRUE(next);
	EXPECT_EQ(next->status, 200);
	const auto body = json::parse(next->body);
	EXPECT_EQ(body["chip_id"], "c0");
	EXPECT_EQ(body["image_url"], "/api/chip/c0.png");
	EXPECT_TRUE(body["lon"].is_number());
	EXPECT_EQ(body["width_px"], 333);

	auto img = cli.Get("/api/chip/c0.png");
	ASSERT_TRUE(img);
	EXPECT_EQ(img->status, 200);
	EXPECT_EQ(img->get_header_value("Content-Type"), "image/png");
	EXPECT_EQ(cli.Get("/api/chip/zzz.png")->status, 404);

	const auto post = [&](const json &j) { return cli.Post("/api/label", j.dump(), "application/json")->status; };
	EXPECT_EQ(post({{"chip_id", "c0"}, {"labeler", "ann"}, {"class", "whale"}}), 400);
	EXPECT_EQ(post({{"chip_id", "c0"}, {"labeler", "ann"}, {"class", "whale"}, {"confidence", "possible"}}), 200);
	EXPECT_EQ(post({{"chip_id", "c0"}, {"labeler", "ann"}, {"class", "ship"}}), 409);
	EXPECT_EQ(cli.Post("/api/label", "{oops", "application/json")->status, 400);

	const auto progress = json::parse(cli.Get("/api/progress")->body);
	EXPECT_EQ(progress["total"], 2);
	EXPECT_EQ(progress["labels"], 1);
	EXPECT_EQ(progress["per_class"]["whale"]["count"], 1);
	EXPECT_EQ(json::parse(cli.Get("/api/classes")->body)["classes"].size(), 16u);
	EXPECT_EQ(cli.Get("/")->status, 200);
	EXPECT_EQ(cli.Get("/api/next")->status, 400);

	server.stop();
	t.join();
}
