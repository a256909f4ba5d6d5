#pragma once

#include "whales/points_io.hpp"
#include "whales/projection.hpp"
#include "whales/raster.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace httplib
{
	class Server;
}

namespace whales
{
	// Carries the HTTP status the request should fail with.
	class ServiceError : public InputError
	{
	public:
		ServiceError(int status, const std::string &what) : InputError(what), status_(status) {}
		int status() const { return status_; }

	private:
		int status_;
	};

	std::vector<std::string> default_label_classes();

	// A JSON array of class names, or an object with a "classes" array.
	std::vector<std::string> load_label_classes(const std::filesystem::path &path);

	inline const std::vector<std::string> &label_csv_columns()
	{
		static const std::vector<std::string> columns{
			"chip_id", "labeler_id", "class",      "species",   "confidence",         "comment",
			"lon",     "lat",        "scene_id",   "served_at_iso8601", "labeled_at_iso8601", "duration_s"};
		return columns;
	}

	struct Chip
	{
		std::string chip_id;
		GeoPoint center;              // scene CRS
		std::optional<LonLat> lonlat; // when the CRS converts to WGS84
		Window window;
		std::string acquisition_date;
		std::string scene_id;
		double resolution_m = 0.0;
	};

	// Square window of round(side_m / resolution) pixels centred on the point, clamped to the scene.
	Chip make_chip(const RasterScene &scene, const InterestingPoint &point, double side_m = 100.0);
	std::vector<Chip> make_chips(const RasterScene &scene, const PointCollection &points, double side_m = 100.0);

	struct StretchOptions
	{
		double low_pct = 2.0;
		double high_pct = 98.0;
	};

	// 8-bit RGB planes of the chip window: each channel maps its low/high nearest-rank percentiles
	// to 0/255; a constant channel maps to 128; nodata pixels are 0.
	struct Rgb8
	{
		std::int64_t width = 0;
		std::int64_t height = 0;
		std::vector<std::uint8_t> pixels; // row-major, interleaved RGB
	};
	Rgb8 stretch_chip(const RasterScene &scene, const Window &window, const StretchOptions &stretch = {});
	std::string encode_png(const Rgb8 &image);
	std::string render_chip(const RasterScene &scene, const Chip &chip, const StretchOptions &stretch = {});

	struct LabelSubmission
	{
		std::string chip_id;
		std::string labeler;
		std::string label_class;
		std::string species;
		std::string confidence; // empty when absent
		std::string comment;
	};

	struct ClassProgress
	{
		std::int64_t count = 0;
		double mean_duration_s = 0.0;
	};

	struct Progress
	{
		std::int64_t total = 0;
		std::int64_t retired = 0;
		std::int64_t labels = 0;
		std::int64_t outstanding = 0;
		std::map<std::string, ClassProgress> per_class;
	};

	// Durable assignment state; outstanding holds are not part of it.
	struct AssignmentSnapshot
	{
		std::map<std::string, std::set<std::string>> labelers; // per chip
		std::set<std::string> retired;

		friend bool operator==(const AssignmentSnapshot &, const AssignmentSnapshot &) = default;
	};

	struct ChipPoolOptions
	{
		std::vector<std::string> classes = default_label_classes();
		int labels_to_retire = 3;
		std::chrono::seconds stale_after{30 * 60};
	};

	using Clock = std::function<std::chrono::system_clock::time_point()>;

	// Chip assignment and label persistence. The labels CSV is the source of truth: the
	// constructor replays it, and every accepted label is appended and fsync'd before returning.
	class ChipPool
	{
	public:
		ChipPool(std::vector<Chip> chips, std::filesystem::path labels_csv, ChipPoolOptions options = {},
				 Clock clock = {});
		~ChipPool();
		ChipPool(const ChipPool &) = delete;
		ChipPool &operator=(const ChipPool &) = delete;

		// nullopt when no chip remains for this labeler. A labeler with an outstanding chip gets it again.
		std::optional<Chip> next(const std::string &labeler);
		void submit(const LabelSubmission &label);

		Progress progress() const;
		AssignmentSnapshot snapshot() const;
		const std::vector<std::string> &classes() const { return options_.classes; }
		const Chip *find(const std::string &chip_id) const;

	private:
		struct ChipState
		{
			std::set<std::string> labelers;
			int outstanding = 0;
		};
		struct Hold
		{
			std::string chip_id;
			std::chrono::system_clock::time_point served_at;
		};
		struct ClassSums
		{
			std::int64_t count = 0;
			double duration = 0.0;
		};

		void replay();
		void expire_stale(std::chrono::system_clock::time_point now);
		void append_row(const std::vector<std::string> &fields);
		bool retired(const ChipState &s) const
		{
			return static_cast<int>(s.labelers.size()) >= options_.labels_to_retire;
		}

		std::vector<Chip> chips_;
		std::map<std::string, std::size_t> index_;
		std::vector<ChipState> state_;
		std::map<std::string, Hold> holds_;
		std::map<std::string, ClassSums> class_sums_;
		std::int64_t labels_ = 0;
		std::filesystem::path labels_csv_;
		ChipPoolOptions options_;
		Clock clock_;
		int fd_ = -1;
		mutable std::mutex mutex_;
	};

	std::string iso8601_utc(std::chrono::system_clock::time_point t);

	struct ChipServerOptions
	{
		StretchOptions stretch;
		std::filesystem::path static_dir; // empty: a placeholder page at "/"
	};

	// HTTP front end for a ChipPool.
	class ChipServer
	{
	public:
		ChipServer(ChipPool &pool, RasterScene scene, ChipServerOptions options = {});
		~ChipServer();

		// Binds and serves until stop(); port 0 picks a free port, reported by port().
		bool bind(const std::string &host, int port);
		void listen();
		void stop();
		int port() const { return port_; }

	private:
		void routes();
		std::string chip_png(const std::string &chip_id);

		ChipPool &pool_;
		RasterScene scene_;
		ChipServerOptions options_;
		std::unique_ptr<httplib::Server> server_;
		std::map<std::string, std::string> png_cache_;
		std::mutex png_mutex_;
		int port_ = -1;
	};
} // namespace whales
