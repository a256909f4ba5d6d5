#include "whales/chip_service.hpp"

#include "whales/csv.hpp"
#include "whales/regions.hpp"
#include "whales/standardize.hpp"

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>
#include <png.h>

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

namespace whales
{
	using nlohmann::json;

	std::vector<std::string> default_label_classes()
	{
		return {"whale", "ship",  "debris", "oil",  "whitecap", "zooplankton", "bird",  "buoy",
				"aquaculture", "rock", "wave", "glint", "cloud", "land", "other", "unsure"};
	}

	std::vector<std::string> load_label_classes(const std::filesystem::path &path)
	{
		std::ifstream in(path);
		if (!in)
			throw InputError("cannot read classes file " + path.string());
		std::stringstream ss;
		ss << in.rdbuf();
		std::vector<std::string> classes;
		try
		{
			const auto j = json::parse(ss.str());
			classes = (j.is_object() ? j.at("classes") : j).get<std::vector<std::string>>();
		}
		catch (const json::exception &e)
		{
			throw InputError(std::string("malformed classes file: ") + e.what());
		}
		if (classes.empty())
			throw InputError("classes file lists no classes");
		std::set<std::string> seen;
		for (const auto &c : classes)
			if (c.empty() || !seen.insert(c).second)
				throw InputError("class names must be non-empty and distinct");
		return classes;
	}

	Chip make_chip(const RasterScene &scene, const InterestingPoint &point, double side_m)
	{
		const double res = scene.resolution();
		const auto side = std::max<std::int64_t>(1, std::llround(side_m / res));
		const auto [row, col] = geo_to_pixel(scene, point.coordinate);
		// Centre of pixel (row, col) sits at corner-grid coordinate row + 0.5.
		const auto r0 = static_cast<std::int64_t>(std::llround(row + 0.5 - side / 2.0));
		const auto c0 = static_cast<std::int64_t>(std::llround(col + 0.5 - side / 2.0));
		Chip chip;
		chip.chip_id = point.id;
		chip.center = point.coordinate;
		chip.lonlat = to_lonlat(point.coordinate, scene.crs());
		chip.window = scene.clamp(Window{c0, r0, side, side});
		chip.acquisition_date = scene.info().acquisition_date;
		chip.scene_id = point.scene_id.empty() ? scene.scene_id() : point.scene_id;
		chip.resolution_m = res;
		return chip;
	}

	std::vector<Chip> make_chips(const RasterScene &scene, const PointCollection &points, double side_m)
	{
		std::vector<Chip> chips;
		for (const auto &p : points.points)
		{
			auto chip = make_chip(scene, p, side_m);
			if (chip.window.empty())
				throw InputError("point " + p.id + " lies outside the scene");
			chips.push_back(std::move(chip));
		}
		return chips;
	}

	Rgb8 stretch_chip(const RasterScene &scene, const Window &window, const StretchOptions &stretch)
	{
		if (!(stretch.low_pct > 0.0 && stretch.low_pct < stretch.high_pct && stretch.high_pct < 100.0))
			throw InputError("stretch percentiles must satisfy 0 < low < high < 100");
		const auto block = read_window(scene, window);
		const auto n_valid = block.valid.count();
		if (n_valid == 0)
			throw ServiceError(422, "chip window fully nodata");
		std::vector<int> bands = scene.channels() >= 3 ? parse_channel_subset("rgb", scene.channels())
													   : std::vector<int>{0, 0, 0};

		Rgb8 img;
		img.width = window.width;
		img.height = window.height;
		img.pixels.assign(static_cast<std::size_t>(img.width * img.height * 3), 0);
		for (int b = 0; b < 3; ++b)
		{
			const auto &plane = block.channels[static_cast<std::size_t>(bands[b])];
			std::vector<float> v;
			v.reserve(static_cast<std::size_t>(n_valid));
			for (Eigen::Index i = 0; i < plane.rows(); ++i)
				for (Eigen::Index j = 0; j < plane.cols(); ++j)
					if (block.valid(i, j))
						v.push_back(plane(i, j));
			std::sort(v.begin(), v.end());
			const auto n = static_cast<std::int64_t>(v.size());
			const double lo = v[static_cast<std::size_t>(nearest_rank(stretch.low_pct / 100.0, n) - 1)];
			const double hi = v[static_cast<std::size_t>(nearest_rank(stretch.high_pct / 100.0, n) - 1)];
			for (Eigen::Index i = 0; i < plane.rows(); ++i)
				for (Eigen::Index j = 0; j < plane.cols(); ++j)
				{
					if (!block.valid(i, j))
						continue;
					std::uint8_t out = 128;
					if (hi > lo)
						out = static_cast<std::uint8_t>(
							std::clamp(std::lround(255.0 * (plane(i, j) - lo) / (hi - lo)), 0L, 255L));
					img.pixels[static_cast<std::size_t>((i * img.width + j) * 3 + b)] = out;
				}
		}
		return img;
	}

	namespace
	{
		void png_append(png_structp png, png_bytep data, png_size_t length)
		{
			auto *out = static_cast<std::string *>(png_get_io_ptr(png));
			out->append(reinterpret_cast<const char *>(data), length);
		}
		void png_noop_flush(png_structp) {}
	} // namespace

	std::string encode_png(const Rgb8 &image)
	{
		png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
		if (!png)
			throw std::runtime_error("png_create_write_struct failed");
		png_infop info = png_create_info_struct(png);
		std::string out;
		if (!info || setjmp(png_jmpbuf(png)))
		{
			png_destroy_write_struct(&png, &info);
			throw std::runtime_error("PNG encoding failed");
		}
		png_set_write_fn(png, &out, png_append, png_noop_flush);
		png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
					 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
		png_write_info(png, info);
		for (std::int64_t r = 0; r < image.height; ++r)
			png_write_row(png, const_cast<png_bytep>(image.pixels.data() + r * image.width * 3));
		png_write_end(png, nullptr);
		png_destroy_write_struct(&png, &info);
		return out;
	}

	std::string render_chip(const RasterScene &scene, const Chip &chip, const StretchOptions &stretch)
	{
		return encode_png(stretch_chip(scene, chip.window, stretch));
	}

	std::string iso8601_utc(std::chrono::system_clock::time_point t)
	{
		const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
		const auto secs = static_cast<std::time_t>(ms >= 0 ? ms / 1000 : (ms - 999) / 1000);
		const auto frac = ms - static_cast<long long>(secs) * 1000;
		std::tm tm{};
		gmtime_r(&secs, &tm);
		return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:03}Z", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
						   tm.tm_hour, tm.tm_min, tm.tm_sec, frac);
	}

	// ---- ChipPool ------------------------------------------------------------------------

	ChipPool::ChipPool(std::vector<Chip> chips, std::filesystem::path labels_csv, ChipPoolOptions options, Clock clock)
		: chips_(std::move(chips)), labels_csv_(std::move(labels_csv)), options_(std::move(options)),
		  clock_(clock ? std::move(clock) : Clock([] { return std::chrono::system_clock::now(); }))
	{
		if (options_.labels_to_retire < 1)
			throw InputError("labels_to_retire must be >= 1");
		std::sort(chips_.begin(), chips_.end(), [](const Chip &a, const Chip &b) { return a.chip_id < b.chip_id; });
		for (std::size_t i = 0; i < chips_.size(); ++i)
			if (!index_.emplace(chips_[i].chip_id, i).second)
				throw InputError("duplicate chip id " + chips_[i].chip_id);
		state_.resize(chips_.size());
		for (const auto &c : options_.classes)
			class_sums_[c];
		replay();

		fd_ = ::open(labels_csv_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
		if (fd_ < 0)
			throw std::runtime_error("cannot open labels file " + labels_csv_.string());
		struct stat st{};
		if (::fstat(fd_, &st) == 0 && st.st_size == 0)
			append_row(label_csv_columns());
	}

	ChipPool::~ChipPool()
	{
		if (fd_ >= 0)
			::close(fd_);
	}

	void ChipPool::replay()
	{
		if (!std::filesystem::exists(labels_csv_) || std::filesystem::file_size(labels_csv_) == 0)
			return;
		const auto rows = csv::read_file(labels_csv_);
		if (rows.empty())
			return;
		if (rows.front() != label_csv_columns())
			throw InputError("labels file " + labels_csv_.string() + " does not have the expected header");
		const auto ncol = label_csv_columns().size();
		for (std::size_t r = 1; r < rows.size(); ++r)
		{
			const auto &row = rows[r];
			if (row.size() != ncol)
				continue; // torn final line from an interrupted write
			++labels_;
			auto &sums = class_sums_[row[2]];
			++sums.count;
			try
			{
				sums.duration += std::stod(row[11]);
			}
			catch (const std::exception &)
			{
			}
			if (auto it = index_.find(row[0]); it != index_.end())
				state_[it->second].labelers.insert(row[1]);
		}
	}

	const Chip *ChipPool::find(const std::string &chip_id) const
	{
		auto it = index_.find(chip_id);
		return it == index_.end() ? nullptr : &chips_[it->second];
	}

	void ChipPool::expire_stale(std::chrono::system_clock::time_point now)
	{
		for (auto it = holds_.begin(); it != holds_.end();)
		{
			if (now - it->second.served_at > options_.stale_after)
			{
				--state_[index_.at(it->second.chip_id)].outstanding;
				it = holds_.erase(it);
			}
			else
				++it;
		}
	}

	std::optional<Chip> ChipPool::next(const std::string &labeler)
	{
		if (labeler.empty())
			throw ServiceError(400, "labeler id must be non-empty");
		std::lock_guard lock(mutex_);
		const auto now = clock_();
		expire_stale(now);
		if (auto it = holds_.find(labeler); it != holds_.end())
		{
			it->second.served_at = now;
			return chips_[index_.at(it->second.chip_id)];
		}
		std::optional<std::size_t> best;
		int best_remaining = 0;
		for (std::size_t i = 0; i < chips_.size(); ++i)
		{
			const auto &s = state_[i];
			const int remaining = options_.labels_to_retire - static_cast<int>(s.labelers.size()) - s.outstanding;
			if (remaining <= 0 || s.labelers.count(labeler))
				continue;
			// chips_ is sorted by id, so the first chip at the lowest remaining count wins ties.
			if (!best || remaining < best_remaining)
			{
				best = i;
				best_remaining = remaining;
			}
		}
		if (!best)
			return std::nullopt;
		++state_[*best].outstanding;
		holds_[labeler] = Hold{chips_[*best].chip_id, now};
		return chips_[*best];
	}

	void ChipPool::append_row(const std::vector<std::string> &fields)
	{
		const std::string line = csv::join(fields) + "\n";
		for (std::size_t done = 0; done < line.size();)
		{
			const auto n = ::write(fd_, line.data() + done, line.size() - done);
			if (n <= 0)
				throw std::runtime_error("write to labels file failed");
			done += static_cast<std::size_t>(n);
		}
		if (::fsync(fd_) != 0)
			throw std::runtime_error("fsync of labels file failed");
	}

	void ChipPool::submit(const LabelSubmission &label)
	{
		std::lock_guard lock(mutex_);
		const auto it = index_.find(label.chip_id);
		if (it == index_.end())
			throw ServiceError(404, "unknown chip '" + label.chip_id + "'");
		if (label.labeler.empty())
			throw ServiceError(400, "labeler id must be non-empty");
		const auto &classes = options_.classes;
		if (std::find(classes.begin(), classes.end(), label.label_class) == classes.end())
			throw ServiceError(400, "class '" + label.label_class + "' is not one of the configured classes");
		const bool whale = label.label_class == "whale";
		if (whale)
		{
			if (label.confidence != "possible" && label.confidence != "probable" && label.confidence != "definite")
				throw ServiceError(400, "a whale label needs confidence possible, probable or definite");
		}
		else
		{
			if (!label.confidence.empty())
				throw ServiceError(400, "confidence is only allowed for whale labels");
			if (!label.species.empty())
				throw ServiceError(400, "species is only allowed for whale labels");
		}
		auto &state = state_[it->second];
		if (state.labelers.count(label.labeler))
			throw ServiceError(409, "labeler '" + label.labeler + "' already labeled chip '" + label.chip_id + "'");
		const auto hold = holds_.find(label.labeler);
		if (hold == holds_.end() || hold->second.chip_id != label.chip_id)
			throw ServiceError(409, "chip '" + label.chip_id + "' is not outstanding for labeler '" + label.labeler + "'");

		using std::chrono::milliseconds;
		const auto served = std::chrono::time_point_cast<milliseconds>(hold->second.served_at);
		const auto labeled = std::max(served, std::chrono::time_point_cast<milliseconds>(clock_()));
		const double duration = std::chrono::duration<double>(labeled - served).count();
		const auto &chip = chips_[it->second];
		append_row({chip.chip_id, label.labeler, label.label_class, label.species, label.confidence, label.comment,
					chip.lonlat ? fmt::format("{:.8f}", chip.lonlat->lon) : std::string(),
					chip.lonlat ? fmt::format("{:.8f}", chip.lonlat->lat) : std::string(), chip.scene_id,
					iso8601_utc(served), iso8601_utc(labeled), fmt::format("{:.3f}", duration)});

		state.labelers.insert(label.labeler);
		--state.outstanding;
		holds_.erase(hold);
		auto &sums = class_sums_[label.label_class];
		++sums.count;
		sums.duration += std::stod(fmt::format("{:.3f}", duration));
		++labels_;
	}

	Progress ChipPool::progress() const
	{
		std::lock_guard lock(mutex_);
		Progress p;
		p.total = static_cast<std::int64_t>(chips_.size());
		for (const auto &s : state_)
			p.retired += retired(s) ? 1 : 0;
		p.labels = labels_;
		p.outstanding = static_cast<std::int64_t>(holds_.size());
		for (const auto &[cls, sums] : class_sums_)
			p.per_class[cls] = ClassProgress{sums.count, sums.count > 0 ? sums.duration / sums.count : 0.0};
		return p;
	}

	AssignmentSnapshot ChipPool::snapshot() const
	{
		std::lock_guard lock(mutex_);
		AssignmentSnapshot snap;
		for (std::size_t i = 0; i < chips_.size(); ++i)
		{
			snap.labelers[chips_[i].chip_id] = state_[i].labelers;
			if (retired(state_[i]))
				snap.retired.insert(chips_[i].chip_id);
		}
		return snap;
	}

	// ---- HTTP ----------------------------------------------------------------------------

	namespace
	{
		constexpr const char *kPlaceholderPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>Chip labeling</title></head>
<body><p>The labeling frontend is not installed. Start the server with --static pointing at the built bundle.</p>
<p>API: <code>/api/next?labeler=ID</code>, <code>/api/label</code>, <code>/api/progress</code>, <code>/api/classes</code>.</p>
</body></html>
)";

		void send_json(httplib::Response &res, const json &body, int status = 200)
		{
			res.status = status;
			res.set_content(body.dump(), "application/json");
		}

		void send_error(httplib::Response &res, int status, const std::string &message)
		{
			send_json(res, json{{"ok", false}, {"error", message}}, status);
		}

		std::string optional_string(const json &body, const char *key)
		{
			if (!body.contains(key) || body[key].is_null())
				return {};
			if (!body[key].is_string())
				throw ServiceError(400, std::string("field '") + key + "' must be a string");
			return body[key].get<std::string>();
		}
	} // namespace

	ChipServer::ChipServer(ChipPool &pool, RasterScene scene, ChipServerOptions options)
		: pool_(pool), scene_(std::move(scene)), options_(std::move(options)),
		  server_(std::make_unique<httplib::Server>())
	{
		routes();
	}

	ChipServer::~ChipServer() = default;

	std::string ChipServer::chip_png(const std::string &chip_id)
	{
		{
			std::lock_guard lock(png_mutex_);
			if (auto it = png_cache_.find(chip_id); it != png_cache_.end())
				return it->second;
		}
		const Chip *chip = pool_.find(chip_id);
		if (!chip)
			throw ServiceError(404, "unknown chip '" + chip_id + "'");
		auto png = render_chip(scene_, *chip, options_.stretch);
		std::lock_guard lock(png_mutex_);
		return png_cache_.emplace(chip_id, std::move(png)).first->second;
	}

	void ChipServer::routes()
	{
		auto &s = *server_;
		s.set_exception_handler([](const httplib::Request &, httplib::Response &res, std::exception_ptr ep) {
			try
			{
				std::rethrow_exception(ep);
			}
			catch (const ServiceError &e)
			{
				send_error(res, e.status(), e.what());
			}
			catch (const InputError &e)
			{
				send_error(res, 400, e.what());
			}
			catch (const std::exception &e)
			{
				send_error(res, 500, e.what());
			}
		});

		s.Get("/api/next", [this](const httplib::Request &req, httplib::Response &res) {
			const auto labeler = req.get_param_value("labeler");
			const auto chip = pool_.next(labeler);
			if (!chip)
				return send_json(res, json{{"done", true}});
			json body{{"chip_id", chip->chip_id},
					  {"lon", chip->lonlat ? json(chip->lonlat->lon) : json(nullptr)},
					  {"lat", chip->lonlat ? json(chip->lonlat->lat) : json(nullptr)},
					  {"x", chip->center.x},
					  {"y", chip->center.y},
					  {"date", chip->acquisition_date},
					  {"scene_id", chip->scene_id},
					  {"resolution_m", chip->resolution_m},
					  {"width_px", chip->window.width},
					  {"height_px", chip->window.height},
					  {"image_url", "/api/chip/" + chip->chip_id + ".png"}};
			send_json(res, body);
		});

		s.Post("/api/label", [this](const httplib::Request &req, httplib::Response &res) {
			json body;
			try
			{
				body = json::parse(req.body);
			}
			catch (const json::exception &)
			{
				throw ServiceError(400, "request body is not JSON");
			}
			if (!body.is_object())
				throw ServiceError(400, "request body must be a JSON object");
			LabelSubmission l;
			l.chip_id = optional_string(body, "chip_id");
			l.labeler = optional_string(body, "labeler");
			l.label_class = optional_string(body, "class");
			l.species = optional_string(body, "species");
			l.confidence = optional_string(body, "confidence");
			l.comment = optional_string(body, "comment");
			pool_.submit(l);
			send_json(res, json{{"ok", true}});
		});

		s.Get(R"(/api/chip/(.+)\.png)", [this](const httplib::Request &req, httplib::Response &res) {
			res.set_content(chip_png(req.matches[1].str()), "image/png");
		});

		s.Get("/api/progress", [this](const httplib::Request &, httplib::Response &res) {
			const auto p = pool_.progress();
			json per_class = json::object();
			for (const auto &[cls, c] : p.per_class)
				per_class[cls] = json{{"count", c.count}, {"mean_duration_s", c.mean_duration_s}};
			send_json(res, json{{"total", p.total},
								{"retired", p.retired},
								{"labels", p.labels},
								{"outstanding", p.outstanding},
								{"per_class", per_class}});
		});

		s.Get("/api/classes", [this](const httplib::Request &, httplib::Response &res) {
			send_json(res, json{{"classes", pool_.classes()}});
		});

		if (!options_.static_dir.empty())
		{
			if (!s.set_mount_point("/", options_.static_dir.string()))
				throw InputError("static directory not found: " + options_.static_dir.string());
		}
		else
		{
			s.Get("/", [](const httplib::Request &, httplib::Response &res) {
				res.set_content(kPlaceholderPage, "text/html");
			});
		}
	}

	bool ChipServer::bind(const std::string &host, int port)
	{
		if (port == 0)
			port_ = server_->bind_to_any_port(host);
		else
			port_ = server_->bind_to_port(host, port) ? port : -1;
		return port_ > 0;
	}

	void ChipServer::listen() { server_->listen_after_bind(); }

	void ChipServer::stop() { server_->stop(); }
} // namespace whales
