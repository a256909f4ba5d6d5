#include "whales/pipeline.hpp"

#include "whales/parallel.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace whales
{
	using nlohmann::json;

	void PipelineConfig::validate() const
	{
		standardization.validate();
		threshold.validate();
		if (tile_size < 16)
			throw InputError("tile size must be >= 16");
		if (shift_stride < 1)
			throw InputError("shift stride must be >= 1");
		if (land_buffer_m < 0.0)
			throw InputError("land buffer must be >= 0");
		if (advisory_cutoff_per_km2 < 0.0)
			throw InputError("advisory cutoff must be >= 0");
		if (review_buffer_m < 0.0)
			throw InputError("review buffer must be >= 0");
		if (!scene.empty() && !std::filesystem::exists(scene))
			throw InputError("scene not found: " + scene.string());
		if (!land_mask.empty() && !std::filesystem::exists(land_mask))
			throw InputError("land mask not found: " + land_mask.string());
	}

	namespace
	{
		std::filesystem::path resolve(const std::filesystem::path &base, const std::string &p)
		{
			if (p.empty())
				return {};
			std::filesystem::path path(p);
			return path.is_relative() && !base.empty() ? base / path : path;
		}
	} // namespace

	PipelineConfig parse_pipeline_config(const std::string &text, const std::filesystem::path &base)
	{
		PipelineConfig cfg;
		try
		{
			const auto j = json::parse(text);
			if (j.contains("scene"))
				cfg.scene = resolve(base, j["scene"].get<std::string>());

			if (j.contains("standardization"))
			{
				const auto &s = j["standardization"];
				auto &st = cfg.standardization;
				if (s.contains("method"))
					st.method = parse_method(s["method"].get<std::string>());
				st.kernel_size = s.value("kernel_size", st.kernel_size);
				st.chunk_size = s.value("chunk_size", st.chunk_size);
				st.epsilon = s.value("epsilon", st.epsilon);
				cfg.shift_stride = s.value("shift_stride", cfg.shift_stride);
				if (s.contains("shift"))
				{
					const auto &sh = s["shift"];
					if (sh.is_array())
					{
						st.shift = ShiftMode::Explicit;
						st.shift_values = sh.get<std::vector<double>>();
					}
					else if (sh.is_number())
					{
						st.shift = ShiftMode::Explicit;
						st.shift_values = {sh.get<double>()};
					}
					else if (sh == "none")
						st.shift = ShiftMode::None;
					else if (sh == "global_mean")
						st.shift = ShiftMode::GlobalChannelMean;
					else
						throw InputError("shift must be \"global_mean\", \"none\", a number or a list");
				}
			}
			if (j.contains("channels"))
			{
				if (j["channels"].is_array())
					cfg.standardization.channel_subset = j["channels"].get<std::vector<int>>();
				else
					cfg.channels = j["channels"].get<std::string>();
			}
			if (j.contains("threshold"))
			{
				const auto &t = j["threshold"];
				const auto mode = t.value("mode", std::string("quantile"));
				if (mode == "quantile")
					cfg.threshold.mode = ThresholdMode::Quantile;
				else if (mode == "fixed_value" || mode == "fixed")
					cfg.threshold.mode = ThresholdMode::FixedValue;
				else
					throw InputError("threshold mode must be quantile or fixed_value");
				cfg.threshold.value = t.value("value", cfg.threshold.value);
				cfg.threshold.min_area_m2 = t.value("min_area_m2", cfg.threshold.min_area_m2);
			}
			if (j.contains("land_mask"))
			{
				const auto &m = j["land_mask"];
				if (m.is_string())
					cfg.land_mask = resolve(base, m.get<std::string>());
				else
				{
					cfg.land_mask = resolve(base, m.value("path", std::string()));
					cfg.land_mask_role = parse_polygon_role(m.value("role", std::string("land")));
					cfg.land_buffer_m = m.value("buffer_m", cfg.land_buffer_m);
				}
			}
			cfg.tile_size = j.value("tile_size", cfg.tile_size);
			cfg.workers = j.value("workers", cfg.workers);
			cfg.advisory_cutoff_per_km2 = j.value("advisory_cutoff_per_km2", cfg.advisory_cutoff_per_km2);
			cfg.review_buffer_m = j.value("review_buffer_m", cfg.review_buffer_m);
			cfg.memory_limit_px = j.value("memory_limit_px", cfg.memory_limit_px);
			if (j.contains("outputs"))
			{
				const auto &o = j["outputs"];
				cfg.outputs.points = resolve(base, o.value("points", std::string()));
				cfg.outputs.points_csv = resolve(base, o.value("points_csv", std::string()));
				cfg.outputs.summary = resolve(base, o.value("summary", std::string()));
				cfg.outputs.anomaly_raster = resolve(base, o.value("anomaly_raster", std::string()));
				cfg.outputs.mask_raster = resolve(base, o.value("mask_raster", std::string()));
			}
		}
		catch (const json::exception &e)
		{
			throw InputError(std::string("malformed config: ") + e.what());
		}
		return cfg;
	}

	PipelineConfig load_pipeline_config(const std::filesystem::path &path)
	{
		std::ifstream in(path);
		if (!in)
			throw InputError("cannot read config " + path.string());
		std::stringstream ss;
		ss << in.rdbuf();
		return parse_pipeline_config(ss.str(), path.parent_path());
	}

	std::string summary_to_json(const RunSummary &s)
	{
		nlohmann::ordered_json j;
		j["n_points"] = s.n_points;
		j["analyzed_water_km2"] = s.analyzed_water_km2;
		j["points_per_km2"] = s.points_per_km2;
		j["threshold_value_used"] = s.threshold_value_used;
		j["quantile"] = s.quantile ? json(*s.quantile) : json(nullptr);
		j["runtime_seconds"] = s.runtime_seconds;
		j["advisory"] = s.advisory;
		j["advisory_message"] = s.advisory_message;
		j["advisory_cutoff_per_km2"] = s.advisory_cutoff_per_km2;
		j["n_regions_before_area_filter"] = s.n_regions;
		j["review_buffer_m"] = s.review_buffer_m;
		j["review_area_km2"] = s.review_area_km2;
		j["review_fraction_of_water"] = s.analyzed_water_km2 > 0.0 ? s.review_area_km2 / s.analyzed_water_km2 : 0.0;
		j["scene_id"] = s.scene_id;
		j["crs"] = s.crs;
		j["method"] = s.method;
		j["kernel_size"] = s.kernel_size;
		j["chunk_size"] = s.chunk_size;
		j["min_area_m2"] = s.min_area_m2;
		return j.dump(2) + "\n";
	}

	namespace
	{
		struct TileGrid
		{
			std::int64_t height, width, size;
			std::int64_t down, across;

			TileGrid(std::int64_t h, std::int64_t w, std::int64_t s)
				: height(h), width(w), size(s), down((h + s - 1) / s), across((w + s - 1) / s)
			{
			}
			std::size_t count() const { return static_cast<std::size_t>(down * across); }
			Window window(std::size_t i) const
			{
				const auto tr = static_cast<std::int64_t>(i) / across, tc = static_cast<std::int64_t>(i) % across;
				const auto r0 = tr * size, c0 = tc * size;
				return Window{c0, r0, std::min(size, width - c0), std::min(size, height - r0)};
			}
		};

		// Anomaly values per tile, NaN where the pixel is excluded (nodata or land).
		class AnomalyStore
		{
		public:
			AnomalyStore(const TileGrid &grid, bool spill) : grid_(grid)
			{
				if (!spill)
				{
					tiles_.resize(grid.count());
					return;
				}
				std::int64_t off = 0;
				for (std::size_t i = 0; i < grid.count(); ++i)
				{
					offsets_.push_back(off);
					const auto w = grid.window(i);
					off += w.width * w.height * static_cast<std::int64_t>(sizeof(float));
				}
				auto tmpl = (std::filesystem::temp_directory_path() / "whales-anomaly-XXXXXX").string();
				fd_ = ::mkstemp(tmpl.data());
				if (fd_ < 0)
					throw std::runtime_error("cannot create spill file in " + std::filesystem::temp_directory_path().string());
				::unlink(tmpl.c_str());
			}
			~AnomalyStore()
			{
				if (fd_ >= 0)
					::close(fd_);
			}
			AnomalyStore(const AnomalyStore &) = delete;
			AnomalyStore &operator=(const AnomalyStore &) = delete;

			void put(std::size_t i, PlaneF values)
			{
				if (fd_ < 0)
				{
					tiles_[i] = std::move(values);
					return;
				}
				const auto bytes = static_cast<std::size_t>(values.size()) * sizeof(float);
				const auto *p = reinterpret_cast<const char *>(values.data());
				for (std::size_t done = 0; done < bytes;)
				{
					const auto n = ::pwrite(fd_, p + done, bytes - done, offsets_[i] + static_cast<off_t>(done));
					if (n <= 0)
						throw std::runtime_error("write to anomaly spill file failed");
					done += static_cast<std::size_t>(n);
				}
			}

			PlaneF get(std::size_t i) const
			{
				if (fd_ < 0)
					return tiles_[i];
				const auto w = grid_.window(i);
				PlaneF out(w.height, w.width);
				const auto bytes = static_cast<std::size_t>(out.size()) * sizeof(float);
				auto *p = reinterpret_cast<char *>(out.data());
				for (std::size_t done = 0; done < bytes;)
				{
					const auto n = ::pread(fd_, p + done, bytes - done, offsets_[i] + static_cast<off_t>(done));
					if (n <= 0)
						throw std::runtime_error("read from anomaly spill file failed");
					done += static_cast<std::size_t>(n);
				}
				return out;
			}

		private:
			TileGrid grid_;
			std::vector<PlaneF> tiles_;
			std::vector<std::int64_t> offsets_;
			int fd_ = -1;
		};

		Block<float> select_channels(BlockF block, std::span<const int> subset)
		{
			Block<float> out;
			out.valid = std::move(block.valid);
			for (int c : subset)
				out.channels.push_back(std::move(block.channels[static_cast<std::size_t>(c)]));
			return out;
		}

		StandardizationConfig subset_config(StandardizationConfig st, std::span<const int> subset)
		{
			if (st.shift == ShiftMode::Explicit && st.shift_values.size() > 1)
			{
				std::vector<double> v;
				for (int c : subset)
				{
					if (static_cast<std::size_t>(c) >= st.shift_values.size())
						throw InputError("explicit shift needs one value per scene channel");
					v.push_back(st.shift_values[static_cast<std::size_t>(c)]);
				}
				st.shift_values = std::move(v);
			}
			st.channel_subset.clear();
			return st;
		}

		PlaneF assemble(const AnomalyStore &store, const TileGrid &grid)
		{
			PlaneF full(grid.height, grid.width);
			for (std::size_t i = 0; i < grid.count(); ++i)
			{
				const auto w = grid.window(i);
				full.block(w.row_off, w.col_off, w.height, w.width) = store.get(i);
			}
			return full;
		}
	} // namespace

	double review_area_km2(const RasterScene &scene, std::span<const InterestingPoint> points, double radius_m)
	{
		const double res = scene.resolution();
		const double r = radius_m / res;
		std::map<std::int64_t, std::vector<std::pair<std::int64_t, std::int64_t>>> rows;
		for (const auto &p : points)
		{
			const auto i0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(p.row - r)));
			const auto i1 = std::min<std::int64_t>(scene.height() - 1, static_cast<std::int64_t>(std::floor(p.row + r)));
			for (auto i = i0; i <= i1; ++i)
			{
				const double dy = static_cast<double>(i) - p.row;
				const double half = std::sqrt(std::max(0.0, r * r - dy * dy));
				const auto j0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(p.col - half)));
				const auto j1 = std::min<std::int64_t>(scene.width() - 1, static_cast<std::int64_t>(std::floor(p.col + half)));
				if (j0 <= j1)
					rows[i].emplace_back(j0, j1);
			}
		}
		std::int64_t pixels = 0;
		for (auto &[row, spans] : rows)
		{
			std::sort(spans.begin(), spans.end());
			auto cur = spans.front();
			for (std::size_t s = 1; s < spans.size(); ++s)
			{
				if (spans[s].first <= cur.second + 1)
					cur.second = std::max(cur.second, spans[s].second);
				else
				{
					pixels += cur.second - cur.first + 1;
					cur = spans[s];
				}
			}
			pixels += cur.second - cur.first + 1;
		}
		return static_cast<double>(pixels) * res * res / 1e6;
	}

	PipelineResult detect(const RasterScene &scene, const PipelineConfig &cfg_in, const PolygonSet *polygons)
	{
		const auto started = std::chrono::steady_clock::now();
		cfg_in.validate();
		require_metric_crs(scene.info());

		const auto subset = cfg_in.standardization.channel_subset.empty()
								? parse_channel_subset(cfg_in.channels, scene.channels())
								: cfg_in.standardization.channel_subset;
		for (int c : subset)
			if (c < 0 || c >= scene.channels())
				throw InputError("channel index " + std::to_string(c) + " out of range");
		const auto st = subset_config(cfg_in.standardization, subset);
		const bool chunked = st.method == StandardizationMethod::Chunked;

		// Chunks are anchored at each tile's origin, so tiles must start on chunk boundaries.
		std::int64_t tile = cfg_in.tile_size;
		if (chunked)
			tile = (tile + st.chunk_size - 1) / st.chunk_size * st.chunk_size;
		const TileGrid grid(scene.height(), scene.width(), tile);
		const int workers = resolve_workers(cfg_in.workers);

		std::vector<double> means;
		if (!chunked && st.shift == ShiftMode::GlobalChannelMean)
		{
			std::vector<ChannelSums> partial(grid.count());
			parallel_for(grid.count(), workers, [&](std::size_t i) {
				const auto w = grid.window(i);
				const auto block = select_channels(read_window(scene, w), subset);
				partial[i] = channel_sums(block, cfg_in.shift_stride, w.row_off, w.col_off);
			});
			ChannelSums total = partial.front();
			for (std::size_t i = 1; i < partial.size(); ++i)
				total.merge(partial[i]);
			means = total.means();
		}

		const std::int64_t total_px = scene.height() * scene.width();
		AnomalyStore store(grid, total_px > cfg_in.memory_limit_px);
		std::vector<std::int64_t> water_px(grid.count(), 0);
		parallel_for(grid.count(), workers, [&](std::size_t i) {
			const auto w = grid.window(i);
			const auto halo = chunked ? 0 : st.halo();
			const auto block = select_channels(read_window(scene, w, halo), subset);
			const auto d = chunked ? chunked_standardize(block, st) : rolling_standardize_padded(block, st, means);
			std::vector<int> all(d.channels.size());
			for (std::size_t c = 0; c < all.size(); ++c)
				all[c] = static_cast<int>(c);
			auto a = aggregate_abs_deviation(d, all);
			Mask keep = a.valid;
			if (polygons)
				keep = keep && rasterize_water_mask(*polygons, scene, w, cfg_in.land_buffer_m);
			water_px[i] = keep.count();
			store.put(i, keep.select(a.values, std::numeric_limits<float>::quiet_NaN()));
		});

		std::int64_t water = 0;
		for (auto n : water_px)
			water += n;
		const double res = scene.resolution();
		const double water_km2 = static_cast<double>(water) * res * res / 1e6;
		if (water == 0)
			throw InputError("empty water area");

		float threshold = static_cast<float>(cfg_in.threshold.value);
		if (cfg_in.threshold.mode == ThresholdMode::Quantile)
		{
			const ValueSource source = [&](QuantilePass &pass) {
				std::vector<QuantilePass> partial(grid.count(), pass);
				parallel_for(grid.count(), workers, [&](std::size_t i) {
					const auto values = store.get(i);
					std::vector<float> kept;
					kept.reserve(static_cast<std::size_t>(water_px[i]));
					for (Eigen::Index p = 0; p < values.size(); ++p)
						if (!std::isnan(values.data()[p]))
							kept.push_back(values.data()[p]);
					partial[i].add(kept);
				});
				for (const auto &p : partial)
					pass.merge(p);
			};
			threshold = streaming_quantile(source, cfg_in.threshold.value);
		}

		TiledComponentBuilder builder(scene.height(), scene.width(), tile);
		parallel_for(grid.count(), workers, [&](std::size_t i) {
			const auto w = grid.window(i);
			const auto values = store.get(i);
			const Mask mask = values > threshold; // NaN compares false
			builder.add_tile(w.row_off / tile, w.col_off / tile, mask, values);
		});
		const auto components = builder.finish();
		const auto regions = measure_regions(components, res, scene.transform());
		PipelineResult result;
		result.points.crs = scene.crs();
		result.points.points = filter_and_extract_points(regions, cfg_in.threshold, scene.scene_id());

		if (!cfg_in.outputs.anomaly_raster.empty() || !cfg_in.outputs.mask_raster.empty())
		{
			const PlaneF full = assemble(store, grid);
			SceneInfo info = scene.info();
			info.channels = 1;
			info.nodata.reset();
			if (!cfg_in.outputs.anomaly_raster.empty())
			{
				GeoTiffOptions o;
				o.sample_type = SampleType::Float32;
				write_geotiff(cfg_in.outputs.anomaly_raster, info, std::span<const PlaneF>(&full, 1), o);
			}
			if (!cfg_in.outputs.mask_raster.empty())
			{
				const PlaneF m = (full > threshold).cast<float>();
				GeoTiffOptions o;
				o.sample_type = SampleType::UInt8;
				write_geotiff(cfg_in.outputs.mask_raster, info, std::span<const PlaneF>(&m, 1), o);
			}
		}

		auto &s = result.summary;
		s.scene_id = scene.scene_id();
		s.crs = scene.crs();
		s.n_points = result.points.points.size();
		s.n_regions = regions.size();
		s.analyzed_water_km2 = water_km2;
		s.points_per_km2 = points_per_km2(s.n_points, water_km2);
		s.threshold_value_used = threshold;
		if (cfg_in.threshold.mode == ThresholdMode::Quantile)
			s.quantile = cfg_in.threshold.value;
		s.advisory_cutoff_per_km2 = cfg_in.advisory_cutoff_per_km2;
		if (s.points_per_km2 > cfg_in.advisory_cutoff_per_km2)
		{
			s.advisory = 1;
			s.advisory_message = fmt::format(
				"{:.3f} points/km2 exceeds the {:.3f} cutoff; the scene is likely whitecap-contaminated, "
				"consider a higher quantile or a larger kernel",
				s.points_per_km2, cfg_in.advisory_cutoff_per_km2);
		}
		s.review_buffer_m = cfg_in.review_buffer_m;
		s.review_area_km2 = review_area_km2(scene, result.points.points, cfg_in.review_buffer_m);
		s.method = to_string(st.method);
		s.kernel_size = st.kernel_size;
		s.chunk_size = st.chunk_size;
		s.min_area_m2 = cfg_in.threshold.min_area_m2;
		s.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
		return result;
	}

	PipelineResult run_pipeline(const PipelineConfig &cfg)
	{
		if (cfg.scene.empty())
			throw InputError("no scene given");
		if (cfg.outputs.points.empty())
			throw InputError("no output path given");
		cfg.validate();
		const auto scene = open_scene(cfg.scene);
		std::optional<PolygonSet> polys;
		if (!cfg.land_mask.empty())
			polys = load_polygons(cfg.land_mask, cfg.land_mask_role);
		auto result = detect(scene, cfg, polys ? &*polys : nullptr);

		const auto &out = cfg.outputs.points;
		const auto sibling = [&](const std::string &suffix) {
			auto p = out;
			return p.replace_filename(out.stem().string() + suffix);
		};
		write_points_geojson(out, result.points);
		write_points_csv(cfg.outputs.points_csv.empty() ? sibling(".csv") : cfg.outputs.points_csv, result.points);
		const auto summary_path = cfg.outputs.summary.empty() ? sibling(".summary.json") : cfg.outputs.summary;
		std::ofstream summary(summary_path, std::ios::binary);
		if (!summary)
			throw std::runtime_error("cannot write " + summary_path.string());
		summary << summary_to_json(result.summary);
		return result;
	}
} // namespace whales
