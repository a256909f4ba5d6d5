#include "whales/raster.hpp"

#include "raster_sources.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace whales
{
	RasterScene::RasterScene(SceneInfo info, std::shared_ptr<const RasterSource> source)
		: info_(std::move(info)), source_(std::move(source))
	{
		if (info_.channels < 1 || info_.height < 1 || info_.width < 1)
			throw InputError("raster must have at least one channel, row and column");
		if (!info_.transform.invertible())
			throw InputError("missing georeferencing: geotransform is singular");
		if (!source_)
			throw InputError("raster scene has no pixel source");
	}

	double RasterScene::resolution() const
	{
		return std::sqrt(std::abs(info_.transform.determinant()));
	}

	bool RasterScene::contains(const Window &w) const
	{
		return !w.empty() && w.col_off >= 0 && w.row_off >= 0 && w.col_end() <= info_.width &&
			   w.row_end() <= info_.height;
	}

	Window RasterScene::clamp(const Window &w) const
	{
		const auto c0 = std::clamp<std::int64_t>(w.col_off, 0, info_.width);
		const auto r0 = std::clamp<std::int64_t>(w.row_off, 0, info_.height);
		const auto c1 = std::clamp<std::int64_t>(w.col_end(), 0, info_.width);
		const auto r1 = std::clamp<std::int64_t>(w.row_end(), 0, info_.height);
		return Window{c0, r0, std::max<std::int64_t>(c1 - c0, 0), std::max<std::int64_t>(r1 - r0, 0)};
	}

	RasterScene open_scene(const std::filesystem::path &path)
	{
		if (!std::filesystem::exists(path))
			throw InputError("raster not found: " + path.string());
		auto ext = path.extension().string();
		std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
		if (ext == ".json")
			return detail::open_raw_scene(path);
		return detail::open_geotiff(path);
	}

	BlockF read_window(const RasterScene &scene, const Window &w, std::int64_t halo)
	{
		if (!scene.contains(w))
			throw InputError("window is not contained in the scene");
		if (halo < 0)
			throw InputError("halo must be non-negative");

		const Window wanted{w.col_off - halo, w.row_off - halo, w.width + 2 * halo, w.height + 2 * halo};
		const Window core = scene.clamp(wanted);

		// Replicate padding: every requested row/col maps onto the nearest in-scene sample.
		std::vector<Eigen::Index> row_idx(static_cast<std::size_t>(wanted.height));
		std::vector<Eigen::Index> col_idx(static_cast<std::size_t>(wanted.width));
		for (std::int64_t r = 0; r < wanted.height; ++r)
			row_idx[r] = std::clamp<std::int64_t>(wanted.row_off + r, core.row_off, core.row_end() - 1) - core.row_off;
		for (std::int64_t c = 0; c < wanted.width; ++c)
			col_idx[c] = std::clamp<std::int64_t>(wanted.col_off + c, core.col_off, core.col_end() - 1) - core.col_off;

		const bool identity = halo == 0;
		BlockF out;
		out.channels.reserve(scene.channels());
		Mask core_valid = Mask::Constant(core.height, core.width, true);
		PlaneF buffer(core.height, core.width);
		for (int ch = 0; ch < scene.channels(); ++ch)
		{
			scene.source().read(ch, core, buffer);
			if (const auto &nd = scene.nodata())
			{
				const float ndv = static_cast<float>(*nd);
				core_valid = core_valid && (buffer != ndv);
			}
			core_valid = core_valid && buffer.isFinite();
			out.channels.push_back(identity ? buffer : PlaneF(buffer(row_idx, col_idx)));
		}
		out.valid = identity ? core_valid : Mask(core_valid(row_idx, col_idx));
		return out;
	}

	GeoPoint pixel_to_geo(const GeoTransform &t, double row, double col)
	{
		const double px = col + 0.5;
		const double py = row + 0.5;
		return GeoPoint{t.c[0] + px * t.c[1] + py * t.c[2], t.c[3] + px * t.c[4] + py * t.c[5]};
	}

	std::pair<double, double> geo_to_pixel(const GeoTransform &t, const GeoPoint &p)
	{
		const double det = t.determinant();
		const double dx = p.x - t.c[0];
		const double dy = p.y - t.c[3];
		const double px = (t.c[5] * dx - t.c[2] * dy) / det;
		const double py = (-t.c[4] * dx + t.c[1] * dy) / det;
		return {py - 0.5, px - 0.5};
	}

	std::string normalize_crs(const std::string &crs)
	{
		std::string upper;
		upper.reserve(crs.size());
		for (unsigned char ch : crs)
			upper.push_back(static_cast<char>(std::toupper(ch)));
		const auto pos = upper.rfind("EPSG");
		if (pos == std::string::npos)
			return crs;
		// Code is the trailing run of digits.
		auto end = upper.size();
		auto begin = end;
		while (begin > pos && std::isdigit(static_cast<unsigned char>(upper[begin - 1])))
			--begin;
		if (begin == end)
			return crs;
		return "EPSG:" + upper.substr(begin, end - begin);
	}

	bool crs_is_geographic(const std::string &crs)
	{
		const auto n = normalize_crs(crs);
		static const char *const angular[] = {"EPSG:4326", "EPSG:4269", "EPSG:4267", "EPSG:4258", "EPSG:4979"};
		for (const char *code : angular)
			if (n == code)
				return true;
		std::string upper;
		for (unsigned char ch : crs)
			upper.push_back(static_cast<char>(std::toupper(ch)));
		return upper.find("CRS84") != std::string::npos || upper.find("GEOGCS") == 0 ||
			   upper.find("LONGLAT") != std::string::npos;
	}

	void require_metric_crs(const SceneInfo &info)
	{
		if (info.geographic || crs_is_geographic(info.crs))
			throw InputError("scene CRS '" + info.crs +
							 "' is geographic (degrees); reproject to a metric CRS such as UTM first");
	}
} // namespace whales
