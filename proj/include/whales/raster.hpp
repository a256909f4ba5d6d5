#pragma once

#include "whales/types.hpp"

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>

namespace whales
{
	struct GeoPoint
	{
		double x = 0.0;
		double y = 0.0;
	};

	// GDAL-ordered affine coefficients:
	//   x = c[0] + col * c[1] + row * c[2]
	//   y = c[3] + col * c[4] + row * c[5]
	// where (row, col) addresses the pixel corner grid.
	struct GeoTransform
	{
		std::array<double, 6> c{0.0, 1.0, 0.0, 0.0, 0.0, -1.0};

		static GeoTransform north_up(double origin_x, double origin_y, double pixel_size)
		{
			return GeoTransform{{origin_x, pixel_size, 0.0, origin_y, 0.0, -pixel_size}};
		}

		double determinant() const { return c[1] * c[5] - c[2] * c[4]; }
		bool invertible() const { return determinant() != 0.0; }
	};

	struct Window
	{
		std::int64_t col_off = 0;
		std::int64_t row_off = 0;
		std::int64_t width = 0;
		std::int64_t height = 0;

		std::int64_t row_end() const { return row_off + height; }
		std::int64_t col_end() const { return col_off + width; }
		bool empty() const { return width <= 0 || height <= 0; }

		friend bool operator==(const Window &, const Window &) = default;
	};

	enum class SampleType
	{
		UInt8,
		UInt16,
		Float32
	};

	// Backend that decodes sample windows. Implementations must tolerate concurrent reads.
	class RasterSource
	{
	public:
		virtual ~RasterSource() = default;
		// Reads a fully in-bounds window of one channel into `out` (resized by the caller).
		virtual void read(int channel, const Window &w, PlaneF &out) const = 0;
	};

	struct SceneInfo
	{
		int channels = 0;
		std::int64_t height = 0;
		std::int64_t width = 0;
		GeoTransform transform;
		std::optional<double> nodata;
		std::string scene_id;
		std::string acquisition_date; // ISO yyyy-mm-dd, empty when unknown
		std::string crs;              // e.g. "EPSG:32619"; recorded verbatim in outputs
		bool geographic = false;      // true when the CRS is in angular units
		SampleType sample_type = SampleType::Float32;
	};

	// Georeferenced multi-channel raster. Cheap to copy; pixels are read on demand.
	class RasterScene
	{
	public:
		RasterScene(SceneInfo info, std::shared_ptr<const RasterSource> source);

		const SceneInfo &info() const { return info_; }
		int channels() const { return info_.channels; }
		std::int64_t height() const { return info_.height; }
		std::int64_t width() const { return info_.width; }
		const GeoTransform &transform() const { return info_.transform; }
		const std::optional<double> &nodata() const { return info_.nodata; }
		const std::string &scene_id() const { return info_.scene_id; }
		const std::string &crs() const { return info_.crs; }

		// Square ground sample distance, sqrt(|det|) of the linear part.
		double resolution() const;

		Window full_window() const { return Window{0, 0, info_.width, info_.height}; }
		bool contains(const Window &w) const;
		Window clamp(const Window &w) const;

		const RasterSource &source() const { return *source_; }

	private:
		SceneInfo info_;
		std::shared_ptr<const RasterSource> source_;
	};

	// Opens a GeoTIFF (.tif/.tiff) or a raw float32 scene described by a JSON sidecar (.json).
	RasterScene open_scene(const std::filesystem::path &path);

	// Block of C x (h + 2 halo) x (w + 2 halo); out-of-scene samples replicate the nearest edge.
	BlockF read_window(const RasterScene &scene, const Window &w, std::int64_t halo = 0);

	// Pixel-center coordinates: (row + 0.5, col + 0.5) through the affine map.
	GeoPoint pixel_to_geo(const GeoTransform &t, double row, double col);
	inline GeoPoint pixel_to_geo(const RasterScene &scene, double row, double col)
	{
		return pixel_to_geo(scene.transform(), row, col);
	}

	// Inverse of pixel_to_geo: returns fractional (row, col) of the pixel whose center maps to `p`.
	std::pair<double, double> geo_to_pixel(const GeoTransform &t, const GeoPoint &p);
	inline std::pair<double, double> geo_to_pixel(const RasterScene &scene, const GeoPoint &p)
	{
		return geo_to_pixel(scene.transform(), p);
	}

	// Rejects scenes whose coordinates are angular; metric radii and areas need a projected CRS.
	void require_metric_crs(const SceneInfo &info);

	// Heuristic for CRS strings that are in degrees.
	bool crs_is_geographic(const std::string &crs);

	// Normalises "urn:ogc:def:crs:EPSG::32619" and "epsg:32619" to "EPSG:32619".
	std::string normalize_crs(const std::string &crs);

	struct GeoTiffOptions
	{
		SampleType sample_type = SampleType::Float32;
		int tile_size = 256;
		bool write_georeference = true;
	};

	// Writes channel-major planes as a tiled, pixel-interleaved GeoTIFF.
	void write_geotiff(const std::filesystem::path &path, const SceneInfo &info,
					   std::span<const PlaneF> channels, const GeoTiffOptions &options = {});

	// Writes a band-sequential little-endian float32 file plus `<path>.json` sidecar.
	// Returns the sidecar path.
	std::filesystem::path write_raw_scene(const std::filesystem::path &data_path, const SceneInfo &info,
										  std::span<const PlaneF> channels);

	// Writes only the sidecar; used when the data file is produced elsewhere.
	std::filesystem::path write_raw_sidecar(const std::filesystem::path &data_path, const SceneInfo &info);
} // namespace whales
