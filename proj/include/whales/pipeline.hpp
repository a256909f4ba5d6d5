#pragma once

#include "whales/landmask.hpp"
#include "whales/points_io.hpp"
#include "whales/raster.hpp"
#include "whales/regions.hpp"
#include "whales/standardize.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace whales
{
	struct PipelineOutputs
	{
		std::filesystem::path points;     // GeoJSON
		std::filesystem::path points_csv; // empty: <points stem>.csv next to the GeoJSON
		std::filesystem::path summary;    // empty: <points stem>.summary.json
		std::filesystem::path anomaly_raster;
		std::filesystem::path mask_raster;
	};

	struct PipelineConfig
	{
		std::filesystem::path scene;
		StandardizationConfig standardization;
		std::string channels = "all";
		int shift_stride = 32;

		ThresholdConfig threshold;

		std::filesystem::path land_mask;
		PolygonRole land_mask_role = PolygonRole::Land;
		double land_buffer_m = 0.0;

		std::int64_t tile_size = 2048;
		int workers = 0;
		double advisory_cutoff_per_km2 = 2.0;
		double review_buffer_m = 50.0;
		// Anomaly tiles are kept in memory up to this many pixels, then spilled to a temporary file.
		std::int64_t memory_limit_px = std::int64_t{1} << 28;

		PipelineOutputs outputs;

		PipelineConfig() { standardization.kernel_size = 51; }

		void validate() const;
	};

	// JSON config; relative paths are taken relative to `base_dir`.
	PipelineConfig parse_pipeline_config(const std::string &json_text, const std::filesystem::path &base_dir = {});
	PipelineConfig load_pipeline_config(const std::filesystem::path &path);

	struct RunSummary
	{
		std::string scene_id;
		std::string crs;
		std::size_t n_points = 0;
		std::size_t n_regions = 0; // before the area filter
		double analyzed_water_km2 = 0.0;
		double points_per_km2 = 0.0;
		double threshold_value_used = 0.0;
		std::optional<double> quantile;
		double runtime_seconds = 0.0;
		int advisory = 0;
		std::string advisory_message;
		double advisory_cutoff_per_km2 = 2.0;
		double review_buffer_m = 50.0;
		double review_area_km2 = 0.0; // union of buffers around the points, within the scene
		std::string method;
		int kernel_size = 0;
		int chunk_size = 0;
		double min_area_m2 = 0.0;
	};

	std::string summary_to_json(const RunSummary &s);

	struct PipelineResult
	{
		PointCollection points;
		RunSummary summary;
	};

	// Runs detection on an open scene; `polygons` may be null. Writes nothing.
	PipelineResult detect(const RasterScene &scene, const PipelineConfig &cfg, const PolygonSet *polygons = nullptr);

	// Opens inputs named in `cfg`, runs detection and writes points, CSV and summary.
	PipelineResult run_pipeline(const PipelineConfig &cfg);

	// Area of the union of discs of `radius_m` around each point, counted on the scene's pixel grid.
	double review_area_km2(const RasterScene &scene, std::span<const InterestingPoint> points, double radius_m);
} // namespace whales
