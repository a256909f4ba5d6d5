#pragma once

#include "whales/raster.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace whales
{
	// Gaussian-profile bright target: value += amplitude_sigma * channel_sigma * exp(-d^2 / (2 sigma_px^2)).
	// (row, col) is in pixel-centre coordinates.
	struct BlobSpec
	{
		double row = 0.0;
		double col = 0.0;
		double amplitude_sigma = 10.0;
		double sigma_px = 3.0;
	};

	struct ChannelNoise
	{
		double mean = 400.0;
		double sigma = 4.0;
	};

	struct SyntheticSceneSpec
	{
		std::int64_t width = 1000;
		std::int64_t height = 1000;
		double resolution = 0.3;
		GeoPoint origin{500000.0, 4640000.0}; // top-left corner
		std::string crs = "EPSG:32619";
		std::string scene_id = "synthetic";
		std::string acquisition_date = "2021-04-24";
		std::vector<ChannelNoise> channels{{420.0, 4.0}, {510.0, 5.0}, {380.0, 4.0}};
		std::uint64_t seed = 1;
		SampleType sample_type = SampleType::Float32;

		std::vector<BlobSpec> blobs;

		struct RandomBlobs
		{
			int count = 0;
			double amplitude_sigma = 10.0;
			double sigma_px = 3.0;
			double margin_px = 40.0;
			double min_separation_px = 60.0;
		} random_blobs;

		// Breaking-wave speckle: bright patches that are not part of the truth set.
		struct Whitecaps
		{
			double density_per_km2 = 0.0;
			double amplitude_min_sigma = 8.0;
			double amplitude_max_sigma = 14.0;
			double sigma_min_px = 2.0;
			double sigma_max_px = 3.5;
		} whitecaps;

		double area_km2() const { return static_cast<double>(width) * height * resolution * resolution / 1e6; }
		void validate() const;
	};

	SyntheticSceneSpec parse_synth_spec(const std::string &json_text);
	SyntheticSceneSpec load_synth_spec(const std::filesystem::path &path);

	struct SyntheticScene
	{
		SceneInfo info;
		std::vector<PlaneF> channels;
		std::vector<BlobSpec> blobs;     // fixed plus randomly placed targets (the truth set)
		std::vector<BlobSpec> whitecaps; // distractors
	};

	SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec &spec);

	// Truth CSV columns: id, x, y, row, col, amplitude_sigma, sigma_px, confidence, species.
	void write_truth_csv(const std::filesystem::path &path, const SyntheticScene &scene);

	void write_synthetic_scene(const SyntheticScene &scene, const std::filesystem::path &raster,
							   const std::filesystem::path &truth_csv);
} // namespace whales
