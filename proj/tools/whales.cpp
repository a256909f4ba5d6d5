#include "whales/chip_service.hpp"
#include "whales/evaluate.hpp"
#include "whales/pipeline.hpp"
#include "whales/points_io.hpp"
#include "whales/standardize.hpp"
#include "whales/synth.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <csignal>
#include <iostream>
#include <optional>

namespace
{
	whales::ChipServer *g_server = nullptr;

	void on_signal(int)
	{
		if (g_server)
			g_server->stop();
	}

	struct DetectArgs
	{
		std::string scene, config, out, csv, summary, land_mask, land_mask_role, method, channels;
		std::string anomaly_raster, mask_raster;
		std::optional<double> quantile, threshold, min_area, land_buffer, cutoff;
		std::optional<int> kernel, chunk, workers;
		std::optional<std::int64_t> tile;
	};

	int run_detect(const DetectArgs &a)
	{
		auto cfg = a.config.empty() ? whales::PipelineConfig{} : whales::load_pipeline_config(a.config);
		if (!a.scene.empty())
			cfg.scene = a.scene;
		if (!a.out.empty())
			cfg.outputs.points = a.out;
		if (!a.csv.empty())
			cfg.outputs.points_csv = a.csv;
		if (!a.summary.empty())
			cfg.outputs.summary = a.summary;
		if (!a.anomaly_raster.empty())
			cfg.outputs.anomaly_raster = a.anomaly_raster;
		if (!a.mask_raster.empty())
			cfg.outputs.mask_raster = a.mask_raster;
		if (!a.land_mask.empty())
			cfg.land_mask = a.land_mask;
		if (!a.land_mask_role.empty())
			cfg.land_mask_role = whales::parse_polygon_role(a.land_mask_role);
		if (a.land_buffer)
			cfg.land_buffer_m = *a.land_buffer;
		if (!a.method.empty())
			cfg.standardization.method = whales::parse_method(a.method);
		if (!a.channels.empty())
		{
			cfg.channels = a.channels;
			cfg.standardization.channel_subset.clear();
		}
		if (a.kernel)
			cfg.standardization.kernel_size = *a.kernel;
		if (a.chunk)
			cfg.standardization.chunk_size = *a.chunk;
		if (a.quantile && a.threshold)
			throw whales::InputError("--quantile and --threshold are mutually exclusive");
		if (a.quantile)
		{
			cfg.threshold.mode = whales::ThresholdMode::Quantile;
			cfg.threshold.value = *a.quantile;
		}
		if (a.threshold)
		{
			cfg.threshold.mode = whales::ThresholdMode::FixedValue;
			cfg.threshold.value = *a.threshold;
		}
		if (a.min_area)
			cfg.threshold.min_area_m2 = *a.min_area;
		if (a.cutoff)
			cfg.advisory_cutoff_per_km2 = *a.cutoff;
		if (a.workers)
			cfg.workers = *a.workers;
		if (a.tile)
			cfg.tile_size = *a.tile;

		const auto result = whales::run_pipeline(cfg);
		const auto &s = result.summary;
		std::cout << fmt::format("{} points over {:.4f} km2 of water ({:.3f} per km2), threshold {:.6g}, {:.2f} s\n",
								 s.n_points, s.analyzed_water_km2, s.points_per_km2, s.threshold_value_used,
								 s.runtime_seconds);
		if (s.advisory)
			std::cerr << "warning: " << s.advisory_message << "\n";
		return 0;
	}

	int run_evaluate(const std::string &points_path, const std::string &truth, double radius, std::string scene_name,
					 const std::string &report_csv, const std::vector<std::string> &counts)
	{
		std::vector<whales::EvalReport> reports;
		if (!points_path.empty())
		{
			if (truth.empty())
				throw whales::InputError("--truth is required with --points");
			const auto points = whales::read_points_geojson(points_path);
			const auto annotations = whales::load_annotations(truth, points.crs);
			auto report = whales::match_points(std::span<const whales::InterestingPoint>(points.points),
											   annotations, radius);
			if (scene_name.empty())
				scene_name = points.points.empty() ? std::string("scene") : points.points.front().scene_id;
			report.scene = scene_name;
			reports.push_back(std::move(report));
		}
		// NAME:ANNOTATED:DETECTED[:FP]
		for (const auto &spec : counts)
		{
			std::vector<std::string> parts;
			std::size_t start = 0;
			for (std::size_t p; (p = spec.find(':', start)) != std::string::npos; start = p + 1)
				parts.push_back(spec.substr(start, p - start));
			parts.push_back(spec.substr(start));
			if (parts.size() < 3 || parts.size() > 4)
				throw whales::InputError("--counts expects NAME:ANNOTATED:DETECTED[:FP], got '" + spec + "'");
			reports.push_back(whales::report_from_counts(parts[0], std::stoi(parts[1]), std::stoi(parts[2]),
														 parts.size() == 4 ? std::stoi(parts[3]) : 0));
		}
		if (reports.empty())
			throw whales::InputError("nothing to evaluate: give --points/--truth or --counts");
		std::cout << whales::recall_table(reports);
		if (!report_csv.empty())
			whales::write_report_csv(report_csv, reports);
		return 0;
	}

	int run_stability(const std::string &out, int trials, const std::vector<double> &ratios, double mean,
					  std::uint64_t seed)
	{
		whales::StabilityOptions opts;
		opts.mean = mean;
		opts.seed = seed;
		const auto rows = whales::stability_experiment(ratios, trials, opts);
		whales::write_stability_csv(out, rows);
		std::cout << fmt::format("{:>8}  {:>12}  {:>12}\n", "ratio", "naive", "shifted");
		for (const auto &r : rows)
			std::cout << fmt::format("{:>8.0e}  {:>12.4e}  {:>12.4e}\n", r.ratio, r.naive_mae, r.shifted_mae);
		return 0;
	}

	int run_serve(const std::string &points_path, const std::string &scene_path, const std::string &labels,
				  const std::string &host, int port, const std::string &classes, const std::string &static_dir,
				  double chip_m)
	{
		const auto scene = whales::open_scene(scene_path);
		whales::require_metric_crs(scene.info());
		const auto points = whales::read_points_geojson(points_path);
		whales::ChipPoolOptions opts;
		if (!classes.empty())
			opts.classes = whales::load_label_classes(classes);
		whales::ChipPool pool(whales::make_chips(scene, points, chip_m), labels, opts);
		whales::ChipServerOptions sopts;
		sopts.static_dir = static_dir;
		whales::ChipServer server(pool, scene, sopts);
		if (!server.bind(host, port))
			throw std::runtime_error(fmt::format("cannot bind {}:{}", host, port));
		g_server = &server;
		std::signal(SIGINT, on_signal);
		std::signal(SIGTERM, on_signal);
		const auto p = pool.progress();
		std::cerr << fmt::format("serving {} chips ({} retired) on http://{}:{}/\n", p.total, p.retired, host,
								 server.port());
		server.listen();
		g_server = nullptr;
		return 0;
	}
} // namespace

int main(int argc, char **argv)
{
	CLI::App app{"Anomaly-based whale candidate detection for VHR satellite scenes"};
	app.require_subcommand(1);

	DetectArgs d;
	auto *detect = app.add_subcommand("detect", "Detect interesting points in a scene");
	detect->add_option("--scene", d.scene, "Input GeoTIFF or raw sidecar (.json)");
	detect->add_option("--config", d.config, "JSON pipeline config")->check(CLI::ExistingFile);
	detect->add_option("--out", d.out, "Output points GeoJSON");
	detect->add_option("--csv", d.csv, "Output points CSV (default: <out stem>.csv)");
	detect->add_option("--summary", d.summary, "Output summary JSON (default: <out stem>.summary.json)");
	detect->add_option("--land-mask", d.land_mask, "Land (or water) polygons, GeoJSON");
	detect->add_option("--land-mask-role", d.land_mask_role, "Polygons describe 'land' or 'water'");
	detect->add_option("--land-buffer-m", d.land_buffer, "Dilate land by this many metres");
	detect->add_option("--quantile", d.quantile, "Threshold at this nearest-rank quantile of water pixels");
	detect->add_option("--threshold", d.threshold, "Fixed anomaly threshold instead of a quantile");
	detect->add_option("--min-area-m2", d.min_area, "Minimum region area");
	detect->add_option("--method", d.method, "rolling or chunked")->check(CLI::IsMember({"rolling", "chunked"}));
	detect->add_option("--kernel", d.kernel, "Rolling window size (odd)");
	detect->add_option("--chunk", d.chunk, "Chunk size for chunked standardization");
	detect->add_option("--channels", d.channels, "all, rgb, or a comma list of band indices");
	detect->add_option("--tile", d.tile, "Tile size in pixels");
	detect->add_option("--workers", d.workers, "Worker threads (0: all CPUs)");
	detect->add_option("--advisory-cutoff", d.cutoff, "Points per km2 above which the advisory fires");
	detect->add_option("--anomaly-raster", d.anomaly_raster, "Debug: write the anomaly map as GeoTIFF");
	detect->add_option("--mask-raster", d.mask_raster, "Debug: write the thresholded mask as GeoTIFF");

	std::string ev_points, ev_truth, ev_scene, ev_csv;
	std::vector<std::string> ev_counts;
	double ev_radius = 100.0;
	auto *evaluate = app.add_subcommand("evaluate", "Match points against annotated whales");
	evaluate->add_option("--points", ev_points, "Points GeoJSON")->check(CLI::ExistingFile);
	evaluate->add_option("--truth", ev_truth, "Annotations CSV or GeoJSON")->check(CLI::ExistingFile);
	evaluate->add_option("--radius", ev_radius, "Match radius in metres");
	evaluate->add_option("--scene-name", ev_scene, "Row label in the report");
	evaluate->add_option("--report-csv", ev_csv, "Also write the table as CSV");
	evaluate->add_option("--counts", ev_counts, "Extra rows from counts, NAME:ANNOTATED:DETECTED[:FP]");

	std::string st_out;
	int st_trials = 100;
	std::vector<double> st_ratios{1e-8, 1e-6, 1e-4, 1e-2, 1.0};
	double st_mean = 1000.0;
	std::uint64_t st_seed = 42;
	auto *stability = app.add_subcommand("stability", "Float32 variance error with and without the mean shift");
	stability->add_option("--out", st_out, "Output CSV")->required();
	stability->add_option("--trials", st_trials, "Trials per ratio");
	stability->add_option("--ratios", st_ratios, "Variance/mean ratios");
	stability->add_option("--mean", st_mean, "Signal mean");
	stability->add_option("--seed", st_seed, "RNG seed");

	std::string sy_spec, sy_out, sy_truth;
	auto *synth = app.add_subcommand("synth", "Generate a synthetic ocean scene with injected targets");
	synth->add_option("--spec", sy_spec, "Scene spec JSON")->required()->check(CLI::ExistingFile);
	synth->add_option("--out", sy_out, "Output raster (.tif, or .raw with a JSON sidecar)")->required();
	synth->add_option("--truth", sy_truth, "Output truth CSV");

	std::string sv_points, sv_scene, sv_labels, sv_classes, sv_static, sv_host = "127.0.0.1";
	int sv_port = 8000;
	double sv_chip = 100.0;
	auto *serve = app.add_subcommand("serve", "Serve chips around points to labelers");
	serve->add_option("--points", sv_points, "Points GeoJSON")->required()->check(CLI::ExistingFile);
	serve->add_option("--scene", sv_scene, "Scene the points came from")->required()->check(CLI::ExistingFile);
	serve->add_option("--labels", sv_labels, "Labels CSV (created or replayed)")->required();
	serve->add_option("--port", sv_port, "TCP port");
	serve->add_option("--host", sv_host, "Bind address");
	serve->add_option("--classes", sv_classes, "JSON list of label classes")->check(CLI::ExistingFile);
	serve->add_option("--static", sv_static, "Directory with the frontend bundle")->check(CLI::ExistingDirectory);
	serve->add_option("--chip-size-m", sv_chip, "Chip side length in metres");

	CLI11_PARSE(app, argc, argv);

	try
	{
		if (*detect)
			return run_detect(d);
		if (*evaluate)
			return run_evaluate(ev_points, ev_truth, ev_radius, ev_scene, ev_csv, ev_counts);
		if (*stability)
			return run_stability(st_out, st_trials, st_ratios, st_mean, st_seed);
		if (*synth)
		{
			const auto scene = whales::generate_synthetic_scene(whales::load_synth_spec(sy_spec));
			whales::write_synthetic_scene(scene, sy_out, sy_truth);
			std::cout << fmt::format("{}x{} scene, {} targets, {} whitecaps\n", scene.info.width, scene.info.height,
									 scene.blobs.size(), scene.whitecaps.size());
			return 0;
		}
		if (*serve)
			return run_serve(sv_points, sv_scene, sv_labels, sv_host, sv_port, sv_classes, sv_static, sv_chip);
	}
	catch (const whales::InputError &e)
	{
		std::cerr << "error: " << e.what() << "\n";
		return 2;
	}
	catch (const std::exception &e)
	{
		std::cerr << "error: " << e.what() << "\n";
		return 1;
	}
	return 0;
}
