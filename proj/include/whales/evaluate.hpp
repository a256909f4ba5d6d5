#pragma once

#include "whales/raster.hpp"
#include "whales/regions.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace whales
{
	enum class Confidence
	{
		Definite,
		Probable,
		Possible,
		Unspecified
	};

	std::string to_string(Confidence c);
	Confidence parse_confidence(const std::string &s);

	struct Annotation
	{
		GeoPoint coordinate;
		Confidence confidence = Confidence::Unspecified;
		std::string species;
		std::string source;
	};

	struct ConfidenceTally
	{
		int annotated = 0;
		int detected = 0;
	};

	struct EvalReport
	{
		std::string scene;
		int n_annotations = 0;
		int n_detected = 0;
		int n_true_positive_points = 0;
		int n_false_positive_points = 0;
		double recall = 0.0;
		std::map<Confidence, ConfidenceTally> per_confidence;
	};

	// A point is a true positive when some annotation lies within `radius_m` (planar distance);
	// an annotation is detected when some point lies within `radius_m`. Both are evaluated
	// independently, so one whale may account for several true-positive points.
	EvalReport match_points(std::span<const GeoPoint> points, std::span<const Annotation> annotations,
							double radius_m = 100.0);
	EvalReport match_points(std::span<const InterestingPoint> points, std::span<const Annotation> annotations,
							double radius_m = 100.0);

	// Builds a report from counts alone (recall = detected / annotated).
	EvalReport report_from_counts(std::string scene, int annotated, int detected, int false_positive_points = 0);

	// Recall as a percentage rounded to one decimal, e.g. "90.3".
	std::string format_recall_percent(double recall);

	// Aligned text table: scene, annotated, TP (detected), TP points, FP points, recall %.
	std::string recall_table(std::span<const EvalReport> reports);
	void write_report_csv(const std::filesystem::path &path, std::span<const EvalReport> reports);

	// Ground truth from CSV (x,y or lon,lat columns, optional confidence/species/source) or a
	// GeoJSON of Point features. Lon/lat rows are projected into `target_crs` (WGS84 UTM only).
	std::vector<Annotation> load_annotations(const std::filesystem::path &path, const std::string &target_crs);
} // namespace whales
