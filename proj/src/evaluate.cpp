#include "whales/evaluate.hpp"

#include "whales/csv.hpp"
#include "whales/projection.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace whales
{
	std::string to_string(Confidence c)
	{
		switch (c)
		{
		case Confidence::Definite:
			return "definite";
		case Confidence::Probable:
			return "probable";
		case Confidence::Possible:
			return "possible";
		case Confidence::Unspecified:
			break;
		}
		return "unspecified";
	}

	Confidence parse_confidence(const std::string &s)
	{
		std::string v;
		for (unsigned char c : s)
			if (!std::isspace(c))
				v.push_back(static_cast<char>(std::tolower(c)));
		if (v == "definite")
			return Confidence::Definite;
		if (v == "probable")
			return Confidence::Probable;
		if (v == "possible")
			return Confidence::Possible;
		if (v.empty() || v == "unspecified")
			return Confidence::Unspecified;
		throw InputError("unknown confidence '" + s + "'");
	}

	EvalReport match_points(std::span<const GeoPoint> points, std::span<const Annotation> annotations,
							double radius_m)
	{
		if (radius_m < 0.0)
			throw InputError("radius must be >= 0");
		const double r2 = radius_m * radius_m;
		const auto within = [r2](const GeoPoint &a, const GeoPoint &b) {
			const double dx = a.x - b.x, dy = a.y - b.y;
			return dx * dx + dy * dy <= r2;
		};
		EvalReport rep;
		rep.n_annotations = static_cast<int>(annotations.size());
		for (const auto &p : points)
		{
			const bool hit = std::any_of(annotations.begin(), annotations.end(),
										 [&](const Annotation &a) { return within(p, a.coordinate); });
			(hit ? rep.n_true_positive_points : rep.n_false_positive_points)++;
		}
		for (const auto &a : annotations)
		{
			auto &tally = rep.per_confidence[a.confidence];
			++tally.annotated;
			if (std::any_of(points.begin(), points.end(), [&](const GeoPoint &p) { return within(p, a.coordinate); }))
			{
				++tally.detected;
				++rep.n_detected;
			}
		}
		rep.recall = rep.n_annotations > 0 ? static_cast<double>(rep.n_detected) / rep.n_annotations : 0.0;
		return rep;
	}

	EvalReport match_points(std::span<const InterestingPoint> points, std::span<const Annotation> annotations,
							double radius_m)
	{
		std::vector<GeoPoint> coords;
		coords.reserve(points.size());
		for (const auto &p : points)
			coords.push_back(p.coordinate);
		return match_points(std::span<const GeoPoint>(coords), annotations, radius_m);
	}

	EvalReport report_from_counts(std::string scene, int annotated, int detected, int false_positive_points)
	{
		if (annotated < 0 || detected < 0 || detected > annotated)
			throw InputError("detected count must lie in [0, annotated]");
		EvalReport r;
		r.scene = std::move(scene);
		r.n_annotations = annotated;
		r.n_detected = detected;
		r.n_true_positive_points = detected;
		r.n_false_positive_points = false_positive_points;
		r.recall = annotated > 0 ? static_cast<double>(detected) / annotated : 0.0;
		return r;
	}

	std::string format_recall_percent(double recall)
	{
		return fmt::format("{:.1f}", 100.0 * recall);
	}

	std::string recall_table(std::span<const EvalReport> reports)
	{
		std::size_t width = 5;
		for (const auto &r : reports)
			width = std::max(width, r.scene.size());
		std::string out = fmt::format("{:<{}}  {:>9}  {:>8}  {:>9}  {:>9}  {:>7}\n", "Scene", width, "Annotated",
									  "Detected", "TP points", "FP points", "Recall");
		for (const auto &r : reports)
			out += fmt::format("{:<{}}  {:>9}  {:>8}  {:>9}  {:>9}  {:>6}%\n", r.scene, width, r.n_annotations,
							   r.n_detected, r.n_true_positive_points, r.n_false_positive_points,
							   format_recall_percent(r.recall));
		return out;
	}

	void write_report_csv(const std::filesystem::path &path, std::span<const EvalReport> reports)
	{
		std::ofstream out(path, std::ios::binary);
		if (!out)
			throw std::runtime_error("cannot write " + path.string());
		out << "scene,annotated,detected,tp_points,fp_points,recall_pct,definite_detected,definite_annotated,"
			   "probable_detected,probable_annotated,possible_detected,possible_annotated\n";
		for (const auto &r : reports)
		{
			const auto tally = [&](Confidence c) {
				auto it = r.per_confidence.find(c);
				return it == r.per_confidence.end() ? ConfidenceTally{} : it->second;
			};
			const auto d = tally(Confidence::Definite), pr = tally(Confidence::Probable), po = tally(Confidence::Possible);
			out << csv::join({r.scene, std::to_string(r.n_annotations), std::to_string(r.n_detected),
							  std::to_string(r.n_true_positive_points), std::to_string(r.n_false_positive_points),
							  format_recall_percent(r.recall), std::to_string(d.detected), std::to_string(d.annotated),
							  std::to_string(pr.detected), std::to_string(pr.annotated), std::to_string(po.detected),
							  std::to_string(po.annotated)})
				<< '\n';
		}
	}

	namespace
	{
		GeoPoint project_lonlat(double lon, double lat, const std::string &target_crs)
		{
			const auto zone = utm_zone_of(target_crs);
			if (!zone)
				throw InputError("annotations are in lon/lat but the points CRS '" + target_crs +
								 "' is not a WGS84 UTM zone; supply projected x,y columns");
			return lonlat_to_utm({lon, lat}, *zone);
		}

		std::vector<Annotation> annotations_from_csv(const std::filesystem::path &path, const std::string &crs)
		{
			const auto rows = csv::read_file(path);
			if (rows.empty())
				return {};
			const auto idx = csv::header_index(rows.front());
			const auto col = [&](std::initializer_list<const char *> names) -> std::optional<std::size_t> {
				for (const char *n : names)
					if (auto it = idx.find(n); it != idx.end())
						return it->second;
				return std::nullopt;
			};
			const auto cx = col({"x", "easting"}), cy = col({"y", "northing"});
			const auto clon = col({"lon", "longitude", "lng"}), clat = col({"lat", "latitude"});
			const auto cconf = col({"confidence"}), cspecies = col({"species"}), csource = col({"source"});
			const bool projected = cx && cy;
			if (!projected && !(clon && clat))
				throw InputError("annotation CSV needs x,y or lon,lat columns");
			std::vector<Annotation> out;
			for (std::size_t r = 1; r < rows.size(); ++r)
			{
				const auto &row = rows[r];
				const auto field = [&](std::optional<std::size_t> c) {
					return c && *c < row.size() ? row[*c] : std::string();
				};
				Annotation a;
				try
				{
					if (projected)
						a.coordinate = {std::stod(field(cx)), std::stod(field(cy))};
					else
						a.coordinate = project_lonlat(std::stod(field(clon)), std::stod(field(clat)), crs);
				}
				catch (const std::invalid_argument &)
				{
					throw InputError("non-numeric coordinate in " + path.string() + " row " + std::to_string(r + 1));
				}
				if (!std::isfinite(a.coordinate.x) || !std::isfinite(a.coordinate.y))
					throw InputError("non-finite annotation coordinate");
				a.confidence = parse_confidence(field(cconf));
				a.species = field(cspecies);
				a.source = field(csource);
				out.push_back(std::move(a));
			}
			return out;
		}

		std::vector<Annotation> annotations_from_geojson(const std::filesystem::path &path, const std::string &crs)
		{
			std::ifstream in(path);
			std::stringstream ss;
			ss << in.rdbuf();
			std::vector<Annotation> out;
			try
			{
				const auto j = nlohmann::json::parse(ss.str());
				std::string file_crs;
				if (j.contains("crs") && j["crs"].is_object())
					file_crs = normalize_crs(j["crs"]["properties"].value("name", std::string()));
				const bool lonlat = file_crs.empty() || crs_is_geographic(file_crs);
				if (!file_crs.empty() && !lonlat && file_crs != normalize_crs(crs))
					throw InputError("annotation CRS " + file_crs + " differs from points CRS " + crs);
				for (const auto &f : j.at("features"))
				{
					const auto &c = f.at("geometry").at("coordinates");
					Annotation a;
					const double u = c.at(0).get<double>(), v = c.at(1).get<double>();
					a.coordinate = lonlat ? project_lonlat(u, v, crs) : GeoPoint{u, v};
					const auto props = f.value("properties", nlohmann::json::object());
					a.confidence = parse_confidence(props.value("confidence", std::string()));
					a.species = props.value("species", std::string());
					a.source = props.value("source", std::string());
					out.push_back(std::move(a));
				}
			}
			catch (const nlohmann::json::exception &e)
			{
				throw InputError(std::string("malformed annotation GeoJSON: ") + e.what());
			}
			return out;
		}
	} // namespace

	std::vector<Annotation> load_annotations(const std::filesystem::path &path, const std::string &target_crs)
	{
		if (crs_is_geographic(target_crs))
			throw InputError("matching needs a metric CRS; points are in '" + target_crs + "'");
		auto ext = path.extension().string();
		std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
		if (ext == ".geojson" || ext == ".json")
			return annotations_from_geojson(path, target_crs);
		return annotations_from_csv(path, target_crs);
	}
} // namespace whales
