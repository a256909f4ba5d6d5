#include "whales/points_io.hpp"

#include "whales/csv.hpp"
#include "whales/projection.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace whales
{
	using nlohmann::ordered_json;

	namespace
	{
		std::string number_text(double v)
		{
			std::ostringstream os;
			os.precision(17);
			os << v;
			return os.str();
		}
	} // namespace

	std::string points_to_geojson(const PointCollection &pc)
	{
		ordered_json fc;
		fc["type"] = "FeatureCollection";
		fc["crs"] = {{"type", "name"}, {"properties", {{"name", pc.crs}}}};
		auto features = ordered_json::array();
		for (const auto &p : pc.points)
		{
			ordered_json f;
			f["type"] = "Feature";
			f["geometry"] = {{"type", "Point"}, {"coordinates", {p.coordinate.x, p.coordinate.y}}};
			f["properties"] = {{"id", p.id}, {"area_m2", p.area_m2}, {"mean_anomaly", p.mean_anomaly},
							   {"scene_id", p.scene_id}};
			features.push_back(std::move(f));
		}
		fc["features"] = std::move(features);
		return fc.dump(1) + "\n";
	}

	void write_points_geojson(const std::filesystem::path &path, const PointCollection &pc)
	{
		std::ofstream out(path, std::ios::binary);
		if (!out)
			throw std::runtime_error("cannot write " + path.string());
		out << points_to_geojson(pc);
	}

	PointCollection parse_points_geojson(const std::string &text)
	{
		PointCollection pc;
		try
		{
			const auto j = ordered_json::parse(text);
			if (j.contains("crs") && j["crs"].is_object())
				pc.crs = j["crs"]["properties"].value("name", std::string());
			for (const auto &f : j.at("features"))
			{
				const auto &g = f.at("geometry");
				if (g.value("type", std::string()) != "Point")
					throw InputError("points file contains a non-Point geometry");
				InterestingPoint p;
				p.coordinate = {g.at("coordinates").at(0).get<double>(), g.at("coordinates").at(1).get<double>()};
				const auto props = f.value("properties", ordered_json::object());
				p.id = props.value("id", std::string());
				p.area_m2 = props.value("area_m2", 0.0);
				p.mean_anomaly = props.value("mean_anomaly", 0.0);
				p.scene_id = props.value("scene_id", std::string());
				pc.points.push_back(std::move(p));
			}
		}
		catch (const ordered_json::exception &e)
		{
			throw InputError(std::string("malformed points GeoJSON: ") + e.what());
		}
		return pc;
	}

	PointCollection read_points_geojson(const std::filesystem::path &path)
	{
		std::ifstream in(path, std::ios::binary);
		if (!in)
			throw InputError("cannot read points: " + path.string());
		std::stringstream ss;
		ss << in.rdbuf();
		return parse_points_geojson(ss.str());
	}

	void write_points_csv(const std::filesystem::path &path, const PointCollection &pc)
	{
		std::ofstream out(path, std::ios::binary);
		if (!out)
			throw std::runtime_error("cannot write " + path.string());
		out << "id,area_m2,mean_anomaly,scene_id,x,y,lon,lat\n";
		for (const auto &p : pc.points)
		{
			const auto ll = to_lonlat(p.coordinate, pc.crs);
			out << csv::join({p.id, number_text(p.area_m2), number_text(p.mean_anomaly), p.scene_id,
							  number_text(p.coordinate.x), number_text(p.coordinate.y),
							  ll ? number_text(ll->lon) : std::string(), ll ? number_text(ll->lat) : std::string()})
				<< '\n';
		}
	}
} // namespace whales
