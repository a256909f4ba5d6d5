#include "whales/landmask.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace whales
{
	namespace
	{
		using nlohmann::json;

		Ring parse_ring(const json &coords)
		{
			if (!coords.is_array())
				throw InputError("malformed geometry: ring is not an array");
			Ring ring;
			for (const auto &pt : coords)
			{
				if (!pt.is_array() || pt.size() < 2 || !pt[0].is_number() || !pt[1].is_number())
					throw InputError("malformed geometry: bad coordinate");
				ring.vertices.push_back({pt[0].get<double>(), pt[1].get<double>()});
			}
			if (ring.vertices.size() < 4)
				throw InputError("malformed geometry: ring has fewer than 4 positions");
			const auto &a = ring.vertices.front();
			const auto &b = ring.vertices.back();
			if (a.x != b.x || a.y != b.y)
				throw InputError("unclosed ring: first and last positions differ");
			return ring;
		}

		Polygon parse_polygon(const json &rings)
		{
			if (!rings.is_array() || rings.empty())
				throw InputError("malformed geometry: polygon has no rings");
			Polygon p;
			p.exterior = parse_ring(rings[0]);
			if (!ring_is_simple(p.exterior))
				throw InputError("invalid polygon: exterior ring self-intersects");
			for (std::size_t i = 1; i < rings.size(); ++i)
				p.holes.push_back(parse_ring(rings[i]));
			return p;
		}

		void collect_geometry(const json &g, std::vector<Polygon> &out)
		{
			if (g.is_null())
				return;
			const auto type = g.value("type", std::string());
			if (type == "Polygon")
				out.push_back(parse_polygon(g.at("coordinates")));
			else if (type == "MultiPolygon")
			{
				for (const auto &p : g.at("coordinates"))
					out.push_back(parse_polygon(p));
			}
			else if (type == "GeometryCollection")
			{
				for (const auto &sub : g.at("geometries"))
					collect_geometry(sub, out);
			}
			else
				throw InputError("malformed geometry: expected Polygon or MultiPolygon, got '" + type + "'");
		}

		int orientation(const GeoPoint &a, const GeoPoint &b, const GeoPoint &c)
		{
			const double v = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
			return (v > 0) - (v < 0);
		}

		bool on_segment(const GeoPoint &a, const GeoPoint &b, const GeoPoint &p)
		{
			return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
				   p.y <= std::max(a.y, b.y);
		}

		bool segments_intersect(const GeoPoint &p1, const GeoPoint &p2, const GeoPoint &q1, const GeoPoint &q2)
		{
			const int o1 = orientation(p1, p2, q1);
			const int o2 = orientation(p1, p2, q2);
			const int o3 = orientation(q1, q2, p1);
			const int o4 = orientation(q1, q2, p2);
			if (o1 != o2 && o3 != o4)
				return true;
			return (o1 == 0 && on_segment(p1, p2, q1)) || (o2 == 0 && on_segment(p1, p2, q2)) ||
				   (o3 == 0 && on_segment(q1, q2, p1)) || (o4 == 0 && on_segment(q1, q2, p2));
		}

		// Ring edges in continuous pixel coordinates, where pixel centres sit on integers.
		struct Edge
		{
			double r0, c0, r1, c1;
			double rmin() const { return std::min(r0, r1); }
			double rmax() const { return std::max(r0, r1); }
		};

		void add_ring_edges(const Ring &ring, const GeoTransform &t, std::vector<Edge> &edges)
		{
			std::pair<double, double> prev = geo_to_pixel(t, ring.vertices.front());
			for (std::size_t i = 1; i < ring.vertices.size(); ++i)
			{
				const auto cur = geo_to_pixel(t, ring.vertices[i]);
				if (prev.first != cur.first)
					edges.push_back({prev.first, prev.second, cur.first, cur.second});
				prev = cur;
			}
		}

		// Even-odd scanline fill of one polygon into `mask` (OR).
		void fill_polygon(const Polygon &poly, const GeoTransform &t, const Window &w, Mask &mask)
		{
			std::vector<Edge> edges;
			add_ring_edges(poly.exterior, t, edges);
			for (const auto &h : poly.holes)
				add_ring_edges(h, t, edges);
			if (edges.empty())
				return;
			std::sort(edges.begin(), edges.end(), [](const Edge &a, const Edge &b) { return a.rmin() < b.rmin(); });

			std::vector<const Edge *> active;
			std::vector<double> xs;
			std::size_t next = 0;
			for (std::int64_t i = 0; i < w.height; ++i)
			{
				const double row = static_cast<double>(w.row_off + i);
				while (next < edges.size() && edges[next].rmin() <= row)
					active.push_back(&edges[next++]);
				std::erase_if(active, [row](const Edge *e) { return e->rmax() < row; });
				if (active.empty())
				{
					if (next == edges.size())
						break;
					continue;
				}
				xs.clear();
				for (const Edge *e : active)
				{
					// Half-open in row so shared vertices count once.
					if ((e->r0 > row) != (e->r1 > row))
						xs.push_back(e->c0 + (row - e->r0) * (e->c1 - e->c0) / (e->r1 - e->r0));
				}
				std::sort(xs.begin(), xs.end());
				// A centre at column c is inside iff an odd number of crossings lie strictly right of it.
				for (std::size_t k = 0; k + 1 < xs.size(); k += 2)
				{
					const double lo = std::ceil(xs[k]) - static_cast<double>(w.col_off);
					const double hi = std::ceil(xs[k + 1]) - static_cast<double>(w.col_off);
					const auto a = static_cast<std::int64_t>(std::clamp(lo, 0.0, static_cast<double>(w.width)));
					const auto b = static_cast<std::int64_t>(std::clamp(hi, 0.0, static_cast<double>(w.width)));
					if (b > a)
						mask.row(i).segment(a, b - a) = true;
				}
			}
		}

		bool same_crs(const std::string &a, const std::string &b)
		{
			return normalize_crs(a) == normalize_crs(b);
		}
	} // namespace

	PolygonRole parse_polygon_role(const std::string &s)
	{
		if (s == "land")
			return PolygonRole::Land;
		if (s == "water")
			return PolygonRole::Water;
		throw InputError("polygon role must be 'land' or 'water'");
	}

	bool ring_is_simple(const Ring &ring)
	{
		const auto &v = ring.vertices;
		const std::size_t n = v.size() - 1; // segments
		struct Seg
		{
			std::size_t i;
			double xmin, xmax;
		};
		std::vector<Seg> segs;
		segs.reserve(n);
		for (std::size_t i = 0; i < n; ++i)
			segs.push_back({i, std::min(v[i].x, v[i + 1].x), std::max(v[i].x, v[i + 1].x)});
		std::sort(segs.begin(), segs.end(), [](const Seg &a, const Seg &b) { return a.xmin < b.xmin; });
		for (std::size_t a = 0; a < segs.size(); ++a)
		{
			for (std::size_t b = a + 1; b < segs.size() && segs[b].xmin <= segs[a].xmax; ++b)
			{
				const auto i = std::min(segs[a].i, segs[b].i);
				const auto j = std::max(segs[a].i, segs[b].i);
				const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
				if (adjacent)
				{
					// Neighbours share a vertex; they only conflict when they fold back onto each other.
					const auto &p = v[i], &q = v[i + 1], &r = v[j], &s = v[j + 1];
					const GeoPoint *shared = (j == i + 1) ? &q : &p;
					const GeoPoint &other_a = (j == i + 1) ? p : q;
					const GeoPoint &other_b = (j == i + 1) ? s : r;
					if (orientation(other_a, *shared, other_b) == 0 &&
						((other_b.x - shared->x) * (other_a.x - shared->x) + (other_b.y - shared->y) * (other_a.y - shared->y)) > 0)
						return false;
					continue;
				}
				if (segments_intersect(v[i], v[i + 1], v[j], v[j + 1]))
					return false;
			}
		}
		return true;
	}

	PolygonSet parse_polygons(std::string_view geojson, PolygonRole role)
	{
		json j;
		try
		{
			j = json::parse(geojson);
		}
		catch (const json::exception &e)
		{
			throw InputError(std::string("malformed GeoJSON: ") + e.what());
		}
		PolygonSet set;
		set.role = role;
		if (j.contains("crs") && j["crs"].is_object())
			set.crs = normalize_crs(j["crs"].value("properties", json::object()).value("name", std::string()));
		try
		{
			const auto type = j.value("type", std::string());
			if (type == "FeatureCollection")
			{
				for (const auto &f : j.at("features"))
					collect_geometry(f.at("geometry"), set.polygons);
			}
			else if (type == "Feature")
				collect_geometry(j.at("geometry"), set.polygons);
			else
				collect_geometry(j, set.polygons);
		}
		catch (const json::exception &e)
		{
			throw InputError(std::string("malformed geometry: ") + e.what());
		}
		return set;
	}

	PolygonSet load_polygons(const std::filesystem::path &path, PolygonRole role)
	{
		std::ifstream in(path);
		if (!in)
			throw InputError("cannot read polygons: " + path.string());
		std::stringstream ss;
		ss << in.rdbuf();
		return parse_polygons(ss.str(), role);
	}

	Mask rasterize_inside(const PolygonSet &polys, const GeoTransform &transform, const Window &window)
	{
		Mask mask = Mask::Constant(window.height, window.width, false);
		for (const auto &p : polys.polygons)
			fill_polygon(p, transform, window, mask);
		return mask;
	}

	Mask dilate_disc(const Mask &mask, double radius_px)
	{
		if (radius_px <= 0.0)
			return mask;
		const auto h = mask.rows(), w = mask.cols();
		const auto r = static_cast<Eigen::Index>(std::floor(radius_px));
		// Row-wise prefix counts give O(1) "any set in [a, b]" queries.
		Plane<std::int32_t> prefix = Plane<std::int32_t>::Zero(h, w + 1);
		for (Eigen::Index i = 0; i < h; ++i)
			for (Eigen::Index j = 0; j < w; ++j)
				prefix(i, j + 1) = prefix(i, j) + (mask(i, j) ? 1 : 0);
		Mask out = Mask::Constant(h, w, false);
		for (Eigen::Index dy = -r; dy <= r; ++dy)
		{
			const auto half = static_cast<Eigen::Index>(std::floor(std::sqrt(radius_px * radius_px - double(dy * dy))));
			for (Eigen::Index i = 0; i < h; ++i)
			{
				const auto src = i + dy;
				if (src < 0 || src >= h)
					continue;
				for (Eigen::Index j = 0; j < w; ++j)
				{
					if (out(i, j))
						continue;
					const auto a = std::max<Eigen::Index>(0, j - half);
					const auto b = std::min<Eigen::Index>(w - 1, j + half);
					if (prefix(src, b + 1) - prefix(src, a) > 0)
						out(i, j) = true;
				}
			}
		}
		return out;
	}

	Mask rasterize_water_mask(const PolygonSet &polys, const RasterScene &scene, const Window &window,
							  double land_buffer_m)
	{
		if (!polys.crs.empty() && !same_crs(polys.crs, scene.crs()))
			throw InputError("CRS mismatch: polygons are in " + polys.crs + ", scene is in " + scene.crs());
		if (land_buffer_m < 0.0)
			throw InputError("land buffer must be >= 0");
		if (polys.polygons.empty())
			return polys.role == PolygonRole::Land ? Mask::Constant(window.height, window.width, true)
												   : Mask::Constant(window.height, window.width, false);

		const double radius_px = land_buffer_m / scene.resolution();
		const auto pad = static_cast<std::int64_t>(std::ceil(radius_px));
		const Window grown{window.col_off - pad, window.row_off - pad, window.width + 2 * pad, window.height + 2 * pad};
		const Mask inside = rasterize_inside(polys, scene.transform(), grown);
		Mask land = polys.role == PolygonRole::Land ? inside : Mask(!inside);
		if (radius_px > 0.0)
			land = dilate_disc(land, radius_px);
		return !land.block(pad, pad, window.height, window.width);
	}
} // namespace whales
