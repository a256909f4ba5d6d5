#include "whales/regions.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace whales
{
	std::int64_t nearest_rank(double q, std::int64_t n)
	{
		if (n <= 0)
			throw InputError("nearest_rank: no values");
		if (!(q > 0.0 && q < 1.0))
			throw InputError("quantile must lie in (0, 1)");
		const double x = q * static_cast<double>(n);
		const double nearest = std::round(x);
		// q = 0.07, n = 100 gives 7.000000000000001; treat representation noise as exact.
		const double r = std::abs(x - nearest) <= 1e-9 * std::max(1.0, x) ? nearest : std::ceil(x);
		return std::clamp<std::int64_t>(static_cast<std::int64_t>(r), 1, n);
	}

	bool QuantilePass::accepts(float v) const
	{
		for (const auto &f : filters_)
		{
			const double t = (static_cast<double>(v) - f.lo) * f.scale;
			if (t < 0.0)
				return false;
			const int b = std::min(f.bins - 1, static_cast<int>(t));
			if (b != f.bin)
				return false;
		}
		return true;
	}

	int QuantilePass::bin_of(double v) const
	{
		const double t = (v - lo_) * scale_;
		return std::clamp(static_cast<int>(t), 0, bins_ - 1);
	}

	void QuantilePass::add(std::span<const float> values)
	{
		for (float v : values)
		{
			if (!filters_.empty() && !accepts(v))
				continue;
			switch (kind_)
			{
			case Kind::Range:
				if (count_ == 0)
					min_ = max_ = v;
				else
				{
					min_ = std::min(min_, v);
					max_ = std::max(max_, v);
				}
				++count_;
				break;
			case Kind::Histogram:
			{
				const int b = bin_of(v);
				if (hist_[b] == 0)
					bin_min_[b] = bin_max_[b] = v;
				else
				{
					bin_min_[b] = std::min(bin_min_[b], v);
					bin_max_[b] = std::max(bin_max_[b], v);
				}
				++hist_[b];
				++count_;
				break;
			}
			case Kind::Collect:
				collected_.push_back(v);
				break;
			}
		}
	}

	void QuantilePass::add(std::span<const float> values, std::span<const bool> keep)
	{
		// Compact runs of kept values so the unmasked overload does the work.
		std::vector<float> buffer;
		buffer.reserve(256);
		for (std::size_t i = 0; i < values.size(); ++i)
		{
			if (keep[i])
				buffer.push_back(values[i]);
			if (buffer.size() == 256)
			{
				add(std::span<const float>(buffer));
				buffer.clear();
			}
		}
		add(std::span<const float>(buffer));
	}

	void QuantilePass::merge(const QuantilePass &o)
	{
		switch (kind_)
		{
		case Kind::Range:
			if (o.count_ == 0)
				return;
			if (count_ == 0)
			{
				min_ = o.min_;
				max_ = o.max_;
			}
			else
			{
				min_ = std::min(min_, o.min_);
				max_ = std::max(max_, o.max_);
			}
			count_ += o.count_;
			break;
		case Kind::Histogram:
			for (int b = 0; b < bins_; ++b)
			{
				if (o.hist_[b] == 0)
					continue;
				if (hist_[b] == 0)
				{
					bin_min_[b] = o.bin_min_[b];
					bin_max_[b] = o.bin_max_[b];
				}
				else
				{
					bin_min_[b] = std::min(bin_min_[b], o.bin_min_[b]);
					bin_max_[b] = std::max(bin_max_[b], o.bin_max_[b]);
				}
				hist_[b] += o.hist_[b];
			}
			count_ += o.count_;
			break;
		case Kind::Collect:
			collected_.insert(collected_.end(), o.collected_.begin(), o.collected_.end());
			break;
		}
	}

	StreamingQuantile::StreamingQuantile(double q, int bins, std::size_t exact_limit)
		: q_(q), bins_(bins), exact_limit_(std::max<std::size_t>(exact_limit, 1))
	{
		if (!(q > 0.0 && q < 1.0))
			throw InputError("quantile must lie in (0, 1)");
		if (bins < 2)
			throw InputError("quantile histogram needs at least 2 bins");
	}

	float StreamingQuantile::result() const
	{
		if (!result_)
			throw std::logic_error("quantile search has not finished");
		return *result_;
	}

	QuantilePass StreamingQuantile::new_pass() const
	{
		QuantilePass p;
		p.kind_ = next_;
		p.filters_ = filters_;
		if (next_ == QuantilePass::Kind::Histogram)
		{
			p.lo_ = lo_;
			p.bins_ = bins_;
			p.scale_ = bins_ / (hi_ - lo_);
			p.hist_.assign(bins_, 0);
			p.bin_min_.assign(bins_, 0.0f);
			p.bin_max_.assign(bins_, 0.0f);
		}
		return p;
	}

	void StreamingQuantile::finish_pass(const QuantilePass &pass)
	{
		if (result_)
			return;
		switch (pass.kind_)
		{
		case QuantilePass::Kind::Range:
		{
			if (pass.count_ == 0)
				throw InputError("quantile over an empty set of valid pixels");
			n_ = pass.count_;
			rank_ = nearest_rank(q_, n_);
			if (pass.min_ == pass.max_)
			{
				result_ = pass.min_;
				return;
			}
			lo_ = pass.min_;
			hi_ = pass.max_;
			next_ = static_cast<std::size_t>(n_) <= exact_limit_ ? QuantilePass::Kind::Collect
																  : QuantilePass::Kind::Histogram;
			return;
		}
		case QuantilePass::Kind::Histogram:
		{
			std::int64_t cum = below_;
			int target = -1;
			for (int b = 0; b < pass.bins_; ++b)
			{
				if (cum + pass.hist_[b] >= rank_)
				{
					target = b;
					break;
				}
				cum += pass.hist_[b];
			}
			if (target < 0)
				throw std::logic_error("quantile rank fell outside the histogram");
			below_ = cum;
			if (pass.bin_min_[target] == pass.bin_max_[target])
			{
				result_ = pass.bin_min_[target];
				return;
			}
			filters_.push_back({pass.lo_, pass.scale_, pass.bins_, target});
			lo_ = pass.bin_min_[target];
			hi_ = pass.bin_max_[target];
			next_ = static_cast<std::size_t>(pass.hist_[target]) <= exact_limit_ ? QuantilePass::Kind::Collect
																				  : QuantilePass::Kind::Histogram;
			return;
		}
		case QuantilePass::Kind::Collect:
		{
			auto values = pass.collected_;
			const auto index = static_cast<std::size_t>(rank_ - below_ - 1);
			if (index >= values.size())
				throw std::logic_error("quantile rank fell outside the collected bin");
			std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(index), values.end());
			result_ = values[index];
			return;
		}
		}
	}

	float streaming_quantile(const ValueSource &source, double q, int bins, std::size_t exact_limit)
	{
		StreamingQuantile sq(q, bins, exact_limit);
		while (!sq.done())
		{
			auto pass = sq.new_pass();
			source(pass);
			sq.finish_pass(pass);
		}
		return sq.result();
	}

	float quantile_of(const AnomalyMap &map, double q)
	{
		const std::span<const float> values(map.values.data(), static_cast<std::size_t>(map.values.size()));
		const std::span<const bool> keep(map.valid.data(), static_cast<std::size_t>(map.valid.size()));
		return streaming_quantile([&](QuantilePass &p) { p.add(values, keep); }, q);
	}

	void ThresholdConfig::validate() const
	{
		if (mode == ThresholdMode::Quantile && !(value > 0.0 && value < 1.0))
			throw InputError("quantile threshold must lie in (0, 1)");
		if (mode == ThresholdMode::FixedValue && !std::isfinite(value))
			throw InputError("fixed threshold must be finite");
		if (!(min_area_m2 >= 0.0))
			throw InputError("minimum area must be >= 0");
	}

	Mask binarize(const AnomalyMap &map, float threshold, const Mask *water)
	{
		if (!std::isfinite(threshold))
			throw InputError("threshold must be finite");
		Mask m = (map.values > threshold) && map.valid;
		if (water)
		{
			if (water->rows() != m.rows() || water->cols() != m.cols())
				throw InputError("water mask does not match the anomaly map");
			m = m && *water;
		}
		return m;
	}

	namespace
	{
		struct UnionFind
		{
			std::vector<std::int64_t> parent;

			std::int64_t make()
			{
				parent.push_back(static_cast<std::int64_t>(parent.size()));
				return parent.back();
			}
			std::int64_t find(std::int64_t x)
			{
				while (parent[x] != x)
				{
					parent[x] = parent[parent[x]];
					x = parent[x];
				}
				return x;
			}
			void unite(std::int64_t a, std::int64_t b)
			{
				a = find(a);
				b = find(b);
				if (a != b)
					parent[std::max(a, b)] = std::min(a, b);
			}
		};

		// Two-pass labelling; returns a label plane (0 = background, else component index + 1).
		Plane<std::int64_t> label_components(const Mask &mask, std::vector<Component> &out, Pixel origin)
		{
			const auto h = mask.rows(), w = mask.cols();
			Plane<std::int64_t> labels = Plane<std::int64_t>::Zero(h, w);
			UnionFind uf;
			for (Eigen::Index i = 0; i < h; ++i)
			{
				for (Eigen::Index j = 0; j < w; ++j)
				{
					if (!mask(i, j))
						continue;
					std::int64_t label = -1;
					// Already-visited 8-neighbours: W, NW, N, NE.
					const Eigen::Index nbr[4][2] = {{i, j - 1}, {i - 1, j - 1}, {i - 1, j}, {i - 1, j + 1}};
					for (const auto &n : nbr)
					{
						if (n[0] < 0 || n[1] < 0 || n[1] >= w)
							continue;
						const auto l = labels(n[0], n[1]);
						if (l == 0)
							continue;
						if (label < 0)
							label = l - 1;
						else
							uf.unite(label, l - 1);
					}
					if (label < 0)
						label = uf.make();
					labels(i, j) = label + 1;
				}
			}
			// Resolve roots; number components by first raster appearance.
			std::vector<std::int64_t> index(uf.parent.size(), -1);
			out.clear();
			for (Eigen::Index i = 0; i < h; ++i)
			{
				for (Eigen::Index j = 0; j < w; ++j)
				{
					if (labels(i, j) == 0)
						continue;
					const auto root = uf.find(labels(i, j) - 1);
					if (index[root] < 0)
					{
						index[root] = static_cast<std::int64_t>(out.size());
						out.emplace_back();
					}
					out[index[root]].pixels.push_back({origin.row + i, origin.col + j});
					labels(i, j) = index[root] + 1;
				}
			}
			return labels;
		}
	} // namespace

	std::vector<Component> connected_components(const Mask &mask, Pixel origin)
	{
		std::vector<Component> out;
		label_components(mask, out, origin);
		return out;
	}

	Region measure_region(const Component &component, double resolution, const GeoTransform &transform,
						  const AnomalyMap *map)
	{
		if (component.pixels.empty())
			throw InputError("cannot measure an empty component");
		const bool has_values = component.values.size() == component.pixels.size();
		if (!has_values && !map)
			throw InputError("component has no anomaly values and no map was given");
		Region r;
		r.pixels = component.pixels;
		std::int64_t sum_row = 0, sum_col = 0;
		double sum_a = 0.0;
		for (std::size_t i = 0; i < component.pixels.size(); ++i)
		{
			const auto &p = component.pixels[i];
			sum_row += p.row;
			sum_col += p.col;
			sum_a += has_values ? component.values[i] : map->values(p.row, p.col);
		}
		const double n = static_cast<double>(component.pixels.size());
		r.area_m2 = n * resolution * resolution;
		r.mean_anomaly = sum_a / n;
		r.centroid_row = static_cast<double>(sum_row) / n;
		r.centroid_col = static_cast<double>(sum_col) / n;
		r.centroid_geo = pixel_to_geo(transform, r.centroid_row, r.centroid_col);
		return r;
	}

	std::vector<Region> measure_regions(std::span<const Component> components, double resolution,
										const GeoTransform &transform, const AnomalyMap *map)
	{
		if (!(resolution > 0.0))
			throw InputError("resolution must be positive");
		std::vector<Region> out;
		out.reserve(components.size());
		for (const auto &c : components)
			out.push_back(measure_region(c, resolution, transform, map));
		return out;
	}

	std::vector<InterestingPoint> filter_and_extract_points(std::span<const Region> regions,
															const ThresholdConfig &cfg, const std::string &scene_id)
	{
		std::vector<InterestingPoint> points;
		for (const auto &r : regions)
		{
			if (r.area_m2 < cfg.min_area_m2)
				continue;
			InterestingPoint p;
			char suffix[32];
			std::snprintf(suffix, sizeof(suffix), "-%06zu", points.size());
			p.id = scene_id + suffix;
			p.coordinate = r.centroid_geo;
			p.area_m2 = r.area_m2;
			p.mean_anomaly = r.mean_anomaly;
			p.scene_id = scene_id;
			p.row = r.centroid_row;
			p.col = r.centroid_col;
			points.push_back(std::move(p));
		}
		return points;
	}

	double points_per_km2(std::size_t points, double water_area_km2)
	{
		if (!(water_area_km2 > 0.0))
			throw InputError("empty water area");
		return static_cast<double>(points) / water_area_km2;
	}

	// ---- tiled stitching --------------------------------------------------------------------

	TiledComponentBuilder::TiledComponentBuilder(std::int64_t height, std::int64_t width, std::int64_t tile_size)
		: height_(height), width_(width), tile_(tile_size)
	{
		if (height < 1 || width < 1 || tile_size < 1)
			throw InputError("tiled component builder needs positive dimensions");
		tiles_down_ = (height + tile_size - 1) / tile_size;
		tiles_across_ = (width + tile_size - 1) / tile_size;
		borders_.resize(static_cast<std::size_t>(tiles_down_ * tiles_across_));
	}

	TiledComponentBuilder::TileBorders *TiledComponentBuilder::tile(std::int64_t tr, std::int64_t tc)
	{
		if (tr < 0 || tc < 0 || tr >= tiles_down_ || tc >= tiles_across_)
			return nullptr;
		auto *t = &borders_[static_cast<std::size_t>(tr * tiles_across_ + tc)];
		return t->present ? t : nullptr;
	}

	void TiledComponentBuilder::add_tile(std::int64_t tile_row, std::int64_t tile_col, const Mask &mask,
										 const PlaneF &anomaly)
	{
		const Pixel origin{tile_row * tile_, tile_col * tile_};
		const auto expect_h = std::min(tile_, height_ - origin.row);
		const auto expect_w = std::min(tile_, width_ - origin.col);
		if (mask.rows() != expect_h || mask.cols() != expect_w || anomaly.rows() != expect_h ||
			anomaly.cols() != expect_w)
			throw InputError("tile mask does not match the tile grid");

		std::vector<Component> local;
		auto labels = label_components(mask, local, origin);
		for (auto &c : local)
		{
			c.values.reserve(c.pixels.size());
			for (const auto &p : c.pixels)
				c.values.push_back(anomaly(p.row - origin.row, p.col - origin.col));
		}

		std::lock_guard lock(mutex_);
		const auto base = static_cast<std::int64_t>(fragments_.size());
		for (auto &c : local)
		{
			fragments_.push_back(std::move(c));
			parent_.push_back(static_cast<std::int64_t>(parent_.size()));
		}
		const auto global = [&](std::int64_t l) { return l == 0 ? 0 : base + l; };
		auto &b = borders_[static_cast<std::size_t>(tile_row * tiles_across_ + tile_col)];
		b.present = true;
		const auto h = mask.rows(), w = mask.cols();
		b.top.resize(w);
		b.bottom.resize(w);
		b.left.resize(h);
		b.right.resize(h);
		for (Eigen::Index j = 0; j < w; ++j)
		{
			b.top[j] = global(labels(0, j));
			b.bottom[j] = global(labels(h - 1, j));
		}
		for (Eigen::Index i = 0; i < h; ++i)
		{
			b.left[i] = global(labels(i, 0));
			b.right[i] = global(labels(i, w - 1));
		}
	}

	std::int64_t TiledComponentBuilder::find(std::int64_t x)
	{
		while (parent_[x] != x)
		{
			parent_[x] = parent_[parent_[x]];
			x = parent_[x];
		}
		return x;
	}

	void TiledComponentBuilder::unite(std::int64_t a, std::int64_t b)
	{
		a = find(a);
		b = find(b);
		if (a != b)
			parent_[std::max(a, b)] = std::min(a, b);
	}

	std::vector<Component> TiledComponentBuilder::finish()
	{
		std::lock_guard lock(mutex_);
		const auto link = [this](std::int64_t a, std::int64_t b) {
			if (a != 0 && b != 0)
				unite(a - 1, b - 1);
		};
		for (std::int64_t tr = 0; tr < tiles_down_; ++tr)
		{
			for (std::int64_t tc = 0; tc < tiles_across_; ++tc)
			{
				auto *t = tile(tr, tc);
				if (!t)
					continue;
				if (auto *right = tile(tr, tc + 1))
				{
					const auto n = static_cast<std::int64_t>(t->right.size());
					for (std::int64_t i = 0; i < n; ++i)
						for (std::int64_t d = -1; d <= 1; ++d)
							if (i + d >= 0 && i + d < n)
								link(t->right[i], right->left[i + d]);
				}
				if (auto *down = tile(tr + 1, tc))
				{
					const auto n = static_cast<std::int64_t>(t->bottom.size());
					for (std::int64_t j = 0; j < n; ++j)
						for (std::int64_t d = -1; d <= 1; ++d)
							if (j + d >= 0 && j + d < static_cast<std::int64_t>(down->top.size()))
								link(t->bottom[j], down->top[j + d]);
				}
				if (auto *diag = tile(tr + 1, tc + 1))
					link(t->bottom.back(), diag->top.front());
				if (auto *anti = tile(tr + 1, tc - 1))
					link(t->bottom.front(), anti->top.back());
			}
		}

		std::vector<std::int64_t> slot(fragments_.size(), -1);
		std::vector<std::vector<std::pair<Pixel, float>>> merged;
		for (std::size_t f = 0; f < fragments_.size(); ++f)
		{
			const auto root = find(static_cast<std::int64_t>(f));
			if (slot[root] < 0)
			{
				slot[root] = static_cast<std::int64_t>(merged.size());
				merged.emplace_back();
			}
			auto &dst = merged[slot[root]];
			const auto &frag = fragments_[f];
			for (std::size_t i = 0; i < frag.pixels.size(); ++i)
				dst.emplace_back(frag.pixels[i], frag.values[i]);
		}

		std::vector<Component> out;
		out.reserve(merged.size());
		for (auto &m : merged)
		{
			std::sort(m.begin(), m.end(), [](const auto &a, const auto &b) { return a.first < b.first; });
			Component c;
			c.pixels.reserve(m.size());
			c.values.reserve(m.size());
			for (const auto &[p, v] : m)
			{
				c.pixels.push_back(p);
				c.values.push_back(v);
			}
			out.push_back(std::move(c));
		}
		std::sort(out.begin(), out.end(),
				  [](const Component &a, const Component &b) { return a.pixels.front() < b.pixels.front(); });
		return out;
	}
} // namespace whales
