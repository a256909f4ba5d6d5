#pragma once

#include "whales/raster.hpp"
#include "whales/standardize.hpp"
#include "whales/types.hpp"

#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace whales
{
	// Scalar anomaly map A = sum_c |D_c| over a channel subset.
	struct AnomalyMap
	{
		PlaneF values;
		Mask valid;
	};

	// Sums in double and rounds once, so the float result equals a float64 evaluation rounded to float.
	template <typename Scalar>
	AnomalyMap aggregate_abs_deviation(const DeviationTensor<Scalar> &d, std::span<const int> channel_subset)
	{
		if (channel_subset.empty())
			throw InputError("channel subset is empty");
		PlaneD acc = PlaneD::Zero(d.rows(), d.cols());
		for (int c : channel_subset)
		{
			if (c < 0 || c >= d.channel_count())
				throw InputError("channel index " + std::to_string(c) + " out of range");
			acc += d.channels[c].template cast<double>().abs();
		}
		AnomalyMap a;
		a.valid = d.valid;
		a.values = d.valid.select(acc.cast<float>(), 0.0f);
		return a;
	}

	// ---- nearest-rank quantile -------------------------------------------------------------

	// 1-based rank ceil(q * n), robust to decimal q that are not exact in binary.
	std::int64_t nearest_rank(double q, std::int64_t n);

	// One data pass of the multi-pass quantile search. Passes are mergeable (associative and
	// commutative), so tiles can be accumulated independently and combined.
	class QuantilePass
	{
	public:
		void add(std::span<const float> values);
		void add(std::span<const float> values, std::span<const bool> keep);
		void merge(const QuantilePass &other);

	private:
		friend class StreamingQuantile;
		enum class Kind
		{
			Range,
			Histogram,
			Collect
		};
		struct Level
		{
			double lo, scale;
			int bins;
			int bin;
		};
		bool accepts(float v) const;
		int bin_of(double v) const;

		Kind kind_ = Kind::Range;
		std::vector<Level> filters_;
		double lo_ = 0.0, scale_ = 0.0;
		int bins_ = 0;

		std::int64_t count_ = 0;
		float min_ = 0.0f, max_ = 0.0f;
		std::vector<std::int64_t> hist_;
		std::vector<float> bin_min_, bin_max_;
		std::vector<float> collected_;
	};

	// Exact nearest-rank quantile without holding the data: a range pass, then histogram
	// refinement passes (default 4096 bins) until the target bin is small enough to sort.
	class StreamingQuantile
	{
	public:
		explicit StreamingQuantile(double q, int bins = 4096, std::size_t exact_limit = std::size_t{1} << 16);

		bool done() const { return result_.has_value(); }
		float result() const;
		std::int64_t count() const { return n_; }

		QuantilePass new_pass() const;
		void finish_pass(const QuantilePass &pass);

	private:
		double q_;
		int bins_;
		std::size_t exact_limit_;
		QuantilePass::Kind next_ = QuantilePass::Kind::Range;
		std::vector<QuantilePass::Level> filters_;
		double lo_ = 0.0, hi_ = 0.0;
		std::int64_t n_ = 0;
		std::int64_t rank_ = 0;
		std::int64_t below_ = 0;
		std::optional<float> result_;
	};

	// Replays every value to be ranked; called once per pass.
	using ValueSource = std::function<void(QuantilePass &)>;
	float streaming_quantile(const ValueSource &source, double q, int bins = 4096,
							 std::size_t exact_limit = std::size_t{1} << 16);

	// Quantile over valid pixels of an in-memory map.
	float quantile_of(const AnomalyMap &map, double q);

	// ---- thresholding and regions ----------------------------------------------------------

	enum class ThresholdMode
	{
		FixedValue,
		Quantile
	};

	struct ThresholdConfig
	{
		ThresholdMode mode = ThresholdMode::Quantile;
		double value = 0.9999;
		double min_area_m2 = 1.5;

		void validate() const;
	};

	// (A > threshold) && valid && water.
	Mask binarize(const AnomalyMap &map, float threshold, const Mask *water = nullptr);

	struct Component
	{
		std::vector<Pixel> pixels; // raster order
		std::vector<float> values; // anomaly per pixel when known, parallel to pixels
	};

	// Maximal 8-connected components, ordered by their first pixel in raster order.
	// `origin` offsets the reported coordinates.
	std::vector<Component> connected_components(const Mask &mask, Pixel origin = {});

	struct Region
	{
		std::vector<Pixel> pixels;
		double area_m2 = 0.0;
		double mean_anomaly = 0.0;
		double centroid_row = 0.0;
		double centroid_col = 0.0;
		GeoPoint centroid_geo;
	};

	struct InterestingPoint
	{
		std::string id;
		GeoPoint coordinate;
		double area_m2 = 0.0;
		double mean_anomaly = 0.0;
		std::string scene_id;
		double row = 0.0;
		double col = 0.0;
	};

	// Area, centroid and mean anomaly. Values come from the component when it carries them,
	// otherwise from `map` (which must then be given, indexed in the component's coordinates).
	Region measure_region(const Component &component, double resolution, const GeoTransform &transform,
						  const AnomalyMap *map = nullptr);

	std::vector<Region> measure_regions(std::span<const Component> components, double resolution,
										const GeoTransform &transform, const AnomalyMap *map = nullptr);

	// Keeps regions with area >= min_area_m2 and numbers them scene_id-000000, -000001, ...
	std::vector<InterestingPoint> filter_and_extract_points(std::span<const Region> regions,
															const ThresholdConfig &cfg, const std::string &scene_id);

	double points_per_km2(std::size_t points, double water_area_km2);

	// Stitches per-tile components into scene components with a union-find over border fragments.
	class TiledComponentBuilder
	{
	public:
		TiledComponentBuilder(std::int64_t height, std::int64_t width, std::int64_t tile_size);

		// Thread-safe; `mask` and `anomaly` cover exactly the tile grid cell at (tile_row, tile_col).
		void add_tile(std::int64_t tile_row, std::int64_t tile_col, const Mask &mask, const PlaneF &anomaly);

		std::vector<Component> finish();

	private:
		struct TileBorders
		{
			bool present = false;
			std::vector<std::int64_t> top, bottom, left, right; // fragment id + 1, 0 for background
		};
		std::int64_t find(std::int64_t x);
		void unite(std::int64_t a, std::int64_t b);
		TileBorders *tile(std::int64_t tr, std::int64_t tc);

		std::int64_t height_, width_, tile_;
		std::int64_t tiles_down_, tiles_across_;
		std::vector<Component> fragments_;
		std::vector<TileBorders> borders_;
		std::vector<std::int64_t> parent_;
		std::mutex mutex_;
	};
} // namespace whales
