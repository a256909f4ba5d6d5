#pragma once

#include "whales/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace whales
{
	enum class StandardizationMethod
	{
		Chunked,
		Rolling
	};

	enum class ShiftMode
	{
		GlobalChannelMean, // per-channel mean of the scene (or of the block when no scene means are given)
		Explicit,          // shift_values, one per channel or a single broadcast value
		None
	};

	struct StandardizationConfig
	{
		StandardizationMethod method = StandardizationMethod::Rolling;
		int chunk_size = 1024;
		int kernel_size = 31;
		double epsilon = 1e-8;
		ShiftMode shift = ShiftMode::GlobalChannelMean;
		std::vector<double> shift_values;
		std::vector<int> channel_subset; // empty selects every channel

		int halo() const { return method == StandardizationMethod::Rolling ? kernel_size / 2 : 0; }

		// Throws InputError when a field is out of range.
		void validate() const;
	};

	std::string to_string(StandardizationMethod m);
	StandardizationMethod parse_method(const std::string &s);

	// Channel subsets: "all", "rgb", or a comma list of zero-based indices.
	std::vector<int> parse_channel_subset(const std::string &s, int channels);

	// Deviations share the block layout: C planes plus the inherited validity mask.
	template <typename Scalar>
	using DeviationTensor = Block<Scalar>;

	template <typename Scalar>
	struct MeanVar
	{
		Plane<Scalar> mean;
		Plane<Scalar> variance;
	};

	template <typename Derived>
	Plane<typename Derived::Scalar> replicate_pad(const Eigen::ArrayBase<Derived> &x, Eigen::Index r)
	{
		using Scalar = typename Derived::Scalar;
		const Eigen::Index h = x.rows(), w = x.cols();
		std::vector<Eigen::Index> rows(static_cast<std::size_t>(h + 2 * r));
		std::vector<Eigen::Index> cols(static_cast<std::size_t>(w + 2 * r));
		for (Eigen::Index i = 0; i < h + 2 * r; ++i)
			rows[i] = std::clamp<Eigen::Index>(i - r, 0, h - 1);
		for (Eigen::Index j = 0; j < w + 2 * r; ++j)
			cols[j] = std::clamp<Eigen::Index>(j - r, 0, w - 1);
		return Plane<Scalar>(x.derived()(rows, cols));
	}

	// Sums every k x k window of `padded` (valid mode): output is (H-k+1) x (W-k+1).
	// Separable, with a fixed left-to-right then top-to-bottom summation order per output pixel,
	// so the result for a pixel depends only on its window and not on where the block starts.
	template <typename Derived>
	Plane<typename Derived::Scalar> box_sum_valid(const Eigen::ArrayBase<Derived> &padded, int k)
	{
		using Scalar = typename Derived::Scalar;
		const Eigen::Index out_h = padded.rows() - k + 1;
		const Eigen::Index out_w = padded.cols() - k + 1;
		Plane<Scalar> horizontal = Plane<Scalar>::Zero(padded.rows(), out_w);
		for (int d = 0; d < k; ++d)
			horizontal += padded.derived().middleCols(d, out_w);
		Plane<Scalar> out = Plane<Scalar>::Zero(out_h, out_w);
		for (int d = 0; d < k; ++d)
			out += horizontal.middleRows(d, out_h);
		return out;
	}

	// Local mean and variance of (x - shift) over k x k windows of an already padded plane.
	// Output covers the interior, i.e. shrinks by k-1 along each axis.
	template <typename Derived>
	MeanVar<typename Derived::Scalar> local_mean_var_padded(const Eigen::ArrayBase<Derived> &padded, int k,
															typename Derived::Scalar shift)
	{
		using Scalar = typename Derived::Scalar;
		const Plane<Scalar> shifted = padded - shift;
		const Scalar norm = Scalar(1) / static_cast<Scalar>(k * k);
		MeanVar<Scalar> mv;
		mv.mean = box_sum_valid(shifted, k) * norm;
		const Plane<Scalar> second = box_sum_valid(shifted.square().eval(), k) * norm;
		// E[x^2] - E[x]^2 can go slightly negative through cancellation.
		mv.variance = (second - mv.mean.square()).max(Scalar(0));
		return mv;
	}

	// Same-size local statistics with replicate edge handling.
	template <typename Derived>
	MeanVar<typename Derived::Scalar> local_mean_var(const Eigen::ArrayBase<Derived> &x, int k,
													 typename Derived::Scalar shift)
	{
		return local_mean_var_padded(replicate_pad(x, k / 2), k, shift);
	}

	// Exact per-channel mean over valid pixels whose absolute (row, col) lie on a `stride` grid.
	// `row_origin`/`col_origin` give the block's position in the scene.
	struct ChannelSums
	{
		std::vector<double> sum;
		std::vector<std::int64_t> count;

		void merge(const ChannelSums &o);
		std::vector<double> means() const;
	};

	template <typename Scalar>
	ChannelSums channel_sums(const Block<Scalar> &block, int stride = 1, std::int64_t row_origin = 0,
							 std::int64_t col_origin = 0)
	{
		ChannelSums s;
		s.sum.assign(block.channels.size(), 0.0);
		s.count.assign(block.channels.size(), 0);
		const auto first = [stride](std::int64_t origin) {
			const auto m = origin % stride;
			return m == 0 ? std::int64_t{0} : stride - m;
		};
		for (std::size_t c = 0; c < block.channels.size(); ++c)
		{
			for (std::int64_t i = first(row_origin); i < block.rows(); i += stride)
				for (std::int64_t j = first(col_origin); j < block.cols(); j += stride)
					if (block.valid(i, j))
					{
						s.sum[c] += static_cast<double>(block.channels[c](i, j));
						++s.count[c];
					}
		}
		return s;
	}

	std::vector<double> resolve_shifts(const StandardizationConfig &cfg, std::size_t channels,
									   std::span<const double> scene_means);

	// Rolling-window standardization of a block that already carries a replicate halo of k/2 pixels.
	// Output covers the interior. Invalid samples are replaced with the channel shift before filtering
	// and produce zero, invalid deviations.
	template <typename Scalar>
	DeviationTensor<Scalar> rolling_standardize_padded(const Block<Scalar> &padded, const StandardizationConfig &cfg,
													   std::span<const double> scene_means = {})
	{
		const int k = cfg.kernel_size;
		const int r = k / 2;
		const Eigen::Index h = padded.rows() - 2 * r;
		const Eigen::Index w = padded.cols() - 2 * r;
		if (h <= 0 || w <= 0)
			throw InputError("block is smaller than the kernel halo");
		const auto shifts = resolve_shifts(cfg, padded.channels.size(), scene_means);
		const Scalar eps = static_cast<Scalar>(cfg.epsilon);

		DeviationTensor<Scalar> out;
		out.valid = padded.valid.block(r, r, h, w);
		const bool all_valid = padded.valid.all();
		out.channels.reserve(padded.channels.size());
		for (std::size_t c = 0; c < padded.channels.size(); ++c)
		{
			const Scalar shift = static_cast<Scalar>(shifts[c]);
			Plane<Scalar> filled;
			const Plane<Scalar> *src = &padded.channels[c];
			if (!all_valid)
			{
				filled = padded.valid.select(padded.channels[c], Plane<Scalar>::Constant(padded.rows(), padded.cols(), shift));
				src = &filled;
			}
			const auto mv = local_mean_var_padded(*src, k, shift);
			const Plane<Scalar> centre = src->block(r, r, h, w) - shift;
			Plane<Scalar> d = (centre - mv.mean) / (mv.variance + eps).sqrt();
			if (!all_valid)
				d = out.valid.select(d, Plane<Scalar>::Zero(h, w));
			out.channels.push_back(std::move(d));
		}
		return out;
	}

	template <typename Scalar>
	DeviationTensor<Scalar> rolling_standardize(const Block<Scalar> &block, const StandardizationConfig &cfg,
												std::span<const double> scene_means = {})
	{
		const int r = cfg.kernel_size / 2;
		Block<Scalar> padded;
		padded.valid = replicate_pad(block.valid, r);
		for (const auto &c : block.channels)
			padded.channels.push_back(replicate_pad(c, r));
		if (scene_means.empty() && cfg.shift == ShiftMode::GlobalChannelMean)
		{
			const auto means = channel_sums(block).means();
			return rolling_standardize_padded(padded, cfg, means);
		}
		return rolling_standardize_padded(padded, cfg, scene_means);
	}

	// Per-chunk z-scores over non-overlapping s x s chunks anchored at the block origin.
	// Statistics use valid pixels only, in double precision; sigma is floored at epsilon.
	template <typename Scalar>
	DeviationTensor<Scalar> chunked_standardize(const Block<Scalar> &block, const StandardizationConfig &cfg)
	{
		const Eigen::Index s = cfg.chunk_size;
		DeviationTensor<Scalar> out;
		out.valid = block.valid;
		for (const auto &plane : block.channels)
		{
			Plane<Scalar> d = Plane<Scalar>::Zero(plane.rows(), plane.cols());
			for (Eigen::Index r0 = 0; r0 < plane.rows(); r0 += s)
			{
				for (Eigen::Index c0 = 0; c0 < plane.cols(); c0 += s)
				{
					const Eigen::Index ch = std::min(s, plane.rows() - r0);
					const Eigen::Index cw = std::min(s, plane.cols() - c0);
					const auto x = plane.block(r0, c0, ch, cw);
					const auto valid = block.valid.block(r0, c0, ch, cw);
					const auto n = valid.count();
					if (n == 0)
						continue;
					const auto xd = x.template cast<double>();
					const double mean = valid.select(xd, 0.0).sum() / static_cast<double>(n);
					const double var = valid.select((xd - mean).square(), 0.0).sum() / static_cast<double>(n);
					const double sigma = std::max(std::sqrt(var), cfg.epsilon);
					d.block(r0, c0, ch, cw) = valid.select(((xd - mean) / sigma).template cast<Scalar>(), Scalar(0));
				}
			}
			out.channels.push_back(std::move(d));
		}
		return out;
	}

	template <typename Scalar>
	DeviationTensor<Scalar> standardize(const Block<Scalar> &block, const StandardizationConfig &cfg,
										std::span<const double> scene_means = {})
	{
		if (cfg.method == StandardizationMethod::Chunked)
			return chunked_standardize(block, cfg);
		return rolling_standardize(block, cfg, scene_means);
	}

	struct StabilityRow
	{
		double ratio = 0.0;
		double naive_mae = 0.0;
		double shifted_mae = 0.0;
		int trials = 0;
	};

	struct StabilityOptions
	{
		double mean = 1000.0;
		int chip_size = 51;
		std::uint64_t seed = 42;
	};

	// Float32 window standard deviation with and without the mean shift, each against a
	// float64 two-pass reference on Gaussian chips whose variance is ratio * mean.
	std::vector<StabilityRow> stability_experiment(std::span<const double> ratios, int trials,
												   const StabilityOptions &options = {});

	void write_stability_csv(const std::filesystem::path &path, std::span<const StabilityRow> rows);
} // namespace whales
