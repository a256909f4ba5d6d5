#include "whales/standardize.hpp"

#include <fstream>
#include <random>
#include <sstream>

namespace whales
{
	void StandardizationConfig::validate() const
	{
		if (chunk_size < 1)
			throw InputError("chunk size must be >= 1");
		if (kernel_size < 3 || kernel_size % 2 == 0)
			throw InputError("kernel size must be odd and >= 3");
		if (!(epsilon > 0.0))
			throw InputError("epsilon must be positive");
		if (shift == ShiftMode::Explicit && shift_values.empty())
			throw InputError("explicit shift requires shift values");
		for (int c : channel_subset)
			if (c < 0)
				throw InputError("channel indices must be non-negative");
	}

	std::string to_string(StandardizationMethod m)
	{
		return m == StandardizationMethod::Chunked ? "chunked" : "rolling";
	}

	StandardizationMethod parse_method(const std::string &s)
	{
		if (s == "chunked")
			return StandardizationMethod::Chunked;
		if (s == "rolling")
			return StandardizationMethod::Rolling;
		throw InputError("unknown standardization method '" + s + "' (expected rolling or chunked)");
	}

	std::vector<int> parse_channel_subset(const std::string &s, int channels)
	{
		std::vector<int> out;
		if (s.empty() || s == "all")
		{
			for (int c = 0; c < channels; ++c)
				out.push_back(c);
			return out;
		}
		if (s == "rgb")
		{
			// 8-band WorldView order: coastal, blue, green, yellow, red, red edge, nir1, nir2.
			if (channels == 8)
				return {4, 2, 1};
			// Otherwise RGB (or BGR, BGRN) occupies the first three bands.
			if (channels < 3)
				throw InputError("rgb channel preset needs at least 3 channels");
			return {0, 1, 2};
		}
		std::stringstream ss(s);
		std::string item;
		while (std::getline(ss, item, ','))
		{
			int c = -1;
			try
			{
				c = std::stoi(item);
			}
			catch (const std::exception &)
			{
				throw InputError("bad channel index '" + item + "'");
			}
			if (c < 0 || c >= channels)
				throw InputError("channel index " + item + " out of range");
			out.push_back(c);
		}
		if (out.empty())
			throw InputError("empty channel subset");
		return out;
	}

	void ChannelSums::merge(const ChannelSums &o)
	{
		if (sum.empty())
		{
			*this = o;
			return;
		}
		for (std::size_t c = 0; c < sum.size(); ++c)
		{
			sum[c] += o.sum[c];
			count[c] += o.count[c];
		}
	}

	std::vector<double> ChannelSums::means() const
	{
		std::vector<double> m(sum.size(), 0.0);
		for (std::size_t c = 0; c < sum.size(); ++c)
			if (count[c] > 0)
				m[c] = sum[c] / static_cast<double>(count[c]);
		return m;
	}

	std::vector<double> resolve_shifts(const StandardizationConfig &cfg, std::size_t channels,
									   std::span<const double> scene_means)
	{
		std::vector<double> shifts(channels, 0.0);
		switch (cfg.shift)
		{
		case ShiftMode::None:
			break;
		case ShiftMode::Explicit:
			for (std::size_t c = 0; c < channels; ++c)
				shifts[c] = cfg.shift_values.size() == 1 ? cfg.shift_values[0] : cfg.shift_values.at(c);
			break;
		case ShiftMode::GlobalChannelMean:
			if (scene_means.size() != channels)
				throw InputError("global shift needs one scene mean per channel");
			std::copy(scene_means.begin(), scene_means.end(), shifts.begin());
			break;
		}
		return shifts;
	}

	std::vector<StabilityRow> stability_experiment(std::span<const double> ratios, int trials,
												   const StabilityOptions &options)
	{
		if (trials < 1)
			throw InputError("trials must be >= 1");
		const int k = options.chip_size;
		if (k < 3 || k % 2 == 0)
			throw InputError("chip size must be odd and >= 3");
		std::mt19937_64 rng(options.seed);
		std::vector<StabilityRow> rows;
		for (double ratio : ratios)
		{
			if (!(ratio >= 0.0))
				throw InputError("variance/mean ratios must be non-negative");
			const double sigma = std::sqrt(ratio * options.mean);
			std::normal_distribution<double> gauss(options.mean, sigma);
			StabilityRow row{ratio, 0.0, 0.0, trials};
			PlaneF chip(k, k);
			for (int t = 0; t < trials; ++t)
			{
				for (Eigen::Index i = 0; i < chip.size(); ++i)
					chip.data()[i] = static_cast<float>(sigma > 0.0 ? gauss(rng) : options.mean);

				// Two-pass float64 reference on the exact float32 samples.
				const PlaneD xd = chip.cast<double>();
				const double mean = xd.mean();
				const double truth = std::sqrt((xd - mean).square().mean());

				const auto naive = local_mean_var_padded(chip, k, 0.0f);
				const auto shifted = local_mean_var_padded(chip, k, static_cast<float>(mean));
				row.naive_mae += std::abs(static_cast<double>(std::sqrt(naive.variance(0, 0))) - truth);
				row.shifted_mae += std::abs(static_cast<double>(std::sqrt(shifted.variance(0, 0))) - truth);
			}
			row.naive_mae /= trials;
			row.shifted_mae /= trials;
			rows.push_back(row);
		}
		return rows;
	}

	void write_stability_csv(const std::filesystem::path &path, std::span<const StabilityRow> rows)
	{
		std::ofstream out(path);
		if (!out)
			throw std::runtime_error("cannot write " + path.string());
		out << "ratio,naive_mae,shifted_mae,trials\n";
		out.precision(9);
		for (const auto &r : rows)
			out << r.ratio << ',' << r.naive_mae << ',' << r.shifted_mae << ',' << r.trials << '\n';
	}
} // namespace whales
