#pragma once

#include "whales/raster.hpp"
#include "whales/regions.hpp"
#include "whales/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace whales::testing
{
	// Scene backed by in-memory planes.
	class MemorySource : public RasterSource
	{
	public:
		explicit MemorySource(std::vector<PlaneF> planes) : planes_(std::move(planes)) {}
		void read(int channel, const Window &w, PlaneF &out) const override
		{
			out = planes_[static_cast<std::size_t>(channel)].block(w.row_off, w.col_off, w.height, w.width);
		}

	private:
		std::vector<PlaneF> planes_;
	};

	inline SceneInfo utm_info(std::int64_t height, std::int64_t width, int channels, double res = 0.3)
	{
		SceneInfo info;
		info.channels = channels;
		info.height = height;
		info.width = width;
		info.transform = GeoTransform::north_up(500000.0, 4640000.0, res);
		info.crs = "EPSG:32619";
		info.scene_id = "test";
		info.acquisition_date = "2021-04-24";
		return info;
	}

	inline RasterScene memory_scene(std::vector<PlaneF> planes, double res = 0.3,
									std::optional<double> nodata = std::nullopt)
	{
		auto info = utm_info(planes.front().rows(), planes.front().cols(), static_cast<int>(planes.size()), res);
		info.nodata = nodata;
		return RasterScene(info, std::make_shared<MemorySource>(std::move(planes)));
	}

	inline PlaneF gaussian_plane(std::int64_t h, std::int64_t w, double mean, double sigma, std::mt19937_64 &rng)
	{
		std::normal_distribution<double> g(mean, sigma);
		PlaneF p(h, w);
		for (Eigen::Index i = 0; i < p.size(); ++i)
			p.data()[i] = static_cast<float>(g(rng));
		return p;
	}

	inline BlockF random_block(std::int64_t h, std::int64_t w, int channels, std::mt19937_64 &rng, double mean = 500.0,
							   double sigma = 40.0)
	{
		BlockF b;
		for (int c = 0; c < channels; ++c)
			b.channels.push_back(gaussian_plane(h, w, mean + 100.0 * c, sigma, rng));
		b.valid = Mask::Constant(h, w, true);
		return b;
	}

	inline Mask random_mask(std::int64_t h, std::int64_t w, double density, std::mt19937_64 &rng)
	{
		std::bernoulli_distribution on(density);
		Mask m(h, w);
		for (Eigen::Index i = 0; i < m.rows(); ++i)
			for (Eigen::Index j = 0; j < m.cols(); ++j)
				m(i, j) = on(rng);
		return m;
	}

	// Per-window float64 z-score with replicate edges, straight from the definition.
	inline PlaneD brute_rolling(const PlaneF &x, int k, double eps)
	{
		const Eigen::Index h = x.rows(), w = x.cols();
		const int r = k / 2;
		PlaneD out(h, w);
		std::vector<double> win(static_cast<std::size_t>(k * k));
		for (Eigen::Index i = 0; i < h; ++i)
			for (Eigen::Index j = 0; j < w; ++j)
			{
				std::size_t n = 0;
				for (int di = -r; di <= r; ++di)
					for (int dj = -r; dj <= r; ++dj)
					{
						const auto ii = std::clamp<Eigen::Index>(i + di, 0, h - 1);
						const auto jj = std::clamp<Eigen::Index>(j + dj, 0, w - 1);
						win[n++] = x(ii, jj);
					}
				double mean = 0.0;
				for (double v : win)
					mean += v;
				mean /= static_cast<double>(win.size());
				double var = 0.0;
				for (double v : win)
					var += (v - mean) * (v - mean);
				var /= static_cast<double>(win.size());
				out(i, j) = (x(i, j) - mean) / std::sqrt(var + eps);
			}
		return out;
	}

	// Iterative flood fill; components labelled in raster order of their first pixel.
	inline std::vector<std::vector<Pixel>> flood_fill_components(const Mask &m)
	{
		const Eigen::Index h = m.rows(), w = m.cols();
		Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> label =
			Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Constant(h, w, -1);
		std::vector<std::vector<Pixel>> comps;
		for (Eigen::Index i = 0; i < h; ++i)
			for (Eigen::Index j = 0; j < w; ++j)
			{
				if (!m(i, j) || label(i, j) >= 0)
					continue;
				const int id = static_cast<int>(comps.size());
				comps.emplace_back();
				std::vector<std::pair<Eigen::Index, Eigen::Index>> stack{{i, j}};
				label(i, j) = id;
				while (!stack.empty())
				{
					const auto [a, b] = stack.back();
					stack.pop_back();
					comps[id].push_back(Pixel{a, b});
					for (int da = -1; da <= 1; ++da)
						for (int db = -1; db <= 1; ++db)
						{
							const auto na = a + da, nb = b + db;
							if (na < 0 || nb < 0 || na >= h || nb >= w || !m(na, nb) || label(na, nb) >= 0)
								continue;
							label(na, nb) = id;
							stack.emplace_back(na, nb);
						}
				}
				std::sort(comps[id].begin(), comps[id].end());
			}
		return comps;
	}

	inline float sort_quantile(std::vector<float> v, double q)
	{
		std::sort(v.begin(), v.end());
		const auto rank = static_cast<std::int64_t>(std::ceil(q * static_cast<double>(v.size()) - 1e-9));
		return v[static_cast<std::size_t>(std::clamp<std::int64_t>(rank, 1, static_cast<std::int64_t>(v.size())) - 1)];
	}

	class TempDir
	{
	public:
		TempDir()
		{
			auto tmpl = (std::filesystem::temp_directory_path() / "whales-test-XXXXXX").string();
			if (!::mkdtemp(tmpl.data()))
				throw std::runtime_error("mkdtemp failed");
			path_ = tmpl;
		}
		~TempDir()
		{
			std::error_code ec;
			std::filesystem::remove_all(path_, ec);
		}
		const std::filesystem::path &path() const { return path_; }
		std::filesystem::path operator/(const std::string &name) const { return path_ / name; }

	private:
		std::filesystem::path path_;
	};
} // namespace whales::testing
