#include "whales/synth.hpp"

#include "whales/csv.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace whales
{
	using nlohmann::json;

	void SyntheticSceneSpec::validate() const
	{
		if (width < 1 || height < 1)
			throw InputError("synthetic scene needs positive dimensions");
		if (!(resolution > 0.0))
			throw InputError("resolution must be positive");
		if (channels.empty())
			throw InputError("synthetic scene needs at least one channel");
		for (const auto &c : channels)
			if (!(c.sigma >= 0.0))
				throw InputError("channel sigma must be >= 0");
		for (const auto &b : blobs)
		{
			if (b.row < 0 || b.col < 0 || b.row > height - 1 || b.col > width - 1)
				throw InputError("blob outside scene at (" + std::to_string(b.row) + ", " + std::to_string(b.col) + ")");
			if (!(b.sigma_px > 0.0))
				throw InputError("blob sigma must be positive");
		}
		if (random_blobs.count < 0)
			throw InputError("random blob count must be non-negative");
		if (random_blobs.count > 0 && 2 * random_blobs.margin_px >= std::min(width, height))
			throw InputError("random blob margin leaves no room in the scene");
		if (whitecaps.density_per_km2 < 0.0)
			throw InputError("whitecap density must be >= 0");
	}

	SyntheticSceneSpec parse_synth_spec(const std::string &text)
	{
		SyntheticSceneSpec s;
		try
		{
			const auto j = json::parse(text);
			s.width = j.value("width", s.width);
			s.height = j.value("height", s.height);
			s.resolution = j.value("resolution", s.resolution);
			if (j.contains("origin"))
				s.origin = {j["origin"].at(0).get<double>(), j["origin"].at(1).get<double>()};
			s.crs = j.value("crs", s.crs);
			s.scene_id = j.value("scene_id", s.scene_id);
			s.acquisition_date = j.value("acquisition_date", s.acquisition_date);
			s.seed = j.value("seed", s.seed);
			if (j.contains("channels"))
			{
				s.channels.clear();
				for (const auto &c : j["channels"])
					s.channels.push_back({c.value("mean", 400.0), c.value("sigma", 4.0)});
			}
			const auto dtype = j.value("dtype", std::string("float32"));
			if (dtype == "float32")
				s.sample_type = SampleType::Float32;
			else if (dtype == "uint16")
				s.sample_type = SampleType::UInt16;
			else if (dtype == "uint8")
				s.sample_type = SampleType::UInt8;
			else
				throw InputError("dtype must be float32, uint16 or uint8");
			for (const auto &b : j.value("blobs", json::array()))
				s.blobs.push_back({b.at("row").get<double>(), b.at("col").get<double>(),
								   b.value("amplitude_sigma", 10.0), b.value("sigma_px", 3.0)});
			if (j.contains("random_blobs"))
			{
				const auto &r = j["random_blobs"];
				s.random_blobs.count = r.value("count", 0);
				s.random_blobs.amplitude_sigma = r.value("amplitude_sigma", s.random_blobs.amplitude_sigma);
				s.random_blobs.sigma_px = r.value("sigma_px", s.random_blobs.sigma_px);
				s.random_blobs.margin_px = r.value("margin_px", s.random_blobs.margin_px);
				s.random_blobs.min_separation_px = r.value("min_separation_px", s.random_blobs.min_separation_px);
			}
			if (j.contains("whitecaps"))
			{
				const auto &w = j["whitecaps"];
				s.whitecaps.density_per_km2 = w.value("density_per_km2", 0.0);
				s.whitecaps.amplitude_min_sigma = w.value("amplitude_min_sigma", s.whitecaps.amplitude_min_sigma);
				s.whitecaps.amplitude_max_sigma = w.value("amplitude_max_sigma", s.whitecaps.amplitude_max_sigma);
				s.whitecaps.sigma_min_px = w.value("sigma_min_px", s.whitecaps.sigma_min_px);
				s.whitecaps.sigma_max_px = w.value("sigma_max_px", s.whitecaps.sigma_max_px);
			}
			else if (j.contains("whitecap_density"))
				s.whitecaps.density_per_km2 = j["whitecap_density"].get<double>();
		}
		catch (const json::exception &e)
		{
			throw InputError(std::string("malformed synthetic scene spec: ") + e.what());
		}
		s.validate();
		return s;
	}

	SyntheticSceneSpec load_synth_spec(const std::filesystem::path &path)
	{
		std::ifstream in(path);
		if (!in)
			throw InputError("cannot read " + path.string());
		std::stringstream ss;
		ss << in.rdbuf();
		return parse_synth_spec(ss.str());
	}

	namespace
	{
		void add_blob(std::vector<PlaneF> &channels, const std::vector<ChannelNoise> &noise, const BlobSpec &b)
		{
			const auto h = channels.front().rows(), w = channels.front().cols();
			const double reach = 4.0 * b.sigma_px;
			const auto r0 = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(b.row - reach)));
			const auto r1 = std::min<Eigen::Index>(h - 1, static_cast<Eigen::Index>(std::ceil(b.row + reach)));
			const auto c0 = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(b.col - reach)));
			const auto c1 = std::min<Eigen::Index>(w - 1, static_cast<Eigen::Index>(std::ceil(b.col + reach)));
			const double inv = 1.0 / (2.0 * b.sigma_px * b.sigma_px);
			for (Eigen::Index i = r0; i <= r1; ++i)
				for (Eigen::Index j = c0; j <= c1; ++j)
				{
					const double d2 = (i - b.row) * (i - b.row) + (j - b.col) * (j - b.col);
					const double g = b.amplitude_sigma * std::exp(-d2 * inv);
					for (std::size_t c = 0; c < channels.size(); ++c)
						channels[c](i, j) += static_cast<float>(g * noise[c].sigma);
				}
		}
	} // namespace

	SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec &spec)
	{
		spec.validate();
		std::mt19937_64 rng(spec.seed);
		SyntheticScene out;
		out.info.channels = static_cast<int>(spec.channels.size());
		out.info.height = spec.height;
		out.info.width = spec.width;
		out.info.transform = GeoTransform::north_up(spec.origin.x, spec.origin.y, spec.resolution);
		out.info.crs = spec.crs;
		out.info.geographic = crs_is_geographic(spec.crs);
		out.info.scene_id = spec.scene_id;
		out.info.acquisition_date = spec.acquisition_date;
		out.info.sample_type = spec.sample_type;

		for (const auto &c : spec.channels)
		{
			std::normal_distribution<double> gauss(c.mean, c.sigma);
			PlaneF plane(spec.height, spec.width);
			for (Eigen::Index i = 0; i < plane.size(); ++i)
				plane.data()[i] = static_cast<float>(c.sigma > 0.0 ? gauss(rng) : c.mean);
			out.channels.push_back(std::move(plane));
		}

		out.blobs = spec.blobs;
		const auto &rb = spec.random_blobs;
		std::uniform_real_distribution<double> urow(rb.margin_px, static_cast<double>(spec.height) - 1 - rb.margin_px);
		std::uniform_real_distribution<double> ucol(rb.margin_px, static_cast<double>(spec.width) - 1 - rb.margin_px);
		int placed = 0;
		for (int attempt = 0; placed < rb.count; ++attempt)
		{
			if (attempt > 1000 * std::max(1, rb.count))
				throw InputError("cannot place random blobs with the requested separation");
			const BlobSpec b{urow(rng), ucol(rng), rb.amplitude_sigma, rb.sigma_px};
			const bool clear = std::all_of(out.blobs.begin(), out.blobs.end(), [&](const BlobSpec &o) {
				return std::hypot(o.row - b.row, o.col - b.col) >= rb.min_separation_px;
			});
			if (!clear)
				continue;
			out.blobs.push_back(b);
			++placed;
		}
		for (const auto &b : out.blobs)
			add_blob(out.channels, spec.channels, b);

		const auto &wc = spec.whitecaps;
		const auto n_caps = static_cast<long>(std::llround(wc.density_per_km2 * spec.area_km2()));
		std::uniform_real_distribution<double> any_row(0.0, static_cast<double>(spec.height - 1));
		std::uniform_real_distribution<double> any_col(0.0, static_cast<double>(spec.width - 1));
		std::uniform_real_distribution<double> amp(wc.amplitude_min_sigma, wc.amplitude_max_sigma);
		std::uniform_real_distribution<double> size(wc.sigma_min_px, wc.sigma_max_px);
		for (long i = 0; i < n_caps; ++i)
		{
			BlobSpec cap;
			cap.row = any_row(rng);
			cap.col = any_col(rng);
			cap.amplitude_sigma = amp(rng);
			cap.sigma_px = size(rng);
			add_blob(out.channels, spec.channels, cap);
			out.whitecaps.push_back(cap);
		}
		return out;
	}

	void write_truth_csv(const std::filesystem::path &path, const SyntheticScene &scene)
	{
		std::ofstream out(path, std::ios::binary);
		if (!out)
			throw std::runtime_error("cannot write " + path.string());
		out << "id,x,y,row,col,amplitude_sigma,sigma_px,confidence,species\n";
		out.precision(12);
		for (std::size_t i = 0; i < scene.blobs.size(); ++i)
		{
			const auto &b = scene.blobs[i];
			const auto g = pixel_to_geo(scene.info.transform, b.row, b.col);
			out << "blob-" << i << ',' << g.x << ',' << g.y << ',' << b.row << ',' << b.col << ','
				<< b.amplitude_sigma << ',' << b.sigma_px << ",definite,synthetic\n";
		}
	}

	void write_synthetic_scene(const SyntheticScene &scene, const std::filesystem::path &raster,
							   const std::filesystem::path &truth_csv)
	{
		const auto ext = raster.extension().string();
		if (ext == ".raw" || ext == ".bin")
			write_raw_scene(raster, scene.info, scene.channels);
		else
		{
			GeoTiffOptions opts;
			opts.sample_type = scene.info.sample_type;
			write_geotiff(raster, scene.info, scene.channels, opts);
		}
		if (!truth_csv.empty())
			write_truth_csv(truth_csv, scene);
	}
} // namespace whales
