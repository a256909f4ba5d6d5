#include "raster_sources.hpp"

#include <json.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <cstring>
#include <fstream>

namespace whales
{
	namespace
	{
		using nlohmann::json;

		// Band-sequential little-endian float32; pread keeps concurrent reads lock-free.
		class RawFloatSource final : public RasterSource
		{
		public:
			RawFloatSource(const std::filesystem::path &path, std::int64_t height, std::int64_t width)
				: path_(path), height_(height), width_(width)
			{
				fd_ = ::open(path.c_str(), O_RDONLY);
				if (fd_ < 0)
					throw InputError("cannot open raw raster data: " + path.string());
			}
			~RawFloatSource() override
			{
				if (fd_ >= 0)
					::close(fd_);
			}
			RawFloatSource(const RawFloatSource &) = delete;
			RawFloatSource &operator=(const RawFloatSource &) = delete;

			void read(int channel, const Window &w, PlaneF &out) const override
			{
				out.resize(w.height, w.width);
				const std::size_t row_bytes = static_cast<std::size_t>(w.width) * sizeof(float);
				for (std::int64_t r = 0; r < w.height; ++r)
				{
					const std::int64_t offset =
						((static_cast<std::int64_t>(channel) * height_ + (w.row_off + r)) * width_ + w.col_off) *
						static_cast<std::int64_t>(sizeof(float));
					auto *dst = reinterpret_cast<char *>(&out(r, 0));
					std::size_t done = 0;
					while (done < row_bytes)
					{
						const auto n = ::pread(fd_, dst + done, row_bytes - done, offset + static_cast<off_t>(done));
						if (n < 0)
							throw std::runtime_error("raw raster read failed: " + path_.string());
						if (n == 0)
						{
							// Short file: remaining samples read as zero (sparse files).
							std::memset(dst + done, 0, row_bytes - done);
							break;
						}
						done += static_cast<std::size_t>(n);
					}
				}
			}

		private:
			std::filesystem::path path_;
			std::int64_t height_;
			std::int64_t width_;
			int fd_ = -1;
		};

		json sidecar_json(const std::filesystem::path &data_path, const SceneInfo &info)
		{
			json j;
			j["data"] = data_path.filename().string();
			j["channels"] = info.channels;
			j["height"] = info.height;
			j["width"] = info.width;
			j["geotransform"] = info.transform.c;
			j["nodata"] = info.nodata ? json(*info.nodata) : json(nullptr);
			j["crs"] = info.crs;
			if (info.geographic)
				j["geographic"] = true;
			if (!info.scene_id.empty())
				j["scene_id"] = info.scene_id;
			if (!info.acquisition_date.empty())
				j["acquisition_date"] = info.acquisition_date;
			return j;
		}
	} // namespace

	namespace detail
	{
		RasterScene open_raw_scene(const std::filesystem::path &sidecar)
		{
			std::ifstream in(sidecar);
			if (!in)
				throw InputError("cannot read sidecar: " + sidecar.string());
			json j;
			try
			{
				in >> j;
			}
			catch (const json::exception &e)
			{
				throw InputError("malformed sidecar '" + sidecar.string() + "': " + e.what());
			}
			SceneInfo info;
			try
			{
				info.channels = j.at("channels").get<int>();
				info.height = j.at("height").get<std::int64_t>();
				info.width = j.at("width").get<std::int64_t>();
			}
			catch (const json::exception &e)
			{
				throw InputError("sidecar '" + sidecar.string() + "' lacks dimensions: " + e.what());
			}
			if (!j.contains("geotransform") || j["geotransform"].is_null())
				throw InputError("missing georeferencing in '" + sidecar.string() + "'");
			const auto gt = j["geotransform"].get<std::vector<double>>();
			if (gt.size() != 6)
				throw InputError("geotransform must have 6 coefficients");
			std::copy(gt.begin(), gt.end(), info.transform.c.begin());
			if (j.contains("nodata") && !j["nodata"].is_null())
				info.nodata = j["nodata"].get<double>();
			info.crs = j.value("crs", std::string("unknown"));
			info.geographic = j.value("geographic", false) || crs_is_geographic(info.crs);
			info.acquisition_date = j.value("acquisition_date", std::string());

			// Default pairing: "scene.raw.json" describes "scene.raw".
			auto data = sidecar.parent_path() / sidecar.stem();
			if (!data.has_extension())
				data += ".raw";
			if (j.contains("data"))
				data = sidecar.parent_path() / j["data"].get<std::string>();
			info.scene_id = j.value("scene_id", data.stem().string());
			info.sample_type = SampleType::Float32;
			auto source = std::make_shared<RawFloatSource>(data, info.height, info.width);
			return RasterScene(std::move(info), std::move(source));
		}
	} // namespace detail

	std::filesystem::path write_raw_sidecar(const std::filesystem::path &data_path, const SceneInfo &info)
	{
		auto sidecar = data_path;
		sidecar += ".json";
		std::ofstream out(sidecar);
		if (!out)
			throw std::runtime_error("cannot write sidecar: " + sidecar.string());
		out << sidecar_json(data_path, info).dump(2) << '\n';
		return sidecar;
	}

	std::filesystem::path write_raw_scene(const std::filesystem::path &data_path, const SceneInfo &info,
										  std::span<const PlaneF> channels)
	{
		std::ofstream out(data_path, std::ios::binary);
		if (!out)
			throw std::runtime_error("cannot write raw raster: " + data_path.string());
		for (const auto &c : channels)
			out.write(reinterpret_cast<const char *>(c.data()), static_cast<std::streamsize>(c.size() * sizeof(float)));
		out.close();
		return write_raw_sidecar(data_path, info);
	}
} // namespace whales
