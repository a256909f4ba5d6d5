#include "raster_sources.hpp"

#include <tiffio.h>

#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <list>
#include <map>
#include <mutex>
#include <sstream>

namespace whales
{
	namespace
	{
		constexpr ttag_t kModelPixelScale = 33550;
		constexpr ttag_t kModelTiepoint = 33922;
		constexpr ttag_t kModelTransformation = 34264;
		constexpr ttag_t kGeoKeyDirectory = 34735;
		constexpr ttag_t kGeoDoubleParams = 34736;
		constexpr ttag_t kGeoAsciiParams = 34737;
		constexpr ttag_t kGdalNodata = 42113;

		constexpr std::uint16_t kGTModelType = 1024;
		constexpr std::uint16_t kGTRasterType = 1025;
		constexpr std::uint16_t kGTCitation = 1026;
		constexpr std::uint16_t kGeographicType = 2048;
		constexpr std::uint16_t kProjectedCSType = 3072;
		constexpr std::uint16_t kProjLinearUnits = 3076;
		constexpr std::uint16_t kUserDefined = 32767;

		const TIFFFieldInfo kGeoFieldInfo[] = {
			{kModelPixelScale, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1, const_cast<char *>("ModelPixelScaleTag")},
			{kModelTiepoint, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1, const_cast<char *>("ModelTiepointTag")},
			{kModelTransformation, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1,
			 const_cast<char *>("ModelTransformationTag")},
			{kGeoKeyDirectory, -1, -1, TIFF_SHORT, FIELD_CUSTOM, 1, 1, const_cast<char *>("GeoKeyDirectoryTag")},
			{kGeoDoubleParams, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1, const_cast<char *>("GeoDoubleParamsTag")},
			{kGeoAsciiParams, -1, -1, TIFF_ASCII, FIELD_CUSTOM, 1, 0, const_cast<char *>("GeoASCIIParamsTag")},
			{kGdalNodata, -1, -1, TIFF_ASCII, FIELD_CUSTOM, 1, 0, const_cast<char *>("GDAL_NODATA")},
		};

		TIFFExtendProc g_parent_extender = nullptr;

		void geo_tag_extender(TIFF *tif)
		{
			TIFFMergeFieldInfo(tif, kGeoFieldInfo, sizeof(kGeoFieldInfo) / sizeof(kGeoFieldInfo[0]));
			if (g_parent_extender)
				g_parent_extender(tif);
		}

		thread_local std::string g_last_tiff_error;

		void tiff_error_handler(const char *module, const char *fmt, va_list ap)
		{
			char buf[1024];
			std::vsnprintf(buf, sizeof(buf), fmt, ap);
			g_last_tiff_error = std::string(module ? module : "libtiff") + ": " + buf;
		}

		void tiff_warning_handler(const char *, const char *, va_list) {}

		void register_geotiff_tags()
		{
			static std::once_flag once;
			std::call_once(once, [] {
				g_parent_extender = TIFFSetTagExtender(geo_tag_extender);
				TIFFSetErrorHandler(tiff_error_handler);
				TIFFSetWarningHandler(tiff_warning_handler);
			});
		}

		struct TiffCloser
		{
			void operator()(TIFF *t) const
			{
				if (t)
					TIFFClose(t);
			}
		};
		using TiffPtr = std::unique_ptr<TIFF, TiffCloser>;

		TiffPtr open_tiff(const std::filesystem::path &path, const char *mode)
		{
			register_geotiff_tags();
			g_last_tiff_error.clear();
			TiffPtr tif(TIFFOpen(path.c_str(), mode));
			if (!tif)
				throw InputError("cannot open TIFF '" + path.string() + "': " + g_last_tiff_error);
			return tif;
		}

		std::map<std::uint16_t, std::uint16_t> read_geokeys(TIFF *tif, std::string *citation)
		{
			std::map<std::uint16_t, std::uint16_t> keys;
			std::uint16_t count = 0;
			std::uint16_t *dir = nullptr;
			if (!TIFFGetField(tif, kGeoKeyDirectory, &count, &dir) || count < 4 || !dir)
				return keys;
			char *ascii = nullptr;
			std::string ascii_params;
			if (TIFFGetField(tif, kGeoAsciiParams, &ascii) && ascii)
				ascii_params = ascii;
			const std::uint16_t n = dir[3];
			for (std::uint16_t i = 0; i < n && 4u + 4u * i + 3u < count; ++i)
			{
				const std::uint16_t *e = dir + 4 + 4 * i;
				if (e[1] == 0)
					keys[e[0]] = e[3];
				else if (e[1] == kGeoAsciiParams && e[0] == kGTCitation && citation)
				{
					const std::size_t off = e[3];
					const std::size_t len = e[2];
					if (off < ascii_params.size())
					{
						auto s = ascii_params.substr(off, len);
						while (!s.empty() && (s.back() == '|' || s.back() == '\0'))
							s.pop_back();
						*citation = s;
					}
				}
			}
			return keys;
		}

		std::optional<GeoTransform> read_transform(TIFF *tif, bool pixel_is_point)
		{
			std::uint16_t count = 0;
			double *vals = nullptr;
			if (TIFFGetField(tif, kModelTransformation, &count, &vals) && count >= 16 && vals)
			{
				GeoTransform t{{vals[3], vals[0], vals[1], vals[7], vals[4], vals[5]}};
				if (pixel_is_point)
				{
					t.c[0] -= 0.5 * (t.c[1] + t.c[2]);
					t.c[3] -= 0.5 * (t.c[4] + t.c[5]);
				}
				return t;
			}
			double *scale = nullptr;
			std::uint16_t scale_count = 0;
			double *tie = nullptr;
			std::uint16_t tie_count = 0;
			if (TIFFGetField(tif, kModelPixelScale, &scale_count, &scale) && scale_count >= 2 &&
				TIFFGetField(tif, kModelTiepoint, &tie_count, &tie) && tie_count >= 6)
			{
				GeoTransform t{{tie[3] - tie[0] * scale[0], scale[0], 0.0, tie[4] + tie[1] * scale[1], 0.0, -scale[1]}};
				if (pixel_is_point)
				{
					t.c[0] -= 0.5 * t.c[1];
					t.c[3] -= 0.5 * t.c[5];
				}
				return t;
			}
			return std::nullopt;
		}

		std::string tiff_date_to_iso(const char *dt)
		{
			// "YYYY:MM:DD HH:MM:SS"
			if (!dt || std::strlen(dt) < 10)
				return {};
			std::string s(dt, 10);
			s[4] = '-';
			s[7] = '-';
			return s;
		}

		class GeoTiffSource final : public RasterSource
		{
		public:
			GeoTiffSource(const std::filesystem::path &path, SceneInfo &info) : path_(path), tif_(open_tiff(path, "r"))
			{
				TIFF *t = tif_.get();
				std::uint32_t w = 0, h = 0;
				std::uint16_t spp = 1, bps = 8, fmt = SAMPLEFORMAT_UINT, planar = PLANARCONFIG_CONTIG;
				TIFFGetField(t, TIFFTAG_IMAGEWIDTH, &w);
				TIFFGetField(t, TIFFTAG_IMAGELENGTH, &h);
				TIFFGetFieldDefaulted(t, TIFFTAG_SAMPLESPERPIXEL, &spp);
				TIFFGetFieldDefaulted(t, TIFFTAG_BITSPERSAMPLE, &bps);
				TIFFGetFieldDefaulted(t, TIFFTAG_SAMPLEFORMAT, &fmt);
				TIFFGetFieldDefaulted(t, TIFFTAG_PLANARCONFIG, &planar);
				width_ = w;
				height_ = h;
				spp_ = spp;
				bps_ = bps;
				format_ = fmt;
				separate_ = planar == PLANARCONFIG_SEPARATE;

				if (fmt == SAMPLEFORMAT_UINT && bps == 8)
					info.sample_type = SampleType::UInt8;
				else if (fmt == SAMPLEFORMAT_UINT && bps == 16)
					info.sample_type = SampleType::UInt16;
				else if (fmt == SAMPLEFORMAT_INT && bps == 16)
					info.sample_type = SampleType::UInt16;
				else if (fmt == SAMPLEFORMAT_IEEEFP && bps == 32)
					info.sample_type = SampleType::Float32;
				else
					throw InputError("unsupported TIFF sample layout in '" + path.string() + "' (" +
									 std::to_string(bps) + " bits, format " + std::to_string(fmt) + ")");

				tiled_ = TIFFIsTiled(t) != 0;
				if (tiled_)
				{
					std::uint32_t tw = 0, th = 0;
					TIFFGetField(t, TIFFTAG_TILEWIDTH, &tw);
					TIFFGetField(t, TIFFTAG_TILELENGTH, &th);
					block_w_ = tw;
					block_h_ = th;
					block_bytes_ = static_cast<std::size_t>(TIFFTileSize(t));
				}
				else
				{
					std::uint32_t rps = 0;
					TIFFGetFieldDefaulted(t, TIFFTAG_ROWSPERSTRIP, &rps);
					block_w_ = w;
					block_h_ = std::min<std::uint32_t>(rps, h);
					block_bytes_ = static_cast<std::size_t>(TIFFStripSize(t));
				}
				if (block_w_ == 0 || block_h_ == 0)
					throw InputError("TIFF has zero-sized blocks: " + path.string());

				std::string citation;
				const auto keys = read_geokeys(t, &citation);
				bool pixel_is_point = false;
				if (auto it = keys.find(kGTRasterType); it != keys.end())
					pixel_is_point = it->second == 2;
				auto transform = read_transform(t, pixel_is_point);
				if (!transform)
					throw InputError("missing georeferencing in '" + path.string() + "'");
				info.transform = *transform;

				if (auto it = keys.find(kGTModelType); it != keys.end())
					info.geographic = it->second == 2;
				if (auto it = keys.find(kProjectedCSType); it != keys.end() && it->second != kUserDefined)
					info.crs = "EPSG:" + std::to_string(it->second);
				else if (auto g = keys.find(kGeographicType); g != keys.end() && g->second != kUserDefined)
					info.crs = "EPSG:" + std::to_string(g->second);
				else if (!citation.empty())
					info.crs = citation;
				else
					info.crs = "unknown";

				char *nodata = nullptr;
				if (TIFFGetField(t, kGdalNodata, &nodata) && nodata && *nodata)
					info.nodata = std::stod(nodata);
				char *dt = nullptr;
				if (TIFFGetField(t, TIFFTAG_DATETIME, &dt))
					info.acquisition_date = tiff_date_to_iso(dt);

				info.channels = spp;
				info.width = w;
				info.height = h;
			}

			void read(int channel, const Window &win, PlaneF &out) const override
			{
				out.resize(win.height, win.width);
				const std::int64_t bx0 = win.col_off / block_w_;
				const std::int64_t bx1 = (win.col_end() - 1) / block_w_;
				const std::int64_t by0 = win.row_off / block_h_;
				const std::int64_t by1 = (win.row_end() - 1) / block_h_;
				for (std::int64_t by = by0; by <= by1; ++by)
				{
					for (std::int64_t bx = bx0; bx <= bx1; ++bx)
					{
						const auto block = fetch(bx, by, separate_ ? channel : 0);
						const std::size_t plane = separate_ ? 0 : static_cast<std::size_t>(channel);
						const std::int64_t r0 = std::max(win.row_off, by * block_h_);
						const std::int64_t r1 = std::min(win.row_end(), (by + 1) * block_h_);
						const std::int64_t c0 = std::max(win.col_off, bx * block_w_);
						const std::int64_t c1 = std::min(win.col_end(), (bx + 1) * block_w_);
						for (std::int64_t r = r0; r < r1; ++r)
						{
							const float *src = block->data() + plane * block_w_ * block_h_ +
											   (r - by * block_h_) * block_w_ + (c0 - bx * block_w_);
							std::memcpy(&out(r - win.row_off, c0 - win.col_off), src,
										static_cast<std::size_t>(c1 - c0) * sizeof(float));
						}
					}
				}
			}

		private:
			using BlockData = std::vector<float>;
			using Key = std::tuple<std::int64_t, std::int64_t, int>;

			std::shared_ptr<const BlockData> fetch(std::int64_t bx, std::int64_t by, int plane) const
			{
				std::lock_guard lock(mutex_);
				const Key key{bx, by, plane};
				if (auto it = cache_.find(key); it != cache_.end())
				{
					lru_.splice(lru_.begin(), lru_, it->second.second);
					return it->second.first;
				}
				auto data = decode(bx, by, plane);
				lru_.push_front(key);
				cache_.emplace(key, std::make_pair(data, lru_.begin()));
				while (cache_.size() > kCacheBlocks)
				{
					cache_.erase(lru_.back());
					lru_.pop_back();
				}
				return data;
			}

			std::shared_ptr<const BlockData> decode(std::int64_t bx, std::int64_t by, int plane) const
			{
				TIFF *t = tif_.get();
				std::vector<unsigned char> raw(block_bytes_);
				tmsize_t got = 0;
				g_last_tiff_error.clear();
				if (tiled_)
				{
					const auto tile = TIFFComputeTile(t, static_cast<std::uint32_t>(bx * block_w_),
													  static_cast<std::uint32_t>(by * block_h_), 0,
													  static_cast<std::uint16_t>(plane));
					got = TIFFReadEncodedTile(t, tile, raw.data(), static_cast<tmsize_t>(raw.size()));
				}
				else
				{
					const auto strip = TIFFComputeStrip(t, static_cast<std::uint32_t>(by * block_h_),
														static_cast<std::uint16_t>(plane));
					got = TIFFReadEncodedStrip(t, strip, raw.data(), static_cast<tmsize_t>(raw.size()));
				}
				if (got < 0)
					throw std::runtime_error("TIFF read failed in '" + path_.string() + "': " + g_last_tiff_error);

				const std::size_t samples_in_block = static_cast<std::size_t>(block_w_ * block_h_);
				const int nplanes = separate_ ? 1 : spp_;
				auto out = std::make_shared<BlockData>(samples_in_block * nplanes, 0.0f);
				const std::size_t available = static_cast<std::size_t>(got) / (bps_ / 8);
				for (std::size_t i = 0; i < samples_in_block; ++i)
				{
					for (int p = 0; p < nplanes; ++p)
					{
						const std::size_t s = i * nplanes + p;
						if (s >= available)
							break;
						(*out)[p * samples_in_block + i] = sample(raw.data(), s);
					}
				}
				return out;
			}

			float sample(const unsigned char *raw, std::size_t i) const
			{
				switch (bps_)
				{
				case 8:
					return static_cast<float>(raw[i]);
				case 16:
				{
					std::uint16_t v;
					std::memcpy(&v, raw + 2 * i, 2);
					if (format_ == SAMPLEFORMAT_INT)
						return static_cast<float>(static_cast<std::int16_t>(v));
					return static_cast<float>(v);
				}
				default:
				{
					float v;
					std::memcpy(&v, raw + 4 * i, 4);
					return v;
				}
				}
			}

			static constexpr std::size_t kCacheBlocks = 512;

			std::filesystem::path path_;
			TiffPtr tif_;
			std::int64_t width_ = 0, height_ = 0;
			std::int64_t block_w_ = 0, block_h_ = 0;
			std::size_t block_bytes_ = 0;
			int spp_ = 1;
			int bps_ = 8;
			int format_ = SAMPLEFORMAT_UINT;
			bool separate_ = false;
			bool tiled_ = false;

			mutable std::mutex mutex_;
			mutable std::list<Key> lru_;
			mutable std::map<Key, std::pair<std::shared_ptr<const BlockData>, std::list<Key>::iterator>> cache_;
		};

		std::vector<std::uint16_t> build_geokeys(const SceneInfo &info, std::string &ascii)
		{
			std::vector<std::array<std::uint16_t, 4>> entries;
			const auto crs = normalize_crs(info.crs);
			const bool epsg = crs.rfind("EPSG:", 0) == 0;
			const bool geographic = info.geographic || crs_is_geographic(crs);
			entries.push_back({kGTModelType, 0, 1, static_cast<std::uint16_t>(geographic ? 2 : 1)});
			entries.push_back({kGTRasterType, 0, 1, 1});
			if (epsg)
			{
				const auto code = static_cast<std::uint16_t>(std::stoul(crs.substr(5)));
				entries.push_back({geographic ? kGeographicType : kProjectedCSType, 0, 1, code});
			}
			else
			{
				ascii = info.crs + "|";
				entries.push_back({kGTCitation, static_cast<std::uint16_t>(kGeoAsciiParams),
								   static_cast<std::uint16_t>(ascii.size()), 0});
				entries.push_back({geographic ? kGeographicType : kProjectedCSType, 0, 1, kUserDefined});
			}
			if (!geographic)
				entries.push_back({kProjLinearUnits, 0, 1, 9001});
			std::sort(entries.begin(), entries.end());
			std::vector<std::uint16_t> dir{1, 1, 0, static_cast<std::uint16_t>(entries.size())};
			for (const auto &e : entries)
				dir.insert(dir.end(), e.begin(), e.end());
			return dir;
		}
	} // namespace

	namespace detail
	{
		RasterScene open_geotiff(const std::filesystem::path &path)
		{
			SceneInfo info;
			info.scene_id = path.stem().string();
			auto source = std::make_shared<GeoTiffSource>(path, info);
			return RasterScene(std::move(info), std::move(source));
		}
	} // namespace detail

	void write_geotiff(const std::filesystem::path &path, const SceneInfo &info, std::span<const PlaneF> channels,
					   const GeoTiffOptions &options)
	{
		if (channels.empty())
			throw InputError("write_geotiff: no channels");
		const auto h = channels.front().rows();
		const auto w = channels.front().cols();
		for (const auto &c : channels)
			if (c.rows() != h || c.cols() != w)
				throw InputError("write_geotiff: channel dimensions differ");

		const int bits = options.sample_type == SampleType::UInt8 ? 8 : options.sample_type == SampleType::UInt16 ? 16 : 32;
		const double bytes = static_cast<double>(h) * static_cast<double>(w) * channels.size() * (bits / 8);
		auto tif = open_tiff(path, bytes > 3.5e9 ? "w8" : "w");
		TIFF *t = tif.get();
		const auto spp = static_cast<std::uint16_t>(channels.size());
		const auto tile = static_cast<std::uint32_t>(options.tile_size);

		TIFFSetField(t, TIFFTAG_IMAGEWIDTH, static_cast<std::uint32_t>(w));
		TIFFSetField(t, TIFFTAG_IMAGELENGTH, static_cast<std::uint32_t>(h));
		TIFFSetField(t, TIFFTAG_SAMPLESPERPIXEL, spp);
		TIFFSetField(t, TIFFTAG_BITSPERSAMPLE, static_cast<std::uint16_t>(bits));
		TIFFSetField(t, TIFFTAG_SAMPLEFORMAT,
					 static_cast<std::uint16_t>(bits == 32 ? SAMPLEFORMAT_IEEEFP : SAMPLEFORMAT_UINT));
		TIFFSetField(t, TIFFTAG_PLANARCONFIG, static_cast<std::uint16_t>(PLANARCONFIG_CONTIG));
		TIFFSetField(t, TIFFTAG_PHOTOMETRIC, static_cast<std::uint16_t>(PHOTOMETRIC_MINISBLACK));
		if (spp > 1)
		{
			std::vector<std::uint16_t> extra(spp - 1, EXTRASAMPLE_UNSPECIFIED);
			TIFFSetField(t, TIFFTAG_EXTRASAMPLES, static_cast<std::uint16_t>(extra.size()), extra.data());
		}
		TIFFSetField(t, TIFFTAG_TILEWIDTH, tile);
		TIFFSetField(t, TIFFTAG_TILELENGTH, tile);
		if (TIFFIsCODECConfigured(COMPRESSION_ADOBE_DEFLATE))
			TIFFSetField(t, TIFFTAG_COMPRESSION, static_cast<std::uint16_t>(COMPRESSION_ADOBE_DEFLATE));
		if (!info.acquisition_date.empty())
		{
			auto dt = info.acquisition_date.substr(0, 10) + " 00:00:00";
			dt[4] = ':';
			dt[7] = ':';
			TIFFSetField(t, TIFFTAG_DATETIME, dt.c_str());
		}

		std::string ascii;
		if (options.write_georeference)
		{
			const auto &c = info.transform.c;
			if (c[2] == 0.0 && c[4] == 0.0)
			{
				double scale[3] = {c[1], -c[5], 0.0};
				double tie[6] = {0.0, 0.0, 0.0, c[0], c[3], 0.0};
				TIFFSetField(t, kModelPixelScale, 3, scale);
				TIFFSetField(t, kModelTiepoint, 6, tie);
			}
			else
			{
				double m[16] = {c[1], c[2], 0, c[0], c[4], c[5], 0, c[3], 0, 0, 0, 0, 0, 0, 0, 1};
				TIFFSetField(t, kModelTransformation, 16, m);
			}
			auto keys = build_geokeys(info, ascii);
			TIFFSetField(t, kGeoKeyDirectory, static_cast<int>(keys.size()), keys.data());
			if (!ascii.empty())
				TIFFSetField(t, kGeoAsciiParams, ascii.c_str());
		}
		std::string nodata_text;
		if (info.nodata)
		{
			std::ostringstream os;
			os.precision(17);
			os << *info.nodata;
			nodata_text = os.str();
			TIFFSetField(t, kGdalNodata, nodata_text.c_str());
		}

		const std::size_t bytes_per = bits / 8;
		std::vector<unsigned char> buf(static_cast<std::size_t>(tile) * tile * spp * bytes_per);
		for (std::int64_t ty = 0; ty < h; ty += tile)
		{
			for (std::int64_t tx = 0; tx < w; tx += tile)
			{
				std::fill(buf.begin(), buf.end(), 0);
				for (std::int64_t r = ty; r < std::min<std::int64_t>(ty + tile, h); ++r)
				{
					for (std::int64_t cidx = tx; cidx < std::min<std::int64_t>(tx + tile, w); ++cidx)
					{
						for (std::uint16_t ch = 0; ch < spp; ++ch)
						{
							const float v = channels[ch](r, cidx);
							const std::size_t s = ((r - ty) * tile + (cidx - tx)) * spp + ch;
							if (bits == 32)
								std::memcpy(buf.data() + 4 * s, &v, 4);
							else if (bits == 16)
							{
								const auto q = static_cast<std::uint16_t>(std::clamp(std::lround(v), 0L, 65535L));
								std::memcpy(buf.data() + 2 * s, &q, 2);
							}
							else
								buf[s] = static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
						}
					}
				}
				const auto index = TIFFComputeTile(t, static_cast<std::uint32_t>(tx), static_cast<std::uint32_t>(ty), 0, 0);
				if (TIFFWriteEncodedTile(t, index, buf.data(), static_cast<tmsize_t>(buf.size())) < 0)
					throw std::runtime_error("TIFF write failed for '" + path.string() + "': " + g_last_tiff_error);
			}
		}
		if (!TIFFWriteDirectory(t))
			throw std::runtime_error("TIFF directory write failed for '" + path.string() + "'");
	}
} // namespace whales
