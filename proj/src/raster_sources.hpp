#pragma once

#include "whales/raster.hpp"

namespace whales::detail
{
	RasterScene open_geotiff(const std::filesystem::path &path);
	RasterScene open_raw_scene(const std::filesystem::path &sidecar);
} // namespace whales::detail
