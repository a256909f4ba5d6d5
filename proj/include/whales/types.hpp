#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace whales
{
	// Single image plane, row-major so that rows are contiguous like scanlines.
	template <typename Scalar>
	using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

	using PlaneF = Plane<float>;
	using PlaneD = Plane<double>;

	// Per-pixel boolean mask (validity, water, anomalous ...).
	using Mask = Plane<bool>;

	// Channel-major C x H x W block with a shared validity mask.
	template <typename Scalar>
	struct Block
	{
		std::vector<Plane<Scalar>> channels;
		Mask valid;

		Eigen::Index rows() const { return valid.rows(); }
		Eigen::Index cols() const { return valid.cols(); }
		int channel_count() const { return static_cast<int>(channels.size()); }

		template <typename Other>
		Block<Other> cast() const
		{
			Block<Other> out;
			out.valid = valid;
			out.channels.reserve(channels.size());
			for (const auto &c : channels)
				out.channels.push_back(c.template cast<Other>());
			return out;
		}
	};

	using BlockF = Block<float>;
	using BlockD = Block<double>;

	struct Pixel
	{
		std::int64_t row = 0;
		std::int64_t col = 0;

		friend bool operator==(const Pixel &, const Pixel &) = default;
		friend auto operator<=>(const Pixel &, const Pixel &) = default;
	};

	// Raised for inputs that are structurally wrong (bad config, bad geometry, bad file).
	class InputError : public std::runtime_error
	{
	public:
		using std::runtime_error::runtime_error;
	};
} // namespace whales
