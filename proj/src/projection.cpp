#include "whales/projection.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace whales
{
	namespace
	{
		constexpr double kA = 6378137.0;
		constexpr double kF = 1.0 / 298.257223563;
		constexpr double kE2 = kF * (2.0 - kF);
		constexpr double kEp2 = kE2 / (1.0 - kE2);
		constexpr double kK0 = 0.9996;
		constexpr double kFalseEasting = 500000.0;
		constexpr double kFalseNorthingSouth = 10000000.0;

		constexpr double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
		constexpr double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

		double central_meridian(int zone) { return deg2rad((zone - 1) * 6.0 - 180.0 + 3.0); }

		// Krueger series in the third flattening n, fourth order.
		struct Krueger
		{
			double A;
			std::array<double, 4> alpha, beta, delta;
		};

		const Krueger &krueger()
		{
			static const Krueger k = [] {
				const double n = kF / (2.0 - kF);
				const double n2 = n * n, n3 = n2 * n, n4 = n3 * n;
				Krueger r;
				r.A = kA / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0);
				r.alpha = {n / 2 - 2 * n2 / 3 + 5 * n3 / 16 + 41 * n4 / 180, 13 * n2 / 48 - 3 * n3 / 5 + 557 * n4 / 1440,
						   61 * n3 / 240 - 103 * n4 / 140, 49561 * n4 / 161280};
				r.beta = {n / 2 - 2 * n2 / 3 + 37 * n3 / 96 - n4 / 360, n2 / 48 + n3 / 15 - 437 * n4 / 1440,
						  17 * n3 / 480 - 37 * n4 / 840, 4397 * n4 / 161280};
				r.delta = {2 * n - 2 * n2 / 3 - 2 * n3 + 116 * n4 / 45, 7 * n2 / 3 - 8 * n3 / 5 - 227 * n4 / 45,
						   56 * n3 / 15 - 136 * n4 / 35, 4279 * n4 / 630};
				return r;
			}();
			return k;
		}
	} // namespace

	std::optional<UtmZone> utm_zone_of(const std::string &crs)
	{
		const auto n = normalize_crs(crs);
		if (n.rfind("EPSG:", 0) != 0)
			return std::nullopt;
		const int code = std::stoi(n.substr(5));
		if (code > 32600 && code <= 32660)
			return UtmZone{code - 32600, false};
		if (code > 32700 && code <= 32760)
			return UtmZone{code - 32700, true};
		return std::nullopt;
	}

	GeoPoint lonlat_to_utm(const LonLat &ll, const UtmZone &zone)
	{
		const auto &k = krueger();
		const double e = std::sqrt(kE2);
		const double phi = deg2rad(ll.lat);
		const double lam = deg2rad(ll.lon) - central_meridian(zone.zone);
		const double t = std::sinh(std::atanh(std::sin(phi)) - e * std::atanh(e * std::sin(phi)));
		const double xi_p = std::atan2(t, std::cos(lam));
		const double eta_p = std::atanh(std::sin(lam) / std::sqrt(1.0 + t * t));
		double xi = xi_p, eta = eta_p;
		for (int j = 1; j <= 4; ++j)
		{
			xi += k.alpha[j - 1] * std::sin(2 * j * xi_p) * std::cosh(2 * j * eta_p);
			eta += k.alpha[j - 1] * std::cos(2 * j * xi_p) * std::sinh(2 * j * eta_p);
		}
		GeoPoint p{kFalseEasting + kK0 * k.A * eta, kK0 * k.A * xi};
		if (zone.south)
			p.y += kFalseNorthingSouth;
		return p;
	}

	LonLat utm_to_lonlat(const GeoPoint &p, const UtmZone &zone)
	{
		const auto &k = krueger();
		const double xi = (zone.south ? p.y - kFalseNorthingSouth : p.y) / (kK0 * k.A);
		const double eta = (p.x - kFalseEasting) / (kK0 * k.A);
		double xi_p = xi, eta_p = eta;
		for (int j = 1; j <= 4; ++j)
		{
			xi_p -= k.beta[j - 1] * std::sin(2 * j * xi) * std::cosh(2 * j * eta);
			eta_p -= k.beta[j - 1] * std::cos(2 * j * xi) * std::sinh(2 * j * eta);
		}
		const double chi = std::asin(std::sin(xi_p) / std::cosh(eta_p));
		double phi = chi;
		for (int j = 1; j <= 4; ++j)
			phi += k.delta[j - 1] * std::sin(2 * j * chi);
		const double lam = central_meridian(zone.zone) + std::atan2(std::sinh(eta_p), std::cos(xi_p));
		return LonLat{rad2deg(lam), rad2deg(phi)};
	}

	std::optional<LonLat> to_lonlat(const GeoPoint &p, const std::string &crs)
	{
		if (auto zone = utm_zone_of(crs))
			return utm_to_lonlat(p, *zone);
		if (crs_is_geographic(crs))
			return LonLat{p.x, p.y};
		return std::nullopt;
	}
} // namespace whales
