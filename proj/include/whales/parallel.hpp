#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace whales
{
	inline int resolve_workers(int requested)
	{
		if (requested > 0)
			return requested;
		return std::max(1u, std::thread::hardware_concurrency());
	}

	// Runs fn(i) for i in [0, n) on `workers` threads; the first exception is rethrown.
	template <typename Fn>
	void parallel_for(std::size_t n, int workers, Fn &&fn)
	{
		workers = std::max(1, std::min<int>(resolve_workers(workers), static_cast<int>(std::max<std::size_t>(n, 1))));
		if (workers == 1)
		{
			for (std::size_t i = 0; i < n; ++i)
				fn(i);
			return;
		}
		std::atomic<std::size_t> next{0};
		std::exception_ptr error;
		std::mutex error_mutex;
		std::vector<std::jthread> pool;
		pool.reserve(static_cast<std::size_t>(workers));
		for (int w = 0; w < workers; ++w)
		{
			pool.emplace_back([&] {
				for (;;)
				{
					const std::size_t i = next.fetch_add(1);
					if (i >= n)
						return;
					try
					{
						fn(i);
					}
					catch (...)
					{
						std::lock_guard lock(error_mutex);
						if (!error)
							error = std::current_exception();
						next.store(n);
					}
				}
			});
		}
		pool.clear();
		if (error)
			std::rethrow_exception(error);
	}
} // namespace whales
