#include "physgs/core.hpp"

#include <omp.h>

#include <iostream>
#include <mutex>

namespace physgs {

void set_thread_count(int n)
{
    if (n > 0) {
        omp_set_num_threads(n);
    }
}

int thread_count() { return omp_get_max_threads(); }

namespace {
std::mutex warn_mutex;
std::function<void(const std::string&)> warn_handler;
} // namespace

void warn(const std::string& message)
{
    std::lock_guard lock(warn_mutex);
    if (warn_handler) {
        warn_handler(message);
    } else {
        std::cerr << "warning: " << message << '\n';
    }
}

void set_warning_handler(std::function<void(const std::string&)> handler)
{
    std::lock_guard lock(warn_mutex);
    warn_handler = std::move(handler);
}

} // namespace physgs
