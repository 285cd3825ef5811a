#include "genfl/common.hpp"

#include <cstring>
#include <exception>
#include <mutex>

namespace genfl {

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    threads = resolve_threads(threads);
    if (n <= 0) return;
    if (threads <= 1 || n == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    if (threads > n) threads = n;
    std::vector<std::thread> pool;
    pool.reserve(threads - 1);
    std::exception_ptr first_error;
    std::mutex error_mutex;
    // static contiguous partition: worker t owns [t*n/threads, (t+1)*n/threads)
    auto run_range = [&](int lo, int hi) {
        try {
            for (int i = lo; i < hi; ++i) fn(i);
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    };
    for (int t = 1; t < threads; ++t) {
        int lo = static_cast<int>(static_cast<long long>(n) * t / threads);
        int hi = static_cast<int>(static_cast<long long>(n) * (t + 1) / threads);
        pool.emplace_back(run_range, lo, hi);
    }
    run_range(0, static_cast<int>(static_cast<long long>(n) / threads));
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<unsigned char>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u64(out, bits);
}

std::uint32_t get_u32(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

double get_f64(const unsigned char* p) {
    std::uint64_t bits = get_u64(p);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

}  // namespace genfl
