#include <cstdlib>
#include <string>

#include "rekd/error.hpp"
#include "rekd/parallel.hpp"
#include "rekd/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rekd {

const char* error_code_name(ErrorCode code)
{
    switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::shape_mismatch: return "shape-mismatch";
    case ErrorCode::bad_magic: return "bad-magic";
    case ErrorCode::truncated: return "truncated";
    case ErrorCode::io: return "io";
    case ErrorCode::missing_file: return "missing-file";
    case ErrorCode::no_valid_region: return "no-valid-region";
    case ErrorCode::numeric: return "numeric";
    }
    return "unknown";
}

std::string shape_string(const Shape& shape)
{
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace parallel {
namespace {

int g_threads = -1;
bool g_deterministic = false;

int default_threads()
{
    if (const char* env = std::getenv("REKD_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
#ifdef _OPENMP
    return omp_get_num_procs();
#else
    return 1;
#endif
}

} // namespace

int thread_count()
{
    if (g_deterministic) return 1;
    if (g_threads < 0) g_threads = default_threads();
    return g_threads;
}

void set_thread_count(int n) { g_threads = n > 0 ? n : 1; }

void set_deterministic(bool on) { g_deterministic = on; }

bool deterministic() { return g_deterministic; }

} // namespace parallel
} // namespace rekd

#include <spdlog/sinks/stdout_sinks.h>

#include "rekd/log.hpp"

namespace rekd {

spdlog::logger& log()
{
    static std::shared_ptr<spdlog::logger> logger = [] {
        auto l = spdlog::stderr_logger_st("rekd");
        l->set_pattern("[%H:%M:%S] [%l] %v");
        return l;
    }();
    return *logger;
}

} // namespace rekd
