#include "gmf/tensor.hpp"

#include <atomic>
#include <cstdio>
#include <mutex>

namespace gmf {

namespace {
std::atomic<bool> g_finite_checks{true};
std::atomic<std::size_t> g_current_bytes{0};
std::atomic<std::size_t> g_peak_bytes{0};
}  // namespace

bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }
void set_finite_checks(bool on) { g_finite_checks.store(on, std::memory_order_relaxed); }

void log_warn(const std::string& msg) { std::fprintf(stderr, "[gmf] warning: %s\n", msg.c_str()); }

std::size_t AllocStats::current() { return g_current_bytes.load(std::memory_order_relaxed); }
std::size_t AllocStats::peak() { return g_peak_bytes.load(std::memory_order_relaxed); }
void AllocStats::reset_peak() { g_peak_bytes.store(current()); }

void AllocStats::add(std::size_t bytes) {
  std::size_t now = g_current_bytes.fetch_add(bytes, std::memory_order_relaxed) + bytes;
  std::size_t peak = g_peak_bytes.load(std::memory_order_relaxed);
  while (now > peak && !g_peak_bytes.compare_exchange_weak(peak, now)) {
  }
}

void AllocStats::sub(std::size_t bytes) { g_current_bytes.fetch_sub(bytes, std::memory_order_relaxed); }

}  // namespace gmf
