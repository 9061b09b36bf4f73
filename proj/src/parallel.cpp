#include "alpde/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace alpde {
namespace {

int initial_thread_count() {
  if (const char* env = std::getenv("ALPDE_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::atomic<int>& threads_setting() {
  static std::atomic<int> n{initial_thread_count()};
  return n;
}

}  // namespace

int thread_count() { return threads_setting().load(); }

void set_thread_count(int n) { threads_setting().store(n < 1 ? 1 : n); }

}  // namespace alpde
