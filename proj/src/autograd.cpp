#include "tcvsr/autograd.hpp"

#include <atomic>
#include <cstdlib>

namespace tcvsr {
namespace {

std::atomic<bool>& debug_flag() {
  static std::atomic<bool> flag{[] {
    const char* env = std::getenv("TCVSR_DEBUG_CHECKS");
    return env != nullptr && env[0] != '\0' && env[0] != '0';
  }()};
  return flag;
}

thread_local bool t_grad_enabled = true;

}  // namespace

bool debug_checks() { return debug_flag().load(std::memory_order_relaxed); }
void set_debug_checks(bool on) { debug_flag().store(on); }

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

}  // namespace tcvsr
