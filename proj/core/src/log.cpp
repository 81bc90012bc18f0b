#include "imblab/log.hpp"

#include <iostream>
#include <mutex>

namespace imblab {

namespace {

std::mutex g_mutex;
LogHandler g_handler;

void default_handler(LogLevel level, const std::string& msg) {
  std::cerr << (level == LogLevel::warn ? "[warn] " : "[info] ") << msg << "\n";
}

void dispatch(LogLevel level, const std::string& msg) {
  std::lock_guard<std::mutex> lock(g_mutex);
  if (g_handler) g_handler(level, msg);
  else default_handler(level, msg);
}

}  // namespace

void set_log_handler(LogHandler handler) {
  std::lock_guard<std::mutex> lock(g_mutex);
  g_handler = std::move(handler);
}

void log_info(const std::string& msg) { dispatch(LogLevel::info, msg); }
void log_warn(const std::string& msg) { dispatch(LogLevel::warn, msg); }

}  // namespace imblab
