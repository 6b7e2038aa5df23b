#include "stepcount/log.hpp"

#include <atomic>
#include <cstdio>
#include <mutex>

namespace stepcount::log {

namespace {
std::atomic<Level> g_level{Level::Info};
std::mutex g_mutex;

const char* prefix(Level level)
{
    switch (level) {
    case Level::Debug: return "[debug] ";
    case Level::Info: return "[info] ";
    case Level::Warn: return "[warn] ";
    case Level::Error: return "[error] ";
    case Level::Off: break;
    }
    return "";
}
}  // namespace

void set_level(Level level) { g_level.store(level); }

Level level() { return g_level.load(); }

void write(Level level, const std::string& message)
{
    std::lock_guard lock(g_mutex);
    std::fprintf(stderr, "%s%s\n", prefix(level), message.c_str());
}

}  // namespace stepcount::log
