#ifndef BQO_LOG_HPP
#define BQO_LOG_HPP

#include <string_view>

// Stderr logging gated by the BQO_LOG environment variable
// (error | info | debug; default info).
namespace bqo::log {

enum class Level { error = 0, info = 1, debug = 2 };

Level threshold();
void set_threshold(Level level);
void write(Level level, std::string_view message);

inline void error(std::string_view m) { write(Level::error, m); }
inline void warn(std::string_view m) { write(Level::info, m); }
inline void info(std::string_view m) { write(Level::info, m); }
inline void debug(std::string_view m) { write(Level::debug, m); }

}  // namespace bqo::log

#endif  // BQO_LOG_HPP
