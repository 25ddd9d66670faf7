#include "gmf/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace gmf {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (errno || end == v.c_str() || *end != '\0')
    throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as a number");
  return x;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (errno || end == v.c_str() || *end != '\0')
    throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as an unsigned integer");
  return static_cast<std::uint64_t>(x);
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config file '" + path + "' line " + std::to_string(lineno) +
                        ": expected key=value, got '" + t + "'");
    cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "rho")
    rho = parse_double(key, value);
  else if (key == "x_min")
    x_min = parse_double(key, value);
  else if (key == "x_max")
    x_max = parse_double(key, value);
  else if (key == "y_min")
    y_min = parse_double(key, value);
  else if (key == "y_max")
    y_max = parse_double(key, value);
  else if (key == "d_state")
    d_state = static_cast<std::size_t>(parse_u64(key, value));
  else if (key == "chunk_len")
    chunk_len = static_cast<std::size_t>(parse_u64(key, value));
  else if (key == "channels")
    channels = static_cast<std::size_t>(parse_u64(key, value));
  else if (key == "pe_base")
    pe_base = parse_double(key, value);
  else if (key == "seed")
    seed = parse_u64(key, value);
  else if (key == "threads")
    threads = static_cast<int>(parse_u64(key, value));
  else
    throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::validate() const {
  grid().validate();
  if (d_state == 0) throw ConfigError("config key 'd_state' must be positive");
  if (chunk_len == 0) throw ConfigError("config key 'chunk_len' must be positive");
  if (channels == 0 || channels % 4 != 0)
    throw ConfigError("config key 'channels' must be a positive multiple of 4, got " +
                      std::to_string(channels));
  if (!(pe_base > 1.0)) throw ConfigError("config key 'pe_base' must be > 1");
  if (threads < 0) throw ConfigError("config key 'threads' must be >= 0");
}

std::string RunConfig::echo() const {
  std::ostringstream os;
  os.precision(17);
  os << "rho=" << rho << "\n";
  os << "x_min=" << x_min << "\n";
  os << "x_max=" << x_max << "\n";
  os << "y_min=" << y_min << "\n";
  os << "y_max=" << y_max << "\n";
  os << "d_state=" << d_state << "\n";
  os << "chunk_len=" << chunk_len << "\n";
  os << "channels=" << channels << "\n";
  os << "pe_base=" << pe_base << "\n";
  os << "seed=" << seed << "\n";
  os << "threads=" << threads << "\n";
  return os.str();
}

}  // namespace gmf
