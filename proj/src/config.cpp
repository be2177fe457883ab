#include "gsa/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>

#include "gsa/error.hpp"
#include "gsa/serialize.hpp"

namespace gsa {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, std::string source) {
  KeyValueConfig cfg;
  cfg.source_ = std::move(source);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(cfg.source_ + ":" + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) {
      throw ConfigError(cfg.source_ + ":" + std::to_string(line_no) + ": empty key");
    }
    if (cfg.values_.count(key)) {
      throw ConfigError(cfg.source_ + ": duplicate key '" + key + "'");
    }
    cfg.values_[key] = value;
    cfg.consumed_[key] = false;
    cfg.entries_.emplace_back(std::move(key), std::move(value));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  auto cfg = parse(text, path.string());
  cfg.base_dir_ = path.parent_path();
  return cfg;
}

bool KeyValueConfig::has(std::string_view key) const {
  return values_.find(key) != values_.end();
}

std::string KeyValueConfig::missing(std::string_view key) const {
  return source_ + ": missing required key '" + std::string(key) + "'";
}

void KeyValueConfig::bad_value(std::string_view key, const std::string& value,
                               const char* expected) const {
  throw ConfigError(source_ + ": key '" + std::string(key) + "' expects " +
                    expected + ", got '" + value + "'");
}

std::optional<std::string> KeyValueConfig::take(std::string_view key) {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  consumed_.find(key)->second = true;
  return it->second;
}

std::string KeyValueConfig::take_string(std::string_view key) {
  auto v = take(key);
  if (!v) throw ConfigError(missing(key));
  return *v;
}

std::string KeyValueConfig::take_string(std::string_view key, std::string fallback) {
  auto v = take(key);
  return v ? *v : std::move(fallback);
}

long KeyValueConfig::take_int(std::string_view key) {
  auto v = take(key);
  if (!v) throw ConfigError(missing(key));
  long out = 0;
  auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || p != v->data() + v->size()) bad_value(key, *v, "an integer");
  return out;
}

long KeyValueConfig::take_int(std::string_view key, long fallback) {
  return has(key) ? take_int(key) : fallback;
}

double KeyValueConfig::take_real(std::string_view key) {
  auto v = take(key);
  if (!v) throw ConfigError(missing(key));
  char* end = nullptr;
  const double out = std::strtod(v->c_str(), &end);
  if (v->empty() || end != v->c_str() + v->size()) bad_value(key, *v, "a number");
  return out;
}

double KeyValueConfig::take_real(std::string_view key, double fallback) {
  return has(key) ? take_real(key) : fallback;
}

bool KeyValueConfig::take_bool(std::string_view key, bool fallback) {
  auto v = take(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  bad_value(key, *v, "a boolean");
}

void KeyValueConfig::finish() const {
  for (const auto& [key, used] : consumed_) {
    if (!used) throw ConfigError(source_ + ": unknown key '" + key + "'");
  }
}

std::string format_key_values(
    const std::vector<std::pair<std::string, std::string>>& entries) {
  std::string out;
  for (const auto& [k, v] : entries) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

std::vector<std::string> split_list(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find(sep, pos);
    if (end == std::string_view::npos) end = text.size();
    auto item = trim(text.substr(pos, end - pos));
    if (!item.empty()) out.emplace_back(item);
    pos = end + 1;
  }
  return out;
}

std::vector<long> parse_int_list(std::string_view text, const std::string& what) {
  std::vector<long> out;
  for (const auto& item : split_list(text)) {
    long v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size()) {
      throw ConfigError(what + ": '" + item + "' is not an integer");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<double> parse_real_list(std::string_view text, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (end != item.c_str() + item.size()) {
      throw ConfigError(what + ": '" + item + "' is not a number");
    }
    out.push_back(v);
  }
  return out;
}

std::string format_real(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace gsa
