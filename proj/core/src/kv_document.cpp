#include "egopose/kv_document.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "egopose/errors.hpp"

namespace egopose {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text, std::string_view context) {
  text = trim(text);
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ValidationError(std::string(context) + ": not a number: '" + std::string(text) + "'");
  }
  return value;
}

long long parse_int(std::string_view text, std::string_view context) {
  text = trim(text);
  long long value = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ValidationError(std::string(context) + ": not an integer: '" + std::string(text) + "'");
  }
  return value;
}

KvDocument KvDocument::parse(std::string_view text, std::string source) {
  KvDocument doc;
  doc.source_ = std::move(source);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    const auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ValidationError(doc.source_ + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw ValidationError(doc.source_ + ":" + std::to_string(line_no) + ": empty key");
    }
    if (doc.contains(key)) {
      throw ValidationError(doc.source_ + ":" + std::to_string(line_no) + ": duplicate key '" +
                            std::string(key) + "'");
    }
    doc.entries_.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return doc;
}

KvDocument KvDocument::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void KvDocument::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << serialize();
  if (!out) throw IoError("write failed: " + path.string());
}

std::string KvDocument::serialize() const {
  std::string out;
  for (const auto& c : comments_) out += "# " + c + "\n";
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

bool KvDocument::contains(std::string_view key) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == key; });
}

void KvDocument::set(std::string_view key, std::string value) {
  for (auto& e : entries_) {
    if (e.first == key) {
      e.second = std::move(value);
      return;
    }
  }
  entries_.emplace_back(std::string(key), std::move(value));
}

void KvDocument::set(std::string_view key, double value) { set(key, format_double(value)); }

void KvDocument::set(std::string_view key, long long value) { set(key, std::to_string(value)); }

void KvDocument::set(std::string_view key, std::span<const double> values) {
  std::string text;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) text += ' ';
    text += format_double(values[i]);
  }
  set(key, std::move(text));
}

void KvDocument::add_comment(std::string text) { comments_.push_back(std::move(text)); }

const std::string& KvDocument::get_string(std::string_view key) const {
  for (const auto& e : entries_) {
    if (e.first == key) return e.second;
  }
  throw ValidationError(source_ + ": missing key '" + std::string(key) + "'");
}

double KvDocument::get_double(std::string_view key) const {
  return parse_double(get_string(key), source_ + ": " + std::string(key));
}

long long KvDocument::get_int(std::string_view key) const {
  return parse_int(get_string(key), source_ + ": " + std::string(key));
}

bool KvDocument::get_bool(std::string_view key) const {
  const auto& v = get_string(key);
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ValidationError(source_ + ": " + std::string(key) + ": expected a boolean, got '" + v + "'");
}

std::vector<double> KvDocument::get_doubles(std::string_view key) const {
  const auto& v = get_string(key);
  std::vector<double> out;
  std::istringstream ss(v);
  std::string tok;
  while (ss >> tok) out.push_back(parse_double(tok, source_ + ": " + std::string(key)));
  return out;
}

std::vector<double> KvDocument::get_doubles(std::string_view key, std::size_t expected) const {
  auto out = get_doubles(key);
  if (out.size() != expected) {
    throw ValidationError(source_ + ": " + std::string(key) + ": expected " + std::to_string(expected) +
                          " values, got " + std::to_string(out.size()));
  }
  return out;
}

}  // namespace egopose
