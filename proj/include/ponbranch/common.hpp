#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ponbranch {

/// Raised when caller-supplied data or configuration violates a contract.
/// The CLI maps it to exit code 1; every other exception maps to 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// FNV-1a, 64 bit. Used for fingerprints and architecture hashes only.
class Hasher {
 public:
  Hasher& bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Hasher& add(double v) { return bytes(&v, sizeof v); }
  Hasher& add(std::int64_t v) { return bytes(&v, sizeof v); }
  Hasher& add(std::uint64_t v) { return bytes(&v, sizeof v); }
  Hasher& add(int v) { return add(static_cast<std::int64_t>(v)); }
  Hasher& add(std::string_view s) {
    add(static_cast<std::uint64_t>(s.size()));
    return bytes(s.data(), s.size());
  }
  std::uint64_t value() const { return state_; }
  std::string hex() const { return to_hex(state_); }

  static std::string to_hex(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
      out[static_cast<std::size_t>(i)] = digits[v & 0xf];
      v >>= 4;
    }
    return out;
  }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t hash_bytes(std::string_view s) {
  return Hasher{}.bytes(s.data(), s.size()).value();
}

/// splitmix64 finalizer; mixes a root seed with a purpose tag so that each
/// pipeline stage draws from an independent stream.
inline std::uint64_t sub_seed(std::uint64_t root, std::string_view purpose) {
  std::uint64_t z = root ^ hash_bytes(purpose);
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t sub_seed(std::uint64_t root, std::string_view purpose,
                              std::uint64_t index) {
  return sub_seed(sub_seed(root, purpose), std::to_string(index));
}

/// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Fixed-precision formatting for tables and plots.
inline std::string format_fixed(double v, int digits) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
  return std::string(buf, res.ptr);
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

/**
 * Flat key-value configuration text.
 *
 *     # comment
 *     feeder_length = 1000
 *     [branch.0]
 *     length = 150
 *
 * Keys inside a section are stored as "section.key" (e.g. "branch.0.length").
 * Insertion order is not significant; serialization is sorted by key.
 */
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text) {
    KeyValueConfig cfg;
    std::string section;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string t = trim(line);
      if (t.empty()) continue;
      if (t.front() == '[') {
        if (t.back() != ']' || t.size() < 3)
          throw ValidationError("config line " + std::to_string(line_no) + ": malformed section header");
        section = trim(std::string_view(t).substr(1, t.size() - 2));
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
      std::string key = trim(std::string_view(t).substr(0, eq));
      if (key.empty())
        throw ValidationError("config line " + std::to_string(line_no) + ": empty key");
      if (!section.empty()) key = section + "." + key;
      cfg.values_[key] = trim(std::string_view(t).substr(eq + 1));
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  void set(const std::string& key, double value) { values_[key] = format_double(value); }
  void set(const std::string& key, std::int64_t value) { values_[key] = std::to_string(value); }
  void set(const std::string& key, int value) { values_[key] = std::to_string(value); }
  void set(const std::string& key, std::uint64_t value) { values_[key] = std::to_string(value); }

  std::optional<std::string> get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    double out = 0;
    auto res = std::from_chars(v->data(), v->data() + v->size(), out);
    if (res.ec != std::errc{} || res.ptr != v->data() + v->size())
      throw ValidationError("config key '" + key + "': not a number: " + *v);
    return out;
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    std::int64_t out = 0;
    auto res = std::from_chars(v->data(), v->data() + v->size(), out);
    if (res.ec != std::errc{} || res.ptr != v->data() + v->size())
      throw ValidationError("config key '" + key + "': not an integer: " + *v);
    return out;
  }

  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    std::uint64_t out = 0;
    auto res = std::from_chars(v->data(), v->data() + v->size(), out);
    if (res.ec != std::errc{} || res.ptr != v->data() + v->size())
      throw ValidationError("config key '" + key + "': not an unsigned integer: " + *v);
    return out;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
  }

  /// Indices N for which some key starts with "<prefix>.N.".
  std::vector<std::size_t> indices(const std::string& prefix) const {
    std::vector<std::size_t> out;
    const std::string head = prefix + ".";
    for (const auto& [k, v] : values_) {
      if (k.rfind(head, 0) != 0) continue;
      const auto rest = k.substr(head.size());
      const auto dot = rest.find('.');
      if (dot == std::string::npos) continue;
      std::size_t idx = 0;
      auto res = std::from_chars(rest.data(), rest.data() + dot, idx);
      if (res.ec != std::errc{} || res.ptr != rest.data() + dot) continue;
      out.push_back(idx);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  /// Sections are emitted for "branch.N.*" style keys; everything else flat.
  std::string serialize() const {
    std::ostringstream out;
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
    for (const auto& [k, v] : values_) {
      const auto last = k.rfind('.');
      if (last == std::string::npos) {
        out << k << " = " << v << "\n";
      } else {
        sections[k.substr(0, last)].emplace_back(k.substr(last + 1), v);
      }
    }
    for (const auto& [name, kvs] : sections) {
      out << "\n[" << name << "]\n";
      for (const auto& [k, v] : kvs) out << k << " = " << v << "\n";
    }
    return out.str();
  }

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace ponbranch
