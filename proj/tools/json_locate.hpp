#pragma once

// Maps JSON pointers to line:column positions in the source text, so that
// validation errors found after parsing can still point at a line.

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace selftune::cli {

struct TextPos {
  std::size_t line = 1;
  std::size_t column = 1;
};

inline TextPos position_of(std::string_view text, std::size_t offset) {
  TextPos p;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++p.line;
      p.column = 1;
    } else {
      ++p.column;
    }
  }
  return p;
}

namespace detail {

inline std::string escape_pointer_token(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

// Recursive scanner over already-validated JSON text.
class PointerScanner {
 public:
  explicit PointerScanner(std::string_view text) : s_(text) {}

  std::map<std::string, std::size_t> run() {
    skip_ws();
    value("");
    return std::move(out_);
  }

 private:
  void skip_ws() {
    while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\n' || s_[i_] == '\r' || s_[i_] == '\t')) ++i_;
  }

  std::string string_token() {
    std::string raw;
    ++i_;  // opening quote
    while (i_ < s_.size() && s_[i_] != '"') {
      if (s_[i_] == '\\' && i_ + 1 < s_.size()) {
        raw += s_[i_ + 1];
        i_ += 2;
      } else {
        raw += s_[i_++];
      }
    }
    ++i_;
    return raw;
  }

  void value(const std::string& ptr) {
    out_.emplace(ptr.empty() ? "/" : ptr, i_);
    if (i_ >= s_.size()) return;
    const char c = s_[i_];
    if (c == '{') {
      ++i_;
      skip_ws();
      while (i_ < s_.size() && s_[i_] != '}') {
        const std::string key = string_token();
        skip_ws();
        ++i_;  // ':'
        skip_ws();
        value(ptr + "/" + escape_pointer_token(key));
        skip_ws();
        if (i_ < s_.size() && s_[i_] == ',') ++i_;
        skip_ws();
      }
      ++i_;
    } else if (c == '[') {
      ++i_;
      skip_ws();
      for (std::size_t k = 0; i_ < s_.size() && s_[i_] != ']'; ++k) {
        value(ptr + "/" + std::to_string(k));
        skip_ws();
        if (i_ < s_.size() && s_[i_] == ',') ++i_;
        skip_ws();
      }
      ++i_;
    } else if (c == '"') {
      string_token();
    } else {
      while (i_ < s_.size() && s_[i_] != ',' && s_[i_] != '}' && s_[i_] != ']' && s_[i_] != ' ' && s_[i_] != '\n' &&
             s_[i_] != '\r' && s_[i_] != '\t')
        ++i_;
    }
  }

  std::string_view s_;
  std::size_t i_ = 0;
  std::map<std::string, std::size_t> out_;
};

}  // namespace detail

/// Position of the value at `pointer`, or of its closest existing ancestor
/// when the pointer names something missing.
inline TextPos locate_pointer(std::string_view text, std::string pointer) {
  const auto offsets = detail::PointerScanner(text).run();
  if (pointer.empty()) pointer = "/";
  while (true) {
    if (auto it = offsets.find(pointer); it != offsets.end()) return position_of(text, it->second);
    const auto cut = pointer.find_last_of('/');
    if (cut == std::string::npos || pointer == "/") return {};
    pointer = cut == 0 ? "/" : pointer.substr(0, cut);
  }
}

}  // namespace selftune::cli
