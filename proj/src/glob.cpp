#include "edgeml/common/glob.hpp"

#include "edgeml/common/error.hpp"

namespace edgeml {

namespace {

// Returns the index one past the closing ']' of the class starting at `open`,
// or npos when the class is unterminated.
std::size_t class_end(std::string_view p, std::size_t open) {
  std::size_t i = open + 1;
  if (i < p.size() && p[i] == '!') ++i;
  if (i < p.size() && p[i] == ']') ++i;  // literal ']' as first member
  while (i < p.size() && p[i] != ']') ++i;
  return i < p.size() ? i + 1 : std::string_view::npos;
}

bool class_matches(std::string_view cls, char c) {
  // cls excludes the surrounding brackets
  bool negate = false;
  std::size_t i = 0;
  if (!cls.empty() && cls[0] == '!') {
    negate = true;
    ++i;
  }
  bool hit = false;
  bool first = true;
  while (i < cls.size()) {
    char lo = cls[i];
    if (lo == ']' && !first) break;
    first = false;
    if (i + 2 < cls.size() && cls[i + 1] == '-') {
      char hi = cls[i + 2];
      if (lo <= c && c <= hi) hit = true;
      i += 3;
    } else {
      if (lo == c) hit = true;
      ++i;
    }
  }
  return hit != negate;
}

bool match_from(std::string_view p, std::string_view t) {
  std::size_t pi = 0, ti = 0;
  std::size_t star_p = std::string_view::npos, star_t = 0;
  while (ti < t.size()) {
    if (pi < p.size()) {
      char pc = p[pi];
      if (pc == '*') {
        star_p = pi++;
        star_t = ti;
        continue;
      }
      if (pc == '?') {
        ++pi;
        ++ti;
        continue;
      }
      if (pc == '[') {
        std::size_t end = class_end(p, pi);
        if (class_matches(p.substr(pi + 1, end - pi - 2), t[ti])) {
          pi = end;
          ++ti;
          continue;
        }
      } else if (pc == t[ti]) {
        ++pi;
        ++ti;
        continue;
      }
    }
    if (star_p == std::string_view::npos) return false;
    pi = star_p + 1;
    ti = ++star_t;
  }
  while (pi < p.size() && p[pi] == '*') ++pi;
  return pi == p.size();
}

}  // namespace

Glob::Glob(std::string pattern) : pattern_(std::move(pattern)) {
  if (pattern_.empty()) fail(ErrorKind::Syntax, "empty glob pattern");
  for (std::size_t i = 0; i < pattern_.size(); ++i) {
    if (pattern_[i] == '[') {
      std::size_t end = class_end(pattern_, i);
      if (end == std::string_view::npos) fail(ErrorKind::Syntax, "unterminated '[' in glob: " + pattern_);
      i = end - 1;
    } else if (pattern_[i] == ']') {
      fail(ErrorKind::Syntax, "unbalanced ']' in glob: " + pattern_);
    }
  }
}

bool Glob::matches(std::string_view text) const { return match_from(pattern_, text); }

}  // namespace edgeml
