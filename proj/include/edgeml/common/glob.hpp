#pragma once

#include <string>
#include <string_view>

namespace edgeml {

// Glob over series / context keys. Supports `*` (any run, dots included),
// `?` (one character) and `[...]` classes with ranges and leading `!`.
class Glob {
 public:
  /// Throws Error{Syntax} on an empty pattern or an unterminated class.
  explicit Glob(std::string pattern);

  bool matches(std::string_view text) const;
  const std::string& pattern() const noexcept { return pattern_; }

 private:
  std::string pattern_;
};

}  // namespace edgeml
