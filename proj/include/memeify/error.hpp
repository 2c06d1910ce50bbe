#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace memeify {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A required input (file, directory, artifact) does not exist.
class MissingInputError : public Error {
public:
  explicit MissingInputError(const std::string& path)
      : Error("missing input: " + path), path_(path) {}

  const std::string& path() const noexcept { return path_; }

private:
  std::string path_;
};

/// Malformed content at a known 1-based line of a text input.
class ParseError : public Error {
public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

}  // namespace memeify
