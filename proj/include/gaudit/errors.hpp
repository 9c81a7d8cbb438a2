#pragma once

#include <stdexcept>
#include <string>

namespace gaudit {

// Exit-code class for the CLI: config problems, bad data, everything else.
enum class ErrorKind { kConfig, kData, kInternal };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define GAUDIT_DEFINE_ERROR(Name, Kind)                              \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(Kind, what) {}    \
  }

GAUDIT_DEFINE_ERROR(ConflictingConstraint, ErrorKind::kData);
GAUDIT_DEFINE_ERROR(InvalidSpec, ErrorKind::kConfig);
GAUDIT_DEFINE_ERROR(ConfigError, ErrorKind::kConfig);
GAUDIT_DEFINE_ERROR(EmptyPanel, ErrorKind::kData);
GAUDIT_DEFINE_ERROR(SchemaMismatch, ErrorKind::kData);
GAUDIT_DEFINE_ERROR(IoError, ErrorKind::kData);
GAUDIT_DEFINE_ERROR(DegenerateDesign, ErrorKind::kData);
GAUDIT_DEFINE_ERROR(Misalignment, ErrorKind::kData);
GAUDIT_DEFINE_ERROR(YearMismatch, ErrorKind::kData);
GAUDIT_DEFINE_ERROR(EmptyInput, ErrorKind::kData);

#undef GAUDIT_DEFINE_ERROR

// A row-level validation failure while reading a CSV file.
class RowError : public Error {
 public:
  RowError(std::string file, std::size_t line, std::string field,
           const std::string& detail)
      : Error(ErrorKind::kData, file + ":" + std::to_string(line) + ": field '" +
                                    field + "': " + detail),
        file_(std::move(file)),
        line_(line),
        field_(std::move(field)) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string file_;
  std::size_t line_;
  std::string field_;
};

}  // namespace gaudit
