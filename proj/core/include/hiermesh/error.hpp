#pragma once

#include <stdexcept>
#include <string>

namespace hiermesh {

enum class ErrorKind {
  kParse,          // malformed input text
  kStructural,     // out-of-range indices, bad token lengths
  kDegenerateInput,
  kConfig,         // unknown category/label/preset, invalid config
  kSchema,         // on-disk record does not match the schema
  kValidation,     // a domain invariant does not hold
  kShape,          // tensor/layer dimension mismatch
  kIo,
  kSampling,
  kState,          // operation called in the wrong lifecycle state
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define HIERMESH_CHECK(cond, kind, msg)                 \
  do {                                                  \
    if (!(cond)) throw ::hiermesh::Error((kind), (msg)); \
  } while (0)

}  // namespace hiermesh
