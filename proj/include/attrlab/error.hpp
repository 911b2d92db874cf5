#ifndef ATTRLAB_ERROR_HPP
#define ATTRLAB_ERROR_HPP

#include <stdexcept>
#include <string>

namespace attrlab {

/// Machine-parsable failure categories. Every thrown error carries one of
/// these; the CLI maps them to stable exit codes and prints the name on the
/// last line of stderr.
enum class Errc {
  MalformedFile,
  PatternViolation,
  InconsistentIndicator,
  MissingRequiredValue,
  MalformedSpec,
  NotIdentified,
  IncompleteLatent,
  ZeroMass,
  NonFinitePosterior,
  InsufficientDraws,
  AutocorrelationTooHigh,
  Separation,
  RankDeficient,
  TooFewDraws,
  IoError,
  InvalidArgument,
};

const char* errc_name(Errc c);
int errc_exit_code(Errc c);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const { return code_; }
  const char* name() const { return errc_name(code_); }
  int exit_code() const { return errc_exit_code(code_); }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace attrlab

#endif
