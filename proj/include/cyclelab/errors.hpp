#pragma once

#include <stdexcept>
#include <string>

namespace cyclelab {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ZeroLinearForm : public Error {
 public:
  ZeroLinearForm() : Error("linear form ax+by has a = b = 0") {}
};

class ParseError : public Error {
 public:
  ParseError(int line, const std::string& what)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// flow
class StepLimitExceeded : public Error {
 public:
  using Error::Error;
};
class BlowUp : public Error {
 public:
  using Error::Error;
};
class NoCrossing : public Error {
 public:
  using Error::Error;
};
class TangentialCrossing : public Error {
 public:
  using Error::Error;
};

// cycles
class NoReturn : public Error {
 public:
  using Error::Error;
};
class IllConditioned : public Error {
 public:
  using Error::Error;
};
class LostTrack : public Error {
 public:
  LostTrack(const std::string& what, double last_good_alpha)
      : Error(what), last_good_alpha_(last_good_alpha) {}
  double last_good_alpha() const { return last_good_alpha_; }

 private:
  double last_good_alpha_;
};

// constructions
class SearchExhausted : public Error {
 public:
  using Error::Error;
};
class NotMonodromicLinearType : public Error {
 public:
  using Error::Error;
};
class CycleNotInQuadrant : public Error {
 public:
  using Error::Error;
};

class StageFailure : public Error {
 public:
  StageFailure(std::string stage, const std::string& diagnostics)
      : Error("stage " + stage + " failed: " + diagnostics),
        stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

class NoImprovingRotation : public Error {
 public:
  NoImprovingRotation(const std::string& what, double best_alpha)
      : Error(what), best_alpha_(best_alpha) {}
  double best_alpha() const { return best_alpha_; }

 private:
  double best_alpha_;
};

}  // namespace cyclelab
