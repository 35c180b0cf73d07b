#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cgda {

// Base for every error raised by the library. Callers that only care about
// "something went wrong" catch this; the subclasses carry the details.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A split or partition that cannot satisfy its contract (e.g. a class with no
// target training samples).
class Infeasible : public Error {
 public:
  using Error::Error;
};

class MissingClass : public Error {
 public:
  explicit MissingClass(int cls)
      : Error("class " + std::to_string(cls) + " has no labeled target samples"),
        cls_(cls) {}
  int missing_class() const noexcept { return cls_; }

 private:
  int cls_;
};

// Raised by the constrained assignment sweep when a point has every centroid
// excluded by cannot-links.
class InfeasibleConstraints : public Error {
 public:
  explicit InfeasibleConstraints(std::size_t point)
      : Error("no admissible centroid for point " + std::to_string(point) +
              " under cannot-link constraints"),
        point_(point) {}
  std::size_t point() const noexcept { return point_; }

 private:
  std::size_t point_;
};

class NoEligibleCluster : public Error {
 public:
  using Error::Error;
};

class MissingTruth : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace cgda
