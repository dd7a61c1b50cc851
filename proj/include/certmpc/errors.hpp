#pragma once

#include <stdexcept>
#include <string>

namespace certmpc {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class DimensionMismatch : public Error {
public:
    explicit DimensionMismatch(const std::string& what) : Error(what) {}
};

/// Model or problem data violates a construction invariant.
class InvalidSpec : public Error {
public:
    explicit InvalidSpec(const std::string& what) : Error(what) {}
};

class NotPositiveDefinite : public Error {
public:
    explicit NotPositiveDefinite(const std::string& what) : Error(what) {}
};

/// Fixed-point iteration failed to reach its residual tolerance.
class NonConvergence : public Error {
public:
    explicit NonConvergence(const std::string& what) : Error(what) {}
};

class NonFiniteIterate : public Error {
public:
    explicit NonFiniteIterate(const std::string& what) : Error(what) {}
};

class FactorizationFailure : public Error {
public:
    explicit FactorizationFailure(const std::string& what) : Error(what) {}
};

class OracleNonConvergence : public Error {
public:
    explicit OracleNonConvergence(const std::string& what) : Error(what) {}
};

class KappaNotContractive : public Error {
public:
    explicit KappaNotContractive(const std::string& what) : Error(what) {}
};

class SingularSystem : public Error {
public:
    explicit SingularSystem(const std::string& what) : Error(what) {}
};

class EmptySampleSet : public Error {
public:
    explicit EmptySampleSet(const std::string& what) : Error(what) {}
};

class EmptyGrid : public Error {
public:
    explicit EmptyGrid(const std::string& what) : Error(what) {}
};

class DivisionByZero : public Error {
public:
    explicit DivisionByZero(const std::string& what) : Error(what) {}
};

/// Configuration file could not be parsed or validated; carries
/// line/field diagnostics in the message.
class ConfigParseError : public Error {
public:
    explicit ConfigParseError(const std::string& what) : Error(what) {}
};

}  // namespace certmpc
