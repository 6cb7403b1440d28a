#pragma once

#include <stdexcept>
#include <string>

namespace annostudy {

/// Base class for all toolkit errors. CLI maps these to exit code 1.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed file: missing/extra field, wrong type. Carries a
/// JSON-pointer-style location of the offending element.
class SchemaError : public Error {
public:
    SchemaError(const std::string& location, const std::string& what)
        : Error(location + ": " + what), location_(location) {}
    const std::string& location() const { return location_; }

private:
    std::string location_;
};

/// Well-formed file whose content violates a dataset invariant
/// (dangling image_id, out-of-bounds box, label outside the task space).
class IntegrityError : public Error {
public:
    using Error::Error;
};

class MixedImageError : public Error {
public:
    using Error::Error;
};

class MissingAnnotatorError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public Error {
public:
    using Error::Error;
};

class DatasetMismatchError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class EmptyInputError : public Error {
public:
    using Error::Error;
};

class EmptySubsetError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    using Error::Error;
};

class ZeroVarianceError : public Error {
public:
    using Error::Error;
};

class MissingProposalsError : public Error {
public:
    using Error::Error;
};

/// Patch selection cannot satisfy a hard constraint; the message names it.
class InfeasibleError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace annostudy
