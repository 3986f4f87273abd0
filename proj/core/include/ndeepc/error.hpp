#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ndeepc {

/// Base class of every error raised by the library. `category()` is a short
/// machine-readable tag that the command-line tool prints on failure.
class Error : public std::runtime_error {
public:
    Error(std::string_view category, const std::string &what)
        : std::runtime_error(what), category_(category) {}

    [[nodiscard]] const std::string &category() const noexcept { return category_; }

private:
    std::string category_;
};

class DimensionError : public Error {
public:
    explicit DimensionError(const std::string &what) : Error("dimension", what) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string &what) : Error("numerical", what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string &what) : Error("config", what) {}
};

class TrainingError : public Error {
public:
    TrainingError(const std::string &what, long epoch) : Error("training", what), epoch_(epoch) {}

    [[nodiscard]] long epoch() const noexcept { return epoch_; }

private:
    long epoch_;
};

/// A theorem/algorithm precondition on the data does not hold
/// (e.g. a rank assumption).
class HypothesisError : public Error {
public:
    explicit HypothesisError(const std::string &what) : Error("hypothesis", what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string &what) : Error("io", what) {}
};

}  // namespace ndeepc
