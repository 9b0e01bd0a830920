#pragma once
#include <cstddef>
#include <stdexcept>
#include <string>

namespace subpop {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
    public:
        using std::runtime_error::runtime_error;
};

/// Operand dimensions do not conform.
class ShapeError : public Error {
    public:
        using Error::Error;
};

/// Non-finite values, failed factorizations, non-positive-definite matrices.
class NumericError : public Error {
    public:
        using Error::Error;
};

/// A distribution or model parameter is outside its domain.
class ParameterError : public Error {
    public:
        using Error::Error;
};

/// A density-estimation bandwidth is zero or cannot be formed from the samples.
class BandwidthError : public ParameterError {
    public:
        using ParameterError::ParameterError;
};

class EmptyInputError : public Error {
    public:
        using Error::Error;
};

/** A per-item failure inside a batched kernel.  `index` is the batch index of the
 * first failing item; `pivot` is the failing pivot for factorizations (-1 otherwise).
 */
class BatchItemError : public NumericError {
    public:
        BatchItemError(const std::string &what, std::size_t index, long pivot = -1)
            : NumericError(what + " (batch item " + std::to_string(index) +
                           (pivot >= 0 ? ", pivot " + std::to_string(pivot) : std::string{}) + ")"),
              index_{index}, pivot_{pivot} {}

        std::size_t index() const { return index_; }
        long pivot() const { return pivot_; }

    private:
        std::size_t index_;
        long pivot_;
};

/// Netlist, fault, stimulus and CSV parse failures.  `line` is 1-based, 0 when unknown.
class ParseError : public Error {
    public:
        ParseError(const std::string &source, std::size_t line, const std::string &msg)
            : Error(source + ":" + std::to_string(line) + ": " + msg), line_{line} {}

        std::size_t line() const { return line_; }

    private:
        std::size_t line_;
};

/// Boolean network structure problems: cycles, unresolved names, bad arity.
class GraphError : public Error {
    public:
        using Error::Error;
};

class DiagnosticError : public Error {
    public:
        using Error::Error;
};

class IoError : public Error {
    public:
        using Error::Error;
};

} // namespace subpop
