#pragma once

#include <stdexcept>
#include <string>

namespace lightmem {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A config field is outside its allowed range; message names the field.
class RangeError : public Error {
public:
    using Error::Error;
};

// The token scorer backend rejected its input (e.g. undecodable bytes).
class ScorerError : public Error {
public:
    using Error::Error;
};

class EmbedderError : public Error {
public:
    using Error::Error;
};

// Generic model-backend failure (summarizer/updater/chat).
class BackendError : public Error {
public:
    using Error::Error;
};

// Backend lacks a required capability (log-probabilities, attention, ...).
class UnsupportedBackend : public Error {
public:
    using Error::Error;
};

// compress_to_fit cannot make progress (a single unit exceeds the limit).
class NonConvergence : public Error {
public:
    using Error::Error;
};

class DuplicateId : public Error {
public:
    using Error::Error;
};

class EmptyStore : public Error {
public:
    using Error::Error;
};

class EmptyInput : public Error {
public:
    using Error::Error;
};

// Dataset/config file could not be parsed; message carries the location.
class ParseError : public Error {
public:
    using Error::Error;
};

// Judge reply contained neither a "yes" nor a "no" token.
class UnparseableVerdict : public Error {
public:
    using Error::Error;
};

class AuthError : public BackendError {
public:
    using BackendError::BackendError;
};

class RateLimited : public BackendError {
public:
    using BackendError::BackendError;
};

class MalformedResponse : public BackendError {
public:
    using BackendError::BackendError;
};

} // namespace lightmem
