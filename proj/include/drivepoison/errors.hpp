#pragma once

#include <stdexcept>
#include <string>

namespace drivepoison {

/// Root of every error the library throws. Callers that only need a message
/// can catch this; the CLI maps the concrete subclasses onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Validation of inputs and preconditions.
class InvalidState : public Error { public: using Error::Error; };
class InvalidLane : public Error { public: using Error::Error; };
class InvalidFractions : public Error { public: using Error::Error; };
class PreconditionViolation : public Error { public: using Error::Error; };
class UnknownDecision : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };

class DuplicateId : public Error {
public:
    explicit DuplicateId(std::string id)
        : Error("duplicate id: " + id), id_(std::move(id)) {}
    const std::string& id() const noexcept { return id_; }

private:
    std::string id_;
};

/// Schema violation in a JSON document; `pointer` is an RFC 6901 JSON pointer.
class SchemaError : public Error {
public:
    SchemaError(std::string pointer, const std::string& what)
        : Error(pointer + ": " + what), pointer_(std::move(pointer)) {}
    const std::string& pointer() const noexcept { return pointer_; }

private:
    std::string pointer_;
};

// Generation.
class PlacementError : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };

// Poisoning constructions.
class AlreadyTriggered : public Error { public: using Error::Error; };
class RewriterContractViolation : public Error { public: using Error::Error; };
class NoPerturbation : public Error { public: using Error::Error; };
class NotEnoughBases : public Error { public: using Error::Error; };

// Models.
class ParseError : public Error { public: using Error::Error; };
class ModelRefusal : public Error { public: using Error::Error; };
class EmptyResponse : public Error { public: using Error::Error; };

class TransportError : public Error {
public:
    enum class Kind { Auth, Http, Timeout, Network };

    TransportError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

// Metrics.
class PairMismatch : public Error { public: using Error::Error; };
class InsufficientPool : public Error { public: using Error::Error; };

}  // namespace drivepoison
