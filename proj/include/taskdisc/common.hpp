#pragma once

#include <stdexcept>
#include <string>

namespace taskdisc {

// Error taxonomy shared across modules. Everything derives from
// std::runtime_error so callers can catch broadly at the CLI boundary.

struct shape_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Violated API contract (e.g. backward on a non-scalar loss).
struct contract_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad dataset / task / split construction parameters.
struct spec_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// On-disk format problems.
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct corruption_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct parse_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training diverged (NaN loss / poisoned gradients).
struct training_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct degenerate_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Config file fails schema validation; `field` names the offending entry.
struct config_error : std::runtime_error {
    std::string field;
    config_error(std::string field_, const std::string& what_)
        : std::runtime_error("config field '" + field_ + "': " + what_), field(std::move(field_)) {}
};

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace taskdisc
