#pragma once

#include <stdexcept>
#include <string>

namespace portmanteau {

// Operand shapes disagree.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// An index (symbol id, row, target) is out of range.
struct IndexError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// A documented precondition was violated by the caller.
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// A character cannot be represented in the alphabet.
struct EncodingError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Incompatible strategy/model combination or missing model.
struct ConfigurationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Training diverged (non-finite loss) or a member failed.
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Unreadable, unwritable or corrupt file.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace portmanteau
