#pragma once

#include <stdexcept>
#include <string>

namespace qsm {

// Exit-code mapping in the CLI: parameter -> 2, data/format -> 3, numeric -> 4.
struct parameter_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or truncated file contents.
struct format_error : data_error {
    using data_error::data_error;
};

struct io_error : data_error {
    using data_error::data_error;
};

struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Requested feature the selected component cannot provide
// (e.g. exact jacobian mode with a denoiser lacking an input VJP).
struct capability_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace qsm
