#pragma once

#include <stdexcept>
#include <string>

namespace veritrap {

// Error taxonomy shared by every module. Categories map onto process exit
// codes (and the C API status codes): validation-class failures exit 1,
// transport failures exit 2, partial stage failures exit 3.
enum class ErrorCategory {
    validation,  // malformed input, invariant violation, bad config
    usage,       // caller broke a precondition
    domain,      // value outside a function's mathematical domain
    transport,   // provider/network failure after retries
    capability,  // endpoint cannot do what was asked (e.g., no logprobs)
    partial,     // stage finished with some subjects unprocessed
};

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, std::string message)
        : std::runtime_error(std::move(message)), category_(category) {}

    ErrorCategory category() const { return category_; }

    int exit_code() const {
        switch (category_) {
            case ErrorCategory::transport: return 2;
            case ErrorCategory::partial: return 3;
            default: return 1;
        }
    }

private:
    ErrorCategory category_;
};

inline Error validation_error(std::string msg) { return Error(ErrorCategory::validation, std::move(msg)); }
inline Error usage_error(std::string msg) { return Error(ErrorCategory::usage, std::move(msg)); }
inline Error domain_error(std::string msg) { return Error(ErrorCategory::domain, std::move(msg)); }
inline Error transport_error(std::string msg) { return Error(ErrorCategory::transport, std::move(msg)); }
inline Error capability_error(std::string msg) { return Error(ErrorCategory::capability, std::move(msg)); }
inline Error partial_error(std::string msg) { return Error(ErrorCategory::partial, std::move(msg)); }

}  // namespace veritrap
