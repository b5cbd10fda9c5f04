#ifndef CROWDIRT_ERROR_HPP
#define CROWDIRT_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace crowdirt {

/// Machine-readable failure categories. The string form (see to_string) is
/// what appears in CLI messages and manifests.
enum class Errc {
    bad_header,
    empty_input,
    io_error,
    invalid_argument,
    dimension_mismatch,
    non_finite,
    truth_conflict,
    no_gold_overlap,
    no_votes,
    zero_weight_mass,
    missing_weights,
    bad_init,
    chain_failed,
    degenerate_draws,
    insufficient_draws,
    too_large_to_enumerate,
    zero_mass,
    missing_truth,
    bad_config,
};

constexpr std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::bad_header: return "bad_header";
        case Errc::empty_input: return "empty_input";
        case Errc::io_error: return "io_error";
        case Errc::invalid_argument: return "invalid_argument";
        case Errc::dimension_mismatch: return "dimension_mismatch";
        case Errc::non_finite: return "non_finite";
        case Errc::truth_conflict: return "truth_conflict";
        case Errc::no_gold_overlap: return "no_gold_overlap";
        case Errc::no_votes: return "no_votes";
        case Errc::zero_weight_mass: return "zero_weight_mass";
        case Errc::missing_weights: return "missing_weights";
        case Errc::bad_init: return "bad_init";
        case Errc::chain_failed: return "chain_failed";
        case Errc::degenerate_draws: return "degenerate_draws";
        case Errc::insufficient_draws: return "insufficient_draws";
        case Errc::too_large_to_enumerate: return "too_large_to_enumerate";
        case Errc::zero_mass: return "zero_mass";
        case Errc::missing_truth: return "missing_truth";
        case Errc::bad_config: return "bad_config";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& detail)
        : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace crowdirt

#endif  // CROWDIRT_ERROR_HPP
