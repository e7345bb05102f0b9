#pragma once

#include <stdexcept>
#include <string>

namespace keycap {

// Error codes double as CLI exit codes; the table is documented in README.md.
enum class errc : int {
  internal = 1,
  parse_error = 2,
  usage = 3,
  validation = 4,
  degenerate_correlation = 10,
  negative_rate = 11,
  invalid_variance = 12,
  invalid_mu = 13,
  tolerance_not_met = 14,
  non_concave_input = 15,
  not_symmetric = 16,
  not_psd = 17,
  missing_eavesdropper = 18,
  not_commuting = 19,
  dimension_mismatch = 20,
  not_summable = 21,
  degenerate_spectrum = 22,
  alphabet_too_large = 23,
  degenerate_marginal = 24,
  denominator_vanishes = 25,
  saturated_constant = 26,
};

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const noexcept { return code_; }
  int exit_code() const noexcept { return static_cast<int>(code_); }

 private:
  errc code_;
};

#define KEYCAP_ERROR_TYPE(Name, code_value)                                   \
  class Name : public Error {                                                 \
   public:                                                                    \
    explicit Name(const std::string& what) : Error(errc::code_value, what) {} \
  }

KEYCAP_ERROR_TYPE(ParseError, parse_error);
KEYCAP_ERROR_TYPE(ValidationError, validation);
KEYCAP_ERROR_TYPE(DegenerateCorrelation, degenerate_correlation);
KEYCAP_ERROR_TYPE(NegativeRate, negative_rate);
KEYCAP_ERROR_TYPE(InvalidVariance, invalid_variance);
KEYCAP_ERROR_TYPE(InvalidMu, invalid_mu);
KEYCAP_ERROR_TYPE(ToleranceNotMet, tolerance_not_met);
KEYCAP_ERROR_TYPE(NonConcaveInput, non_concave_input);
KEYCAP_ERROR_TYPE(NotSymmetric, not_symmetric);
KEYCAP_ERROR_TYPE(NotPSD, not_psd);
KEYCAP_ERROR_TYPE(MissingEavesdropper, missing_eavesdropper);
KEYCAP_ERROR_TYPE(NotCommuting, not_commuting);
KEYCAP_ERROR_TYPE(DimensionMismatch, dimension_mismatch);
KEYCAP_ERROR_TYPE(NotSummable, not_summable);
KEYCAP_ERROR_TYPE(DegenerateSpectrum, degenerate_spectrum);
KEYCAP_ERROR_TYPE(AlphabetTooLarge, alphabet_too_large);
KEYCAP_ERROR_TYPE(DegenerateMarginal, degenerate_marginal);
KEYCAP_ERROR_TYPE(DenominatorVanishes, denominator_vanishes);
KEYCAP_ERROR_TYPE(SaturatedConstant, saturated_constant);

#undef KEYCAP_ERROR_TYPE

}  // namespace keycap
