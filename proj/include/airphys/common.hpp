#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace airphys {

// ============================================================================
// ERRORS
// ============================================================================
//
// Every failure surfaces as a typed exception. The CLI maps these onto exit
// codes; library callers catch whichever subset they care about.

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class SchemaError : public Error { using Error::Error; };          // bad column layout
class RowError : public Error { using Error::Error; };             // malformed row content
class EmptyInputError : public Error { using Error::Error; };
class UnimputableVariableError : public Error { using Error::Error; };
class SpecError : public Error { using Error::Error; };            // bad feature spec
class DegenerateColumnError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class SplitError : public Error { using Error::Error; };
class CollinearityError : public Error { using Error::Error; };
class ArgumentError : public Error { using Error::Error; };
class InsufficientDataError : public Error { using Error::Error; };
class ContractError : public Error { using Error::Error; };
class DivergenceError : public Error { using Error::Error; };
class StateError : public Error { using Error::Error; };
class LeakageError : public Error { using Error::Error; };
class AlignmentError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class DataError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };

// ============================================================================
// VARIABLES
// ============================================================================

/// The 11 city-day variables: traffic, two pollutants, eight weather series.
enum class Variable : int {
    TV = 0,
    NOx,
    PM25,
    Tmean,
    HDD,
    VP,
    WS,
    WG,
    meanRH,
    SD,
    PP,
};

inline constexpr int kVariableCount = 11;

const char* variable_name(Variable v);
std::optional<Variable> parse_variable(std::string_view name);
std::vector<Variable> all_variables();

/// True for series that cannot be negative (pollutants, counts, depths);
/// Tmean and VP may go below zero.
bool variable_non_negative(Variable v);

enum class Pollutant : int { NOx = 0, PM25 = 1 };
Variable pollutant_variable(Pollutant p);
const char* pollutant_name(Pollutant p);
std::optional<Pollutant> parse_pollutant(std::string_view name);

/// The nine Eq.-style covariates a pollutant rate is modeled on, in the
/// canonical order used by design matrices and sequence builders.
const std::vector<Variable>& covariate_order();

// ============================================================================
// DATES
// ============================================================================

/// Calendar day with ISO-8601 parsing and day-arithmetic. Stored as days
/// since 1970-01-01 so a dense daily axis is plain integer iteration.
class Date {
public:
    Date() = default;
    Date(int year, int month, int day);

    static Date parse(std::string_view iso);             // throws RowError
    static std::optional<Date> try_parse(std::string_view iso);
    static Date from_days(std::int64_t days) { Date d; d.days_ = days; return d; }

    std::int64_t days_since_epoch() const { return days_; }
    int year() const;
    int month() const;
    int day() const;
    int day_of_week() const;   // 1 = Monday .. 7 = Sunday
    int day_of_year() const;   // 1-based

    std::string to_string() const;

    Date operator+(std::int64_t n) const { return from_days(days_ + n); }
    std::int64_t operator-(const Date& o) const { return days_ - o.days_; }
    auto operator<=>(const Date&) const = default;

private:
    std::int64_t days_ = 0;
};

// ============================================================================
// RANDOMNESS
// ============================================================================

/// Deterministic generator: xoshiro-free, fully specified sampling on top of
/// a SplitMix64-seeded Mersenne state so results are identical across
/// platforms and standard-library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    double uniform();                       // [0, 1)
    double uniform(double lo, double hi);
    double normal();                        // N(0, 1), Box-Muller
    double normal(double mean, double sd);
    std::size_t uniform_index(std::size_t n);  // {0, .., n-1}

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[uniform_index(i)]);
        }
    }

private:
    std::uint64_t state_[4];
    bool have_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

/// Splits one master seed into independent named streams (init, dropout,
/// shuffle, bootstrap, ...) so adding a consumer never shifts another
/// consumer's draws.
class SeedStreams {
public:
    explicit SeedStreams(std::uint64_t master) : master_(master) {}

    std::uint64_t master() const { return master_; }
    std::uint64_t stream_seed(std::string_view name) const;
    Rng stream(std::string_view name) const { return Rng(stream_seed(name)); }

private:
    std::uint64_t master_;
};

// ============================================================================
// PARALLELISM
// ============================================================================

/// Number of worker threads: min(AIRPHYS_THREADS, hardware), at least 1.
unsigned max_threads();

/// Runs fn(i) for i in [0, n). Work items must write only to their own
/// slots; results are merged by index so scheduling never affects output.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// ============================================================================
// FORMATTING / HASHING
// ============================================================================

/// Shortest round-trip decimal form of a double (to_chars), so re-exports
/// are byte-identical and re-imports are exact.
std::string format_double(double v);

std::string format_fixed(double v, int decimals);

/// FNV-1a 64-bit over bytes, hex-encoded; used for artifact digests.
std::string fnv1a_hex(std::string_view bytes);

inline bool is_missing(double v) { return std::isnan(v); }
inline double missing_value() { return std::nan(""); }

}  // namespace airphys
