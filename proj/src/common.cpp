#include "airphys/common.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <thread>

namespace airphys {

// ============================================================================
// VARIABLES
// ============================================================================

namespace {
constexpr std::array<const char*, kVariableCount> kVariableNames = {
    "TV", "NOx", "PM25", "Tmean", "HDD", "VP", "WS", "WG", "meanRH", "SD", "PP",
};
}  // namespace

const char* variable_name(Variable v) {
    return kVariableNames[static_cast<int>(v)];
}

std::optional<Variable> parse_variable(std::string_view name) {
    for (int i = 0; i < kVariableCount; ++i) {
        if (name == kVariableNames[i]) return static_cast<Variable>(i);
    }
    // Common aliases seen in source files.
    if (name == "PM2.5" || name == "PM2_5") return Variable::PM25;
    if (name == "NOX" || name == "NOx ") return Variable::NOx;
    return std::nullopt;
}

std::vector<Variable> all_variables() {
    std::vector<Variable> out;
    out.reserve(kVariableCount);
    for (int i = 0; i < kVariableCount; ++i) out.push_back(static_cast<Variable>(i));
    return out;
}

bool variable_non_negative(Variable v) {
    switch (v) {
        case Variable::Tmean:
        case Variable::VP:
            return false;
        default:
            return true;
    }
}

Variable pollutant_variable(Pollutant p) {
    return p == Pollutant::NOx ? Variable::NOx : Variable::PM25;
}

const char* pollutant_name(Pollutant p) {
    return p == Pollutant::NOx ? "NOx" : "PM25";
}

std::optional<Pollutant> parse_pollutant(std::string_view name) {
    if (name == "NOx" || name == "NOX") return Pollutant::NOx;
    if (name == "PM25" || name == "PM2.5") return Pollutant::PM25;
    return std::nullopt;
}

const std::vector<Variable>& covariate_order() {
    static const std::vector<Variable> order = {
        Variable::TV, Variable::Tmean, Variable::HDD,  Variable::VP, Variable::WS,
        Variable::WG, Variable::meanRH, Variable::SD,  Variable::PP,
    };
    return order;
}

// ============================================================================
// DATES
// ============================================================================

namespace {

// Civil-calendar conversion (proleptic Gregorian), Hinnant-style.
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yr = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yr + (m <= 2));
}

bool parse_int(std::string_view s, int& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

Date::Date(int year, int month, int day) : days_(days_from_civil(year, month, day)) {}

std::optional<Date> Date::try_parse(std::string_view iso) {
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') return std::nullopt;
    int y = 0, m = 0, d = 0;
    if (!parse_int(iso.substr(0, 4), y) || !parse_int(iso.substr(5, 2), m) ||
        !parse_int(iso.substr(8, 2), d)) {
        return std::nullopt;
    }
    if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
    Date dt(y, m, d);
    if (dt.year() != y || dt.month() != m || dt.day() != d) return std::nullopt;
    return dt;
}

Date Date::parse(std::string_view iso) {
    auto d = try_parse(iso);
    if (!d) throw RowError("malformed date: '" + std::string(iso) + "'");
    return *d;
}

int Date::year() const {
    int y, m, d;
    civil_from_days(days_, y, m, d);
    return y;
}

int Date::month() const {
    int y, m, d;
    civil_from_days(days_, y, m, d);
    return m;
}

int Date::day() const {
    int y, m, d;
    civil_from_days(days_, y, m, d);
    return d;
}

int Date::day_of_week() const {
    // 1970-01-01 was a Thursday.
    std::int64_t dow = (days_ + 3) % 7;
    if (dow < 0) dow += 7;
    return static_cast<int>(dow) + 1;
}

int Date::day_of_year() const {
    return static_cast<int>(days_ - days_from_civil(year(), 1, 1)) + 1;
}

std::string Date::to_string() const {
    int y, m, d;
    civil_from_days(days_, y, m, d);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
    return buf;
}

// ============================================================================
// RANDOMNESS
// ============================================================================

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
    // xoshiro256** state, seeded via SplitMix64 per the reference scheme.
    std::uint64_t sm = seed;
    for (auto& s : state_) s = splitmix64(sm);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (have_spare_normal_) {
        have_spare_normal_ = false;
        return spare_normal_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_normal_ = r * std::sin(theta);
    have_spare_normal_ = true;
    return r * std::cos(theta);
}

double Rng::normal(double mean, double sd) { return mean + sd * normal(); }

std::size_t Rng::uniform_index(std::size_t n) {
    if (n == 0) throw ArgumentError("uniform_index: n must be positive");
    // Rejection sampling over the largest multiple of n, no modulo bias.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
}

std::uint64_t SeedStreams::stream_seed(std::string_view name) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV offset basis
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t mix = master_ ^ h;
    return splitmix64(mix);
}

// ============================================================================
// PARALLELISM
// ============================================================================

unsigned max_threads() {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("AIRPHYS_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) hw = std::min<unsigned>(hw, static_cast<unsigned>(v));
    }
    return std::max(1u, hw);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const unsigned workers = std::min<std::size_t>(max_threads(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

// ============================================================================
// FORMATTING / HASHING
// ============================================================================

std::string format_double(double v) {
    char buf[40];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw Error("format_double failed");
    return std::string(buf, ptr);
}

std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace airphys
