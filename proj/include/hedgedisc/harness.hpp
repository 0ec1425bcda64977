#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"

#include "hedgedisc/delta_hedge.hpp"
#include "hedgedisc/errors.hpp"
#include "hedgedisc/limit_theory.hpp"
#include "hedgedisc/lq_riccati.hpp"
#include "hedgedisc/process_sim.hpp"
#include "hedgedisc/rules.hpp"
#include "hedgedisc/stats.hpp"

namespace hedgedisc {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class OutputFormat { csv, json };

struct RuleConfig {
    std::string variant = "hitting";  ///< hitting | equidistant | sharpe | optimal_ee
    Curve lower{1.0};
    Curve upper{1.0};
    bool frozen = false;
    double lambda = 0.0;
    std::vector<double> lambdas;
    double mu = 1.0;
    double delta = 1.0;
    double t_min = 0.0;
    bool continuity_correction = false;
    std::optional<double> resolution;  ///< smallest barrier in eps units, sizes the grid
};

struct ExperimentConfig {
    ModelSpec model;
    double horizon = 1.0;
    double elasticity = 1.0;  ///< general diffusion: sigma^Y = sigma_t y^elasticity
    DeltaSpec delta;
    RuleConfig rule;
    std::vector<double> eps{0.4, 0.2, 0.1, 0.05};
    double oversample = 128.0;
    std::size_t max_steps = 20'000'000;
    std::size_t paths = 1000;
    std::uint64_t seed = 1;
    std::vector<double> frontier_m;
    std::optional<double> frontier_delta;
    std::vector<double> riccati_mu{0.5, 1.0, 2.0};
    std::size_t riccati_steps = 1000;
    OutputFormat format = OutputFormat::csv;
    std::string output_path;
    json source;  ///< parsed document, hashed into the metadata
};

namespace detail {

/// Input iterator over a buffer that counts the newlines it has passed.
class LineCountingIterator {
public:
    using iterator_category = std::input_iterator_tag;
    using value_type = char;
    using difference_type = std::ptrdiff_t;
    using pointer = const char*;
    using reference = const char&;

    LineCountingIterator() = default;
    /// `line` tracks the read position; `token_line` the last non-blank character
    /// consumed, so lookahead past a number does not advance it.
    LineCountingIterator(const char* p, std::size_t* line, std::size_t* token_line)
        : p_(p), line_(line), token_line_(token_line) {}

    reference operator*() const { return *p_; }
    LineCountingIterator& operator++() {
        if (*p_ == '\n') ++*line_;
        else if (*p_ != ' ' && *p_ != '\t' && *p_ != '\r') *token_line_ = *line_;
        ++p_;
        return *this;
    }
    LineCountingIterator operator++(int) {
        auto copy = *this;
        ++*this;
        return copy;
    }
    bool operator==(const LineCountingIterator& o) const { return p_ == o.p_; }
    bool operator!=(const LineCountingIterator& o) const { return p_ != o.p_; }

private:
    const char* p_ = nullptr;
    std::size_t* line_ = nullptr;
    std::size_t* token_line_ = nullptr;
};

/// SAX pass that records the source line of every object key, by JSON pointer.
class KeyLineRecorder : public nlohmann::json_sax<json> {
public:
    explicit KeyLineRecorder(const std::size_t* line) : line_(line) {}

    std::map<std::string, std::size_t> lines;

    bool null() override { return value(); }
    bool boolean(bool) override { return value(); }
    bool number_integer(number_integer_t) override { return value(); }
    bool number_unsigned(number_unsigned_t) override { return value(); }
    bool number_float(number_float_t, const string_t&) override { return value(); }
    bool string(string_t&) override { return value(); }
    bool binary(binary_t&) override { return value(); }
    bool start_object(std::size_t) override {
        open(false);
        return true;
    }
    bool key(string_t& k) override {
        stack_.back().key = k;
        lines[pointer()] = *line_;
        return true;
    }
    bool end_object() override { return close(); }
    bool start_array(std::size_t) override {
        open(true);
        return true;
    }
    bool end_array() override { return close(); }
    bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception&) override { return false; }

private:
    struct Frame {
        bool array = false;
        std::size_t index = 0;
        std::string key;
    };

    static std::string escape(const std::string& k) {
        std::string out;
        for (char c : k) {
            if (c == '~') out += "~0";
            else if (c == '/') out += "~1";
            else out += c;
        }
        return out;
    }

    std::string pointer() const {
        std::string p;
        for (const auto& f : stack_) p += "/" + (f.array ? std::to_string(f.index) : escape(f.key));
        return p;
    }
    void open(bool array) {
        if (!stack_.empty() && stack_.back().array) lines.emplace(pointer(), *line_);
        stack_.push_back({array, 0, {}});
    }
    bool close() {
        stack_.pop_back();
        if (!stack_.empty() && stack_.back().array) ++stack_.back().index;
        return true;
    }
    bool value() {
        if (!stack_.empty() && stack_.back().array) {
            lines.emplace(pointer(), *line_);
            ++stack_.back().index;
        }
        return true;
    }

    const std::size_t* line_;
    std::vector<Frame> stack_;
};

/// Typed access to the parsed document with "source:line: message" errors.
class ConfigReader {
public:
    ConfigReader(json doc, std::map<std::string, std::size_t> lines, std::string source)
        : doc_(std::move(doc)), lines_(std::move(lines)), source_(std::move(source)) {}

    [[noreturn]] void fail(const std::string& ptr, const std::string& msg) const {
        throw ConfigError(where(ptr) + ": " + msg);
    }

    [[nodiscard]] std::string where(const std::string& ptr) const {
        // Report the nearest enclosing key that has a recorded line.
        std::string p = ptr;
        while (!p.empty()) {
            if (auto it = lines_.find(p); it != lines_.end()) return source_ + ":" + std::to_string(it->second);
            p.erase(p.rfind('/'));
        }
        return source_ + ":1";
    }

    [[nodiscard]] static std::string name(const std::string& ptr) {
        std::string out = ptr.substr(1);
        std::replace(out.begin(), out.end(), '/', '.');
        return out;
    }

    [[nodiscard]] bool has(const std::string& ptr) const { return doc_.contains(json::json_pointer(ptr)); }
    [[nodiscard]] const json& at(const std::string& ptr) const { return doc_.at(json::json_pointer(ptr)); }
    [[nodiscard]] const json& doc() const { return doc_; }

    void allow_keys(const std::string& ptr, std::initializer_list<std::string_view> keys) const {
        const json& obj = ptr.empty() ? doc_ : at(ptr);
        if (!obj.is_object()) fail(ptr, (ptr.empty() ? std::string("document") : name(ptr)) + " must be an object");
        for (const auto& [k, v] : obj.items()) {
            if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
                std::string allowed;
                for (auto key : keys) allowed += (allowed.empty() ? "" : ", ") + std::string(key);
                fail(ptr + "/" + k, "unknown key '" + k + "' (allowed: " + allowed + ")");
            }
        }
    }

    [[nodiscard]] double number(const std::string& ptr) const {
        if (!has(ptr)) fail(ptr, name(ptr) + " is required");
        const json& v = at(ptr);
        if (!v.is_number()) fail(ptr, name(ptr) + " must be a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) fail(ptr, name(ptr) + " must be finite");
        return x;
    }
    [[nodiscard]] double number(const std::string& ptr, double fallback) const {
        return has(ptr) ? number(ptr) : fallback;
    }
    [[nodiscard]] double positive(const std::string& ptr, double fallback) const {
        const double x = number(ptr, fallback);
        if (!(x > 0.0)) fail(ptr, name(ptr) + " must be positive, got " + format_number(x));
        return x;
    }
    [[nodiscard]] double non_negative(const std::string& ptr, double fallback) const {
        const double x = number(ptr, fallback);
        if (!(x >= 0.0)) fail(ptr, name(ptr) + " must be non-negative, got " + format_number(x));
        return x;
    }
    [[nodiscard]] std::uint64_t unsigned_integer(const std::string& ptr, std::uint64_t fallback) const {
        if (!has(ptr)) return fallback;
        const json& v = at(ptr);
        if (!v.is_number_unsigned()) fail(ptr, name(ptr) + " must be a non-negative integer");
        return v.get<std::uint64_t>();
    }
    [[nodiscard]] bool boolean(const std::string& ptr, bool fallback) const {
        if (!has(ptr)) return fallback;
        if (!at(ptr).is_boolean()) fail(ptr, name(ptr) + " must be true or false");
        return at(ptr).get<bool>();
    }
    [[nodiscard]] std::string string(const std::string& ptr, const std::string& fallback,
                                     std::initializer_list<std::string_view> choices) const {
        if (!has(ptr)) return fallback;
        if (!at(ptr).is_string()) fail(ptr, name(ptr) + " must be a string");
        const auto s = at(ptr).get<std::string>();
        if (choices.size() > 0 && std::find(choices.begin(), choices.end(), s) == choices.end()) {
            std::string allowed;
            for (auto c : choices) allowed += (allowed.empty() ? "" : ", ") + std::string(c);
            fail(ptr, name(ptr) + " must be one of " + allowed + ", got '" + s + "'");
        }
        return s;
    }
    [[nodiscard]] std::vector<double> numbers(const std::string& ptr) const {
        const json& v = at(ptr);
        if (!v.is_array() || v.empty()) fail(ptr, name(ptr) + " must be a non-empty array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const std::string item = ptr + "/" + std::to_string(i);
            if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) fail(item, name(item) + " must be a finite number");
            out.push_back(v[i].get<double>());
        }
        return out;
    }
    /// A number (constant curve) or {"times": [...], "values": [...]}.
    [[nodiscard]] Curve curve(const std::string& ptr) const {
        const json& v = at(ptr);
        if (v.is_number()) return Curve(number(ptr));
        if (!v.is_object()) fail(ptr, name(ptr) + " must be a number or an object with times and values");
        allow_keys(ptr, {"times", "values"});
        if (!has(ptr + "/times") || !has(ptr + "/values")) fail(ptr, name(ptr) + " needs both times and values");
        auto times = numbers(ptr + "/times");
        auto values = numbers(ptr + "/values");
        if (times.size() != values.size()) fail(ptr, name(ptr) + ": times and values differ in length");
        for (std::size_t i = 1; i < times.size(); ++i)
            if (!(times[i] > times[i - 1]))
                fail(ptr + "/times/" + std::to_string(i), name(ptr) + ".times must be strictly increasing");
        return Curve(std::move(times), std::move(values));
    }

    static std::string format_number(double x) {
        std::ostringstream os;
        os << x;
        return os.str();
    }

private:
    json doc_;
    std::map<std::string, std::size_t> lines_;
    std::string source_;
};

}  // namespace detail

/// Parse and validate a configuration document. Errors carry "source:line".
inline ExperimentConfig parse_config(std::string_view text, const std::string& source = "config") {
    json doc;
    try {
        doc = json::parse(text.begin(), text.end(), nullptr, true, true);
    } catch (const json::parse_error& e) {
        // Locate the byte offset reported by the parser.
        std::size_t line = 1;
        const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
        for (std::size_t i = 0; i + 1 < upto; ++i)
            if (text[i] == '\n') ++line;
        throw ConfigError(source + ":" + std::to_string(line) + ": malformed JSON (" + e.what() + ")");
    }
    std::size_t line = 1;
    std::size_t token_line = 1;
    detail::KeyLineRecorder recorder(&token_line);
    detail::LineCountingIterator first(text.data(), &line, &token_line);
    detail::LineCountingIterator last(text.data() + text.size(), &line, &token_line);
    json::sax_parse(first, last, &recorder, nlohmann::detail::input_format_t::json, true, true);
    const detail::ConfigReader r(doc, std::move(recorder.lines), source);

    ExperimentConfig cfg;
    cfg.source = doc;
    r.allow_keys("", {"model", "delta", "rule", "eps", "oversample", "max_steps", "mc", "frontier", "riccati", "output"});

    // model
    if (!r.has("/model")) r.fail("", "model block is required");
    r.allow_keys("/model", {"kind", "y0", "horizon", "drift", "vol", "elasticity"});
    const auto kind = r.string("/model/kind", "black_scholes", {"black_scholes", "general_diffusion"});
    const double y0 = r.positive("/model/y0", 100.0);
    cfg.horizon = r.positive("/model/horizon", 1.0);
    if (!r.has("/model/vol")) r.fail("/model", "model.vol is required");
    const Curve drift = r.has("/model/drift") ? r.curve("/model/drift") : Curve(0.0);
    const Curve vol = r.curve("/model/vol");
    if (!(vol.min() > 0.0)) r.fail("/model/vol", "model.vol must be positive everywhere");
    if (kind == "black_scholes") {
        if (r.has("/model/elasticity")) r.fail("/model/elasticity", "model.elasticity applies to general_diffusion only");
        cfg.model = ModelSpec::black_scholes(y0, drift, vol);
    } else {
        cfg.elasticity = r.number("/model/elasticity", 1.0);
        const double gamma = cfg.elasticity;
        cfg.model = ModelSpec::general_diffusion(
            y0, [drift](double t, double y) { return drift(t) * y; },
            [vol, gamma](double t, double y) { return vol(t) * std::pow(std::max(y, 0.0), gamma); });
        cfg.model.drift = drift;
        cfg.model.vol = vol;
    }

    // delta
    if (r.has("/delta")) r.allow_keys("/delta", {"strike", "vol", "payoff"});
    cfg.delta.strike = r.positive("/delta/strike", y0);
    if (!r.has("/delta/vol") && !vol.is_constant())
        r.fail("/delta", "delta.vol is required when model.vol is a curve");
    cfg.delta.vol = r.positive("/delta/vol", vol.values()[0]);
    (void)r.string("/delta/payoff", "call", {"call"});  // validated; only calls are supported
    cfg.delta.maturity = cfg.horizon;

    // rule
    if (!r.has("/rule")) r.fail("", "rule block is required");
    r.allow_keys("/rule", {"variant", "lower", "upper", "frozen", "lambda", "lambdas", "mu", "delta", "t_min",
                           "continuity_correction", "resolution"});
    auto& rule = cfg.rule;
    if (!r.has("/rule/variant")) r.fail("/rule", "rule.variant is required");
    rule.variant = r.string("/rule/variant", "", {"hitting", "equidistant", "sharpe", "optimal_ee"});
    if (r.has("/rule/lower")) rule.lower = r.curve("/rule/lower");
    if (r.has("/rule/upper")) rule.upper = r.curve("/rule/upper");
    if (!(rule.lower.min() > 0.0)) r.fail("/rule/lower", "rule.lower must be positive");
    if (!(rule.upper.min() > 0.0)) r.fail("/rule/upper", "rule.upper must be positive");
    rule.frozen = r.boolean("/rule/frozen", false);
    rule.lambda = r.non_negative("/rule/lambda", 0.0);
    if (r.has("/rule/lambdas")) {
        rule.lambdas = r.numbers("/rule/lambdas");
        for (std::size_t i = 0; i < rule.lambdas.size(); ++i)
            if (rule.lambdas[i] < 0.0) r.fail("/rule/lambdas/" + std::to_string(i), "rule.lambdas must be non-negative");
    }
    rule.mu = r.positive("/rule/mu", 1.0);
    rule.delta = r.non_negative("/rule/delta", 1.0);
    rule.t_min = r.non_negative("/rule/t_min", 0.0);
    if (rule.variant == "optimal_ee" && rule.delta == 0.0 && rule.t_min == 0.0)
        r.fail("/rule/delta", "rule.delta = 0 requires rule.t_min > 0");
    rule.continuity_correction = r.boolean("/rule/continuity_correction", false);
    if (r.has("/rule/resolution")) rule.resolution = r.positive("/rule/resolution", 1.0);
    if ((rule.variant == "sharpe" || rule.variant == "optimal_ee") && cfg.model.drift.min() * cfg.model.drift.max() <= 0.0)
        r.fail("/model/drift", "model.drift must be nonzero with a constant sign for the " + rule.variant + " rule");

    // schedule and Monte Carlo
    if (r.has("/eps")) {
        cfg.eps = r.numbers("/eps");
        for (std::size_t i = 0; i < cfg.eps.size(); ++i) {
            const std::string p = "/eps/" + std::to_string(i);
            if (!(cfg.eps[i] > 0.0)) r.fail(p, "eps must be positive");
            if (i > 0 && !(cfg.eps[i] < cfg.eps[i - 1])) r.fail(p, "eps schedule must be strictly decreasing");
        }
    }
    cfg.oversample = r.positive("/oversample", 128.0);
    cfg.max_steps = r.unsigned_integer("/max_steps", cfg.max_steps);
    if (r.has("/mc")) r.allow_keys("/mc", {"paths", "seed"});
    cfg.paths = r.unsigned_integer("/mc/paths", 1000);
    if (cfg.paths < 1) r.fail("/mc/paths", "mc.paths must be at least 1");
    cfg.seed = r.unsigned_integer("/mc/seed", 1);

    if (r.has("/frontier")) {
        r.allow_keys("/frontier", {"m", "delta"});
        if (r.has("/frontier/m")) {
            cfg.frontier_m = r.numbers("/frontier/m");
            for (std::size_t i = 0; i < cfg.frontier_m.size(); ++i)
                if (!(cfg.frontier_m[i] > 0.0)) r.fail("/frontier/m/" + std::to_string(i), "frontier.m must be positive");
        }
        if (r.has("/frontier/delta")) cfg.frontier_delta = r.positive("/frontier/delta", 1.0);
    }
    if (r.has("/riccati")) {
        r.allow_keys("/riccati", {"mu", "steps"});
        if (r.has("/riccati/mu")) {
            cfg.riccati_mu = r.numbers("/riccati/mu");
            for (std::size_t i = 0; i < cfg.riccati_mu.size(); ++i)
                if (!(cfg.riccati_mu[i] > 0.0)) r.fail("/riccati/mu/" + std::to_string(i), "riccati.mu must be positive");
        }
        cfg.riccati_steps = r.unsigned_integer("/riccati/steps", 1000);
        if (cfg.riccati_steps < 2) r.fail("/riccati/steps", "riccati.steps must be at least 2");
    }
    if (r.has("/output")) {
        r.allow_keys("/output", {"format", "path"});
        cfg.format = r.string("/output/format", "csv", {"csv", "json"}) == "json" ? OutputFormat::json : OutputFormat::csv;
        cfg.output_path = r.string("/output/path", "", {});
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path + ": cannot open configuration file");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path);
}

/// FNV-1a 64 of the canonical (sorted-key, compact) serialization.
inline std::string config_hash(const json& doc) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : doc.dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Result tables and emission
// ---------------------------------------------------------------------------

struct ResultTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    ordered_json metadata = ordered_json::object();

    void add_row(std::vector<double> row) {
        detail::require(row.size() == columns.size(), "result table: row width differs from the header");
        rows.push_back(std::move(row));
    }
    [[nodiscard]] std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        throw std::out_of_range("result table: no column " + std::string(name));
    }
    [[nodiscard]] double at(std::size_t row, std::string_view name) const { return rows.at(row).at(column(name)); }

    bool operator==(const ResultTable&) const = default;
};

namespace detail {

/// Shortest decimal that round-trips; "nan", "inf", "-inf" otherwise.
inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

}  // namespace detail

/// RFC 4180: CRLF line ends, header row, quoted fields where needed.
inline std::string to_csv(const ResultTable& t) {
    std::string out;
    for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + detail::csv_field(t.columns[i]);
    out += "\r\n";
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + detail::format_double(row[i]);
        out += "\r\n";
    }
    return out;
}

/// {"metadata": {...}, "columns": [...], "rows": [{column: value}, ...]};
/// non-finite values become null.
inline std::string to_json(const ResultTable& t) {
    ordered_json doc;
    doc["metadata"] = t.metadata;
    doc["columns"] = t.columns;
    doc["rows"] = ordered_json::array();
    for (const auto& row : t.rows) {
        ordered_json obj = ordered_json::object();
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (std::isfinite(row[i])) obj[t.columns[i]] = row[i];
            else obj[t.columns[i]] = nullptr;
        }
        doc["rows"].push_back(std::move(obj));
    }
    return doc.dump(2) + "\n";
}

inline ResultTable table_from_json(std::string_view text) {
    const auto doc = ordered_json::parse(text);
    ResultTable t;
    t.metadata = doc.at("metadata");
    t.columns = doc.at("columns").get<std::vector<std::string>>();
    for (const auto& obj : doc.at("rows")) {
        std::vector<double> row;
        for (const auto& c : t.columns) {
            const auto& v = obj.at(c);
            row.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline std::string render(const ResultTable& t, OutputFormat format) {
    return format == OutputFormat::json ? to_json(t) : to_csv(t);
}

/// Write the table; an empty path means stdout.
inline void emit(const ResultTable& t, OutputFormat format, const std::string& path, std::ostream& fallback) {
    const std::string text = render(t, format);
    if (path.empty()) {
        fallback << text;
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("emit: cannot write " + path);
    out << text;
    if (!out) throw std::runtime_error("emit: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Deterministic parallel map
// ---------------------------------------------------------------------------

/// Calls f(i) for i in [0, n) on `threads` workers with static contiguous
/// chunks. Results must be written by index; the first failing index (in
/// index order) is rethrown, so errors are reproducible too.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& f) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::size_t> failed_at(threads, n);
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            const std::size_t lo = w * chunk;
            const std::size_t hi = std::min(n, lo + chunk);
            for (std::size_t i = lo; i < hi; ++i) {
                try {
                    f(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                    failed_at[w] = i;
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    const auto first = std::min_element(failed_at.begin(), failed_at.end()) - failed_at.begin();
    if (errors[first]) std::rethrow_exception(errors[first]);
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct RunOptions {
    unsigned threads = 1;
    std::ostream* log = nullptr;  ///< progress and wall times; never part of the output
};

/// Per-path quantities shared by the Monte Carlo experiments.
struct PathOutcome {
    double trades = 0.0;
    double z = 0.0;    ///< eps^-1 Z^n_T
    double qv = 0.0;   ///< eps^-2 sum ((X^n - X) dY)^2
    double ztilde = 0.0;
    LimitPathTerms limit;
};

/// Everything needed to evaluate one (rule, eps) cell.
struct CellSetup {
    const ExperimentConfig* cfg = nullptr;
    double eps = 0.1;
    TimeGrid grid{1.0, 2};
    std::shared_ptr<const PathSimulator> sim;
    Rule rule;
};

namespace detail {

inline double curve_min_abs(const Curve& c) {
    double m = std::numeric_limits<double>::infinity();
    for (double v : c.values()) m = std::min(m, std::abs(v));
    return m;
}

/// Smallest barrier distance (eps units) expected at the start, which sizes the grid.
inline double barrier_resolution(const ExperimentConfig& cfg, const RuleConfig& rule, double lambda,
                                 const Controller* ctl) {
    if (rule.resolution) return *rule.resolution;
    const auto& m = cfg.model;
    if (rule.variant == "equidistant") return 1.0;
    if (rule.variant == "hitting") return std::min(rule.lower.min(), rule.upper.min());
    if (rule.variant == "sharpe") {
        const auto b = sharpe_barriers(m, lambda, 0.0, m.y0);
        return std::min(b.lower, b.upper);
    }
    const double s0 = ctl ? ctl->initial(m.y0).s_star : 0.0;
    const double vol0 = m.vol_abs(0.0, m.y0);
    const auto b = rule.delta > 0.0 ? optimal_ee_barriers(s0, vol0, rule.delta) : degenerate_ee_barriers(s0);
    const double smallest = std::min(b.lower, b.upper);
    return smallest > 0.0 ? smallest : std::max(b.lower, b.upper);
}

inline TimeGrid cell_grid(const ExperimentConfig& cfg, double eps, double resolution) {
    const double scale = eps * resolution;
    const double steps = std::ceil(cfg.horizon * cfg.oversample / (scale * scale));
    if (!(steps <= static_cast<double>(cfg.max_steps)))
        throw ConfigError("grid for eps = " + format_double(eps) + " would need " + format_double(steps) +
                          " steps, above max_steps = " + std::to_string(cfg.max_steps) +
                          "; raise eps, rule.resolution or max_steps");
    return TimeGrid::resolving(cfg.horizon, scale, cfg.oversample);
}

inline Rule make_rule(const RuleConfig& rc, double eps, double lambda, const ModelSpec& model,
                      std::shared_ptr<const Controller> ctl, double delta) {
    Rule rule;
    rule.t_min = rc.t_min;
    rule.continuity_correction = rc.continuity_correction;
    if (rc.variant == "equidistant") {
        rule.policy = EquidistantRule{eps};
    } else if (rc.variant == "hitting") {
        HittingRule h{eps};
        h.lower = [c = rc.lower](double t, double) { return c(t); };
        h.upper = [c = rc.upper](double t, double) { return c(t); };
        h.frozen = rc.frozen;
        rule.policy = std::move(h);
    } else if (rc.variant == "sharpe") {
        rule.policy = SharpeRule{eps, lambda, model};
    } else {
        rule.policy = OptimalEERule{eps, delta, std::move(ctl), model};
    }
    return rule;
}

inline void log_line(const RunOptions& opt, const std::string& msg) {
    if (opt.log) *opt.log << msg << std::endl;
}

}  // namespace detail

inline CellSetup make_cell(const ExperimentConfig& cfg, double eps, double lambda = 0.0, double mu = 0.0,
                           double delta = -1.0) {
    CellSetup cell;
    cell.cfg = &cfg;
    cell.eps = eps;
    if (delta < 0.0) delta = cfg.rule.delta;
    std::shared_ptr<const Controller> ctl;
    if (cfg.rule.variant == "optimal_ee") {
        detail::require(cfg.model.kind == ModelKind::black_scholes, "optimal_ee rule needs the black_scholes model");
        if (mu <= 0.0) mu = cfg.rule.mu;
        // Size the grid from a coarse controller, then build the real one on it.
        const TimeGrid coarse(cfg.horizon, 64);
        const auto coarse_ctl = std::make_shared<Controller>(
            std::make_shared<RiccatiSolution>(riccati_closed_form(rho_squared_curve(cfg.model, coarse), mu, coarse)),
            cfg.model.drift);
        auto rc = cfg.rule;
        rc.delta = delta;
        cell.grid = detail::cell_grid(cfg, eps, detail::barrier_resolution(cfg, rc, lambda, coarse_ctl.get()));
        ctl = std::make_shared<Controller>(
            std::make_shared<RiccatiSolution>(riccati_closed_form(rho_squared_curve(cfg.model, cell.grid), mu, cell.grid)),
            cfg.model.drift);
    } else {
        cell.grid = detail::cell_grid(cfg, eps, detail::barrier_resolution(cfg, cfg.rule, lambda, nullptr));
    }
    cell.sim = std::make_shared<PathSimulator>(cfg.model, cell.grid);
    cell.rule = detail::make_rule(cfg.rule, eps, lambda, cfg.model, ctl, delta);
    return cell;
}

/// Simulate path `id`, apply the rule and collect the per-path statistics.
inline PathOutcome evaluate_path(const CellSetup& cell, std::uint64_t id, PathBundle& scratch) {
    const auto& cfg = *cell.cfg;
    cell.sim->simulate(cfg.seed, id, scratch);
    delta_path(scratch, cfg.delta, cfg.model);
    const auto outcome = apply_rule(cell.rule, scratch);
    const auto h = hedging_error(scratch, outcome.rebalances);
    PathOutcome r;
    r.trades = static_cast<double>(h.trades);
    r.z = h.error / cell.eps;
    r.qv = h.quadratic_variation / (cell.eps * cell.eps);
    if (!outcome.trace.ztilde.empty()) r.ztilde = outcome.trace.ztilde.back();
    r.limit = limit_path_terms(limit_pair_for(cell.rule, outcome, scratch), scratch, cfg.model);
    if (!std::isfinite(r.z) || !std::isfinite(r.qv))
        throw NumericalError("hedging error is not finite on path " + std::to_string(id));
    return r;
}

inline std::vector<PathOutcome> evaluate_cell(const CellSetup& cell, const RunOptions& opt) {
    std::vector<PathOutcome> out(cell.cfg->paths);
    const unsigned threads = std::max(1u, opt.threads);
    std::vector<PathBundle> scratch(threads);
    const std::size_t n = out.size();
    const std::size_t chunk = (n + threads - 1) / threads;
    parallel_for(n, threads, [&](std::size_t i) { out[i] = evaluate_path(cell, i, scratch[i / chunk]); });
    return out;
}

/// Column-wise view of a cell's outcomes.
struct CellSummary {
    Estimate trades, m, v, qv, ztilde, m_limit, v_limit, vc_limit, m_diff, v_diff;
    Estimate sharpe;  ///< m / sqrt(qv)
};

inline CellSummary summarize(std::span<const PathOutcome> paths) {
    const std::size_t n = paths.size();
    std::vector<double> trades(n), z(n), z2(n), qv(n), zt(n), ml(n), vl(n), vcl(n), md(n), vd(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = paths[i];
        trades[i] = p.trades;
        z[i] = p.z;
        z2[i] = p.z * p.z;
        qv[i] = p.qv;
        zt[i] = p.ztilde;
        ml[i] = p.limit.skew_integral / 3.0;
        vl[i] = p.limit.second_moment();
        vcl[i] = p.limit.continuous_second_moment();
        md[i] = z[i] - ml[i];
        vd[i] = z2[i] - vl[i];
    }
    CellSummary s;
    s.trades = estimate(trades);
    s.m = estimate(z);
    s.v = estimate(z2);
    s.qv = estimate(qv);
    s.ztilde = estimate(zt);
    s.m_limit = estimate(ml);
    s.v_limit = estimate(vl);
    s.vc_limit = estimate(vcl);
    s.m_diff = estimate(md);
    s.v_diff = estimate(vd);
    s.sharpe = n >= 2 ? ratio_to_root(z, qv) : Estimate{};
    return s;
}

namespace detail {

inline ResultTable table_shell(const ExperimentConfig& cfg, const std::string& experiment) {
    ResultTable t;
    t.metadata["experiment"] = experiment;
    t.metadata["config_hash"] = config_hash(cfg.source);
    t.metadata["seed"] = cfg.seed;
    t.metadata["paths"] = cfg.paths;
    t.metadata["rule"] = cfg.rule.variant;
    t.metadata["oversample"] = cfg.oversample;
    t.metadata["targets"] =
        "limit moments as eps -> 0; no published reference values exist, every gate is self-derived";
    return t;
}

inline void require_moment_paths(const ExperimentConfig& cfg) {
    if (cfg.paths < 100) throw ConfigError("mc.paths must be at least 100 for moment estimates");
}

}  // namespace detail

/// One row per (eps, path): trades and the scaled hedging error.
inline ResultTable run_simulate(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
    auto t = detail::table_shell(cfg, "simulate");
    t.columns = {"eps", "path", "steps", "trades", "z_scaled", "benchmark_pnl", "discretized_pnl", "y_T"};
    for (double eps : cfg.eps) {
        const auto cell = make_cell(cfg, eps, cfg.rule.lambda);
        std::vector<std::vector<double>> rows(cfg.paths);
        const unsigned threads = std::max(1u, opt.threads);
        std::vector<PathBundle> scratch(threads);
        const std::size_t chunk = (cfg.paths + threads - 1) / threads;
        parallel_for(cfg.paths, threads, [&](std::size_t i) {
            auto& p = scratch[i / chunk];
            cell.sim->simulate(cfg.seed, i, p);
            delta_path(p, cfg.delta, cfg.model);
            const auto o = apply_rule(cell.rule, p);
            const auto h = hedging_error(p, o.rebalances);
            rows[i] = {eps, static_cast<double>(i), static_cast<double>(cell.grid.steps()), static_cast<double>(h.trades),
                       h.error / eps, h.benchmark, h.discretized, p.y.back()};
        });
        for (auto& r : rows) t.add_row(std::move(r));
    }
    return t;
}

/// Moments of eps^-1 Z against the limit moments, per eps (descending).
inline ResultTable run_convergence(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
    detail::require_moment_paths(cfg);
    auto t = detail::table_shell(cfg, "convergence");
    t.columns = {"eps",     "steps",   "mean_trades", "mean_trades_se", "m_hat",   "m_se",    "v_hat",
                 "v_se",    "m_limit", "m_limit_se",  "v_limit",        "v_limit_se", "m_z",  "v_z",
                 "qv_hat",  "qv_se",   "vc_limit"};
    for (double eps : cfg.eps) {
        const auto cell = make_cell(cfg, eps, cfg.rule.lambda);
        const auto paths = evaluate_cell(cell, opt);
        const auto s = summarize(paths);
        t.add_row({eps, static_cast<double>(cell.grid.steps()), s.trades.mean, s.trades.se, s.m.mean, s.m.se,
                   s.v.mean, s.v.se, s.m_limit.mean, s.m_limit.se, s.v_limit.mean, s.v_limit.se,
                   s.m_diff.mean / s.m_diff.se, s.v_diff.mean / s.v_diff.se, s.qv.mean, s.qv.se, s.vc_limit.mean});
        detail::log_line(opt, "convergence eps=" + detail::format_double(eps) + " steps=" +
                                  std::to_string(cell.grid.steps()) + " done");
    }
    return t;
}

/// Realized modified Sharpe ratio per lambda at the smallest eps, next to the
/// analytic S(lambda) and the bound.
inline ResultTable run_sharpe_sweep(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
    detail::require_moment_paths(cfg);
    if (cfg.rule.variant != "sharpe") throw ConfigError("sharpe-sweep needs rule.variant = sharpe");
    const auto& d = cfg.model.drift;
    if (d.min() == 0.0 && d.max() == 0.0) throw ConfigError("sharpe-sweep: drift vanishes identically");
    auto t = detail::table_shell(cfg, "sharpe-sweep");
    const bool deterministic = cfg.model.kind == ModelKind::black_scholes;
    const double bound = deterministic ? sharpe_bound(cfg.model, cfg.horizon) : std::numeric_limits<double>::quiet_NaN();
    t.metadata["sharpe_bound"] = bound;
    t.columns = {"lambda", "eps",          "steps",    "mean_trades",     "m_hat",     "m_se",
                 "qv_hat", "qv_se",        "sharpe_hat", "sharpe_se",     "sharpe_limit_mc", "sharpe_analytic",
                 "bound",  "sharpe_z"};
    std::vector<double> lambdas = cfg.rule.lambdas.empty() ? std::vector<double>{cfg.rule.lambda} : cfg.rule.lambdas;
    const double eps = cfg.eps.back();
    for (double lambda : lambdas) {
        const auto cell = make_cell(cfg, eps, lambda);
        const auto paths = evaluate_cell(cell, opt);
        const auto s = summarize(paths);
        std::vector<LimitPathTerms> terms(paths.size());
        for (std::size_t i = 0; i < paths.size(); ++i) terms[i] = paths[i].limit;
        const auto lim = limit_moments_mc(terms);
        const double analytic = deterministic ? sharpe_rule_ratio(lambda, bound) : std::numeric_limits<double>::quiet_NaN();
        const double target = deterministic ? analytic : modified_sharpe(lim);
        t.add_row({lambda, eps, static_cast<double>(cell.grid.steps()), s.trades.mean, s.m.mean, s.m.se, s.qv.mean,
                   s.qv.se, s.sharpe.mean, s.sharpe.se, modified_sharpe(lim), analytic, bound,
                   z_score(s.sharpe.mean, target, s.sharpe.se)});
        detail::log_line(opt, "sharpe-sweep lambda=" + detail::format_double(lambda) + " done");
    }
    return t;
}

/// Controller-driven optimal rule per target expectation m at the smallest eps.
inline ResultTable run_frontier(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
    detail::require_moment_paths(cfg);
    if (cfg.model.kind != ModelKind::black_scholes) throw ConfigError("frontier needs the black_scholes model");
    if (cfg.frontier_m.empty()) throw ConfigError("frontier needs frontier.m targets");
    const double delta = cfg.frontier_delta.value_or(cfg.rule.delta);
    if (!(delta > 0.0)) throw ConfigError("frontier needs a positive delta");
    auto run_cfg = cfg;
    run_cfg.rule.variant = "optimal_ee";
    run_cfg.rule.delta = delta;
    const TimeGrid coarse(cfg.horizon, 1000);
    const auto fr = frontier(rho_squared_curve(cfg.model, coarse), coarse, cfg.frontier_m);

    auto t = detail::table_shell(cfg, "frontier");
    t.metadata["rule"] = "optimal_ee";
    t.metadata["frontier_ratio"] = fr.ratio;
    t.metadata["p0_over_pT"] = fr.p_ratio;
    t.columns = {"m_target", "mu",        "delta",     "eps",        "steps",      "mean_trades",
                 "m_hat",    "m_se",      "v_hat",     "v_se",       "m_star",     "v_target",
                 "m_limit",  "v_limit",   "ztilde_hat", "ztilde_se", "ztilde_target", "m_z",
                 "v_z",      "ztilde_z"};
    const double eps = cfg.eps.back();
    for (const auto& pt : fr.points) {
        const auto cell = make_cell(run_cfg, eps, 0.0, pt.mu, delta);
        const auto paths = evaluate_cell(cell, opt);
        const auto s = summarize(paths);
        const double v_target = pt.v + delta * cfg.horizon;
        t.add_row({pt.m, pt.mu, delta, eps, static_cast<double>(cell.grid.steps()), s.trades.mean, s.m.mean, s.m.se,
                   s.v.mean, s.v.se, pt.m, v_target, s.m_limit.mean, s.v_limit.mean, s.ztilde.mean, s.ztilde.se,
                   pt.expected_ztilde, z_score(s.m.mean, pt.m, s.m.se), z_score(s.v.mean, v_target, s.v.se),
                   z_score(s.ztilde.mean, pt.expected_ztilde, s.ztilde.se)});
        detail::log_line(opt, "frontier m=" + detail::format_double(pt.m) + " done");
    }
    return t;
}

/// Closed-form P against the RK4 integration and the general LQ solver.
inline ResultTable run_riccati_check(const ExperimentConfig& cfg, const RunOptions& = {}) {
    if (cfg.model.kind != ModelKind::black_scholes)
        throw ConfigError("riccati-check needs deterministic coefficients (black_scholes model)");
    const TimeGrid grid(cfg.horizon, cfg.riccati_steps);
    const Curve rho2 = rho_squared_curve(cfg.model, grid);
    auto t = detail::table_shell(cfg, "riccati-check");
    t.metadata["steps"] = cfg.riccati_steps;
    t.columns = {"mu", "p0", "pT", "p0_over_pT", "frontier_ratio", "ode_max_rel_err", "lq_max_rel_err"};
    for (double mu : cfg.riccati_mu) {
        const auto closed = riccati_closed_form(rho2, mu, grid);
        const auto ode = riccati_ode(rho2, mu, grid);
        const auto lq = general_lq_solve(black_scholes_lq_problem(cfg.model, mu), grid);
        double ode_err = 0.0, lq_err = 0.0;
        for (std::size_t k = 0; k < grid.size(); ++k) {
            ode_err = std::max(ode_err, std::abs(ode.p[k] - closed.p[k]) / closed.p[k]);
            lq_err = std::max(lq_err, std::abs(lq.p[k](0, 0) - closed.p[k]) / closed.p[k]);
        }
        t.add_row({mu, closed.p0(), closed.pT(), closed.p0() / closed.pT(), closed.frontier_ratio(), ode_err, lq_err});
    }
    return t;
}

}  // namespace hedgedisc
