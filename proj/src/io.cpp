#include "matchri/io.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "matchri/error.h"

namespace matchri::io {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(sep, start);
        out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

bool parse_double(const std::string& text, double& value) {
    if (text.empty()) return false;
    const char* first = text.data();
    const char* last = first + text.size();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    return ec == std::errc() && ptr == last;
}

// x<j> with j >= 1, or -1.
int covariate_index(const std::string& name) {
    if (name.size() < 2 || name[0] != 'x') return -1;
    int j = 0;
    const auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), j);
    if (ec != std::errc() || ptr != name.data() + name.size() || j < 1 || name[1] == '0') return -1;
    return j;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

}  // namespace

Sample load_csv(const std::string& path, const CsvColumns& columns, std::vector<std::string>* warnings) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open input file '" + path + "'");
    }
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        header = split(t, ',');
        break;
    }
    if (header.empty()) {
        throw DataError("input file '" + path + "' is empty");
    }

    const std::string y_name = lower(columns.y);
    const std::string w_name = lower(columns.w);
    int y_col = -1;
    int w_col = -1;
    std::map<int, int> x_cols;  // covariate number -> file column
    std::vector<std::string> ignored;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string name = lower(header[c]);
        int* target = nullptr;
        if (name == y_name) {
            target = &y_col;
        } else if (name == w_name) {
            target = &w_col;
        }
        if (target) {
            if (*target >= 0) throw DataError("duplicate column '" + header[c] + "' in header");
            *target = static_cast<int>(c);
            continue;
        }
        const int j = covariate_index(name);
        if (j > 0) {
            if (!x_cols.emplace(j, static_cast<int>(c)).second) {
                throw DataError("duplicate column '" + header[c] + "' in header");
            }
            continue;
        }
        ignored.push_back(header[c]);
    }
    if (y_col < 0) throw DataError("missing outcome column '" + columns.y + "'");
    if (w_col < 0) throw DataError("missing treatment column '" + columns.w + "'");
    if (x_cols.empty()) throw DataError("missing covariate columns x1..xk");
    const int k = static_cast<int>(x_cols.size());
    for (int j = 1; j <= k; ++j) {
        if (!x_cols.count(j)) throw DataError("missing covariate column 'x" + std::to_string(j) + "'");
    }
    if (warnings) {
        for (const auto& name : ignored) warnings->push_back("ignoring column '" + name + "'");
    }

    RawData raw;
    auto cell = [&](const std::vector<std::string>& fields, int col, const std::string& name) {
        double v = 0.0;
        if (!parse_double(fields[static_cast<std::size_t>(col)], v)) {
            throw DataError("unparsable value '" + fields[static_cast<std::size_t>(col)] + "' at row " +
                            std::to_string(line_no) + ", column " + name);
        }
        return v;
    };
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto fields = split(t, ',');
        if (fields.size() != header.size()) {
            throw DataError("row " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                            " fields, header has " + std::to_string(header.size()));
        }
        raw.y.push_back(cell(fields, y_col, header[static_cast<std::size_t>(y_col)]));
        raw.w.push_back(cell(fields, w_col, header[static_cast<std::size_t>(w_col)]));
        std::vector<double> x(static_cast<std::size_t>(k));
        for (int j = 1; j <= k; ++j) {
            x[static_cast<std::size_t>(j - 1)] = cell(fields, x_cols[j], header[static_cast<std::size_t>(x_cols[j])]);
        }
        raw.x.push_back(std::move(x));
        raw.source_row.push_back(line_no);
    }
    if (raw.y.empty()) {
        throw DataError("input file '" + path + "' has a header but no data rows");
    }
    return validate_sample(raw);
}

void write_sample_csv(const Sample& sample, const std::string& path) {
    std::string text = "y,w";
    for (std::size_t j = 0; j < sample.n_covariates(); ++j) text += ",x" + std::to_string(j + 1);
    text += '\n';
    char buf[40];
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        std::snprintf(buf, sizeof buf, "%.17g", sample.y[r]);
        text += buf;
        text += sample.w[i] ? ",1" : ",0";
        for (Eigen::Index j = 0; j < sample.x.cols(); ++j) {
            std::snprintf(buf, sizeof buf, ",%.17g", sample.x(r, j));
            text += buf;
        }
        text += '\n';
    }
    write_atomic(path, text);
}

Eigen::MatrixXd load_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open matrix file '" + path + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::vector<double> row;
        for (const auto& f : split(t, ',')) {
            double v = 0.0;
            if (!parse_double(f, v) || !std::isfinite(v)) {
                throw ConfigError("unparsable matrix entry '" + f + "' at row " + std::to_string(line_no) + " of '" +
                                  path + "'");
            }
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    const std::size_t k = rows.size();
    if (k == 0) throw ConfigError("matrix file '" + path + "' is empty");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) {
        if (rows[i].size() != k) throw ConfigError("matrix in '" + path + "' is not square");
        for (std::size_t j = 0; j < k; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return m;
}

Format parse_format(const std::string& name) {
    if (name == "csv") return Format::kCsv;
    if (name == "json-lines" || name == "jsonl") return Format::kJsonLines;
    if (name == "text" || name == "human-text") return Format::kText;
    throw ConfigError("unknown format '" + name + "' (expected csv, json-lines or text)");
}

// ---------------------------------------------------------------------------
// configuration

namespace {

std::string key_of(std::string k) {
    std::replace(k.begin(), k.end(), '_', '-');
    return k;
}

[[noreturn]] void bad(const std::string& key, const std::string& what) {
    throw ConfigError("invalid value for '" + key + "': " + what);
}

double get_double(const std::string& key, const Json& v) {
    if (!v.is_number()) bad(key, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) bad(key, "must be finite");
    return d;
}

long long get_int(const std::string& key, const Json& v) {
    if (v.is_number_integer()) return v.get<long long>();
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 9e15) return static_cast<long long>(d);
    }
    bad(key, "expected an integer");
}

std::uint64_t get_uint(const std::string& key, const Json& v) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    const long long i = get_int(key, v);
    if (i < 0) bad(key, "must be non-negative");
    return static_cast<std::uint64_t>(i);
}

std::string get_string(const std::string& key, const Json& v) {
    if (!v.is_string()) bad(key, "expected a string");
    return v.get<std::string>();
}

bool get_bool(const std::string& key, const Json& v) {
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_string()) {
        const std::string s = lower(v.get<std::string>());
        if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
        if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    }
    bad(key, "expected a boolean");
}

// Scalar, JSON array, or comma-separated string.
std::vector<Json> get_list(const std::string& key, const Json& v) {
    std::vector<Json> out;
    if (v.is_array()) {
        for (const auto& e : v) out.push_back(e);
    } else if (v.is_string()) {
        for (const auto& part : split(v.get<std::string>(), ',')) {
            if (part.empty()) continue;
            double d = 0.0;
            if (parse_double(part, d)) {
                long long i = 0;
                const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), i);
                if (ec == std::errc() && ptr == part.data() + part.size()) {
                    out.emplace_back(i);
                } else {
                    out.emplace_back(d);
                }
            } else {
                out.emplace_back(part);
            }
        }
    } else {
        out.push_back(v);
    }
    if (out.empty()) bad(key, "empty list");
    return out;
}

std::vector<std::string> get_string_list(const std::string& key, const Json& v) {
    std::vector<std::string> out;
    for (const auto& e : get_list(key, v)) {
        if (e.is_string()) {
            out.push_back(e.get<std::string>());
        } else if (e.is_number_integer()) {
            out.push_back(std::to_string(e.get<long long>()));
        } else {
            bad(key, "expected strings");
        }
    }
    return out;
}

std::vector<int> get_int_list(const std::string& key, const Json& v, int min) {
    std::vector<int> out;
    for (const auto& e : get_list(key, v)) {
        const long long i = get_int(key, e);
        if (i < min || i > 1000000000) bad(key, std::to_string(i) + " is out of range (minimum " + std::to_string(min) + ")");
        out.push_back(static_cast<int>(i));
    }
    return out;
}

void one_of(const std::string& key, const std::string& value, std::initializer_list<const char*> allowed) {
    std::string list;
    for (const char* a : allowed) {
        if (value == a) return;
        list += list.empty() ? a : std::string(", ") + a;
    }
    bad(key, "'" + value + "' (expected one of " + list + ")");
}

}  // namespace

void apply_json(RunConfig& c, const Json& object) {
    if (!object.is_object()) throw ConfigError("configuration must be a flat JSON object");
    for (const auto& [raw_key, v] : object.items()) {
        const std::string key = key_of(raw_key);
        if (v.is_null()) continue;
        if (key == "input") {
            c.input = get_string(key, v);
        } else if (key == "y-col") {
            c.columns.y = get_string(key, v);
        } else if (key == "w-col") {
            c.columns.w = get_string(key, v);
        } else if (key == "m") {
            c.m = get_int_list(key, v, 1);
        } else if (key == "metric") {
            c.metric = get_string(key, v);
            one_of(key, c.metric, {"euclid", "mahalanobis"});
        } else if (key == "v-matrix") {
            c.v_matrix = get_string(key, v);
        } else if (key == "exact") {
            c.exact = get_string_list(key, v);
        } else if (key == "bias-adjust") {
            c.bias_adjust = get_string(key, v);
            one_of(key, c.bias_adjust, {"off", "all", "neighbors"});
        } else if (key == "alpha") {
            c.alpha = get_double(key, v);
            if (!(c.alpha > 0.0 && c.alpha < 1.0)) bad(key, "must lie in (0, 1)");
        } else if (key == "c") {
            c.c = get_double(key, v);
        } else if (key == "method") {
            c.methods = get_string_list(key, v);
            for (const auto& m : c.methods) one_of(key, m, {"ai", "sign", "perm"});
        } else if (key == "stat") {
            c.stat = get_string(key, v);
            if (c.stat == "standardized") c.stat = "std";
            one_of(key, c.stat, {"absmean", "std"});
        } else if (key == "seed") {
            c.seed = get_uint(key, v);
        } else if (key == "n-draws") {
            c.n_draws = get_uint(key, v);
            if (c.n_draws < 1) bad(key, "must be at least 1");
        } else if (key == "max-enumeration") {
            c.max_enumeration = get_uint(key, v);
            if (c.max_enumeration < 1) bad(key, "must be at least 1");
        } else if (key == "j-var") {
            const long long j = get_int(key, v);
            if (j < 1 || j > 1000000) bad(key, "must be at least 1");
            c.j_var = static_cast<int>(j);
        } else if (key == "ai-variance") {
            c.ai_variance = get_string(key, v);
            one_of(key, c.ai_variance, {"combined", "floored"});
        } else if (key == "ci-lo") {
            c.ci_lo = get_double(key, v);
        } else if (key == "ci-hi") {
            c.ci_hi = get_double(key, v);
        } else if (key == "grid") {
            const long long g = get_int(key, v);
            if (g < 3 || g > 1000000) bad(key, "must be between 3 and 1000000");
            c.grid = static_cast<int>(g);
        } else if (key == "panel") {
            c.panel = get_string_list(key, v);
            for (const auto& p : c.panel) one_of(key, p, {"A", "B", "C", "D", "E", "ZA", "ZB", "ZC", "SEL"});
        } else if (key == "n1") {
            c.n1 = get_int_list(key, v, 2);
        } else if (key == "n0") {
            const long long n = get_int(key, v);
            if (n < 1 || n > 100000000) bad(key, "must be at least 1");
            c.n0 = static_cast<int>(n);
        } else if (key == "k") {
            const long long k = get_int(key, v);
            if (k < 1 || k > 10000) bad(key, "must be at least 1");
            c.k = static_cast<int>(k);
        } else if (key == "tau") {
            c.tau = get_double(key, v);
        } else if (key == "taus") {
            c.taus.clear();
            for (const auto& e : get_list(key, v)) c.taus.push_back(get_double(key, e));
        } else if (key == "size-adjust") {
            c.size_adjust = get_bool(key, v);
        } else if (key == "reps") {
            const std::uint64_t r = get_uint(key, v);
            if (r < 1) bad(key, "must be at least 1");
            c.reps = static_cast<std::size_t>(r);
        } else if (key == "output") {
            c.output = get_string(key, v);
        } else if (key == "format") {
            const std::string f = get_string(key, v);
            parse_format(f);
            c.format = f;
        } else if (key == "threads") {
            const long long t = get_int(key, v);
            if (t < 0 || t > 4096) bad(key, "must be between 0 and 4096");
            c.threads = static_cast<unsigned>(t);
        } else {
            throw ConfigError("unknown configuration key '" + raw_key + "'");
        }
    }
}

RunConfig parse_config(const std::string& subcommand, const std::string& config_path, const Json& overrides) {
    RunConfig c;
    c.subcommand = subcommand;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw ConfigError("cannot open config file '" + config_path + "'");
        Json file;
        try {
            file = Json::parse(in);
        } catch (const Json::parse_error& e) {
            throw ConfigError("config file '" + config_path + "' is not valid JSON: " + e.what());
        }
        apply_json(c, file);
    }
    apply_json(c, overrides);
    check(c);
    return c;
}

void check(const RunConfig& c) {
    const std::string& s = c.subcommand;
    const bool data = s == "estimate" || s == "test" || s == "ci";
    if (!data && s != "mc" && s != "power" && s != "draw") {
        throw ConfigError("unknown subcommand '" + s + "'");
    }
    if (data && c.input.empty()) throw ConfigError(s + " requires --input");
    if ((data || s == "draw") && c.m.size() != 1) throw ConfigError(s + " takes a single value of --m");
    if (s == "draw" && (c.n1.size() != 1 || c.panel.size() != 1)) {
        throw ConfigError("draw takes a single --panel and --n1");
    }
    if (s == "draw" && c.output.empty()) throw ConfigError("draw requires --output");
    if (s == "ci" && !(c.ci_lo < c.ci_hi)) throw ConfigError("ci requires --ci-lo < --ci-hi");
    if (s == "power" && c.taus.empty()) throw ConfigError("power requires --taus");
}

Json RunConfig::echo() const {
    Json j;
    j["subcommand"] = subcommand;
    if (subcommand == "estimate" || subcommand == "test" || subcommand == "ci") {
        j["input"] = input;
        j["y-col"] = columns.y;
        j["w-col"] = columns.w;
        j["m"] = m.front();
    } else {
        j["panel"] = panel;
        j["n1"] = n1;
        j["n0"] = n0;
        j["k"] = k;
        j["m"] = m;
        j["reps"] = reps;
    }
    j["metric"] = metric;
    j["v-matrix"] = v_matrix;
    j["exact"] = exact;
    j["bias-adjust"] = bias_adjust;
    j["alpha"] = alpha;
    j["c"] = c;
    j["method"] = methods;
    j["stat"] = stat;
    j["seed"] = seed;
    j["n-draws"] = n_draws;
    j["max-enumeration"] = max_enumeration;
    j["j-var"] = j_var;
    j["ai-variance"] = ai_variance;
    if (subcommand == "ci") {
        j["ci-lo"] = ci_lo;
        j["ci-hi"] = ci_hi;
        j["grid"] = grid;
    }
    if (subcommand == "mc") j["tau"] = tau;
    if (subcommand == "draw") j["tau"] = tau;
    if (subcommand == "power") {
        j["taus"] = taus;
        j["size-adjust"] = size_adjust;
    }
    return j;
}

MatchSpec match_spec(const RunConfig& c, const Sample* sample) {
    MatchSpec spec;
    spec.m = c.m.front();
    spec.metric = c.metric == "mahalanobis" ? Metric::kMahalanobis : Metric::kWeightedEuclidean;
    const std::size_t k = sample ? sample->n_covariates() : static_cast<std::size_t>(c.k);
    if (!c.v_matrix.empty()) {
        if (spec.metric == Metric::kMahalanobis) throw ConfigError("--v-matrix cannot be combined with --metric mahalanobis");
        spec.v = load_matrix_csv(c.v_matrix);
        if (static_cast<std::size_t>(spec.v->rows()) != k) {
            throw ConfigError("--v-matrix is " + std::to_string(spec.v->rows()) + "x" + std::to_string(spec.v->rows()) +
                              " but the sample has " + std::to_string(k) + " covariates");
        }
    }
    for (const auto& name : c.exact) {
        const int j = covariate_index(lower(name));
        if (j < 1 || static_cast<std::size_t>(j) > k) {
            throw ConfigError("--exact column '" + name + "' is not one of x1..x" + std::to_string(k));
        }
        spec.exact_columns.push_back(static_cast<std::size_t>(j - 1));
    }
    if (c.bias_adjust == "all") spec.bias_adjust = BiasAdjust::kAllControls;
    if (c.bias_adjust == "neighbors") spec.bias_adjust = BiasAdjust::kNeighborsOnly;
    spec.center = c.c;
    return spec;
}

TestConfig test_config(const RunConfig& c) {
    TestConfig t;
    t.alpha = c.alpha;
    t.max_enumeration = c.max_enumeration;
    t.n_draws = c.n_draws;
    t.stat = c.stat == "std" ? PermStat::kStandardized : PermStat::kAbsMean;
    t.seed = c.seed;
    validate(t);
    return t;
}

// ---------------------------------------------------------------------------
// rendering

namespace {

std::string cell_text(const Json& v) {
    if (v.is_null()) return "";
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
    if (v.is_number_float()) return format_double(v.get<double>());
    return v.dump();
}

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

// JSON numbers cannot hold inf/nan; those become strings.
Json json_cell(const Json& v) {
    if (v.is_number_float() && !std::isfinite(v.get<double>())) return format_double(v.get<double>());
    return v;
}

}  // namespace

std::string render(const Report& report, Format format) {
    std::ostringstream out;
    switch (format) {
        case Format::kCsv: {
            out << "# config: " << report.config.dump() << '\n';
            bool first = true;
            for (const auto& t : report.tables) {
                if (!first) out << '\n';
                first = false;
                if (report.tables.size() > 1) out << "# table: " << t.name << '\n';
                for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << t.columns[i];
                out << '\n';
                for (const auto& row : t.rows) {
                    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_quote(cell_text(row[i]));
                    out << '\n';
                }
            }
            break;
        }
        case Format::kJsonLines: {
            out << Json{{"config", report.config}}.dump() << '\n';
            for (const auto& t : report.tables) {
                for (const auto& row : t.rows) {
                    Json j;
                    j["table"] = t.name;
                    for (std::size_t i = 0; i < row.size(); ++i) j[t.columns[i]] = json_cell(row[i]);
                    out << j.dump() << '\n';
                }
            }
            break;
        }
        case Format::kText: {
            out << "config:\n";
            for (const auto& [k, v] : report.config.items()) out << "  " << k << " = " << cell_text(v) << '\n';
            for (const auto& t : report.tables) {
                out << '\n' << t.name << ":\n";
                std::vector<std::size_t> width(t.columns.size());
                for (std::size_t i = 0; i < t.columns.size(); ++i) width[i] = t.columns[i].size();
                std::vector<std::vector<std::string>> cells;
                for (const auto& row : t.rows) {
                    std::vector<std::string> r;
                    for (std::size_t i = 0; i < row.size(); ++i) {
                        r.push_back(cell_text(row[i]));
                        width[i] = std::max(width[i], r.back().size());
                    }
                    cells.push_back(std::move(r));
                }
                auto line = [&](const std::vector<std::string>& r) {
                    std::string s = " ";
                    for (std::size_t i = 0; i < r.size(); ++i) {
                        s += ' ';
                        s += r[i];
                        if (i + 1 < r.size()) s.append(width[i] - r[i].size() + 1, ' ');
                    }
                    out << s << '\n';
                };
                line(t.columns);
                for (const auto& r : cells) line(r);
            }
            break;
        }
    }
    return out.str();
}

void write_atomic(const std::string& path, const std::string& text) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out << text;
        out.flush();
        if (!out) {
            out.close();
            std::error_code ec;
            fs::remove(tmp, ec);
            throw Error("failed writing '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error("cannot move output into place at '" + path + "'");
    }
}

}  // namespace matchri::io
