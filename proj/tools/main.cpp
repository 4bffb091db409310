// matchri command-line driver.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>
#include <string>

#include "matchri/error.h"
#include "matchri/io.h"

namespace {

using matchri::io::Json;

// Flag values whose text must never be reinterpreted as a number.
const std::set<std::string> kStringKeys = {"input", "y-col", "w-col", "v-matrix", "exact", "output", "panel", "method",
                                           "metric", "bias-adjust", "stat", "format", "ai-variance"};

Json to_json(const std::string& key, const std::string& text) {
    if (kStringKeys.count(key)) return text;
    try {
        Json j = Json::parse(text);
        if (j.is_number() || j.is_boolean()) return j;
    } catch (const Json::parse_error&) {
    }
    return text;
}

struct Flag {
    const char* name;
    const char* help;
};

// Shared across subcommands; any of them may also come from --config.
const Flag kFlags[] = {
    {"input", "input CSV with columns y, w, x1..xk"},
    {"y-col", "outcome column name (default y)"},
    {"w-col", "treatment column name (default w)"},
    {"m", "matches per treated unit; mc/power accept a list"},
    {"metric", "euclid or mahalanobis"},
    {"v-matrix", "CSV file holding the k x k weight matrix"},
    {"exact", "comma-separated covariates matched exactly (e.g. x2,x3)"},
    {"bias-adjust", "off, all or neighbors"},
    {"alpha", "test level"},
    {"c", "null value of the effect"},
    {"method", "ai, sign or perm; comma-separated list allowed"},
    {"stat", "permutation statistic: absmean or std"},
    {"seed", "master seed"},
    {"reps", "Monte Carlo replications"},
    {"n-draws", "random draws when the group is too large to enumerate"},
    {"max-enumeration", "largest group enumerated exactly"},
    {"j-var", "same-group neighbors for the conditional variance"},
    {"ai-variance", "combined or floored"},
    {"ci-lo", "lower end of the confidence interval search range"},
    {"ci-hi", "upper end of the confidence interval search range"},
    {"grid", "grid points of the confidence interval search"},
    {"panel", "simulation design(s): A-E, ZA, ZB, ZC, SEL"},
    {"n1", "treated sample size(s)"},
    {"n0", "control sample size"},
    {"k", "number of covariates in simulated data"},
    {"tau", "treatment effect in simulated data"},
    {"taus", "comma-separated effects for the power curve"},
    {"size-adjust", "size-adjust the asymptotic test (true/false)"},
    {"output", "output file (default stdout)"},
    {"format", "csv, json-lines or text"},
    {"threads", "worker threads (0 = all cores); never changes results"},
};

int exit_code(const std::exception& e) {
    if (dynamic_cast<const matchri::ConfigError*>(&e)) return 2;
    if (dynamic_cast<const matchri::DataError*>(&e)) return 3;
    if (dynamic_cast<const matchri::NumericError*>(&e)) return 4;
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nearest-neighbor matching estimates with randomization and asymptotic inference"};
    app.require_subcommand(1);

    const std::map<std::string, std::string> commands = {
        {"estimate", "matching estimate of the effect on the treated"},
        {"test", "p-values of the requested tests"},
        {"ci", "confidence interval by test inversion"},
        {"mc", "Monte Carlo rejection rates"},
        {"power", "Monte Carlo power curve"},
        {"draw", "write one simulated sample"},
    };
    std::map<std::string, std::string> values;
    std::string config_path;
    std::map<std::string, std::map<std::string, CLI::Option*>> options;
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "flat JSON configuration file; flags override it");
        for (const Flag& f : kFlags) {
            options[name][f.name] = sub->add_option(std::string("--") + f.name, values[f.name], f.help);
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    std::string subcommand;
    for (const auto& [name, help] : commands) {
        if (app.got_subcommand(name)) subcommand = name;
    }

    try {
        Json overrides = Json::object();
        for (const Flag& f : kFlags) {
            if (options[subcommand][f.name]->count() > 0) overrides[f.name] = to_json(f.name, values[f.name]);
        }
        const auto config = matchri::io::parse_config(subcommand, config_path, overrides);
        const std::string format_name = config.format.value_or(
            config.output.empty() && (subcommand == "estimate" || subcommand == "test" || subcommand == "ci") ? "text"
                                                                                                              : "csv");
        const auto format = matchri::io::parse_format(format_name);
        const auto report = matchri::io::run(config);
        for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
        const std::string text = matchri::io::render(report, format);
        if (config.output.empty()) {
            std::cout << text;
        } else {
            matchri::io::write_atomic(config.output, text);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e);
    }
    return 0;
}
