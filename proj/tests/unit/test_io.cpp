#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "matchri/error.h"
#include "matchri/io.h"
#include "matchri/simulation.h"

using namespace matchri;
namespace fs = std::filesystem;

namespace {

class TempDir {
  public:
    TempDir() {
        path_ = fs::temp_directory_path() / ("matchri_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    std::string file(const std::string& name, const std::string& text = {}) const {
        const fs::path p = path_ / name;
        if (!text.empty()) std::ofstream(p) << text;
        return p.string();
    }

  private:
    fs::path path_;
    static inline int counter_ = 0;
};

std::string read(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kToy = "y,w,x1\n1,1,0\n3,1,10\n0,0,0.1\n0,0,10.1\n0,0,50\n";

io::RunConfig config_for(const std::string& sub, io::Json flags) {
    return io::parse_config(sub, "", flags);
}

const io::Table& table(const io::Report& r, const std::string& name) {
    for (const auto& t : r.tables) {
        if (t.name == name) return t;
    }
    throw std::runtime_error("no table " + name);
}

io::Json cell(const io::Table& t, std::size_t row, const std::string& column) {
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
        if (t.columns[i] == column) return t.rows[row][i];
    }
    throw std::runtime_error("no column " + column);
}

}  // namespace

TEST(LoadCsv, Minimal) {
    TempDir d;
    const Sample s = io::load_csv(d.file("a.csv", "y,w,x1\n1,1,0.5\n0,0,0.4\n"));
    EXPECT_EQ(s.n_treated(), 1u);
    EXPECT_EQ(s.n_controls(), 1u);
    EXPECT_EQ(s.x(0, 0), 0.5);
}

TEST(LoadCsv, HeaderHandling) {
    TempDir d;
    std::vector<std::string> warnings;
    const Sample s = io::load_csv(d.file("a.csv", "X2,note,W,Y,x1\n7,a,1,2.5,0.5\n8,b,0,1.5,0.4\n"), {}, &warnings);
    EXPECT_EQ(s.y[0], 2.5);
    EXPECT_EQ(s.x(0, 0), 0.5);
    EXPECT_EQ(s.x(0, 1), 7.0);
    ASSERT_EQ(warnings.size(), 1u);
    EXPECT_NE(warnings[0].find("note"), std::string::npos);

    const Sample o = io::load_csv(d.file("b.csv", "score,treat,x1\n1,1,0\n2,0,1\n"), {"score", "treat"});
    EXPECT_EQ(o.y[1], 2.0);
}

TEST(LoadCsv, Errors) {
    TempDir d;
    try {
        io::load_csv(d.file("nw.csv", "y,x1\n1,0.5\n"));
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("treatment column 'w'"), std::string::npos);
    }
    try {
        io::load_csv(d.file("bw.csv", "y,w,x1\n1,2,0.5\n0,0,1\n"));
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("non-binary treatment"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
    }
    try {
        io::load_csv(d.file("nn.csv", "y,w,x1\n1,1,0.5\n0,0,abc\n"));
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("row 3, column x1"), std::string::npos);
    }
    EXPECT_THROW(io::load_csv(d.file("e.csv", "\n")), DataError);
    EXPECT_THROW(io::load_csv(d.file("h.csv", "y,w,x1\n")), DataError);
    EXPECT_THROW(io::load_csv(d.file("gap.csv", "y,w,x2\n1,1,0\n0,0,1\n")), DataError);
    EXPECT_THROW(io::load_csv(d.file("rag.csv", "y,w,x1\n1,1\n0,0,1\n")), DataError);
    EXPECT_THROW(io::load_csv(d.file("missing-file.csv")), DataError);
}

TEST(LoadCsv, RoundTrip) {
    TempDir d;
    DgpSpec dgp = panel("B", 7, 30);
    dgp.k = 2;
    const Sample s = draw_sample(dgp, 42);
    const std::string path = d.file("rt.csv");
    io::write_sample_csv(s, path);
    const Sample back = io::load_csv(path);
    EXPECT_EQ(back.y, s.y);
    EXPECT_EQ(back.x, s.x);
    EXPECT_EQ(back.w, s.w);
}

TEST(ParseConfig, Defaults) {
    const io::RunConfig c = config_for("mc", io::Json::object());
    EXPECT_EQ(c.m, std::vector<int>{1});
    EXPECT_EQ(c.metric, "euclid");
    EXPECT_DOUBLE_EQ(c.alpha, 0.10);
    EXPECT_EQ(c.c, 0.0);
    EXPECT_EQ(c.seed, 0u);
    EXPECT_EQ(c.reps, 2000u);
    const io::Json echo = c.echo();
    EXPECT_EQ(echo["alpha"], 0.10);
    EXPECT_FALSE(echo.contains("threads"));
    EXPECT_FALSE(echo.contains("output"));
}

TEST(ParseConfig, FlagsOverrideFile) {
    TempDir d;
    const std::string cfg = d.file("c.json", R"({"alpha": 0.10, "m": 4, "n_draws": 99})");
    const io::RunConfig c = io::parse_config("mc", cfg, {{"alpha", 0.05}});
    EXPECT_DOUBLE_EQ(c.alpha, 0.05);
    EXPECT_EQ(c.m, std::vector<int>{4});
    EXPECT_EQ(c.n_draws, 99u);
}

TEST(ParseConfig, RangeAndKeyErrors) {
    EXPECT_THROW(config_for("mc", {{"m", 0}}), ConfigError);
    EXPECT_THROW(config_for("mc", {{"alpha", 1.5}}), ConfigError);
    EXPECT_THROW(config_for("mc", {{"bogus", 1}}), ConfigError);
    EXPECT_THROW(config_for("mc", {{"metric", "cosine"}}), ConfigError);
    EXPECT_THROW(config_for("mc", {{"reps", 0}}), ConfigError);
    EXPECT_THROW(config_for("mc", {{"seed", -1}}), ConfigError);
    EXPECT_THROW(config_for("estimate", io::Json::object()), ConfigError);
    EXPECT_THROW(config_for("estimate", {{"input", "a.csv"}, {"m", "1,2"}}), ConfigError);
    EXPECT_THROW(config_for("ci", {{"input", "a.csv"}, {"ci-lo", 2}, {"ci-hi", 1}}), ConfigError);
    TempDir d;
    EXPECT_THROW(io::parse_config("mc", d.file("bad.json", "{oops"), io::Json::object()), ConfigError);
    EXPECT_THROW(io::parse_config("mc", d.file("arr.json", "[1]"), io::Json::object()), ConfigError);
}

TEST(ParseConfig, ListsFromText) {
    const io::RunConfig c = config_for("mc", {{"m", "1,4,10"}, {"n1", "5,50"}, {"method", "sign,perm"}});
    EXPECT_EQ(c.m, (std::vector<int>{1, 4, 10}));
    EXPECT_EQ(c.n1, (std::vector<int>{5, 50}));
    EXPECT_EQ(c.methods, (std::vector<std::string>{"sign", "perm"}));
}

TEST(Commands, TestOnToyData) {
    TempDir d;
    const std::string input = d.file("toy.csv", kToy);
    const io::Report r = io::cmd_test(config_for("test", {{"input", input}}));
    const io::Table& t = table(r, "tests");
    ASSERT_EQ(t.rows.size(), 3u);
    EXPECT_EQ(cell(t, 1, "method"), "sign");
    EXPECT_EQ(cell(t, 1, "p_value").get<double>(), 0.5);
    EXPECT_EQ(cell(t, 1, "group_size").get<double>(), 4.0);
    EXPECT_EQ(cell(t, 1, "tau_hat").get<double>(), 2.0);
    EXPECT_EQ(r.config["input"], input);

    const io::Report perm = io::cmd_test(config_for("test", {{"input", input}, {"method", "perm"}, {"stat", "std"}}));
    EXPECT_EQ(cell(table(perm, "tests"), 0, "p_value").get<double>(), 0.5);
}

TEST(Commands, DefaultRunReportsUnavailableMethod) {
    TempDir d;
    const std::string input = d.file("flat.csv", "y,w,x1\n1,1,0\n1,1,10\n1,0,0.1\n1,0,10.1\n1,0,50\n");
    const io::Report r = io::cmd_test(config_for("test", {{"input", input}}));
    const io::Table& t = table(r, "tests");
    EXPECT_TRUE(cell(t, 0, "p_value").is_null());
    EXPECT_NE(cell(t, 0, "note").get<std::string>().find("unavailable"), std::string::npos);
    EXPECT_THROW(io::cmd_test(config_for("test", {{"input", input}, {"method", "ai"}})), NumericError);
}

TEST(Commands, EstimateUnits) {
    TempDir d;
    const io::Report r = io::cmd_estimate(config_for("estimate", {{"input", d.file("toy.csv", kToy)}}));
    EXPECT_EQ(cell(table(r, "estimate"), 0, "tau_hat").get<double>(), 2.0);
    const io::Table& u = table(r, "units");
    ASSERT_EQ(u.rows.size(), 2u);
    EXPECT_EQ(cell(u, 0, "neighbors"), "2");
    EXPECT_EQ(cell(u, 1, "neighbors"), "3");
}

TEST(Commands, CiOnToyIsRangeCensored) {
    TempDir d;
    const io::Report r = io::cmd_ci(config_for("ci", {{"input", d.file("toy.csv", kToy)}}));
    const io::Table& t = table(r, "ci");
    EXPECT_TRUE(cell(t, 0, "range_censored").get<bool>());
    EXPECT_EQ(cell(t, 0, "lower").get<double>(), -10.0);
}

TEST(Commands, McGridAndDegenerateSe) {
    const io::Report r =
        io::cmd_mc(config_for("mc", {{"reps", 1}, {"n0", 60}, {"m", "1,4,10"}, {"n1", "5,10,25,50"}}));
    const io::Table& t = table(r, "mc");
    EXPECT_EQ(t.rows.size(), 24u);  // 12 cells x (ai, sign)
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const double rate = cell(t, i, "rate").get<double>();
        EXPECT_TRUE(rate == 0.0 || rate == 1.0);
        EXPECT_EQ(cell(t, i, "se").get<double>(), 0.0);
        EXPECT_EQ(cell(t, i, "note"), "degenerate se");
    }
    EXPECT_EQ(t.columns, (std::vector<std::string>{"panel", "n1", "n0", "m", "tau", "test", "rate", "se",
                                                   "rejections", "reps", "seed", "note"}));
}

TEST(Commands, McOutputIsDeterministicAcrossThreads) {
    io::Json flags{{"reps", 40}, {"n0", 100}, {"n1", "5,10"}, {"m", "1,2"}, {"seed", 9}, {"method", "ai,sign,perm"}};
    flags["threads"] = 1;
    const std::string a = io::render(io::cmd_mc(config_for("mc", flags)), io::Format::kCsv);
    flags["threads"] = 3;
    const std::string b = io::render(io::cmd_mc(config_for("mc", flags)), io::Format::kCsv);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.rfind("# config: ", 0), 0u);
}

TEST(Commands, PowerHasCriticalValue) {
    const io::Report r = io::cmd_power(config_for("power", {{"reps", 50}, {"n0", 80}, {"n1", 10}, {"taus", "0,1"}}));
    const io::Table& t = table(r, "power");
    bool found = false;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        if (cell(t, i, "test") == "ai_size_adjusted") {
            EXPECT_TRUE(cell(t, i, "critical_value").is_number());
            found = true;
        }
    }
    EXPECT_TRUE(found);
}

TEST(Render, FormatsCarryConfig) {
    io::Report r;
    r.config = {{"seed", 3}};
    r.tables.push_back({"t", {"a", "b", "c"}, {{1, 0.1, "x,y"}, {2, std::numeric_limits<double>::infinity(), nullptr}}});
    const std::string csv = io::render(r, io::Format::kCsv);
    EXPECT_EQ(csv, "# config: {\"seed\":3}\na,b,c\n1,0.1,\"x,y\"\n2,inf,\n");
    std::istringstream jl(io::render(r, io::Format::kJsonLines));
    std::string line;
    std::vector<io::Json> lines;
    while (std::getline(jl, line)) lines.push_back(io::Json::parse(line));
    ASSERT_EQ(lines.size(), 3u);
    EXPECT_EQ(lines[0]["config"]["seed"], 3);
    EXPECT_EQ(lines[2]["b"], "inf");
    EXPECT_NE(io::render(r, io::Format::kText).find("seed = 3"), std::string::npos);
    EXPECT_THROW(io::parse_format("xml"), ConfigError);
}

TEST(WriteAtomic, NoPartialFiles) {
    TempDir d;
    const std::string path = d.file("out.csv");
    io::write_atomic(path, "hello\n");
    EXPECT_EQ(read(path), "hello\n");
    EXPECT_FALSE(fs::exists(path + ".tmp"));
    EXPECT_THROW(io::write_atomic(d.file("nodir/out.csv"), "x"), Error);
    EXPECT_FALSE(fs::exists(d.file("nodir/out.csv")));
}

#ifdef MATCHRI_CLI_PATH
namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(MATCHRI_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
    TempDir d;
    const std::string toy = d.file("toy.csv", kToy);
    EXPECT_EQ(run_cli("test --input " + toy), 0);
    EXPECT_EQ(run_cli("estimate --input " + toy + " --m 0"), 2);
    EXPECT_EQ(run_cli("estimate --input " + toy + " --nonsense 1"), 2);
    EXPECT_EQ(run_cli("frobnicate"), 2);
    EXPECT_EQ(run_cli("estimate --input " + d.file("bad.csv", "y,w,x1\n1,2,0.5\n0,0,1\n")), 3);
    EXPECT_EQ(run_cli("estimate --input " + d.file("absent.csv")), 3);
    const std::string flat = d.file("flat.csv", "y,w,x1\n1,1,0\n1,1,10\n1,0,0.1\n1,0,10.1\n1,0,50\n");
    EXPECT_EQ(run_cli("test --method ai --input " + flat), 4);
}

TEST(Cli, OutputFileAndConfig) {
    TempDir d;
    const std::string toy = d.file("toy.csv", kToy);
    const std::string cfg = d.file("c.json", "{\"method\": \"sign\", \"alpha\": 0.2}");
    const std::string out = d.file("out.jsonl");
    ASSERT_EQ(run_cli("test --config " + cfg + " --alpha 0.3 --input " + toy + " --format json-lines --output " + out), 0);
    std::istringstream in(read(out));
    std::string line;
    std::getline(in, line);
    const io::Json header = io::Json::parse(line);
    EXPECT_DOUBLE_EQ(header["config"]["alpha"].get<double>(), 0.3);
    std::getline(in, line);
    EXPECT_EQ(io::Json::parse(line)["p_value"], 0.5);

    const std::string failed = d.file("failed.csv");
    EXPECT_EQ(run_cli("test --method ai --input " + d.file("flat.csv", "y,w,x1\n1,1,0\n1,1,9\n1,0,0\n1,0,9\n") +
                      " --output " + failed),
              4);
    EXPECT_FALSE(fs::exists(failed));
}

TEST(Cli, DrawRoundTrip) {
    TempDir d;
    const std::string out = d.file("draw.csv");
    ASSERT_EQ(run_cli("draw --panel D --n1 6 --n0 25 --seed 5 --output " + out), 0);
    const Sample s = io::load_csv(out);
    const Sample ref = draw_sample(panel("D", 6, 25), 5);
    EXPECT_EQ(s.y, ref.y);
    EXPECT_EQ(s.x, ref.x);
}
#endif
