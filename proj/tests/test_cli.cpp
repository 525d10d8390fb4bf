#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunResult run(const std::string& args) {
    static int counter = 0;
    const auto dir = std::filesystem::temp_directory_path();
    const auto out_path = dir / ("peq_out_" + std::to_string(++counter) + ".txt");
    const auto err_path = dir / ("peq_err_" + std::to_string(counter) + ".txt");

    const std::string cmd = std::string("\"") + PEQ_BIN + "\" " + args + " > \"" +
                            out_path.string() + "\" 2> \"" + err_path.string() + "\"";
    const int status = std::system(cmd.c_str());

    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    std::filesystem::remove(out_path);
    std::filesystem::remove(err_path);
    return r;
}

std::string scene(const std::string& name) {
    return std::string("\"") + PEQ_SCENES + "/" + name + "\"";
}

bool contains(const std::string& haystack, const std::string& needle) {
    return haystack.find(needle) != std::string::npos;
}

} // namespace

TEST_CASE("eval prints one value per scene point and exits cleanly") {
    for (const char* name : {"flat_order2.json", "curved_order3.json", "dim3_order1.json"}) {
        const RunResult r = run("eval --scene " + scene(name));
        INFO(name << "\nstdout:\n" << r.out << "stderr:\n" << r.err);
        CHECK(r.exit_code == 0);
        CHECK(r.err.empty());
    }

    const RunResult r = run("eval --scene " + scene("flat_order2.json"));
    int lines = 0;
    std::istringstream ss(r.out);
    std::string line;
    while (std::getline(ss, line)) {
        ++lines;
        CHECK(line.rfind("Q(", 0) == 0);
        const auto eq = line.find(" = ");
        REQUIRE(eq != std::string::npos);
        CHECK(std::stod(line.substr(eq + 3)) == Catch::Approx(std::stod(line.substr(eq + 3))));
    }
    CHECK(lines == 3);
    // the flat scene's first value is pinned against an independent evaluation
    CHECK(contains(r.out, "0.990625"));
}

TEST_CASE("a critical weight shift is refused with exit code two naming the terms") {
    const RunResult r = run("eval --scene " + scene("critical_delta.json"));
    CHECK(r.exit_code == 2);
    CHECK(contains(r.err, "critical weight shift"));
    CHECK(contains(r.err, "(2,1)"));
    CHECK(contains(r.err, "(3,3)"));
    CHECK(r.out.empty());
}

TEST_CASE("invariance under projective shifts passes on a curved scene") {
    const RunResult r = run("invariance --scene " + scene("curved_order3.json") +
                            " --seed 11 --alpha 3 --tolerance 1e-7");
    INFO(r.out << r.err);
    CHECK(r.exit_code == 0);
    CHECK(contains(r.out, "max relative deviation"));

    const RunResult r2 = run("invariance --scene " + scene("dim3_order1.json") +
                             " --seed 5 --alpha 2 --points 3");
    INFO(r2.out << r2.err);
    CHECK(r2.exit_code == 0);
}

TEST_CASE("flat-compare matches the direct evaluator and rejects curved scenes") {
    const RunResult ok = run("flat-compare --scene " + scene("flat_order2.json"));
    INFO(ok.out << ok.err);
    CHECK(ok.exit_code == 0);
    CHECK(contains(ok.out, "max relative deviation"));

    const RunResult curved = run("flat-compare --scene " + scene("curved_order3.json"));
    CHECK(curved.exit_code == 2);
    CHECK(contains(curved.err, "empty connection"));
}

TEST_CASE("verification failures exit with code one") {
    // An impossible tolerance forces the comparison to report a failure.
    const RunResult r = run("flat-compare --scene " + scene("flat_order2.json") + " --tolerance 1e-300");
    INFO(r.out << r.err);
    CHECK(r.exit_code == 1);
    CHECK(contains(r.out, "FAIL"));
}

TEST_CASE("coeffs prints the exact ladder and audits the recursion") {
    const RunResult r = run("coeffs --m 2 --k 2 --lambda 1/2 --delta 0");
    CHECK(r.exit_code == 0);
    CHECK(contains(r.out, "C[2,1] = 1"));
    CHECK(contains(r.out, "C[2,2] = 3/16"));

    const RunResult audit = run("coeffs --m 3 --k 3 --lambda 1/3 --delta 1/6 --l 5 --side both");
    INFO(audit.out << audit.err);
    CHECK(audit.exit_code == 0);
    CHECK(contains(audit.out, "argument side: recursion matches engine expansion"));
    CHECK(contains(audit.out, "symbol side: recursion matches engine expansion"));

    const RunResult critical = run("coeffs --m 2 --k 2 --lambda 1/2 --delta 5/3");
    CHECK(critical.exit_code == 2);
    CHECK(contains(critical.err, "critical weight shift"));

    const RunResult deep = run("coeffs --m 2 --k 2 --lambda 1/2 --delta 0 --l 7");
    CHECK(deep.exit_code == 2);
    CHECK(contains(deep.err, "through stage 6"));
}

TEST_CASE("bad input is reported as exit code two") {
    const RunResult missing = run("eval --scene /nonexistent/scene.json");
    CHECK(missing.exit_code == 2);
    CHECK(contains(missing.err, "cannot open"));

    const auto bad_path = std::filesystem::temp_directory_path() / "peq_bad_scene.json";
    {
        std::ofstream out(bad_path);
        out << "{ this is not json";
    }
    const RunResult malformed = run("eval --scene \"" + bad_path.string() + "\"");
    std::filesystem::remove(bad_path);
    CHECK(malformed.exit_code == 2);
    CHECK(contains(malformed.err, "invalid JSON"));

    const auto schema_path = std::filesystem::temp_directory_path() / "peq_schema_scene.json";
    {
        std::ofstream out(schema_path);
        out << R"({"chart": {"dim": 2, "coords": ["x", "y"]}, "lambda": "1/2", "mu": "1/3",)"
            << R"( "symbol": {"degree": 1, "components": {"3": "1"}},)"
            << R"( "density": "x", "points": [[0, 0]]})";
    }
    const RunResult schema = run("eval --scene \"" + schema_path.string() + "\"");
    std::filesystem::remove(schema_path);
    CHECK(schema.exit_code == 2);
    CHECK(contains(schema.err, "outside 1..2"));

    const RunResult no_sub = run("");
    CHECK(no_sub.exit_code == 2);

    const RunResult bad_flag = run("eval --scene " + scene("flat_order2.json") + " --bogus");
    CHECK(bad_flag.exit_code == 2);
}

TEST_CASE("help exits zero") {
    const RunResult r = run("--help");
    CHECK(r.exit_code == 0);
    CHECK(contains(r.out, "eval"));
    CHECK(contains(r.out, "invariance"));
}
