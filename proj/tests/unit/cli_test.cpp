#include <gtest/gtest.h>

#include <json.hpp>

#include <sys/wait.h>

#include "test_support.hpp"

#ifdef CALLTIDE_CLI

using calltide::testing::fixture;
using calltide::testing::kFakePlugin;
using calltide::testing::slurp;
using calltide::testing::TempDir;
using nlohmann::json;

namespace {

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

std::string quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
}

class CliTest : public ::testing::Test {
protected:
    Result run(const std::string& args, const std::string& env = "") {
        const std::string cmd = env + " " + quote(CALLTIDE_CLI) + " --db " + quote((dir_ / "c.db").string()) +
                                " --cache " + quote((dir_ / "quotes").string()) + " --reports-dir " +
                                quote((dir_ / "reports").string()) + " " + args + " >" +
                                quote((dir_ / "out.txt").string()) + " 2>" + quote((dir_ / "err.txt").string());
        const int status = std::system(cmd.c_str());
        Result r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = slurp(dir_ / "out.txt");
        r.err = slurp(dir_ / "err.txt");
        return r;
    }

    void SetUp() override { std::filesystem::copy(fixture("quotes"), dir_ / "quotes"); }

    static std::string error_kind(const Result& r) {
        const auto j = json::parse(r.err, nullptr, false);
        if (j.is_discarded() || !j.contains("error")) return "<unparsable: " + r.err + ">";
        return j.at("error").get<std::string>();
    }

    void through_split() {
        ASSERT_EQ(run("ingest " + quote(fixture("corpus").string())).code, 0);
        ASSERT_EQ(run("prices").code, 0);
        ASSERT_EQ(run("label").code, 0);
        ASSERT_EQ(run("split --ratios 0.5,0.25,0.25").code, 0);
    }

    TempDir dir_;
};

}  // namespace

TEST_F(CliTest, EndToEnd) {
    through_split();
    ASSERT_EQ(run("train-baseline").code, 0);
    const auto p = run("predict");
    ASSERT_EQ(p.code, 0) << p.err;
    const auto e = run("evaluate --format json");
    ASSERT_EQ(e.code, 0) << e.err;
    const auto j = json::parse(e.out);
    EXPECT_EQ(j.at("total").get<int>(), 3);
    EXPECT_GE(j.at("accuracy").get<double>(), 0.0);
    const auto text = run("evaluate");
    EXPECT_NE(text.out.find("weighted avg"), std::string::npos);
}

TEST_F(CliTest, BadThresholdsAreConfigurationErrors) {
    through_split();
    const auto r = run("label --neg 3 --pos -3");
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(error_kind(r), "ConfigurationError");
}

TEST_F(CliTest, BadFlagsAreConfigurationErrors) {
    EXPECT_EQ(run("split --ratios 0.9,0.9,0.1").code, 2);
    EXPECT_EQ(run("predict --strategy sliding").code, 2);
    const auto r = run("evaluate --no-such-flag");
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(error_kind(r), "ConfigurationError");
    EXPECT_FALSE(std::filesystem::exists(dir_ / "c.db"));
}

TEST_F(CliTest, OutOfOrderStageExitsThree) {
    ASSERT_EQ(run("ingest " + quote(fixture("corpus").string())).code, 0);
    const auto r = run("predict");
    EXPECT_EQ(r.code, 3);
    EXPECT_EQ(error_kind(r), "OrderingError");
}

TEST_F(CliTest, UnreachableSourceExitsFour) {
    ASSERT_EQ(run("ingest " + quote(fixture("corpus").string())).code, 0);
    std::filesystem::remove_all(dir_ / "quotes");
    const auto r = run("prices", "CALLTIDE_MD_URL=http://127.0.0.1:1/query CALLTIDE_MD_KEY=x");
    EXPECT_EQ(r.code, 4);
    EXPECT_EQ(error_kind(r), "SourceUnavailable");
}

TEST_F(CliTest, PluginFailureExitsFive) {
    through_split();
    const auto r = run("predict --classifier " + quote(kFakePlugin.string()) + " --plugin-arg " +
                       quote(fixture("plugin/crash.script").string()));
    EXPECT_EQ(r.code, 5);
    EXPECT_EQ(error_kind(r), "PluginCrashed");
    EXPECT_NE(r.err.find("model exploded"), std::string::npos);
}

TEST_F(CliTest, ExportJsonl) {
    through_split();
    const auto r = run("export --form preprocessed");
    ASSERT_EQ(r.code, 0) << r.err;
    std::size_t lines = 0;
    for (char c : r.out) lines += c == '\n';
    EXPECT_EQ(lines, 11u);
}

#endif
