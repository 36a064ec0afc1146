#include <gtest/gtest.h>

#include <sstream>
#include <thread>

#include "cli.hpp"
#include "fspm_bridge/io.hpp"
#include "fspm_bridge/net.hpp"
#include "fspm_bridge/session.hpp"
#include "fspm_bridge/toy_models.hpp"
#include "fspm_bridge/xeg.hpp"

namespace fspm_bridge {
namespace {

namespace fs = std::filesystem;
const fs::path kConfig = FSPM_BRIDGE_CONFIG_DIR;

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("fspm_bridge_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string put(const std::string& name, std::string_view text) {
    write_file(dir_ / name, text);
    return (dir_ / name).string();
  }

  fs::path dir_;
};

TEST_F(CliTest, ConvertRoundTripThroughImportAndInverse) {
  ExchangeGraph source = growth_export(grow(3, 4), false);
  std::string in = put("source.xeg", serialize_xeg(source));
  std::string mid = (dir_ / "mid.xeg").string();
  std::string back = (dir_ / "back.xeg").string();
  ASSERT_EQ(cli({"convert", in, "-p", (kConfig / "import.pipeline.xml").string(), "-o", mid}).code, 0);
  EXPECT_GT(parse_xeg(read_file(mid)).node_count(), source.node_count());
  ASSERT_EQ(cli({"convert", mid, "-p", (kConfig / "inverse.pipeline.xml").string(), "-o", back}).code, 0);
  EXPECT_EQ(cli({"diff", in, back, "--tol", "1e-9"}).code, 0);
}

TEST_F(CliTest, ConvertWithoutPipelineNormalises) {
  std::string in = put("g.xeg", R"(<graph root="1" version="1.0"><node id="1" name="r" type="N" scale="0"/></graph>)");
  Outcome o = cli({"convert", in});
  EXPECT_EQ(o.code, 0);
  EXPECT_EQ(o.out, "<graph root=\"1\" version=\"1.0\">\n  <node id=\"1\" name=\"r\" type=\"N\" scale=\"0\"/>\n</graph>\n");
}

TEST_F(CliTest, ValidateReportsViolations) {
  std::string good = put("good.xeg", serialize_xeg(growth_export(grow(1, 2), false)));
  EXPECT_EQ(cli({"validate", good}).code, 0);
  std::string bad = put("bad.xeg", R"(<graph root="1" version="1.0">
  <node id="1" name="r" type="N" scale="0"/><node id="2" name="x" type="N" scale="0"/></graph>)");
  Outcome o = cli({"validate", bad});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.out.find("unreachable"), std::string::npos) << o.out;
  std::string skipped = put("skip.xeg", R"(<graph root="1" version="1.0">
  <node id="1" name="r" type="N" scale="0"/><node id="2" name="x" type="N" scale="2"/>
  <edge src_id="1" dst_id="2" type="decomposition"/></graph>)");
  Outcome scale = cli({"validate", skipped});
  EXPECT_EQ(scale.code, 1);
  EXPECT_NE(scale.out.find("scale_violation"), std::string::npos) << scale.out;
  std::string broken = put("broken.xeg", "<graph");
  EXPECT_EQ(cli({"validate", broken}).code, 3);
  std::string extra = put("extra.xeg", R"(<graph root="1" version="1.0"><node id="1" name="r" type="N" scale="0" hue="1"/></graph>)");
  EXPECT_EQ(cli({"validate", extra}).code, 3);
  EXPECT_EQ(cli({"validate", extra, "--lenient"}).code, 0);
}

TEST_F(CliTest, DiffDetectsChanges) {
  ExchangeGraph g = growth_export(grow(1, 3), false);
  std::string a = put("a.xeg", serialize_xeg(g));
  g.mutable_node(NodeId{2}).properties["color"] = std::string("green");
  std::string b = put("b.xeg", serialize_xeg(g));
  Outcome o = cli({"diff", a, b});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.out.find("color"), std::string::npos) << o.out;
  EXPECT_EQ(cli({"diff", a, a}).code, 0);
}

TEST_F(CliTest, UsageAndInputErrors) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"fly"}).code, 2);
  EXPECT_EQ(cli({"diff", "only-one"}).code, 2);
  EXPECT_EQ(cli({"serve", "--port", "5", "--model", "ocean"}).code, 2);
  EXPECT_EQ(cli({"validate", (dir_ / "missing.xeg").string()}).code, 3);
  std::string in = put("g.xeg", serialize_xeg(growth_export(grow(1, 1), false)));
  EXPECT_EQ(cli({"convert", in, "-p", put("p.xml", "<pipeline><stage kind=\"nope\"/></pipeline>")}).code, 3);
  // A pipeline that fails while running is a runtime error.
  std::string unmapped = put("u.xeg", R"(<graph root="1" version="1.0">
  <node id="1" name="r" type="N" scale="0"/><node id="2" name="p" type="N" scale="1"/>
  <edge src_id="1" dst_id="2" type="weird"/></graph>)");
  Outcome o = cli({"convert", unmapped, "-p", (kConfig / "import.pipeline.xml").string()});
  EXPECT_EQ(o.code, 4);
  EXPECT_NE(o.err.find("weird"), std::string::npos) << o.err;
}

TEST_F(CliTest, RunDrivesTheRosterAndWritesAReport) {
  Listener water_listener = Listener::bind(0);
  Listener status_listener = Listener::bind(0);
  TargetModel water = water_model({});
  TargetModel status = status_model();
  std::thread water_server([&] { server_run(water_listener, water, {kDefaultFrameCap, 1, nullptr}); });
  std::thread status_server([&] { server_run(status_listener, status, {kDefaultFrameCap, 1, nullptr}); });
  std::string roster = put("roster.xml", "<roster>\n  <server port=\"" + std::to_string(water_listener.port()) +
                                             "\" mode=\"retroactive\" export=\"" +
                                             (kConfig / "water_export.pipeline.xml").string() + "\" import=\"" +
                                             (kConfig / "water_import.pipeline.xml").string() + "\"/>\n" +
                                             "  <server port=\"" + std::to_string(status_listener.port()) +
                                             "\" mode=\"non_retroactive\" export=\"" +
                                             (kConfig / "status_export.pipeline.xml").string() + "\"/>\n" +
                                             "  <env><var name=\"temperature\" type=\"double\" value=\"20\"/></env>\n</roster>\n");
  std::string report = (dir_ / "report.tsv").string();
  std::string final_graph = (dir_ / "final.xeg").string();
  Outcome o = cli({"run", roster, "--steps", "4", "--seed", "2", "--report", report, "-o", final_graph});
  water_server.join();
  status_server.join();
  ASSERT_EQ(o.code, 0) << o.err;
  std::string tsv = read_file(report);
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 1 + 4 * 2) << tsv;
  ExchangeGraph g = parse_xeg(read_file(final_graph));
  for (const auto& n : g.nodes()) {
    if (n.type_name == "Metamer") {
      EXPECT_EQ(std::get<std::string>(n.properties.at("color")), "green");
    }
  }
}

TEST_F(CliTest, DemoRoundTripPasses) {
  Outcome o = cli({"demo-roundtrip", "--steps", "3", "--server-exe", FSPM_BRIDGE_CLI_EXE, "--config-dir",
                   kConfig.string(), "--out-dir", dir_.string()});
  EXPECT_EQ(o.code, 0) << o.out << o.err;
  EXPECT_NE(o.out.find("PASS"), std::string::npos) << o.out;
  EXPECT_TRUE(fs::exists(dir_ / "final.xeg"));
}

TEST_F(CliTest, DemoWithoutServerIsARuntimeError) {
  std::uint16_t port = 0;
  {
    Listener l = Listener::bind(0);
    port = l.port();
  }
  Outcome o = cli({"demo-roundtrip", "--client-port", std::to_string(port), "--server-exe", FSPM_BRIDGE_CLI_EXE,
                   "--config-dir", kConfig.string(),
                   "--timeout-s", "2"});
  EXPECT_EQ(o.code, 4) << o.out << o.err;
}

}  // namespace
}  // namespace fspm_bridge
