#include "support.hpp"

#include "vudlmp/scenario.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace vudlmp;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string line; std::getline(ss, line);) out.push_back(line);
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("vudlmp_test_" + std::to_string(test::seed()) + "_" + name);
  fs::remove_all(p);
  return p;
}

UnbalanceConfig soft_base(const NetworkSpec& net) {
  UnbalanceConfig c = net.unbalance;
  c.mode = UnbalanceMode::kSoft;
  return c;
}

}  // namespace

TEST_SUITE("scenario") {
  TEST_CASE("summary has the fixed column set") {
    const NetworkSpec net = test::simple5();
    const ScenarioResult r = run_scenario(net, net.unbalance, {}, "base", false);
    REQUIRE(r.ok);
    const fs::path dir = scratch("summary");
    write_outputs(dir, net, {r}, ReportToggles{true, false, true}, true);
    const auto rows = lines_of(slurp(dir / "summary.csv"));
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == "case_id,total_gen_cost_eur,total_losses_kw,highest_vuf_pct,vuf_bus,status,wall_ms");
    CHECK(rows[1].rfind("base,", 0) == 0);
    CHECK(rows[1].find(",4,success,") != std::string::npos);
    CHECK(r.highest_vuf_pct > 1.0);
    CHECK(r.total_losses_kw > 0.0);
    CHECK(lines_of(slurp(dir / "dlmp_active.csv")).size() == 1 + 3 * net.num_buses());
    CHECK(fs::exists(dir / "dlmp_reactive.csv"));
    fs::remove_all(dir);
  }

  TEST_CASE("plot data keeps empty components") {
    const NetworkSpec net = test::simple5();
    const ScenarioResult r = run_scenario(net, net.unbalance, {}, "none", false);
    REQUIRE(r.ok);
    const fs::path dir = scratch("plot");
    emit_plot_data(dir, net, r);
    for (const char* name : {"plot_active.csv", "plot_reactive.csv"}) {
      const auto rows = lines_of(slurp(dir / name));
      CHECK(rows[0] == "bus,phase,component,value");
      CHECK(rows.size() == 1 + 6 * 3 * net.num_buses());
      int unbalance_zero = 0;
      for (const auto& row : rows)
        if (row.find(",unbalance,0") != std::string::npos) ++unbalance_zero;
      CHECK(unbalance_zero == static_cast<int>(3 * net.num_buses()));
    }
    fs::remove_all(dir);
  }

  TEST_CASE("soft sweep is monotone") {
    const NetworkSpec net = test::simple5();
    const std::vector<double> weights = {0.0, 1.0, 1.5, 3.0};
    const auto results = run_sweep(net, soft_base(net), SweepParameter::kPenalty, weights, {}, "s5", 2, false);
    REQUIRE(results.size() == 4);
    for (std::size_t i = 0; i < results.size(); ++i) {
      REQUIRE(results[i].ok);
      CHECK(results[i].case_id == "s5_penalty=" + format_number(weights[i]));
      if (i == 0) continue;
      CHECK(results[i].highest_vuf_pct <= results[i - 1].highest_vuf_pct + 1e-9);
      CHECK(results[i].total_gen_cost_eur >= results[i - 1].total_gen_cost_eur - 1e-9);
    }
    CHECK(results.back().total_losses_kw <= results.front().total_losses_kw);
  }

  TEST_CASE("one failed run does not stop a sweep") {
    const NetworkSpec net = test::simple5();
    UnbalanceConfig base = net.unbalance;
    base.mode = UnbalanceMode::kHard;
    const auto results = run_sweep(net, base, SweepParameter::kLimit, {0.01, 2.0}, {}, "h", 2, false);
    REQUIRE(results.size() == 2);
    CHECK_FALSE(results[0].ok);
    CHECK(results[0].status() == "infeasible-or-nonconverged");
    CHECK(results[1].ok);
    const fs::path dir = scratch("failed");
    write_outputs(dir, net, results, {}, false);
    const auto rows = lines_of(slurp(dir / "summary.csv"));
    REQUIRE(rows.size() == 3);
    CHECK(rows[1].find("infeasible-or-nonconverged") != std::string::npos);
    fs::remove_all(dir);
  }

  TEST_CASE("parallel sweeps write identical bytes") {
    const NetworkSpec net = test::simple5();
    const std::vector<double> weights = {0.0, 1.5, 3.0};
    const fs::path a = scratch("serial"), b = scratch("parallel");
    write_outputs(a, net, run_sweep(net, soft_base(net), SweepParameter::kPenalty, weights, {}, "d", 1, true), {}, false);
    write_outputs(b, net, run_sweep(net, soft_base(net), SweepParameter::kPenalty, weights, {}, "d", 3, true), {}, false);
    int compared = 0;
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
      if (!entry.is_regular_file()) continue;
      const fs::path rel = fs::relative(entry.path(), a);
      CHECK(slurp(entry.path()) == slurp(b / rel));
      ++compared;
    }
    CHECK(compared >= 6);
    const auto summary = lines_of(slurp(a / "summary.csv"));
    CHECK(summary[1].back() == ',');  // wall_ms left empty
    fs::remove_all(a);
    fs::remove_all(b);
  }

  TEST_CASE("scenario documents") {
    const ScenarioConfig cfg = load_scenario_config(test::data_path("scenarios/simple5_soft_sweep.json"));
    CHECK(cfg.sweep == SweepParameter::kPenalty);
    CHECK(cfg.sweep_values == std::vector<double>{0, 1, 1.5, 3});
    REQUIRE(cfg.unbalance);
    CHECK(cfg.unbalance->mode == UnbalanceMode::kSoft);
    CHECK(fs::exists(cfg.network));
    CHECK_NOTHROW(validate(cfg));

    ScenarioConfig empty = cfg;
    empty.sweep_values.clear();
    CHECK_THROWS_AS(validate(empty), ValidationError);
    ScenarioConfig negative = cfg;
    negative.sweep_values = {1.0, -1.0};
    CHECK_THROWS_AS(validate(negative), ValidationError);
    CHECK_THROWS_AS(run_sweep(test::simple5(), soft_base(test::simple5()), SweepParameter::kPenalty, {}, {}, "x", 1,
                              false),
                    ValidationError);
    CHECK_THROWS_AS(parse_scenario_config("{\"case_id\": \"x\"}"), ParseError);
    CHECK_THROWS_AS(parse_scenario_config("{\"network\": \"a\", \"sweep\": {\"parameter\": \"size\", \"values\": []}}"),
                    ParseError);
  }

  TEST_CASE("number formatting") {
    CHECK(format_number(0.0) == "0");
    CHECK(format_number(-0.0) == "0");
    CHECK(format_number(1.5) == "1.5");
    CHECK(format_number(55.20360001) == "55.20360001");
  }
}
