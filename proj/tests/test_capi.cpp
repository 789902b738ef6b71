#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "oed/oed.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct OwnedString {
  char* s = nullptr;
  ~OwnedString() { oed_string_free(s); }
};

struct OwnedLowrank {
  oed_lowrank* lr = nullptr;
  ~OwnedLowrank() { oed_lowrank_free(lr); }
};

fs::path write_config(const std::string& name, const json& cfg) {
  const fs::path path = fs::current_path() / (name + ".json");
  std::ofstream(path) << cfg.dump(2);
  return path;
}

}  // namespace

TEST_CASE("status strings and version") {
  CHECK(std::string(oed_version()).size() > 0);
  CHECK(std::string(oed_status_string(OED_OK)) == "ok");
  CHECK(std::string(oed_status_string(OED_ERR_CAPABILITY)).size() > 0);
  CHECK(std::string(oed_last_error()).empty());
}

TEST_CASE("dense low-rank handle") {
  const double h[9] = {3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0};
  OwnedLowrank lr;
  REQUIRE(oed_lowrank_from_dense(h, 3, 2, 1, 7, &lr.lr) == OED_OK);
  CHECK(oed_lowrank_dim(lr.lr) == 3);
  CHECK(oed_lowrank_rank(lr.lr) == 2);
  double eig[4] = {0, 0, 0, 0};
  CHECK(oed_lowrank_eigenvalues(lr.lr, eig, 4) == OED_OK);
  CHECK(eig[0] == doctest::Approx(3.0));
  CHECK(eig[1] == doctest::Approx(1.0));

  const int64_t first[1] = {0};
  double value = 0.0;
  CHECK(oed_lowrank_eig(lr.lr, first, 1, &value) == OED_OK);
  CHECK(value == doctest::Approx(0.5 * std::log(4.0)));
  CHECK(oed_lowrank_eig(lr.lr, nullptr, 0, &value) == OED_OK);
  CHECK(value == 0.0);

  double gap = -1.0;
  CHECK(oed_lowrank_gap_bound(lr.lr, &gap) == OED_OK);
  CHECK(gap >= 0.0);

  int64_t chosen[2] = {-1, -1};
  CHECK(oed_lowrank_swapping_greedy(lr.lr, 2, 10, chosen, &value) == OED_OK);
  CHECK(((chosen[0] == 0 && chosen[1] == 1) || (chosen[0] == 1 && chosen[1] == 0)));
  CHECK(value == doctest::Approx(0.5 * (std::log(4.0) + std::log(2.0))));
  CHECK(oed_lowrank_standard_greedy(lr.lr, 2, chosen, &value) == OED_OK);
  CHECK(chosen[0] == 0);
  CHECK(chosen[1] == 1);

  SUBCASE("error codes") {
    const int64_t bad[2] = {0, 0};
    CHECK(oed_lowrank_eig(lr.lr, bad, 2, &value) == OED_ERR_INVALID_ARGUMENT);
    CHECK(std::string(oed_last_error()).size() > 0);
    const int64_t out_of_range[1] = {5};
    CHECK(oed_lowrank_eig(lr.lr, out_of_range, 1, &value) == OED_ERR_INVALID_ARGUMENT);
    CHECK(oed_lowrank_standard_greedy(lr.lr, 4, chosen, &value) == OED_ERR_INVALID_ARGUMENT);
    CHECK(oed_lowrank_eig(nullptr, first, 1, &value) == OED_ERR_INVALID_ARGUMENT);
    CHECK(oed_lowrank_eig(lr.lr, first, 1, nullptr) == OED_ERR_INVALID_ARGUMENT);
    OwnedLowrank other;
    CHECK(oed_lowrank_from_dense(h, 3, 3, 2, 1, &other.lr) == OED_ERR_INVALID_ARGUMENT);
    CHECK(other.lr == nullptr);
    CHECK(oed_lowrank_eig(lr.lr, first, 1, &value) == OED_OK);
    CHECK(std::string(oed_last_error()).empty());
  }
}

TEST_CASE("pipeline stages through the C interface") {
  const fs::path out_dir = fs::current_path() / "capi_run";
  fs::remove_all(out_dir);
  const json cfg = {{"schema_version", 1},
                    {"problem", "advection-diffusion"},
                    {"output_dir", out_dir.string()},
                    {"grid", {{"nx", 6}, {"ny", 6}}},
                    {"r", 2},
                    {"lowrank", {{"k", 5}, {"p", 2}}},
                    {"online", {{"random_designs", 5}}}};
  const fs::path path = write_config("capi_config", cfg);

  {
    OwnedString s;
    CHECK(oed_run_online(path.string().c_str(), nullptr, &s.s) == OED_ERR_IO);
    CHECK(s.s == nullptr);
    CHECK(std::string(oed_last_error()).find("offline") != std::string::npos);
  }
  {
    OwnedString s;
    REQUIRE(oed_run_offline(path.string().c_str(), nullptr, &s.s) == OED_OK);
    const json m = json::parse(s.s);
    CHECK(m["counters"]["lowrank_operator_actions"] == 14);
  }
  {
    OwnedString s;
    REQUIRE(oed_run_online(path.string().c_str(), R"({"r": 3})", &s.s) == OED_OK);
    const json rep = json::parse(s.s);
    CHECK(rep["r"] == 3);
    CHECK(rep["swapping"]["design"].size() == 3);
    CHECK(rep["counters"]["online_operator_actions"] == 0);
  }
  {
    OwnedLowrank lr;
    REQUIRE(oed_lowrank_load((out_dir / "lowrank" / "sample_000").string().c_str(), &lr.lr) == OED_OK);
    CHECK(oed_lowrank_dim(lr.lr) == 9);
    CHECK(oed_lowrank_rank(lr.lr) <= 5);
  }
  {
    OwnedString s;
    CHECK(oed_run_online(path.string().c_str(), R"({"r": 50})", &s.s) == OED_ERR_INVALID_ARGUMENT);
    CHECK(oed_run_online(path.string().c_str(), "{not json", &s.s) == OED_ERR_INVALID_ARGUMENT);
    CHECK(oed_run_offline("/nonexistent/config.json", nullptr, &s.s) == OED_ERR_IO);
    CHECK(oed_run_offline(nullptr, nullptr, &s.s) == OED_ERR_INVALID_ARGUMENT);
    CHECK(oed_run_evaluate(path.string().c_str(),
                           R"({"evaluate": {"random_designs": 1, "criteria": ["dlmc"], "dlmc_max_forward_solves": 10}})",
                           &s.s) == OED_ERR_CAPABILITY);
  }
  {
    OwnedString s;
    REQUIRE(oed_run_report(path.string().c_str(), nullptr, &s.s) == OED_OK);
    CHECK(json::parse(s.s).contains("online"));
  }
  {
    OwnedString s;
    const char* capped = R"({"online": {"max_sweeps": 1}, "r": 3})";
    const oed_status st = oed_run_online(path.string().c_str(), capped, &s.s);
    CHECK((st == OED_OK || st == OED_ERR_NOT_CONVERGED));
    REQUIRE(s.s != nullptr);
    CHECK(json::parse(s.s)["converged"].get<bool>() == (st == OED_OK));
  }
  fs::remove(path);
}
