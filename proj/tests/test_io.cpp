#include <doctest.h>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <random>

#include "mfrisk/errors.hpp"
#include "mfrisk/io.hpp"

using namespace mfrisk;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const char* env = std::getenv("MFRISK_TEST_TMP");
  fs::path dir = env ? fs::path(env) : fs::temp_directory_path() / "mfrisk_io_tests";
  dir /= name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("numbers read back exactly") {
  std::mt19937_64 eng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(eng) * std::pow(10.0, double(i % 40 - 20));
    const std::string s = format_number(x);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    CHECK(back == x);
  }
  CHECK(format_number(0.5) == "0.5");
  CHECK(format_number(2.0) == "2");
}

TEST_CASE("csv dialect") {
  CsvTable t;
  t.header = {"t", "mean"};
  t.add({0.0, -1.0});
  t.add({0.25, 1e-20});
  CHECK(t.str() == "t,mean\n0,-1\n0.25,1e-20\n");
  CHECK_THROWS(t.add({1.0}));
}

TEST_CASE("config round trip") {
  const json j = json::parse(R"({
    "h": 0.3, "theta": 2.5, "sigma": 0.7, "n_agents": 40, "horizon": 12.5, "dt": 0.01,
    "groups": [{"theta": 1.0, "fraction": 0.25}, {"theta": 4.0, "fraction": 0.75}],
    "seed": 1234,
    "options": {"method": "minimize", "grid": 500},
    "sweep": {"parameter": "h", "values": [0.1, 0.2]}
  })");
  const auto c = experiment_config_from_json(j);
  CHECK(c.params.theta == 2.5);
  CHECK(c.groups->thetas[1] == 4.0);
  CHECK(*c.seed == 1234u);
  CHECK(c.sweep->values.size() == 2);
  const json out = to_json(c);
  CHECK(out == j);
  CHECK(to_json(experiment_config_from_json(out)).dump() == out.dump());

  const json filled = to_json(experiment_config_from_json(json::parse(R"({"h": 0.2})")));
  CHECK(filled.at("h") == 0.2);
  CHECK(filled.at("theta") == ModelParams{}.theta);
  CHECK(to_json(experiment_config_from_json(filled)) == filled);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(model_params_from_json(json::parse(R"({"hh": 1})")), ParameterError);
  CHECK_THROWS_AS(experiment_config_from_json(json::parse(R"({"sweep": {"parameter": "zeta", "values": [1]}})")),
                  ParameterError);
  CHECK_THROWS_AS(with_parameter(ModelParams{}, "zeta", 1.0), ParameterError);
  CHECK(with_parameter(ModelParams{}, "n_agents", 30).n_agents == 30);
}

TEST_CASE("atomic writes") {
  const auto dir = scratch("atomic");
  const auto file = dir / "sub" / "out.txt";
  write_file_atomic(file, "first\n");
  write_file_atomic(file, "second\n");
  CHECK(read_file(file) == "second\n");
  int entries = 0;
  for (const auto& e : fs::directory_iterator(dir / "sub")) {
    (void)e;
    ++entries;
  }
  CHECK(entries == 1);
  CHECK_THROWS_AS(read_file(dir / "missing.json"), IoError);
  write_file_atomic(dir / "bad.json", "{not json");
  CHECK_THROWS_AS(read_json_file(dir / "bad.json"), ParameterError);
}

TEST_CASE("rng metadata records the seed") {
  const auto m = rng_metadata(77);
  CHECK(m.at("seed") == 77);
}

}
