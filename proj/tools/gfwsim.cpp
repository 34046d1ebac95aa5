// Copyright 2026 The gfwsim Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gfwsim/gfwsim.hpp"

namespace fs = std::filesystem;
using namespace gfwsim;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRuntime = 2;

struct OutputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void emit(const std::string& out_dir, const std::string& file, const std::string& body) {
  if (out_dir.empty()) {
    std::cout << body;
    return;
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  const fs::path path = fs::path(out_dir) / file;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw OutputError("cannot write " + path.string());
  os << body;
  if (!os) throw OutputError("cannot write " + path.string());
  std::cerr << "wrote " << path.string() << '\n';
}

std::string extension(const std::string& format) { return format == "summary" ? "txt" : format; }

int list_scenarios(const std::string& dir) {
  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec))
    if (e.path().extension() == ".json") files.push_back(e.path());
  if (ec) {
    std::cerr << "error: cannot read " << dir << ": " << ec.message() << '\n';
    return kRuntime;
  }
  std::sort(files.begin(), files.end());
  int rc = kOk;
  for (const auto& f : files) {
    try {
      const auto s = Scenario::load(f.string());
      std::cout << s.name() << "  (" << f.filename().string() << ")\n    " << s.description() << '\n';
    } catch (const ValidationError& e) {
      std::cout << f.filename().string() << "  INVALID: " << e.what() << '\n';
      rc = kInvalid;
    }
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gfwsim: discrete-event simulator of Nakamoto consensus over a region-aware network"};
  app.require_subcommand(1);

  std::string scenario_path, out_dir, format = "summary", param, values;
  std::optional<std::uint64_t> seed;
  std::uint32_t seeds = 0;
  unsigned jobs = 1;
  std::string dir = GFWSIM_SCENARIO_DIR;

  auto* run = app.add_subcommand("run", "Run a scenario");
  run->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  run->add_option("--seed", seed, "Seed (default: the scenario's)");
  run->add_option("--seeds", seeds, "Run this many consecutive seeds and aggregate");
  run->add_option("--out", out_dir, "Write output files here instead of stdout");
  run->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "json", "summary"}));
  run->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);

  auto* sw = app.add_subcommand("sweep", "Sweep one numeric parameter across seeds");
  sw->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  sw->add_option("--param", param, "Dot path, e.g. miners.attacker.hash_share")->required();
  sw->add_option("--values", values, "Comma list a,b,c or range start:stop:step")->required();
  sw->add_option("--seeds", seeds, "Seeds per value (default: the scenario's)");
  sw->add_option("--seed", seed, "First seed (default: the scenario's)");
  sw->add_option("--out", out_dir, "Write output files here instead of stdout");
  sw->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "json", "summary"}));
  sw->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);

  auto* list = app.add_subcommand("list-scenarios", "List shipped scenarios");
  list->add_option("--dir", dir, "Scenario directory");

  auto* val = app.add_subcommand("validate", "Validate a scenario file without running it");
  val->add_option("scenario", scenario_path, "Scenario JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInvalid;
  }

  try {
    if (*list) return list_scenarios(dir);

    Scenario s = Scenario::load(scenario_path);
    if (seed) s = s.with("seed", Json(*seed));

    if (*val) {
      std::cout << "ok " << s.name() << '\n';
      return kOk;
    }

    if (*run) {
      const std::uint32_t n = seeds ? seeds : 1;
      auto runs = run_seeds(s, n, jobs);
      std::ostringstream os;
      if (format == "csv")
        write_csv(os, runs);
      else if (format == "json")
        os << to_json(s, runs).dump(2) << '\n';
      else
        write_summary(os, s, runs);
      const std::string stem = n == 1 ? s.name() + "-seed" + std::to_string(s.seed()) : s.name();
      emit(out_dir, stem + "." + extension(format), os.str());
      return kOk;
    }

    if (*sw) {
      auto cells = sweep(s, param, parse_sweep_values(values), seeds ? seeds : s.seeds(), jobs);
      std::ostringstream os;
      if (format == "csv")
        write_aggregate_csv(os, s.name(), cells);
      else if (format == "json")
        os << to_json(s, cells).dump(2) << '\n';
      else
        write_sweep_summary(os, s, cells);
      emit(out_dir, s.name() + "-sweep." + extension(format), os.str());
      return kOk;
    }
  } catch (const ValidationError& e) {
    std::cerr << "invalid: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
