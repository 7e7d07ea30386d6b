// npf: run experiments, post-process EOC, self-verify, inspect meshes.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "npf/npf.hpp"

namespace {

struct Common {
  std::string out = "results";
  int max_iter = 0;
  int trace_every = 0;
  bool quiet = false;
  std::vector<std::string> overrides;
};

npf::ExperimentConfig load(const std::string& path, const std::vector<std::string>& overrides) {
  npf::ExperimentConfig cfg = npf::load_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw npf::BadConfig("--set expects key=value, got '" + kv + "'");
    npf::apply_setting(cfg, npf::detail::trim(kv.substr(0, eq)), npf::detail::trim(kv.substr(eq + 1)));
  }
  npf::validate(cfg);
  return cfg;
}

int worker_count() {
  if (const char* env = std::getenv("NPF_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

int cmd_run(const std::vector<std::string>& configs, const Common& c) {
  struct Task {
    npf::ExperimentConfig cfg;
    int k;
  };
  std::vector<Task> tasks;
  for (const auto& path : configs) {
    const auto cfg = load(path, c.overrides);
    for (int k : cfg.levels) tasks.push_back({cfg, k});
  }

  std::mutex log_mutex;
  npf::RunOptions opt;
  opt.out_dir = c.out;
  if (c.max_iter > 0) opt.max_iter = c.max_iter;
  if (c.trace_every > 0) opt.trace_every = c.trace_every;
  if (!c.quiet)
    opt.log = [&](const std::string& s) {
      std::lock_guard lock(log_mutex);
      std::cerr << s << '\n';
    };

  std::vector<npf::ExperimentResult> results(tasks.size());
  std::vector<std::string> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        results[i] = npf::run_experiment(tasks[i].cfg, tasks[i].k, opt);
        if (opt.log)
          opt.log(tasks[i].cfg.name + " k=" + std::to_string(tasks[i].k) + " done in " +
                  npf::format_number(results[i].seconds) + " s -> " + results[i].stem);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int n_threads = std::clamp(worker_count(), 1, static_cast<int>(std::max<std::size_t>(1, tasks.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  int failed = 0;
  std::vector<npf::ResultRow> rows;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!errors[i].empty()) {
      std::cerr << "error: " << tasks[i].cfg.name << " k=" << tasks[i].k << ": " << errors[i] << '\n';
      ++failed;
      continue;
    }
    rows.push_back(results[i].row);
  }
  npf::fill_eoc(rows);
  npf::write_csv(rows, std::cout);
  if (!rows.empty()) {
    std::filesystem::create_directories(c.out);
    npf::export_csv(rows, (std::filesystem::path(c.out) / "summary.csv").string());
  }
  return failed == 0 ? 0 : 1;
}

int cmd_eoc(const std::string& csv, const std::vector<double>& energies, const std::string& out) {
  if (!energies.empty()) {
    if (energies.size() != 3) throw npf::BadConfig("--energies expects exactly three values");
    std::cout << npf::format_number(npf::compute_eoc(energies[0], energies[1], energies[2])) << '\n';
    return 0;
  }
  if (csv.empty()) throw npf::BadConfig("eoc: give a CSV file or --energies");
  auto rows = npf::read_csv(csv);
  for (auto& r : rows) r.eoc.reset();
  npf::fill_eoc(rows);
  if (out.empty())
    npf::write_csv(rows, std::cout);
  else
    npf::export_csv(rows, out);
  return 0;
}

int cmd_verify(bool quiet) {
  int failures = 0, cases = 0;
  for (const auto& r : npf::run_verification()) {
    cases += r.cases;
    failures += r.failures;
    if (!quiet || r.failures > 0)
      std::cout << (r.failures == 0 ? "PASS " : "FAIL ") << r.name << ": " << r.cases - r.failures << '/' << r.cases
                << " within " << npf::format_number(r.tolerance) << " (worst " << npf::format_number(r.worst) << ")\n";
  }
  std::cout << cases - failures << " of " << cases << " checks passed\n";
  return failures == 0 ? 0 : 1;
}

int cmd_mesh(const std::string& path, const Common& c, bool export_vtk) {
  const auto cfg = load(path, c.overrides);
  std::cout << "k,triangles,vertices,edges,gamma_y_vertices,gamma_n_vertices,deformation_dofs,director_dofs\n";
  for (int k : cfg.levels) {
    npf::FeSpace space(npf::generate(npf::domain(cfg, k)));
    const auto s = npf::stats(space.mesh());
    std::cout << k << ',' << s.triangles << ',' << s.vertices << ',' << s.edges << ',' << s.gamma_y_vertices << ','
              << s.gamma_n_vertices << ',' << s.deformation_dofs << ',' << s.director_dofs << '\n';
    if (export_vtk) {
      std::filesystem::create_directories(c.out);
      const auto init = npf::init_state(cfg, space.mesh());
      const auto file = std::filesystem::path(c.out) / (cfg.name + "-mesh-k" + std::to_string(k) + ".vtk");
      npf::export_vtk(init.y, init.n, space, cfg.material.eps_bar, file.string());
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite element gradient flows for nematic LCE bilayer plates"};
  app.require_subcommand(1);
  Common common;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", common.out, "Output directory")->capture_default_str();
    sub->add_option("--set", common.overrides, "Override a config key (key=value), repeatable");
  };

  std::vector<std::string> configs;
  auto* run = app.add_subcommand("run", "Run one or more experiment configs");
  run->add_option("configs", configs, "Config files")->required()->check(CLI::ExistingFile);
  add_common(run);
  run->add_option("--max-iter", common.max_iter, "Override the iteration cap");
  run->add_option("--trace-every", common.trace_every, "Evaluate the energy every n-th iteration");
  run->add_flag("--quiet", common.quiet, "Suppress progress output");

  std::string csv, eoc_out;
  std::vector<double> energies;
  auto* eoc = app.add_subcommand("eoc", "Compute EOC columns for a result CSV");
  eoc->add_option("csv", csv, "Result CSV")->check(CLI::ExistingFile);
  eoc->add_option("--energies", energies, "Three energies coarse,mid,fine")->delimiter(',');
  eoc->add_option("--out", eoc_out, "Write the CSV here instead of stdout");

  bool verify_quiet = false;
  auto* verify = app.add_subcommand("verify", "Run the built-in oracle and gradient checks");
  verify->add_flag("--quiet", verify_quiet, "Only print failures and the summary");

  std::string mesh_cfg;
  bool mesh_vtk = false;
  auto* mesh = app.add_subcommand("mesh", "Print mesh statistics for a config");
  mesh->add_option("config", mesh_cfg, "Config file")->required()->check(CLI::ExistingFile);
  add_common(mesh);
  mesh->add_flag("--vtk", mesh_vtk, "Also export the initial state as VTK");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(configs, common);
    if (*eoc) return cmd_eoc(csv, energies, eoc_out);
    if (*verify) return cmd_verify(verify_quiet);
    if (*mesh) return cmd_mesh(mesh_cfg, common, mesh_vtk);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
