#include "cli.hpp"

#include "mcoupling/caseio.hpp"
#include "mcoupling/coupling.hpp"
#include "mcoupling/incentives.hpp"
#include "mcoupling/opf.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace mcoupling::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

// Bad flags or config values; reported like a validation failure.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(item);
  return parts;
}

template <class T>
T parse_number(const std::string& s, const std::string& what) {
  std::istringstream is(s);
  T v{};
  if (!(is >> v) || !is.eof()) throw UsageError("bad " + what + ": '" + s + "'");
  return v;
}

caseio::CaseFile load_case(const Options& opt) {
  const auto& spec = opt.case_spec;
  if (spec == "builtin:rts") return caseio::rts_case();
  if (spec == "synth" || spec.rfind("synth:", 0) == 0) {
    const auto parts = split(spec, ':');
    std::uint64_t seed = opt.seed;
    int areas = opt.areas, buses = opt.buses, ties = opt.tielines;
    if (parts.size() > 1) seed = parse_number<std::uint64_t>(parts[1], "synth seed");
    if (parts.size() > 2) areas = parse_number<int>(parts[2], "synth area count");
    if (parts.size() > 3) buses = parse_number<int>(parts[3], "synth bus count");
    if (parts.size() > 4) ties = parse_number<int>(parts[4], "synth tieline count");
    if (parts.size() > 5) throw UsageError("synth spec is synth:SEED[:AREAS:BUSES:TIES]");
    caseio::CaseFile f;
    f.network = caseio::synth(seed, areas, buses, ties);
    return f;
  }
  if (spec.rfind("builtin:", 0) == 0) throw UsageError("unknown builtin case '" + spec + "'");
  return caseio::load(spec);
}

MechanismConfig make_config(const caseio::CaseFile& file, const Options& opt) {
  MechanismConfig c = file.mechanism.value_or(MechanismConfig{});
  if (opt.beta) c.beta = *opt.beta;
  if (opt.mu0) c.mu0 = *opt.mu0;
  if (opt.max_iters) c.max_iterations = *opt.max_iters;
  if (opt.tol_flow) c.tol_flow = *opt.tol_flow;
  if (opt.tol_price) c.tol_price = *opt.tol_price;
  if (opt.jobs) c.jobs = *opt.jobs;
  try {
    if (opt.rho) c.rho = parse_rho_schedule(*opt.rho);
    if (opt.stopping) c.stopping = parse_stopping_mode(*opt.stopping);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto errors = c.errors();
  if (!errors.empty()) {
    std::string msg = "invalid mechanism settings:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw UsageError(msg);
  }
  return c;
}

std::size_t area_of(const Grid& grid, const std::string& id) {
  try {
    return grid.area_index(id);
  } catch (const std::exception&) {
    throw UsageError("unknown area '" + id + "'");
  }
}

std::pair<std::size_t, double> parse_deviation(const Grid& grid, const std::string& s) {
  const auto pos = s.rfind(':');
  if (pos == std::string::npos) throw UsageError("--deviate expects AREA:FACTOR, got '" + s + "'");
  const double f = parse_number<double>(s.substr(pos + 1), "deviation factor");
  if (!(f > 0.0)) throw UsageError("deviation factor must be positive");
  return {area_of(grid, s.substr(0, pos)), f};
}

class Artifacts {
 public:
  explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw caseio::IoError("cannot create " + dir_.string() + ": " + ec.message());
  }

  template <class F>
  void write(const std::string& name, F&& body) {
    std::ostringstream os;
    body(os);
    std::ofstream f(dir_ / name, std::ios::binary);
    if (!f) throw caseio::IoError("cannot write " + (dir_ / name).string());
    f << os.str();
    if (!f) throw caseio::IoError("write failed for " + (dir_ / name).string());
  }

 private:
  fs::path dir_;
};

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

void report_warnings(std::ostream& os, const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) os << "warning: " << w << '\n';
}

void report_warnings(std::ostream& os, const std::vector<CouplingOutcome>& runs) {
  std::vector<std::string> seen;
  for (const auto& r : runs)
    for (const auto& w : r.warnings)
      if (std::find(seen.begin(), seen.end(), w) == seen.end()) seen.push_back(w);
  report_warnings(os, seen);
}

void write_centralized(Artifacts& art, const Grid& grid, const CentralizedSolution& sol) {
  const auto& n = grid.network();
  art.write("buses.csv", [&](std::ostream& os) {
    os << "bus,area,lmp,angle\n" << std::setprecision(10);
    for (std::size_t b = 0; b < n.buses.size(); ++b)
      os << n.buses[b].id << ',' << n.buses[b].area << ',' << sol.lmp[b] << ',' << sol.angle[b] << '\n';
  });
  art.write("generators.csv", [&](std::ostream& os) {
    os << "generator,bus,dispatch\n" << std::setprecision(10);
    for (std::size_t g = 0; g < n.generators.size(); ++g)
      os << n.generators[g].id << ',' << n.generators[g].bus << ',' << sol.dispatch[g] << '\n';
  });
  art.write("tielines.csv", [&](std::ostream& os) {
    os << "tieline,from,to,flow,limit,capacity_price,lmp_from,lmp_to\n" << std::setprecision(10);
    for (std::size_t t = 0; t < n.tielines.size(); ++t) {
      const auto [i, j] = grid.tieline_ends(t);
      os << n.tielines[t].id << ',' << n.tielines[t].from.bus << ',' << n.tielines[t].to.bus << ','
         << sol.tie_flow[t] << ',' << n.tielines[t].limit << ',' << sol.capacity_price(t) << ',' << sol.lmp[i]
         << ',' << sol.lmp[j] << '\n';
    }
  });
  art.write("report.txt", [&](std::ostream& os) {
    os << "Centralized dispatch\n\n";
    os << std::left << std::setw(12) << "Area" << std::right << std::setw(14) << "Cost ($/h)" << '\n';
    for (std::size_t a = 0; a < grid.area_count(); ++a)
      os << std::left << std::setw(12) << grid.area(a).id << std::right << std::setw(14) << fixed(sol.area_cost[a], 2)
         << '\n';
    os << std::left << std::setw(12) << "Total" << std::right << std::setw(14) << fixed(sol.total_cost, 2) << "\n\n";
    if (n.tielines.empty()) return;
    os << std::left << std::setw(10) << "Tieline" << std::setw(16) << "From -> To" << std::right << std::setw(11)
       << "Flow (MW)" << std::setw(11) << "Limit" << std::setw(12) << "mu ($/MWh)" << std::setw(12) << "LMP from"
       << std::setw(12) << "LMP to" << '\n';
    for (std::size_t t = 0; t < n.tielines.size(); ++t) {
      const auto& tl = n.tielines[t];
      const auto [i, j] = grid.tieline_ends(t);
      os << std::left << std::setw(10) << tl.id << std::setw(16) << (tl.from.bus + " -> " + tl.to.bus) << std::right
         << std::setw(11) << fixed(sol.tie_flow[t], 2) << std::setw(11) << fixed(tl.limit, 1) << std::setw(12)
         << fixed(sol.capacity_price(t), 3) << std::setw(12) << fixed(sol.lmp[i], 3) << std::setw(12)
         << fixed(sol.lmp[j], 3) << '\n';
    }
    if (sol.degenerate_active > 0)
      os << "\nnote: " << sol.degenerate_active << " degenerate active constraint(s); duals may not be unique\n";
  });
}

int cmd_centralized(const Options& opt, Artifacts& art) {
  const auto file = load_case(opt);
  const Grid grid(file.network);
  write_centralized(art, grid, solve_centralized(grid));
  return kSuccess;
}

void write_coupling_report(std::ostream& os, const Grid& grid, const CouplingOutcome& run,
                           const CentralizedSolution& oracle) {
  const auto& n = grid.network();
  os << "Market coupling";
  if (run.excluded) os << " without area " << grid.area(*run.excluded).id;
  os << "\n\n";
  os << "Iterations             " << run.iterations() << '\n';
  os << "Converged              " << (run.converged ? "yes" : "no") << '\n';
  if (run.converged_at > 0) os << "Within tolerance from  k = " << run.converged_at << '\n';
  report_warnings(os, run.warnings);
  os << '\n';
  if (n.tielines.empty()) {
    os << "No tielines.\n";
    return;
  }
  const auto flows = run.final_flows(grid);
  const auto& mu = run.final_state.mu;
  os << std::left << std::setw(10) << "Tieline" << std::right << std::setw(12) << "Flow (MW)" << std::setw(12)
     << "Oracle" << std::setw(11) << "Diff" << std::setw(12) << "mu ($/MWh)" << std::setw(12) << "Oracle mu"
     << '\n';
  for (std::size_t t = 0; t < n.tielines.size(); ++t)
    os << std::left << std::setw(10) << n.tielines[t].id << std::right << std::setw(12) << fixed(flows[t], 2)
       << std::setw(12) << fixed(oracle.tie_flow[t], 2) << std::setw(11) << fixed(flows[t] - oracle.tie_flow[t], 3)
       << std::setw(12) << fixed(mu[t], 3) << std::setw(12) << fixed(oracle.capacity_price(t), 3) << '\n';

  os << '\n'
     << std::left << std::setw(8) << "Area" << std::setw(10) << "Bus" << std::right << std::setw(12) << "LMP"
     << std::setw(12) << "Oracle" << std::setw(11) << "Rel diff" << '\n';
  for (std::size_t a = 0; a < grid.area_count(); ++a) {
    if (!run.participating[a]) continue;
    const auto& ties = grid.area(a).tielines;
    for (std::size_t k = 0; k < ties.size(); ++k) {
      if (!run.tie_active[ties[k].tieline]) continue;
      const double lmp = run.final_state.smoothed[a].lmp[k];
      const double ref = oracle.lmp[ties[k].local_bus];
      const double rel = std::abs(lmp - ref) / std::max(std::abs(ref), 1e-9);
      os << std::left << std::setw(8) << grid.area(a).id << std::setw(10) << n.buses[ties[k].local_bus].id
         << std::right << std::setw(12) << fixed(lmp, 3) << std::setw(12) << fixed(ref, 3) << std::setw(11)
         << fixed(100.0 * rel, 2) + "%" << '\n';
    }
  }
}

int cmd_couple(const Options& opt, Artifacts& art) {
  const auto file = load_case(opt);
  const Grid grid(file.network);
  const auto cfg = make_config(file, opt);
  CouplingOutcome out;
  CentralizedSolution oracle;
  if (opt.exclude) {
    const auto a = area_of(grid, *opt.exclude);
    out = run_excluded(grid, cfg, a, file.cost_scale());
    oracle = solve_centralized_excluding(grid, a);
  } else {
    out = run(grid, cfg, file.cost_scale());
    oracle = solve_centralized(grid);
  }
  art.write("tielines.csv", [&](std::ostream& os) { write_tieline_trace(os, grid, out); });
  art.write("boundary.csv", [&](std::ostream& os) { write_boundary_trace(os, grid, out); });
  art.write("report.txt", [&](std::ostream& os) { write_coupling_report(os, grid, out, oracle); });
  return out.converged ? kSuccess : kNotConverged;
}

struct Settlement {
  std::vector<CouplingOutcome> runs;
  std::optional<OracleCosts> oracle;
  double fee = 0.0;
  IncentiveLedger ledger;
};

Settlement settle_case(const Grid& grid, const MechanismConfig& cfg, const std::vector<double>& scale,
                       bool use_oracle) {
  Settlement s;
  s.runs = run_all(grid, cfg, scale);
  if (use_oracle) s.oracle = oracle_costs(grid);
  s.fee = s.oracle ? participation_fee(*s.oracle) : participation_fee(s.runs);
  s.ledger = settle(grid, s.runs, s.fee, s.oracle ? &*s.oracle : nullptr);
  return s;
}

int cmd_incentives(const Options& opt, Artifacts& art) {
  const auto file = load_case(opt);
  const Grid grid(file.network);
  const auto cfg = make_config(file, opt);
  const auto s = settle_case(grid, cfg, file.cost_scale(), opt.oracle);
  art.write("tielines.csv", [&](std::ostream& os) { write_tieline_trace(os, grid, s.runs.front()); });
  art.write("ledger.csv", [&](std::ostream& os) { write_ledger_csv(os, grid, s.ledger); });
  art.write("ledger.txt", [&](std::ostream& os) {
    report_warnings(os, s.runs);
    write_ledger_report(os, grid, s.ledger);
  });
  if (opt.benchmark_lmp)
    art.write("benchmark.txt", [&](std::ostream& os) { write_benchmark_report(os, grid, {lmp_benchmark(grid, cfg)}); });
  return s.runs.front().converged ? kSuccess : kNotConverged;
}

int cmd_deviate(const Options& opt, Artifacts& art) {
  const auto file = load_case(opt);
  const Grid grid(file.network);
  const auto cfg = make_config(file, opt);
  if (opt.deviate.empty()) throw UsageError("deviate needs at least one --deviate AREA:FACTOR");
  std::vector<std::pair<std::size_t, double>> devs;
  for (const auto& d : opt.deviate) devs.push_back(parse_deviation(grid, d));

  const auto s = settle_case(grid, cfg, {}, opt.oracle);
  std::vector<DeviationReport> reports;
  for (const auto& [a, f] : devs)
    reports.push_back(deviation_experiment(grid, cfg, a, f, s.oracle ? &*s.oracle : nullptr, &s.ledger));
  art.write("deviation.txt", [&](std::ostream& os) {
    write_deviation_report(os, grid, reports);
    os << '\n'
       << std::left << std::setw(12) << "Deviator" << std::right << std::setw(8) << "Factor" << std::setw(14)
       << "Gain ($)" << std::setw(14) << "Tolerance" << '\n';
    for (const auto& r : reports)
      os << std::left << std::setw(12) << grid.area(r.area).id << std::right << std::setw(8) << fixed(r.factor, 3)
         << std::setw(14) << fixed(r.gain(), 2) << std::setw(14) << fixed(r.epsilon_tol, 2) << '\n';
  });
  art.write("deviation.csv", [&](std::ostream& os) {
    os << "deviator,factor,area,equilibrium_reduction,deviation_reduction\n" << std::setprecision(10);
    for (const auto& r : reports)
      for (std::size_t a = 0; a < grid.area_count(); ++a)
        os << grid.area(r.area).id << ',' << r.factor << ',' << grid.area(a).id << ','
           << r.equilibrium.areas[a].total_cost_reduction << ',' << r.deviation.areas[a].total_cost_reduction << '\n';
  });
  if (opt.benchmark_lmp) {
    std::vector<BenchmarkReport> bench;
    for (const auto& [a, f] : devs) bench.push_back(lmp_benchmark(grid, cfg, a, f));
    art.write("benchmark.txt", [&](std::ostream& os) { write_benchmark_report(os, grid, bench); });
  }
  return s.runs.front().converged ? kSuccess : kNotConverged;
}

int cmd_validate(const Options& opt, Artifacts& art) {
  caseio::CaseFile file;
  if (opt.case_spec.rfind("builtin:", 0) == 0 || opt.case_spec.rfind("synth", 0) == 0)
    file = load_case(opt);
  else
    file = caseio::load(opt.case_spec, false);
  const auto violations = validate(file.network);
  std::ostringstream os;
  if (violations.empty()) os << "ok: " << opt.case_spec << '\n';
  for (const auto& v : violations) os << to_string(v.kind) << ": " << v.message << '\n';
  art.write("violations.txt", [&](std::ostream& f) { f << os.str(); });
  (violations.empty() ? std::cout : std::cerr) << os.str();
  return violations.empty() ? kSuccess : kValidation;
}

int cmd_export(const Options& opt, Artifacts& art, caseio::CaseFile file) {
  (void)opt;
  art.write("case.json", [&](std::ostream& os) { os << caseio::dump(file); });
  return kSuccess;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

template <class T>
void put(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <class T>
void get(const json& j, const char* key, std::optional<T>& v) {
  if (j.contains(key)) v = j.at(key).get<T>();
}

}  // namespace

json to_manifest(const Options& opt) {
  json j;
  j["tool"] = "mcoupling";
  j["version"] = kVersion;
  j["command"] = opt.command;
  j["case"] = opt.case_spec;
  j["out"] = opt.out.string();
  j["seed"] = opt.seed;
  json o = json::object();
  put(o, "beta", opt.beta);
  put(o, "rho", opt.rho);
  put(o, "mu0", opt.mu0);
  put(o, "max_iters", opt.max_iters);
  put(o, "tol_flow", opt.tol_flow);
  put(o, "tol_price", opt.tol_price);
  put(o, "stopping", opt.stopping);
  put(o, "exclude", opt.exclude);
  put(o, "jobs", opt.jobs);
  if (!opt.deviate.empty()) o["deviate"] = opt.deviate;
  if (opt.benchmark_lmp) o["benchmark_lmp"] = true;
  if (!opt.oracle) o["oracle"] = false;
  if (opt.command == "synth") {
    o["areas"] = opt.areas;
    o["buses"] = opt.buses;
    o["tielines"] = opt.tielines;
  }
  j["overrides"] = o;
  j["timestamp"] = timestamp();
  return j;
}

Options from_manifest(const json& j) {
  Options opt;
  opt.command = j.at("command").get<std::string>();
  opt.case_spec = j.value("case", opt.case_spec);
  opt.out = j.value("out", opt.out.string());
  opt.seed = j.value("seed", opt.seed);
  const json o = j.value("overrides", json::object());
  get(o, "beta", opt.beta);
  get(o, "rho", opt.rho);
  get(o, "mu0", opt.mu0);
  get(o, "max_iters", opt.max_iters);
  get(o, "tol_flow", opt.tol_flow);
  get(o, "tol_price", opt.tol_price);
  get(o, "stopping", opt.stopping);
  get(o, "exclude", opt.exclude);
  get(o, "jobs", opt.jobs);
  opt.deviate = o.value("deviate", std::vector<std::string>{});
  opt.benchmark_lmp = o.value("benchmark_lmp", false);
  opt.oracle = o.value("oracle", true);
  opt.areas = o.value("areas", opt.areas);
  opt.buses = o.value("buses", opt.buses);
  opt.tielines = o.value("tielines", opt.tielines);
  return opt;
}

int execute(const Options& opt) {
  try {
    Artifacts art(opt.out);
    int code = kSuccess;
    if (opt.command == "centralized")
      code = cmd_centralized(opt, art);
    else if (opt.command == "couple")
      code = cmd_couple(opt, art);
    else if (opt.command == "incentives")
      code = cmd_incentives(opt, art);
    else if (opt.command == "deviate")
      code = cmd_deviate(opt, art);
    else if (opt.command == "validate")
      code = cmd_validate(opt, art);
    else if (opt.command == "export-rts")
      code = cmd_export(opt, art, caseio::rts_case());
    else if (opt.command == "synth")
      code = cmd_export(opt, art, load_case([&] {
                          Options o = opt;
                          if (o.case_spec.rfind("synth", 0) != 0) o.case_spec = "synth";
                          return o;
                        }()));
    else
      throw UsageError("unknown command '" + opt.command + "'");
    art.write("manifest.json", [&](std::ostream& os) { os << to_manifest(opt).dump(2) << '\n'; });
    if (code == kNotConverged) std::cerr << "warning: coupling did not meet the convergence tolerance\n";
    return code;
  } catch (const caseio::ValidationError& e) {
    std::cerr << "validation failed:\n";
    for (const auto& v : e.violations()) std::cerr << "  " << to_string(v.kind) << ": " << v.message << '\n';
    return kValidation;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const caseio::CaseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const qp::QpError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.status() == qp::QpStatus::Infeasible ? kValidation : kNotConverged;
  }
}

int main(int argc, char** argv) {
  CLI::App app{"Multi-area market coupling simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Options opt;
  fs::path manifest;
  auto common = [&](CLI::App* sub, bool mechanism) {
    sub->add_option("--case", opt.case_spec, "Case file, builtin:rts or synth:SEED[:AREAS:BUSES:TIES]")
        ->capture_default_str();
    sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", opt.seed, "Seed for synth cases")->capture_default_str();
    if (!mechanism) return;
    sub->add_option("--beta", opt.beta, "Capacity price step");
    sub->add_option("--rho", opt.rho, "Inertia schedule")->check(CLI::IsMember({"log", "harmonic"}));
    sub->add_option("--mu0", opt.mu0, "Initial capacity price ($/MWh)");
    sub->add_option("--max-iters", opt.max_iters, "Iteration count T");
    sub->add_option("--tol-flow", opt.tol_flow, "Flow mismatch tolerance (MW)");
    sub->add_option("--tol-price", opt.tol_price, "Capacity price drift tolerance ($/MWh)");
    sub->add_option("--stopping", opt.stopping, "fixed or tolerance")->check(CLI::IsMember({"fixed", "tolerance"}));
    sub->add_option("--jobs", opt.jobs, "Worker threads")->check(CLI::PositiveNumber);
  };

  auto* central = app.add_subcommand("centralized", "Centralized DC-OPF oracle");
  common(central, false);
  auto* couple = app.add_subcommand("couple", "Run the coupling mechanism");
  common(couple, true);
  couple->add_option("--exclude", opt.exclude, "Run without this area");
  auto* inc = app.add_subcommand("incentives", "Coupling, exclusion runs and incentive ledger");
  common(inc, true);
  inc->add_flag("--benchmark-lmp", opt.benchmark_lmp, "Also report pure LMP settlement");
  inc->add_flag("!--no-oracle", opt.oracle, "Use mechanism limits instead of centralized solves");
  auto* dev = app.add_subcommand("deviate", "Compare truthful and scaled cost reporting");
  common(dev, true);
  dev->add_option("--deviate", opt.deviate, "AREA:FACTOR, repeatable")->required();
  dev->add_flag("--benchmark-lmp", opt.benchmark_lmp, "Also report pure LMP settlement");
  dev->add_flag("!--no-oracle", opt.oracle, "Use mechanism limits instead of centralized solves");
  auto* val = app.add_subcommand("validate", "Check a case");
  common(val, false);
  auto* exp = app.add_subcommand("export-rts", "Write the bundled three-area RTS case");
  exp->add_option("--out", opt.out, "Output directory")->capture_default_str();
  auto* syn = app.add_subcommand("synth", "Write a random multi-area case");
  syn->add_option("--out", opt.out, "Output directory")->capture_default_str();
  syn->add_option("--seed", opt.seed, "Random seed")->capture_default_str();
  syn->add_option("--areas", opt.areas, "Area count")->capture_default_str();
  syn->add_option("--buses", opt.buses, "Buses per area")->capture_default_str();
  syn->add_option("--tielines", opt.tielines, "Tieline count")->capture_default_str();
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("manifest", manifest, "manifest.json")->required();
  std::optional<fs::path> replay_out;
  replay->add_option("--out", replay_out, "Output directory (default: the recorded one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kSuccess : kValidation;
  }

  if (replay->parsed()) {
    std::ifstream f(manifest);
    if (!f) {
      std::cerr << "error: cannot read " << manifest << '\n';
      return kIo;
    }
    try {
      Options rec = from_manifest(json::parse(f));
      if (replay_out) rec.out = *replay_out;
      return execute(rec);
    } catch (const json::exception& e) {
      std::cerr << "error: bad manifest: " << e.what() << '\n';
      return kIo;
    }
  }
  for (auto* sub : app.get_subcommands()) opt.command = sub->get_name();
  if (opt.command == "synth")
    opt.case_spec = "synth:" + std::to_string(opt.seed) + ":" + std::to_string(opt.areas) + ":" +
                    std::to_string(opt.buses) + ":" + std::to_string(opt.tielines);
  if (opt.command == "export-rts") opt.case_spec = "builtin:rts";
  return execute(opt);
}

}  // namespace mcoupling::cli
