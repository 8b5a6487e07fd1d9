#include "mcoupling/caseio.hpp"

#include "mcoupling/opf.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace mcoupling::caseio {

using nlohmann::json;

std::vector<double> CaseFile::cost_scale() const {
  std::vector<double> out(network.areas.size(), 1.0);
  for (std::size_t a = 0; a < network.areas.size(); ++a)
    if (auto it = reporting.find(network.areas[a]); it != reporting.end()) out[a] = it->second;
  return out;
}

namespace {

std::string describe(const std::vector<Violation>& v) {
  std::string msg = "case failed validation:";
  for (const auto& x : v) msg += "\n  [" + std::string(to_string(x.kind)) + "] " + x.message;
  return msg;
}

}  // namespace

ValidationError::ValidationError(std::vector<Violation> violations)
    : CaseError(describe(violations)), violations_(std::move(violations)) {}

namespace {

std::string_view split_name(CapacitySplit s) {
  switch (s) {
    case CapacitySplit::Even: return "even";
    case CapacitySplit::Exporter: return "exporter";
    case CapacitySplit::Importer: return "importer";
  }
  return "even";
}

CapacitySplit parse_split(const std::string& s) {
  if (s == "even") return CapacitySplit::Even;
  if (s == "exporter") return CapacitySplit::Exporter;
  if (s == "importer") return CapacitySplit::Importer;
  throw ParseError("unknown capacity split '" + s + "'");
}

json to_json(const MechanismConfig& m) {
  return {{"beta", m.beta},
          {"rho", std::string(to_string(m.rho))},
          {"mu0", m.mu0},
          {"max_iterations", m.max_iterations},
          {"tol_flow", m.tol_flow},
          {"tol_price", m.tol_price},
          {"price_window", m.price_window},
          {"tol_slackness", m.tol_slackness},
          {"stopping", std::string(to_string(m.stopping))},
          {"split", std::string(split_name(m.split))},
          {"jobs", m.jobs}};
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

MechanismConfig mechanism_from_json(const json& j) {
  MechanismConfig m;
  read_opt(j, "beta", m.beta);
  read_opt(j, "mu0", m.mu0);
  read_opt(j, "max_iterations", m.max_iterations);
  read_opt(j, "tol_flow", m.tol_flow);
  read_opt(j, "tol_price", m.tol_price);
  read_opt(j, "price_window", m.price_window);
  read_opt(j, "tol_slackness", m.tol_slackness);
  read_opt(j, "jobs", m.jobs);
  try {
    if (j.contains("rho")) m.rho = parse_rho_schedule(j.at("rho").get<std::string>());
    if (j.contains("stopping")) m.stopping = parse_stopping_mode(j.at("stopping").get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what());
  }
  if (j.contains("split")) m.split = parse_split(j.at("split").get<std::string>());
  if (auto errs = m.errors(); !errs.empty()) throw ParseError("mechanism section: " + errs.front());
  return m;
}

CaseFile from_json(const json& j) {
  if (!j.is_object()) throw ParseError("case must be a JSON object");
  CaseFile c;
  c.version = j.value("version", kSchemaVersion);
  if (c.version != kSchemaVersion)
    throw ParseError("unsupported case version " + std::to_string(c.version) + " (expected " +
                     std::to_string(kSchemaVersion) + ")");
  auto& n = c.network;
  n.base_mva = j.value("base_mva", 100.0);
  n.areas = j.at("areas").get<std::vector<std::string>>();
  for (const auto& b : j.at("buses")) n.buses.push_back({b.at("id"), b.at("area"), b.value("load_mw", 0.0)});
  for (const auto& g : j.value("generators", json::array())) {
    const auto& cost = g.at("cost");
    n.generators.push_back({g.at("id"), g.at("bus"),
                            {cost.at("c2").get<double>(), cost.value("c1", 0.0), cost.value("c0", 0.0)},
                            g.value("p_min_mw", 0.0), g.at("p_max_mw").get<double>()});
  }
  for (const auto& l : j.value("lines", json::array()))
    n.lines.push_back({l.at("id"), l.at("from"), l.at("to"), l.at("reactance_pu"), l.at("limit_mw")});
  for (const auto& t : j.value("tielines", json::array())) {
    n.tielines.push_back({t.at("id"),
                          {t.at("from").at("area"), t.at("from").at("bus")},
                          {t.at("to").at("area"), t.at("to").at("bus")},
                          t.at("reactance_pu"),
                          t.at("limit_mw")});
  }
  if (j.contains("slack")) n.slack = BusRef{j.at("slack").at("area"), j.at("slack").at("bus")};
  if (j.contains("mechanism")) c.mechanism = mechanism_from_json(j.at("mechanism"));
  if (j.contains("reporting")) {
    for (const auto& [area, factor] : j.at("reporting").items()) c.reporting[area] = factor.get<double>();
  }
  return c;
}

json to_json(const CaseFile& c) {
  const auto& n = c.network;
  json j;
  j["version"] = c.version;
  j["base_mva"] = n.base_mva;
  j["areas"] = n.areas;
  if (n.slack) j["slack"] = {{"area", n.slack->area}, {"bus", n.slack->bus}};
  j["buses"] = json::array();
  for (const auto& b : n.buses) j["buses"].push_back({{"id", b.id}, {"area", b.area}, {"load_mw", b.load}});
  j["generators"] = json::array();
  for (const auto& g : n.generators) {
    j["generators"].push_back({{"id", g.id},
                               {"bus", g.bus},
                               {"p_min_mw", g.p_min},
                               {"p_max_mw", g.p_max},
                               {"cost", {{"c2", g.cost.c2}, {"c1", g.cost.c1}, {"c0", g.cost.c0}}}});
  }
  j["lines"] = json::array();
  for (const auto& l : n.lines) {
    j["lines"].push_back(
        {{"id", l.id}, {"from", l.from}, {"to", l.to}, {"reactance_pu", l.reactance}, {"limit_mw", l.limit}});
  }
  j["tielines"] = json::array();
  for (const auto& t : n.tielines) {
    j["tielines"].push_back({{"id", t.id},
                             {"from", {{"area", t.from.area}, {"bus", t.from.bus}}},
                             {"to", {{"area", t.to.area}, {"bus", t.to.bus}}},
                             {"reactance_pu", t.reactance},
                             {"limit_mw", t.limit}});
  }
  if (c.mechanism) j["mechanism"] = to_json(*c.mechanism);
  if (!c.reporting.empty()) j["reporting"] = c.reporting;
  return j;
}

}  // namespace

CaseFile parse(const std::string& text, bool check) {
  CaseFile c;
  try {
    c = from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed case: ") + e.what());
  }
  for (const auto& [area, factor] : c.reporting) {
    if (std::find(c.network.areas.begin(), c.network.areas.end(), area) == c.network.areas.end())
      throw ParseError("reporting override for unknown area " + area);
    if (!(factor > 0.0) || !std::isfinite(factor)) throw ParseError("reporting factor for " + area + " must be positive");
  }
  if (check) {
    if (auto v = validate(c.network); !v.empty()) throw ValidationError(std::move(v));
  }
  return c;
}

CaseFile load(const std::filesystem::path& path, bool check) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open case file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error reading case file " + path.string());
  return parse(ss.str(), check);
}

std::string dump(const CaseFile& file) { return to_json(file).dump(2) + "\n"; }

void save(const std::filesystem::path& path, const CaseFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write case file " + path.string());
  out << dump(file);
  if (!out) throw IoError("error writing case file " + path.string());
}

QuadraticCost fit_heat_rate(double fuel_price, std::span<const std::pair<double, double>> points, double c2_floor) {
  if (points.size() < 2) throw std::invalid_argument("fit_heat_rate needs at least two points");
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::VectorXd p(n), f(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    p(i) = points[static_cast<std::size_t>(i)].first;
    f(i) = fuel_price * points[static_cast<std::size_t>(i)].second * p(i) / 1000.0;
  }
  if (n >= 3) {
    Eigen::MatrixXd X(n, 3);
    X.col(0) = p.array().square();
    X.col(1) = p;
    X.col(2).setOnes();
    const Eigen::Vector3d c = X.colPivHouseholderQr().solve(f);
    if (c(0) >= c2_floor) return {c(0), c(1), c(2)};
  }
  Eigen::MatrixXd X(n, 2);
  X.col(0) = p;
  X.col(1).setOnes();
  const Eigen::Vector2d c = X.colPivHouseholderQr().solve((f.array() - c2_floor * p.array().square()).matrix());
  return {c2_floor, c(0), c(1)};
}

namespace {

struct UnitType {
  const char* name;
  double p_min;
  double p_max;
  double fuel_price;                                // $/MBtu
  std::vector<std::pair<double, double>> heat_rate;  // MW, Btu/kWh
};

// RTS-96 unit data; fuel prices: #6 oil 2.30, #2 oil 3.00, coal 1.20, uranium 0.60.
const std::vector<UnitType>& unit_types() {
  static const std::vector<UnitType> types = {
      {"U12", 2.4, 12.0, 2.30, {{2.4, 16017}, {6.0, 12500}, {9.6, 11900}, {12.0, 12000}}},
      {"U20", 15.8, 20.0, 3.00, {{15.8, 15063}, {20.0, 14500}}},
      {"U50", 10.0, 50.0, 0.0, {}},
      {"U76", 15.2, 76.0, 1.20, {{15.2, 17107}, {38.0, 12637}, {60.8, 12000}, {76.0, 11900}}},
      {"U100", 25.0, 100.0, 2.30, {{25.0, 13244}, {55.0, 10478}, {80.0, 10062}, {100.0, 10000}}},
      {"U155", 54.3, 155.0, 1.20, {{54.3, 11900}, {93.0, 10254}, {124.0, 9899}, {155.0, 9700}}},
      {"U197", 69.0, 197.0, 2.30, {{68.95, 10825}, {118.2, 10000}, {157.6, 9819}, {197.0, 9700}}},
      {"U350", 140.0, 350.0, 1.20, {{140.0, 10375}, {227.5, 9800}, {280.0, 9950}, {350.0, 9600}}},
      {"U400", 100.0, 400.0, 0.60, {{100.0, 12751}, {200.0, 11005}, {320.0, 10297}, {400.0, 10200}}},
  };
  return types;
}

QuadraticCost unit_cost(const UnitType& u) {
  if (u.heat_rate.empty()) return {1e-3, 0.0, 0.0};  // hydro: no fuel cost
  // All units are committed for the hour, so the fitted intercept (no-load
  // cost) is a constant of every scenario and is left out.
  auto cost = fit_heat_rate(u.fuel_price, u.heat_rate);
  cost.c0 = 0.0;
  return cost;
}

struct Branch {
  int from;
  int to;
  double x;
  double limit;
};

// The 24-bus area, MATPOWER case24_ieee_rts branch data (per unit, MW).
constexpr std::array<Branch, 38> kBranches = {{
    {1, 2, 0.0139, 175},  {1, 3, 0.2112, 175},  {1, 5, 0.0845, 175},  {2, 4, 0.1267, 175},
    {2, 6, 0.1920, 175},  {3, 9, 0.1190, 175},  {3, 24, 0.0839, 400}, {4, 9, 0.1037, 175},
    {5, 10, 0.0883, 175}, {6, 10, 0.0605, 175}, {7, 8, 0.0614, 175},  {8, 9, 0.1651, 175},
    {8, 10, 0.1651, 175}, {9, 11, 0.0839, 400}, {9, 12, 0.0839, 400}, {10, 11, 0.0839, 400},
    {10, 12, 0.0839, 400}, {11, 13, 0.0476, 500}, {11, 14, 0.0418, 500}, {12, 13, 0.0476, 500},
    {12, 23, 0.0966, 500}, {13, 23, 0.0865, 500}, {14, 16, 0.0389, 500}, {15, 16, 0.0173, 500},
    {15, 21, 0.0490, 500}, {15, 21, 0.0490, 500}, {15, 24, 0.0519, 500}, {16, 17, 0.0259, 500},
    {16, 19, 0.0231, 500}, {17, 18, 0.0144, 500}, {17, 22, 0.1053, 500}, {18, 21, 0.0259, 500},
    {18, 21, 0.0259, 500}, {19, 20, 0.0396, 500}, {19, 20, 0.0396, 500}, {20, 23, 0.0216, 500},
    {20, 23, 0.0216, 500}, {21, 22, 0.0678, 500},
}};

constexpr std::array<double, 24> kLoads = {108, 97, 180, 74, 71, 136, 125, 171, 175, 195, 0, 0,
                                           265, 194, 317, 100, 0, 333, 181, 128, 0, 0, 0, 0};

struct Site {
  int bus;
  const char* unit;
  int count;
};

constexpr std::array<Site, 14> kSites = {{
    {1, "U20", 2}, {1, "U76", 2}, {2, "U20", 2}, {2, "U76", 2}, {7, "U100", 3}, {13, "U197", 3},
    {15, "U12", 5}, {15, "U155", 1}, {16, "U155", 1}, {18, "U400", 1}, {21, "U400", 1}, {22, "U50", 6},
    {23, "U155", 2}, {23, "U350", 1},
}};

std::string rts_bus(int area, int bus) { return std::to_string(100 * area + bus); }

}  // namespace

Network rts_three_area() {
  Network n;
  n.base_mva = 100.0;
  n.areas = {"A", "B", "C"};
  std::map<std::string, QuadraticCost> costs;
  for (const auto& u : unit_types()) costs[u.name] = unit_cost(u);

  for (int a = 1; a <= 3; ++a) {
    const auto& area = n.areas[static_cast<std::size_t>(a - 1)];
    for (int b = 1; b <= 24; ++b) n.buses.push_back({rts_bus(a, b), area, kLoads[static_cast<std::size_t>(b - 1)]});
    if (a == 3) n.buses.push_back({rts_bus(3, 25), area, 0.0});

    std::map<std::string, int> circuit;
    for (const auto& br : kBranches) {
      double limit = br.limit;
      if (a == 1 && br.from == 16 && br.to == 17) limit = 200.0;
      if (a == 2 && br.from == 3 && br.to == 24) limit = 150.0;
      std::string id = rts_bus(a, br.from) + "-" + rts_bus(a, br.to);
      if (++circuit[id] > 1) id += "/" + std::to_string(circuit[id]);
      n.lines.push_back({id, rts_bus(a, br.from), rts_bus(a, br.to), br.x, limit});
    }
    if (a == 3) n.lines.push_back({"325-323", "325", "323", 0.0097, 500.0});

    for (const auto& site : kSites) {
      const auto& type = *std::find_if(unit_types().begin(), unit_types().end(),
                                       [&](const UnitType& u) { return std::string_view(u.name) == site.unit; });
      for (int k = 1; k <= site.count; ++k) {
        n.generators.push_back({rts_bus(a, site.bus) + "-" + site.unit + "-" + std::to_string(k), rts_bus(a, site.bus),
                                costs[site.unit], type.p_min, type.p_max});
      }
    }
  }
  n.tielines = {
      {"TL1", {"A", "107"}, {"B", "203"}, 0.16, 175.0},
      {"TL2", {"A", "113"}, {"B", "215"}, 0.08, 500.0},
      {"TL3", {"A", "123"}, {"B", "217"}, 0.07, 500.0},
      {"TL4", {"C", "325"}, {"A", "121"}, 0.10, 100.0},
      {"TL5", {"C", "318"}, {"B", "223"}, 0.10, 500.0},
  };
  return n;
}

CaseFile rts_case() {
  CaseFile c;
  c.network = rts_three_area();
  MechanismConfig m;
  m.beta = 0.3;
  m.rho = RhoSchedule::Log;
  m.mu0 = 50.0;
  m.max_iterations = 200;
  c.mechanism = m;
  return c;
}

namespace {

// Portable generator: the standard distributions are implementation defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }

 private:
  std::uint64_t next() {  // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  std::uint64_t state_;
};

std::string area_name(int a) {
  if (a < 26) return std::string(1, static_cast<char>('A' + a));
  return "Z" + std::to_string(a);
}

bool jointly_feasible(const Network& n) {
  if (n.tielines.empty()) return true;
  const Grid g(n);
  try {
    solve_centralized(g);
    for (std::size_t a = 0; a < g.area_count(); ++a) solve_centralized_excluding(g, a);
  } catch (const qp::QpError& e) {
    if (e.status() != qp::QpStatus::Infeasible) throw;
    return false;
  }
  return true;
}

}  // namespace

Network synth(std::uint64_t seed, int areas, int buses_per_area, int tielines) {
  if (areas < 1 || buses_per_area < 1 || tielines < 0) throw std::invalid_argument("synth: counts must be positive");
  if (areas == 1) tielines = 0;
  Rng rng(seed);
  Network n;
  n.base_mva = 100.0;
  std::vector<std::vector<std::string>> area_buses(static_cast<std::size_t>(areas));
  std::vector<double> area_load(static_cast<std::size_t>(areas), 0.0);

  for (int a = 0; a < areas; ++a) {
    const auto id = area_name(a);
    n.areas.push_back(id);
    auto& buses = area_buses[static_cast<std::size_t>(a)];
    for (int b = 1; b <= buses_per_area; ++b) {
      const double load = rng.uniform() < 0.2 ? 0.0 : std::round(rng.uniform(20.0, 120.0));
      buses.push_back(id + std::to_string(b));
      n.buses.push_back({buses.back(), id, load});
      area_load[static_cast<std::size_t>(a)] += load;
    }
    if (area_load[static_cast<std::size_t>(a)] == 0.0) {
      n.buses.back().load = 50.0;
      area_load[static_cast<std::size_t>(a)] = 50.0;
    }
    const double load = area_load[static_cast<std::size_t>(a)];

    // Spanning tree plus a few chords.
    std::set<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t b = 1; b < buses.size(); ++b) edges.insert({rng.index(b), b});
    const auto chords = buses.size() / 2;
    for (std::size_t c = 0; c < chords && buses.size() > 2; ++c) {
      auto i = rng.index(buses.size()), j = rng.index(buses.size());
      if (i == j) continue;
      if (i > j) std::swap(i, j);
      edges.insert({i, j});
    }
    for (const auto& [i, j] : edges) {
      n.lines.push_back({buses[i] + "-" + buses[j], buses[i], buses[j], std::round(rng.uniform(0.02, 0.2) * 1e4) / 1e4,
                         std::round(rng.uniform(0.4, 1.2) * load)});
    }

    // Generation: 1-3 units with 1.2-1.8x the area load and an area-level price offset.
    const int units = 1 + static_cast<int>(rng.index(3));
    const double capacity = load * rng.uniform(1.2, 1.8);
    const double offset = rng.uniform(0.0, 25.0);
    for (int g = 1; g <= units; ++g) {
      const double share = capacity / units;
      QuadraticCost cost{std::round(rng.uniform(0.005, 0.05) * 1e4) / 1e4,
                         std::round((rng.uniform(10.0, 30.0) + offset) * 100) / 100, std::round(rng.uniform(0.0, 200.0))};
      n.generators.push_back({id + "-G" + std::to_string(g), buses[rng.index(buses.size())], cost, 0.0,
                              std::ceil(share)});
    }
  }

  for (int t = 0; t < tielines; ++t) {
    std::size_t a, b;
    if (t < areas - 1) {
      b = static_cast<std::size_t>(t + 1);
      a = rng.index(b);
    } else {
      a = rng.index(static_cast<std::size_t>(areas));
      b = (a + 1 + rng.index(static_cast<std::size_t>(areas - 1))) % static_cast<std::size_t>(areas);
    }
    const double scale = 0.5 * (area_load[a] + area_load[b]);
    n.tielines.push_back({"T" + std::to_string(t + 1),
                          {n.areas[a], area_buses[a][rng.index(area_buses[a].size())]},
                          {n.areas[b], area_buses[b][rng.index(area_buses[b].size())]},
                          std::round(rng.uniform(0.05, 0.3) * 1e4) / 1e4,
                          std::round(rng.uniform(0.05, 0.4) * scale)});
  }

  // Relax internal limits until every area clears on its own.
  for (int round = 0; round < 20; ++round) {
    const auto violations = validate(n);
    if (violations.empty()) break;
    std::set<std::string> bad;
    for (const auto& v : violations) {
      if (v.kind != ViolationKind::AreaInfeasible) throw std::logic_error("synth produced an invalid case: " + v.message);
      for (const auto& a : n.areas)
        if (v.message.rfind("area " + a + " ", 0) == 0) bad.insert(a);
    }
    for (auto& l : n.lines) {
      const auto bus = n.find_bus(l.from);
      if (bus && bad.count(n.buses[*bus].area)) l.limit = std::round(l.limit * 1.5);
    }
  }
  if (!validate(n).empty()) throw std::logic_error("synth could not make every area feasible");

  // Tieline loops force circulating flows, so zero tie flows need not be a
  // feasible joint state. Relax limits until the joint and excluded problems clear.
  for (int round = 0; round < 20; ++round) {
    if (jointly_feasible(n)) return n;
    for (auto& t : n.tielines) t.limit = std::round(t.limit * 1.5);
    for (auto& l : n.lines) l.limit = std::round(l.limit * 1.2);
  }
  throw std::logic_error("synth could not make the interconnection feasible");
}

}  // namespace mcoupling::caseio
