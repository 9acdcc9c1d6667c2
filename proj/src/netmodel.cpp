#include "vudlmp/netmodel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_set>

namespace vudlmp {

using nlohmann::json;

namespace {

std::string phase_name(int phase) { return std::string(1, static_cast<char>('a' + phase)); }

double number_or(const json& j, const char* key, double fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  if (!j.at(key).is_number()) throw ParseError(std::string("field '") + key + "' must be a number");
  return j.at(key).get<double>();
}

// Null entries mean "unbounded" and map to +/-inf depending on the side.
Phase3 phase_array(const json& j, const char* key, double null_value, double missing_value) {
  Phase3 out{missing_value, missing_value, missing_value};
  if (!j.contains(key)) return out;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) throw ParseError(std::string("field '") + key + "' must be an array of 3");
  for (int k = 0; k < 3; ++k) {
    if (a[k].is_null()) {
      out[k] = null_value;
    } else if (a[k].is_number()) {
      out[k] = a[k].get<double>();
    } else {
      throw ParseError(std::string("field '") + key + "' has a non-numeric entry");
    }
  }
  return out;
}

Eigen::Matrix3d matrix3(const json& j, const char* key) {
  if (!j.contains(key)) throw ParseError(std::string("line is missing '") + key + "'");
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) throw ParseError(std::string("'") + key + "' must be 3x3");
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r) {
    if (!a[r].is_array() || a[r].size() != 3) throw ParseError(std::string("'") + key + "' must be 3x3");
    for (int c = 0; c < 3; ++c) m(r, c) = a[r][c].get<double>();
  }
  return m;
}

json bound_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json phase_json(const Phase3& p, double scale) {
  json a = json::array();
  for (double v : p) a.push_back(bound_json(std::isfinite(v) ? v * scale : v));
  return a;
}

}  // namespace

double to_per_unit(double value, double base) {
  if (!(base > 0.0)) throw std::invalid_argument("per-unit base must be positive");
  return value / base;
}

double from_per_unit(double value_pu, double base) {
  if (!(base > 0.0)) throw std::invalid_argument("per-unit base must be positive");
  return value_pu * base;
}

UnbalanceMode parse_mode(const std::string& s) {
  if (s == "none") return UnbalanceMode::kNone;
  if (s == "hard") return UnbalanceMode::kHard;
  if (s == "soft") return UnbalanceMode::kSoft;
  throw ParseError("unknown unbalance mode '" + s + "' (expected none, hard or soft)");
}

PenaltyOn parse_penalty_on(const std::string& s) {
  if (s == "f") return PenaltyOn::kSquared;
  if (s == "vuf") return PenaltyOn::kVuf;
  throw ParseError("penalty_on must be 'f' or 'vuf'");
}

std::string to_string(PenaltyOn p) { return p == PenaltyOn::kVuf ? "vuf" : "f"; }

std::string to_string(UnbalanceMode mode) {
  switch (mode) {
    case UnbalanceMode::kHard: return "hard";
    case UnbalanceMode::kSoft: return "soft";
    case UnbalanceMode::kNone: break;
  }
  return "none";
}

int NetworkSpec::bus_index(const std::string& id) const {
  auto it = bus_lookup.find(id);
  if (it == bus_lookup.end()) throw ValidationError("unknown bus '" + id + "'");
  return it->second;
}

double NetworkSpec::substation_cost() const {
  for (const auto& g : gens)
    if (g.is_substation) return g.marginal_cost;
  return 0.0;
}

std::vector<int> NetworkSpec::vuf_bus_indices() const {
  std::vector<int> out;
  out.reserve(unbalance.buses.size());
  for (const auto& id : unbalance.buses) out.push_back(bus_index(id));
  return out;
}

void finalize_network(NetworkSpec& net) {
  if (!(net.base_kva > 0.0)) throw ValidationError("base_kva must be positive");
  if (!(net.base_volt_ln > 0.0)) throw ValidationError("base_volt_ln must be positive");
  if (net.buses.empty()) throw ValidationError("network has no buses");

  net.bus_lookup.clear();
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    const auto& b = net.buses[i];
    if (b.id.empty()) throw ValidationError("bus with empty id");
    if (!net.bus_lookup.emplace(b.id, static_cast<int>(i)).second)
      throw ValidationError("duplicate bus id '" + b.id + "'");
    if (!(b.vmin > 0.0 && b.vmin < b.vmax) || !std::isfinite(b.vmax))
      throw ValidationError("bus '" + b.id + "': voltage bounds must satisfy 0 < vmin < vmax");
  }
  auto require_bus = [&](const std::string& id, const std::string& what) {
    if (!net.bus_lookup.count(id)) throw ValidationError(what + " references unknown bus '" + id + "'");
  };

  std::set<std::pair<std::string, std::string>> seen_lines;
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    const auto& line = net.lines[l];
    const std::string name = "line " + std::to_string(l) + " (" + line.from + "-" + line.to + ")";
    require_bus(line.from, name);
    require_bus(line.to, name);
    if (line.from == line.to) throw ValidationError(name + " connects a bus to itself");
    auto key = std::minmax(line.from, line.to);
    if (!seen_lines.emplace(key.first, key.second).second)
      throw ValidationError(name + " duplicates another line between the same buses");
    if (!line.z.allFinite()) throw ValidationError(name + ": impedance has non-finite entries");
    const double scale = std::max(1e-300, line.z.cwiseAbs().maxCoeff());
    if ((line.z - line.z.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
      throw ValidationError(name + ": impedance matrix is not symmetric");
    for (int k = 0; k < 3; ++k)
      if (!(line.z(k, k).real() > 0.0))
        throw ValidationError(name + ": diagonal resistance of phase " + phase_name(k) + " must be positive");
    if (!(line.s_rating > 0.0)) throw ValidationError(name + ": s_rating must be positive");
  }

  for (std::size_t i = 0; i < net.loads.size(); ++i) {
    const auto& load = net.loads[i];
    require_bus(load.bus, "load " + std::to_string(i));
    for (int k = 0; k < 3; ++k)
      if (!std::isfinite(load.p[k]) || !std::isfinite(load.q[k]))
        throw ValidationError("load " + std::to_string(i) + " at bus '" + load.bus + "': non-finite demand");
  }

  int substations = 0;
  for (std::size_t i = 0; i < net.gens.size(); ++i) {
    auto& g = net.gens[i];
    const std::string name = "generator " + std::to_string(i) + " at bus '" + g.bus + "'";
    require_bus(g.bus, name);
    for (int k = 0; k < 3; ++k) {
      if (!g.phases[k]) {
        g.pmin[k] = g.pmax[k] = g.qmin[k] = g.qmax[k] = 0.0;
        continue;
      }
      if (std::isnan(g.pmin[k]) || std::isnan(g.pmax[k]) || g.pmin[k] > g.pmax[k] || g.pmin[k] == kUnbounded ||
          g.pmax[k] == -kUnbounded)
        throw ValidationError(name + ": pmin > pmax on phase " + phase_name(k));
      if (std::isnan(g.qmin[k]) || std::isnan(g.qmax[k]) || g.qmin[k] > g.qmax[k] || g.qmin[k] == kUnbounded ||
          g.qmax[k] == -kUnbounded)
        throw ValidationError(name + ": qmin > qmax on phase " + phase_name(k));
    }
    if (!(g.marginal_cost >= 0.0) || !std::isfinite(g.marginal_cost))
      throw ValidationError(name + ": marginal cost must be finite and nonnegative");
    if (g.balanced) {
      if (!(g.phases[0] && g.phases[1] && g.phases[2]))
        throw ValidationError(name + ": a balanced generator must connect all three phases");
      for (int k = 1; k < 3; ++k)
        if (g.pmin[k] != g.pmin[0] || g.pmax[k] != g.pmax[0] || g.qmin[k] != g.qmin[0] || g.qmax[k] != g.qmax[0])
          throw ValidationError(name + ": a balanced generator needs identical bounds on every phase");
      if (g.is_substation) throw ValidationError(name + ": the substation cannot be flagged balanced");
    }
    if (g.is_substation) {
      ++substations;
      net.substation_bus = g.bus;
    }
  }
  if (substations != 1)
    throw ValidationError("exactly one substation generator is required, found " + std::to_string(substations));
  net.substation_index = net.bus_lookup.at(net.substation_bus);
  for (const auto& g : net.gens)
    if (g.bus == net.substation_bus && !g.is_substation)
      throw ValidationError("generator at substation bus '" + g.bus + "' must be the substation source");

  // Connectivity from the substation.
  const auto n = net.buses.size();
  std::vector<std::vector<int>> adj(n);
  for (const auto& line : net.lines) {
    const int a = net.bus_lookup.at(line.from);
    const int b = net.bus_lookup.at(line.to);
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<char> reached(n, 0);
  std::queue<int> frontier;
  frontier.push(net.substation_index);
  reached[net.substation_index] = 1;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int w : adj[u])
      if (!reached[w]) {
        reached[w] = 1;
        frontier.push(w);
      }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!reached[i]) throw ValidationError("bus '" + net.buses[i].id + "' is not connected to the substation");

  auto& ub = net.unbalance;
  if (ub.mode == UnbalanceMode::kHard && !(ub.vuf_limit_pct > 0.0))
    throw ValidationError("hard unbalance mode requires limit_pct > 0");
  if (ub.mode == UnbalanceMode::kSoft && !(ub.penalty_weight >= 0.0 && std::isfinite(ub.penalty_weight)))
    throw ValidationError("soft unbalance mode requires penalty >= 0");
  std::unordered_set<std::string> subset;
  for (const auto& id : ub.buses) {
    require_bus(id, "unbalance subset");
    if (!subset.insert(id).second) throw ValidationError("unbalance subset lists bus '" + id + "' twice");
  }
  // An omitted subset means every load-side bus.
  if (ub.buses.empty())
    for (const auto& bus : net.buses)
      if (bus.id != net.substation_bus) ub.buses.push_back(bus.id);
}

NetworkSpec parse_network(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed network JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("network document must be a JSON object");

  NetworkSpec net;
  try {
    net.base_kva = number_or(doc, "base_kva", 0.0);
    net.base_volt_ln = number_or(doc, "base_volt_ln", 0.0);
    if (!(net.base_kva > 0.0) || !(net.base_volt_ln > 0.0))
      throw ValidationError("base_kva and base_volt_ln must be positive");
    const double sbase = net.base_kva;
    const double zbase = net.base_impedance_ohm();

    for (const auto& b : doc.at("buses")) {
      BusSpec bus;
      const auto& id = b.at("id");
      bus.id = id.is_string() ? id.get<std::string>() : id.dump();
      bus.vmin = number_or(b, "vmin", 0.9);
      bus.vmax = number_or(b, "vmax", 1.1);
      net.buses.push_back(std::move(bus));
    }
    auto id_of = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (doc.contains("lines"))
      for (const auto& l : doc.at("lines")) {
        LineSpec line;
        line.from = id_of(l.at("from"));
        line.to = id_of(l.at("to"));
        const Eigen::Matrix3d re = matrix3(l, "z_real");
        const Eigen::Matrix3d im = matrix3(l, "z_imag");
        line.z.real() = re / zbase;
        line.z.imag() = im / zbase;
        const double rating = number_or(l, "s_rating", kUnbounded);
        line.s_rating = std::isfinite(rating) ? rating / sbase : rating;
        net.lines.push_back(std::move(line));
      }
    if (doc.contains("loads"))
      for (const auto& l : doc.at("loads")) {
        LoadSpec load;
        load.bus = id_of(l.at("bus"));
        load.p = phase_array(l, "p", std::nan(""), 0.0);
        load.q = phase_array(l, "q", std::nan(""), 0.0);
        for (int k = 0; k < 3; ++k) {
          load.p[k] /= sbase;
          load.q[k] /= sbase;
        }
        net.loads.push_back(std::move(load));
      }
    for (const auto& g : doc.at("gens")) {
      GenSpec gen;
      gen.bus = id_of(g.at("bus"));
      const std::string phases = g.contains("phases") ? g.at("phases").get<std::string>() : "abc";
      gen.phases = {false, false, false};
      for (char c : phases) {
        if (c < 'a' || c > 'c') throw ParseError("generator phases must be drawn from 'abc'");
        gen.phases[c - 'a'] = true;
      }
      gen.pmin = phase_array(g, "pmin", -kUnbounded, 0.0);
      gen.pmax = phase_array(g, "pmax", kUnbounded, 0.0);
      gen.qmin = phase_array(g, "qmin", -kUnbounded, 0.0);
      gen.qmax = phase_array(g, "qmax", kUnbounded, 0.0);
      for (auto* arr : {&gen.pmin, &gen.pmax, &gen.qmin, &gen.qmax})
        for (double& v : *arr)
          if (std::isfinite(v)) v /= sbase;
      gen.marginal_cost = number_or(g, "cost", 0.0);
      gen.is_substation = g.contains("is_substation") && g.at("is_substation").get<bool>();
      gen.balanced = g.contains("balanced") && g.at("balanced").get<bool>();
      net.gens.push_back(std::move(gen));
    }
    if (doc.contains("unbalance")) {
      const auto& u = doc.at("unbalance");
      net.unbalance.mode = parse_mode(u.value("mode", std::string("none")));
      net.unbalance.vuf_limit_pct = number_or(u, "limit_pct", 0.0);
      net.unbalance.penalty_weight = number_or(u, "penalty", 0.0);
      net.unbalance.penalty_on = parse_penalty_on(u.value("penalty_on", std::string("f")));
      if (u.contains("buses"))
        for (const auto& b : u.at("buses")) net.unbalance.buses.push_back(id_of(b));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("network schema error: ") + e.what());
  }
  finalize_network(net);
  return net;
}

NetworkSpec load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open network file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_network(buf.str());
}

std::string serialize_network(const NetworkSpec& net) {
  const double sbase = net.base_kva;
  const double zbase = net.base_impedance_ohm();
  json doc;
  doc["base_kva"] = net.base_kva;
  doc["base_volt_ln"] = net.base_volt_ln;
  doc["buses"] = json::array();
  for (const auto& b : net.buses) doc["buses"].push_back({{"id", b.id}, {"vmin", b.vmin}, {"vmax", b.vmax}});
  doc["lines"] = json::array();
  for (const auto& l : net.lines) {
    json re = json::array(), im = json::array();
    for (int r = 0; r < 3; ++r) {
      json rr = json::array(), ii = json::array();
      for (int c = 0; c < 3; ++c) {
        rr.push_back(l.z(r, c).real() * zbase);
        ii.push_back(l.z(r, c).imag() * zbase);
      }
      re.push_back(rr);
      im.push_back(ii);
    }
    doc["lines"].push_back({{"from", l.from},
                            {"to", l.to},
                            {"z_real", re},
                            {"z_imag", im},
                            {"s_rating", bound_json(std::isfinite(l.s_rating) ? l.s_rating * sbase : l.s_rating)}});
  }
  doc["loads"] = json::array();
  for (const auto& l : net.loads)
    doc["loads"].push_back({{"bus", l.bus}, {"p", phase_json(l.p, sbase)}, {"q", phase_json(l.q, sbase)}});
  doc["gens"] = json::array();
  for (const auto& g : net.gens) {
    std::string phases;
    for (int k = 0; k < 3; ++k)
      if (g.phases[k]) phases += phase_name(k);
    doc["gens"].push_back({{"bus", g.bus},
                           {"phases", phases},
                           {"pmin", phase_json(g.pmin, sbase)},
                           {"pmax", phase_json(g.pmax, sbase)},
                           {"qmin", phase_json(g.qmin, sbase)},
                           {"qmax", phase_json(g.qmax, sbase)},
                           {"cost", g.marginal_cost},
                           {"is_substation", g.is_substation},
                           {"balanced", g.balanced}});
  }
  doc["unbalance"] = {{"mode", to_string(net.unbalance.mode)},
                      {"limit_pct", net.unbalance.vuf_limit_pct},
                      {"penalty", net.unbalance.penalty_weight},
                      {"penalty_on", to_string(net.unbalance.penalty_on)},
                      {"buses", net.unbalance.buses}};
  return doc.dump(2);
}

}  // namespace vudlmp
