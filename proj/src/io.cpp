#include "optleach/io.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <type_traits>

#include "json.hpp"

namespace optleach {

using json = nlohmann::ordered_json;

namespace {

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw ConfigError(where() + " must be an object");
    }
  }

  template <class T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) {
      return;
    }
    seen_.insert(key);
    const json& v = j_.at(key);
    const std::string name = where(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(name + " must be a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) throw ConfigError(name + " must be a non-negative integer");
      out = v.get<T>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(name + " must be an integer");
      const auto wide = v.get<std::int64_t>();
      if (wide < std::numeric_limits<T>::min() || wide > std::numeric_limits<T>::max()) {
        throw ConfigError(name + " is out of range");
      }
      out = static_cast<T>(wide);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(name + " must be a number");
      out = v.get<T>();
    } else {
      if (!v.is_string()) throw ConfigError(name + " must be a string");
      out = v.get<T>();
    }
  }

  template <class F>
  void child(const char* key, F&& fill) {
    if (!j_.contains(key)) {
      return;
    }
    seen_.insert(key);
    Reader sub(j_.at(key), where(key));
    fill(sub);
    sub.finish();
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) {
        throw ConfigError("unknown config key " + where(k.c_str()));
      }
    }
  }

 private:
  std::string where(const char* key = nullptr) const {
    std::string base = path_.empty() ? "<root>" : path_;
    return key ? (path_.empty() ? std::string(key) : path_ + "." + key) : base;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

ScenarioConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ScenarioConfig c;
  Reader r(j, "");
  r.get("node_count", c.node_count);
  r.get("ch_count", c.ch_count);
  r.child("field_dims", [&](Reader& f) {
    f.get("width", c.field_dims.width);
    f.get("height", c.field_dims.height);
  });
  r.child("sink", [&](Reader& f) {
    f.get("x", c.sink.x);
    f.get("y", c.sink.y);
  });
  r.get("seed", c.seed);
  r.get("rounds_max", c.rounds_max);
  if (j.contains("protocol")) {
    std::string name;
    r.get("protocol", name);
    c.protocol = protocol_from_string(name);
  }
  r.get("initial_energy", c.initial_energy);
  r.get("death_threshold", c.death_threshold);
  r.get("comm_range", c.comm_range);
  r.child("energy", [&](Reader& f) {
    f.get("e_elec", c.energy.e_elec);
    f.get("e_amp", c.energy.e_amp);
    f.get("path_loss_exp", c.energy.path_loss_exp);
    f.get("packet_bits", c.energy.packet_bits);
  });
  r.get("control_bits", c.control_bits);
  r.get("aggregation_energy", c.aggregation_energy);
  r.child("rssi", [&](Reader& f) {
    f.get("p0_dbm", c.rssi.p0_dbm);
    f.get("d0", c.rssi.d0);
    f.get("path_loss_n", c.rssi.path_loss_n);
    f.get("noise_db", c.rssi.noise_db);
  });
  r.child("election", [&](Reader& f) {
    f.get("p", c.election.p);
    f.get("r", c.election.r);
    f.get("campaign_threshold", c.election.campaign_threshold);
  });
  r.child("voronoi", [&](Reader& f) {
    f.get("alpha", c.voronoi.alpha);
    f.get("tol", c.voronoi.tol);
    f.get("max_iter", c.voronoi.max_iter);
    f.get("radius_floor", c.voronoi.radius_floor);
  });
  r.child("aco", [&](Reader& f) {
    f.get("alpha_exp", c.aco.alpha_exp);
    f.get("beta_exp", c.aco.beta_exp);
    f.get("gamma_norm", c.aco.gamma_norm);
    f.get("lambda_norm", c.aco.lambda_norm);
    f.get("n_ants", c.aco.n_ants);
    f.get("n_iter", c.aco.n_iter);
    f.get("tau_init", c.aco.tau_init);
    f.get("tau_min", c.aco.tau_min);
  });
  r.get("inter_cluster_range", c.inter_cluster_range);
  r.child("cost", [&](Reader& f) { f.get("mu", c.cost.mu); });
  r.get("lqi_noise", c.lqi_noise);
  r.child("monitor", [&](Reader& f) {
    f.get("enabled", c.monitor.enabled);
    f.child("margin", [&](Reader& m) {
      m.get("low", c.monitor.margin.low);
      m.get("high", c.monitor.margin.high);
    });
    f.get("reading_mean", c.monitor.reading_mean);
    f.get("reading_std", c.monitor.reading_std);
  });
  r.get("rounds_per_campaign", c.rounds_per_campaign);
  r.child("leach", [&](Reader& f) {
    f.get("p", c.leach.p);
    f.get("super_fraction", c.leach.super_fraction);
  });
  r.finish();
  c.validate();
  return c;
}

std::string config_to_json(const ScenarioConfig& c) {
  json j;
  j["node_count"] = c.node_count;
  j["ch_count"] = c.ch_count;
  j["field_dims"] = {{"width", c.field_dims.width}, {"height", c.field_dims.height}};
  j["sink"] = {{"x", c.sink.x}, {"y", c.sink.y}};
  j["seed"] = c.seed;
  j["rounds_max"] = c.rounds_max;
  j["protocol"] = to_string(c.protocol);
  j["initial_energy"] = c.initial_energy;
  j["death_threshold"] = c.death_threshold;
  j["comm_range"] = c.comm_range;
  j["energy"] = {{"e_elec", c.energy.e_elec},
                 {"e_amp", c.energy.e_amp},
                 {"path_loss_exp", c.energy.path_loss_exp},
                 {"packet_bits", c.energy.packet_bits}};
  j["control_bits"] = c.control_bits;
  j["aggregation_energy"] = c.aggregation_energy;
  j["rssi"] = {{"p0_dbm", c.rssi.p0_dbm},
               {"d0", c.rssi.d0},
               {"path_loss_n", c.rssi.path_loss_n},
               {"noise_db", c.rssi.noise_db}};
  j["election"] = {{"p", c.election.p},
                   {"r", c.election.r},
                   {"campaign_threshold", c.election.campaign_threshold}};
  j["voronoi"] = {{"alpha", c.voronoi.alpha},
                  {"tol", c.voronoi.tol},
                  {"max_iter", c.voronoi.max_iter},
                  {"radius_floor", c.voronoi.radius_floor}};
  j["aco"] = {{"alpha_exp", c.aco.alpha_exp},   {"beta_exp", c.aco.beta_exp},
              {"gamma_norm", c.aco.gamma_norm}, {"lambda_norm", c.aco.lambda_norm},
              {"n_ants", c.aco.n_ants},         {"n_iter", c.aco.n_iter},
              {"tau_init", c.aco.tau_init},     {"tau_min", c.aco.tau_min}};
  j["inter_cluster_range"] = c.inter_cluster_range;
  j["cost"] = {{"mu", c.cost.mu}};
  j["lqi_noise"] = c.lqi_noise;
  j["monitor"] = {{"enabled", c.monitor.enabled},
                  {"margin", {{"low", c.monitor.margin.low}, {"high", c.monitor.margin.high}}},
                  {"reading_mean", c.monitor.reading_mean},
                  {"reading_std", c.monitor.reading_std}};
  j["rounds_per_campaign"] = c.rounds_per_campaign;
  j["leach"] = {{"p", c.leach.p}, {"super_fraction", c.leach.super_fraction}};
  return j.dump(2) + "\n";
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("cannot write " + path);
  }
  out << text;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open config " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

void save_config(const ScenarioConfig& cfg, const std::string& path) {
  write_text(path, config_to_json(cfg));
}

void write_metrics_csv(std::ostream& out, const std::vector<RoundMetrics>& series) {
  out << kMetricsHeader << '\n';
  for (const auto& m : series) {
    out << m.round << ',' << m.packets_delivered << ',' << m.dead_nodes << ','
        << fmt_double(m.total_energy) << '\n';
  }
}

std::vector<RoundMetrics> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw Error("metrics csv: unexpected header");
  }
  std::vector<RoundMetrics> out;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    RoundMetrics m;
    unsigned long long packets = 0;
    if (std::sscanf(line.c_str(), "%d,%llu,%d,%lf", &m.round, &packets, &m.dead_nodes,
                    &m.total_energy) != 4) {
      throw Error("metrics csv: malformed row '" + line + "'");
    }
    m.packets_delivered = packets;
    out.push_back(m);
  }
  return out;
}

std::string summary_to_json(const RunSummary& s) {
  json j;
  j["first_dead_round"] = s.first_dead_round ? json(*s.first_dead_round) : json(nullptr);
  j["death_round"] = s.death_round ? json(*s.death_round) : json(nullptr);
  j["total_packets"] = s.total_packets;
  j["seed"] = s.seed;
  j["protocol"] = to_string(s.protocol);
  return j.dump(2) + "\n";
}

RunSummary summary_from_json(const std::string& text) {
  RunSummary s;
  try {
    const json j = json::parse(text);
    if (!j.at("first_dead_round").is_null()) s.first_dead_round = j.at("first_dead_round").get<int>();
    if (!j.at("death_round").is_null()) s.death_round = j.at("death_round").get<int>();
    s.total_packets = j.at("total_packets").get<std::uint64_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.protocol = protocol_from_string(j.at("protocol").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(std::string("summary json: ") + e.what());
  }
  return s;
}

std::string layout_to_json(int round, const ClusterLayout& layout) {
  json j;
  j["round"] = round;
  j["heads"] = layout.heads;
  j["radii"] = layout.radius;
  json assignment = json::object();
  for (std::size_t id = 0; id < layout.assignment.size(); ++id) {
    if (layout.assignment[id] >= 0) {
      assignment[std::to_string(id)] = layout.assignment[id];
    }
  }
  j["assignment"] = std::move(assignment);
  return j.dump() + "\n";
}

std::string tree_to_json(int round, const ChGraph& graph, const RoutingTree& tree) {
  json j;
  j["round"] = round;
  json next = json::object();
  json cost = json::object();
  const int sink = graph.sink();
  for (int v = 0; v < sink; ++v) {
    const std::string key = std::to_string(graph.ids[v]);
    const int hop = v < static_cast<int>(tree.next_hop.size()) ? tree.next_hop[v] : -1;
    if (hop < 0) {
      next[key] = nullptr;
    } else if (hop == sink) {
      next[key] = "sink";
    } else {
      next[key] = graph.ids[hop];
    }
    const double c = v < static_cast<int>(tree.path_cost.size()) ? tree.path_cost[v] : -1.0;
    cost[key] = std::isfinite(c) ? json(c) : json(nullptr);
  }
  j["next_hop"] = std::move(next);
  j["path_cost"] = std::move(cost);
  return j.dump() + "\n";
}

std::string branches_to_json(int round, const ClusterLayout& layout,
                             const std::vector<Branch>& branches) {
  json j;
  j["round"] = round;
  json list = json::array();
  for (std::size_t c = 0; c < branches.size() && c < layout.heads.size(); ++c) {
    list.push_back({{"head", layout.heads[c]}, {"nodes", branches[c].nodes}, {"cost", branches[c].cost}});
  }
  j["branches"] = std::move(list);
  return j.dump() + "\n";
}

}  // namespace optleach
