#include "optleach/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace optleach {

namespace {

// Independent random streams, derived from the scenario seed.
enum Stream : std::uint64_t {
  kPlacement = 1,
  kRssi = 2,
  kStartup = 3,
  kCampaign = 4,
  kAco = 5,
  kLeach = 6,
  kMonitor = 7,
  kLinkQuality = 8,
};


void charge(SimState& s, int id, EnergyKind kind, double bits, double distance) {
  const EnergyModel& m = s.cfg.energy;
  double joules = 0.0;
  switch (kind) {
    case EnergyKind::TxData:
    case EnergyKind::TxControl:
      joules = tx_energy(m, bits, distance);
      break;
    case EnergyKind::RxData:
    case EnergyKind::RxControl:
      joules = rx_energy(m, bits);
      break;
    case EnergyKind::Aggregate:
      joules = bits * s.cfg.aggregation_energy;
      break;
  }
  NodeState& node = s.net.nodes[id];
  EnergyEvent ev{id, kind, bits, distance, joules, 0.0, !node.alive};
  if (node.alive) {
    const double before = node.e_res;
    node = drain(node, joules, s.cfg.death_threshold);
    ev.applied = before - node.e_res;
  }
  s.ledger.push_back(ev);
}

// Sends one packet over a single hop. The receiver is charged only when
// it is a node; the sink has an unlimited supply. Returns false if the
// packet is lost because either end is dead.
bool hop(SimState& s, int from, int to, EnergyKind tx_kind, double bits) {
  if (!s.net.nodes[from].alive) {
    return false;
  }
  const bool to_sink = to == s.net.sink.id;
  const Vec2 target = to_sink ? s.net.sink.position : s.net.nodes[to].position;
  charge(s, from, tx_kind, bits, euclidean_distance(s.net.nodes[from].position, target));
  if (to_sink) {
    return true;
  }
  if (!s.net.nodes[to].alive) {
    return false;
  }
  const EnergyKind rx_kind =
      tx_kind == EnergyKind::TxControl ? EnergyKind::RxControl : EnergyKind::RxData;
  charge(s, to, rx_kind, bits, 0.0);
  return true;
}

RoundMetrics finish_round(SimState& s) {
  RoundMetrics m;
  m.round = s.round;
  m.packets_delivered = s.packets_delivered;
  m.dead_nodes = s.net.dead_count();
  m.total_energy = s.net.total_energy();
  if (m.dead_nodes > 0 && s.first_dead_round < 0) {
    s.first_dead_round = s.round;
  }
  return m;
}

void begin_round(SimState& s) {
  if (s.net.alive_count() == 0) {
    throw DomainError("run_round: every node is dead");
  }
  ++s.round;
  s.ledger.clear();
}

void monitor_readings(SimState& s) {
  if (!s.cfg.monitor.enabled) {
    return;
  }
  Rng rng = s.rng.split(kMonitor).split(static_cast<std::uint64_t>(s.round));
  for (const auto& n : s.net.nodes) {
    if (!n.alive) {
      continue;
    }
    const double reading = rng.normal(s.cfg.monitor.reading_mean, s.cfg.monitor.reading_std);
    if (monitoring_dispatch(reading, s.cfg.monitor.margin) == MonitorMode::Reactive) {
      ++s.monitor.reactive;
    } else {
      ++s.monitor.proactive;
    }
  }
}

void assign_roles(SimState& s, const std::vector<int>& heads) {
  for (auto& n : s.net.nodes) {
    n.role = Role::Member;
  }
  for (int h : heads) {
    s.net.nodes[h].role = Role::ClusterHead;
  }
}

ChElectionParams effective_election(const ScenarioConfig& cfg) {
  ChElectionParams e = cfg.election;
  if (e.p <= 0.0) {
    e.p = std::clamp(static_cast<double>(cfg.ch_count) / cfg.node_count, 1e-9, 1.0);
  }
  return e;
}

double leach_probability(const ScenarioConfig& cfg) {
  if (cfg.leach.p > 0.0) {
    return cfg.leach.p;
  }
  return std::clamp(static_cast<double>(cfg.ch_count) / cfg.node_count, 1e-9, 1.0);
}

// --- optimised protocol ----------------------------------------------------

bool layout_needs_election(const SimState& s) {
  if (s.layout.heads.empty()) {
    return true;
  }
  for (int h : s.layout.heads) {
    if (!s.net.nodes[h].alive) {
      return true;
    }
  }
  return false;
}

void run_campaign(SimState& s) {
  ++s.campaigns;
  // The sink announces the new heads and boundaries to every node.
  for (const auto& n : s.net.nodes) {
    if (n.alive) {
      charge(s, n.id, EnergyKind::RxControl, s.cfg.control_bits, 0.0);
    }
  }
  select_cluster_heads(s.layout, s.net, s.election, &s.log);
  if (s.layout.heads.empty()) {
    return;
  }
  VoronoiParams vp = s.cfg.voronoi;
  vp.alpha = s.alpha;
  auto conv = converge_alpha(s.net, s.layout, s.est_dist, vp);
  if (!conv.converged) {
    s.log.push_back("round " + std::to_string(s.round) + ": alpha did not converge");
  }
  s.alpha = conv.alpha;
  s.layout = std::move(conv.layout);
  assign_roles(s, s.layout.heads);
  route_inter_cluster(s);
}

// Members route their reading to the head; returns how many arrived.
int collect_cluster(SimState& s, int cluster) {
  const int head = s.layout.heads[cluster];
  const double bits = s.cfg.energy.packet_bits;
  std::vector<int> members;
  for (int id : s.layout.members(cluster)) {
    if (s.net.nodes[id].alive && id != head) {
      members.push_back(id);
    }
  }
  if (members.empty()) {
    s.selected_branch[cluster] = Branch{{head}, 0.0};
    return 0;
  }
  ClusterGraphOptions opt;
  opt.comm_range = s.cfg.comm_range;
  opt.cost = s.cfg.cost;
  opt.quality = LinkQualityModel{s.cfg.comm_range, s.cfg.lqi_noise};
  opt.rssi = s.cfg.rssi;
  opt.bridge_to_head = true;
  Rng lq = s.rng.split(kLinkQuality).split(static_cast<std::uint64_t>(s.round) * 65536 + cluster);
  ClusterGraph graph = build_cluster_graph(s.net, members, head, opt, &lq);
  const RouteTable routes = all_pairs_routes(graph);
  s.selected_branch[cluster] = select_branch(build_branches(graph));
  int arrived = 0;
  for (int local = 0; local < graph.size(); ++local) {
    if (local == graph.head) {
      continue;
    }
    bool ok = true;
    for (int u = local; u != graph.head && ok; u = routes.next[u]) {
      ok = hop(s, graph.vertices[u], graph.vertices[routes.next[u]], EnergyKind::TxData, bits);
    }
    if (ok) {
      ++arrived;
    }
  }
  return arrived;
}

// Heads fuse their cluster's readings, then push one packet each along the
// routing tree, deepest heads first; a relaying head fuses what it receives
// into its own packet.
void forward_inter_cluster(SimState& s, const std::vector<int>& payload) {
  const ChGraph& g = s.ch_graph;
  const int sink = g.sink();
  const double bits = s.cfg.energy.packet_bits;
  auto next_of = [&](int v) { return s.tree.next_hop[v] >= 0 ? s.tree.next_hop[v] : sink; };
  std::vector<int> depth(g.size(), 0);
  for (int v = 0; v < sink; ++v) {
    int d = 0;
    for (int u = v; u != sink && d <= g.size(); u = next_of(u)) {
      ++d;
    }
    depth[v] = d;
  }
  std::vector<int> order(sink);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return depth[a] > depth[b]; });

  std::vector<long> carried(g.size(), 0);
  std::vector<int> inbound(g.size(), 0);
  for (int v = 0; v < sink; ++v) {
    carried[v] = payload[v];
  }
  for (int v : order) {
    const int id = g.ids[v];
    if (!s.net.nodes[id].alive) {
      continue;
    }
    charge(s, id, EnergyKind::Aggregate, bits * (payload[v] + inbound[v] + 1), 0.0);
    const int next = next_of(v);
    if (!hop(s, id, g.ids[next], EnergyKind::TxData, bits)) {
      continue;
    }
    if (next == sink) {
      s.packets_delivered += static_cast<std::uint64_t>(carried[v]);
    } else {
      carried[next] += carried[v];
      ++inbound[next];
    }
  }
}

// --- LEACH family ----------------------------------------------------------

std::vector<int> leach_elect(SimState& s, bool energy_aware) {
  const double p = leach_probability(s.cfg);
  const int epoch = static_cast<int>(std::ceil(1.0 / p - 1e-12));
  const int r = s.round - 1;
  const int epoch_start = r - r % epoch;
  Rng rng = s.rng.split(kLeach).split(static_cast<std::uint64_t>(s.round));
  std::vector<int> heads;
  for (const auto& n : s.net.nodes) {
    if (!n.alive) {
      continue;
    }
    const double u = rng.uniform();  // drawn for every alive node to keep streams aligned
    if (s.last_ch_round[n.id] >= epoch_start) {
      continue;  // already served this epoch
    }
    const double threshold = energy_aware ? ch_threshold(p, r, n.e_res, n.e_0)
                                          : ch_threshold(p, r, 1.0, 1.0);
    if (u < threshold) {
      heads.push_back(n.id);
      s.last_ch_round[n.id] = r;
    }
  }
  return heads;
}

RoundMetrics leach_family_round(SimState& s, bool eee) {
  begin_round(s);
  const double bits = s.cfg.energy.packet_bits;
  const double ctrl = s.cfg.control_bits;
  const int sink = s.net.sink.id;
  const std::vector<int> heads = leach_elect(s, eee);
  assign_roles(s, heads);

  if (heads.empty()) {
    for (const auto& n : s.net.nodes) {
      if (n.alive && hop(s, n.id, sink, EnergyKind::TxData, bits)) {
        ++s.packets_delivered;
      }
    }
    monitor_readings(s);
    return finish_round(s);
  }

  auto dist = [&](int a, int b) {
    return euclidean_distance(s.net.nodes[a].position, s.net.nodes[b].position);
  };

  // Set-up: advertisements reach every alive node, members join the nearest head.
  std::vector<int> alive;
  for (const auto& n : s.net.nodes) {
    if (n.alive) {
      alive.push_back(n.id);
    }
  }
  for (int h : heads) {
    double reach = 0.0;
    for (int id : alive) {
      reach = std::max(reach, dist(h, id));
    }
    charge(s, h, EnergyKind::TxControl, ctrl, reach);
  }
  std::vector<int> head_of(s.net.nodes.size(), -1);
  for (int id : alive) {
    if (s.net.nodes[id].role == Role::ClusterHead) {
      continue;
    }
    for (std::size_t k = 0; k < heads.size(); ++k) {
      charge(s, id, EnergyKind::RxControl, ctrl, 0.0);
    }
    int best = heads.front();
    for (int h : heads) {
      if (dist(id, h) < dist(id, best)) {
        best = h;
      }
    }
    head_of[id] = best;
    hop(s, id, best, EnergyKind::TxControl, ctrl);
  }
  for (int h : heads) {
    double reach = 0.0;
    for (int id : alive) {
      if (head_of[id] == h) {
        reach = std::max(reach, dist(h, id));
      }
    }
    charge(s, h, EnergyKind::TxControl, ctrl, reach);
    for (int id : alive) {
      if (head_of[id] == h) {
        charge(s, id, EnergyKind::RxControl, ctrl, 0.0);
      }
    }
  }

  // Steady phase: single hop to the head, fused packet out of the head.
  std::vector<int> received(s.net.nodes.size(), 0);
  for (int id : alive) {
    if (head_of[id] >= 0 && hop(s, id, head_of[id], EnergyKind::TxData, bits)) {
      ++received[head_of[id]];
    }
  }
  for (int h : heads) {
    charge(s, h, EnergyKind::Aggregate, bits * (received[h] + 1), 0.0);
  }

  if (!eee) {
    for (int h : heads) {
      if (hop(s, h, sink, EnergyKind::TxData, bits)) {
        s.packets_delivered += static_cast<std::uint64_t>(received[h]);
      }
    }
    monitor_readings(s);
    return finish_round(s);
  }

  // LEACH-EEE: the most energetic heads become super heads, the rest send
  // their fused packet to the nearest super head, which fuses again.
  std::vector<int> ranked = heads;
  std::stable_sort(ranked.begin(), ranked.end(), [&](int a, int b) {
    return s.net.nodes[a].e_res > s.net.nodes[b].e_res;
  });
  const int n_super = std::clamp(
      static_cast<int>(std::lround(s.cfg.leach.super_fraction * static_cast<double>(heads.size()))), 1,
      static_cast<int>(heads.size()));
  std::vector<int> supers(ranked.begin(), ranked.begin() + n_super);
  std::sort(supers.begin(), supers.end());
  std::vector<char> is_super(s.net.nodes.size(), 0);
  for (int h : supers) {
    is_super[h] = 1;
  }
  for (int sh : supers) {
    double reach = 0.0;
    for (int h : heads) {
      reach = std::max(reach, dist(sh, h));
    }
    charge(s, sh, EnergyKind::TxControl, ctrl, reach);
  }
  std::vector<int> inbound(s.net.nodes.size(), 0);
  std::vector<long> carried(received.begin(), received.end());
  for (int h : heads) {
    if (is_super[h]) {
      continue;
    }
    for (std::size_t k = 0; k < supers.size(); ++k) {
      charge(s, h, EnergyKind::RxControl, ctrl, 0.0);
    }
    int best = supers.front();
    for (int sh : supers) {
      if (dist(h, sh) < dist(h, best)) {
        best = sh;
      }
    }
    if (hop(s, h, best, EnergyKind::TxData, bits)) {
      ++inbound[best];
      carried[best] += received[h];
    }
  }
  for (int sh : supers) {
    if (inbound[sh] > 0) {
      charge(s, sh, EnergyKind::Aggregate, bits * (inbound[sh] + 1), 0.0);
    }
    if (hop(s, sh, sink, EnergyKind::TxData, bits)) {
      s.packets_delivered += static_cast<std::uint64_t>(carried[sh]);
    }
  }
  monitor_readings(s);
  return finish_round(s);
}

}  // namespace

const char* to_string(Protocol p) noexcept {
  switch (p) {
    case Protocol::Leach:
      return "leach";
    case Protocol::LeachEee:
      return "leach-eee";
    case Protocol::Optimized:
      return "optimized";
  }
  return "unknown";
}

Protocol protocol_from_string(const std::string& name) {
  if (name == "leach") return Protocol::Leach;
  if (name == "leach-eee") return Protocol::LeachEee;
  if (name == "optimized") return Protocol::Optimized;
  throw ConfigError("unknown protocol '" + name + "' (expected leach, leach-eee or optimized)");
}

const char* to_string(EnergyKind kind) noexcept {
  switch (kind) {
    case EnergyKind::TxData:
      return "tx_data";
    case EnergyKind::RxData:
      return "rx_data";
    case EnergyKind::TxControl:
      return "tx_control";
    case EnergyKind::RxControl:
      return "rx_control";
    case EnergyKind::Aggregate:
      return "aggregate";
  }
  return "unknown";
}

void ScenarioConfig::validate() const {
  if (ch_count < 1 || node_count < ch_count) {
    throw ConfigError("require node_count >= ch_count >= 1");
  }
  if (rounds_max < 0) {
    throw ConfigError("rounds_max must be non-negative");
  }
  if (!(field_dims.width > 0.0) || !(field_dims.height > 0.0)) {
    throw ConfigError("field dimensions must be positive");
  }
  if (!(initial_energy > 0.0) || death_threshold < 0.0 || death_threshold >= initial_energy) {
    throw ConfigError("require initial_energy > death_threshold >= 0");
  }
  if (!(comm_range > 0.0) || control_bits < 0 || aggregation_energy < 0.0 ||
      inter_cluster_range < 0.0 || rounds_per_campaign < 1 || lqi_noise < 0.0) {
    throw ConfigError("invalid range, bit count or campaign period");
  }
  if (leach.p < 0.0 || leach.p > 1.0 || !(leach.super_fraction > 0.0 && leach.super_fraction <= 1.0)) {
    throw ConfigError("leach.p must lie in [0, 1] and super_fraction in (0, 1]");
  }
  if (!(monitor.margin.low <= monitor.margin.high) || monitor.reading_std < 0.0) {
    throw ConfigError("monitor margin must satisfy low <= high");
  }
  try {
    energy.validate();
    ChElectionParams e = election;
    if (e.p <= 0.0) {
      e.p = 0.5;  // resolved from the counts at init
    }
    e.validate();
    voronoi.validate();
    aco.validate();
    cost.validate();
  } catch (const DomainError& ex) {
    throw ConfigError(ex.what());
  }
  const bool inside_x = sink.x >= 0.0 && sink.x <= field_dims.width;
  const bool inside_y = sink.y >= 0.0 && sink.y <= field_dims.height;
  if (inside_x && inside_y) {
    throw ConfigError("the sink must be placed outside the sensor field");
  }
}

double MonitorStats::mean_latency_rounds() const {
  const auto total = reactive + proactive;
  return total == 0 ? 0.0 : static_cast<double>(proactive) / static_cast<double>(total);
}

void route_inter_cluster(SimState& s) {
  ChGraph g;
  for (int h : s.layout.heads) {
    g.ids.push_back(h);
    g.positions.push_back(s.net.nodes[h].position);
    g.energy.push_back(s.net.nodes[h].e_res);
  }
  g.ids.push_back(s.net.sink.id);
  g.positions.push_back(s.net.sink.position);
  g.energy.push_back(0.0);
  g.adjacency.assign(g.ids.size(), {});

  double range = s.cfg.inter_cluster_range;
  if (range <= 0.0) {
    double extent = 0.0;
    for (int c = 0; c < s.layout.cluster_count(); ++c) {
      for (int id : s.layout.members(c)) {
        extent = std::max(extent, euclidean_distance(s.net.nodes[id].position,
                                                     s.net.nodes[s.layout.heads[c]].position));
      }
    }
    range = extent > 0.0 ? 2.0 * extent : s.cfg.comm_range;
  }
  const int sink = g.sink();
  for (int i = 0; i < sink; ++i) {
    g.add_edge(i, sink);  // every head has a long-range uplink
    for (int j = i + 1; j < sink; ++j) {
      if (g.distance(i, j) <= range) {
        g.add_edge(i, j);
      }
    }
  }
  s.ch_graph = g;
  Rng rng = s.rng.split(kAco).split(static_cast<std::uint64_t>(s.campaigns));
  AcoResult res = run_aco(g, s.cfg.energy, s.cfg.aco, rng);
  s.tree = std::move(res.tree);
  s.last_aco_trace = std::move(res.cost_trace);
  for (auto& line : res.log) {
    s.log.push_back("aco: " + line);
  }
  s.selected_branch.assign(s.layout.heads.size(), Branch{});
}

SimState init_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  SimState s;
  s.cfg = cfg;
  s.rng = Rng(cfg.seed);
  s.net.field = cfg.field_dims;

  Rng place = s.rng.split(kPlacement);
  s.net.nodes.resize(cfg.node_count);
  for (int id = 0; id < cfg.node_count; ++id) {
    NodeState& n = s.net.nodes[id];
    n.id = id;
    n.position = {place.uniform(0.0, cfg.field_dims.width), place.uniform(0.0, cfg.field_dims.height)};
    n.e_0 = cfg.initial_energy;
    n.e_res = cfg.initial_energy;
    n.alive = true;
    n.role = Role::Member;
  }
  s.net.sink = NodeState{cfg.node_count, cfg.sink, 0.0, 0.0, true, Role::Sink};
  if (!is_connected(s.net, cfg.comm_range)) {
    throw SetupError("node graph is disconnected at comm_range=" + std::to_string(cfg.comm_range) +
                     " m; increase the communication range");
  }
  s.last_ch_round.assign(cfg.node_count, std::numeric_limits<int>::min() / 2);
  s.election = effective_election(cfg);
  s.alpha = cfg.voronoi.alpha;

  Rng rssi = s.rng.split(kRssi);
  s.est_dist = approximate_distances(s.net, cfg.rssi, rssi);

  if (cfg.protocol == Protocol::Optimized) {
    Rng startup = s.rng.split(kStartup);
    s.layout = initial_layout(s.net, s.est_dist, cfg.ch_count, cfg.voronoi, startup);
    assign_roles(s, s.layout.heads);
    route_inter_cluster(s);
  }
  return s;
}

bool is_network_dead(const SimState& state) {
  const int n = static_cast<int>(state.net.nodes.size());
  const int half = (n + 1) / 2;
  return n > 0 && state.net.dead_count() >= half;
}

RoundMetrics run_optimized_round(SimState& s) {
  begin_round(s);
  bool campaign = layout_needs_election(s);
  const bool periodic = s.round > 1 && (s.round - 1) % s.cfg.rounds_per_campaign == 0;
  if (periodic) {
    Rng trigger = s.rng.split(kCampaign).split(static_cast<std::uint64_t>(s.round));
    // Drawn every period so the stream does not depend on forced campaigns.
    const bool fired = campaign_trigger(trigger, s.cfg.election.campaign_threshold);
    campaign = campaign || fired;
  }
  if (campaign) {
    run_campaign(s);
  }
  if (s.selected_branch.size() != s.layout.heads.size()) {
    s.selected_branch.assign(s.layout.heads.size(), Branch{});
  }
  std::vector<int> payload(s.ch_graph.size(), 0);
  for (int c = 0; c < s.layout.cluster_count(); ++c) {
    const int arrived = collect_cluster(s, c);
    for (int v = 0; v < s.ch_graph.sink(); ++v) {
      if (s.ch_graph.ids[v] == s.layout.heads[c]) {
        payload[v] = arrived;
      }
    }
  }
  forward_inter_cluster(s, payload);
  monitor_readings(s);
  return finish_round(s);
}

RoundMetrics baseline_leach_round(SimState& state) { return leach_family_round(state, false); }

RoundMetrics baseline_leach_eee_round(SimState& state) { return leach_family_round(state, true); }

RoundMetrics run_round(SimState& state) {
  switch (state.cfg.protocol) {
    case Protocol::Leach:
      return baseline_leach_round(state);
    case Protocol::LeachEee:
      return baseline_leach_eee_round(state);
    case Protocol::Optimized:
      return run_optimized_round(state);
  }
  throw DomainError("run_round: unknown protocol");
}

RunResult run_simulation(const ScenarioConfig& cfg) {
  SimState state = init_scenario(cfg);
  RunResult out;
  while (state.round < cfg.rounds_max && !is_network_dead(state) && state.net.alive_count() > 0) {
    out.series.push_back(run_round(state));
  }
  RunSummary& sum = out.summary;
  if (state.first_dead_round >= 0) {
    sum.first_dead_round = state.first_dead_round;
  }
  if (is_network_dead(state)) {
    sum.death_round = state.round;
  }
  sum.total_packets = state.packets_delivered;
  sum.rounds_run = state.round;
  sum.seed = cfg.seed;
  sum.protocol = cfg.protocol;
  sum.final_energy = state.net.total_energy();
  sum.monitor = state.monitor;
  return out;
}

}  // namespace optleach
