#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "optleach/aco.hpp"
#include "optleach/clustering.hpp"
#include "optleach/intra_cluster.hpp"
#include "optleach/io.hpp"
#include "optleach/monitor.hpp"
#include "optleach/simulation.hpp"

namespace py = pybind11;
using namespace optleach;

namespace {

py::dict metrics_dict(const RoundMetrics& m) {
  py::dict d;
  d["round"] = m.round;
  d["packets_delivered"] = m.packets_delivered;
  d["dead_nodes"] = m.dead_nodes;
  d["total_energy"] = m.total_energy;
  return d;
}

py::dict summary_dict(const RunSummary& s) {
  py::dict d;
  d["first_dead_round"] = s.first_dead_round ? py::object(py::int_(*s.first_dead_round)) : py::none();
  d["death_round"] = s.death_round ? py::object(py::int_(*s.death_round)) : py::none();
  d["total_packets"] = s.total_packets;
  d["rounds_run"] = s.rounds_run;
  d["seed"] = s.seed;
  d["protocol"] = to_string(s.protocol);
  d["final_energy"] = s.final_energy;
  return d;
}

ScenarioConfig config_of(const std::string& json, const py::kwargs& overrides) {
  ScenarioConfig cfg = json.empty() ? ScenarioConfig{} : config_from_json(json);
  for (auto item : overrides) {
    const auto key = item.first.cast<std::string>();
    if (key == "seed") {
      cfg.seed = item.second.cast<std::uint64_t>();
    } else if (key == "protocol") {
      cfg.protocol = protocol_from_string(item.second.cast<std::string>());
    } else if (key == "rounds_max") {
      cfg.rounds_max = item.second.cast<int>();
    } else if (key == "node_count") {
      cfg.node_count = item.second.cast<int>();
    } else if (key == "ch_count") {
      cfg.ch_count = item.second.cast<int>();
    } else {
      throw ConfigError("unsupported override '" + key + "'; put it in the config JSON");
    }
  }
  cfg.validate();
  return cfg;
}

class Simulation {
 public:
  explicit Simulation(const ScenarioConfig& cfg) : state_(init_scenario(cfg)) {}

  py::dict step() { return metrics_dict(run_round(state_)); }
  bool dead() const { return is_network_dead(state_); }
  int round() const { return state_.round; }
  std::uint64_t packets() const { return state_.packets_delivered; }
  double total_energy() const { return state_.net.total_energy(); }
  std::vector<double> residual_energy() const {
    std::vector<double> out;
    for (const auto& n : state_.net.nodes) out.push_back(n.e_res);
    return out;
  }
  std::vector<std::pair<double, double>> positions() const {
    std::vector<std::pair<double, double>> out;
    for (const auto& n : state_.net.nodes) out.emplace_back(n.position.x, n.position.y);
    return out;
  }
  std::string layout_json() const { return layout_to_json(state_.round, state_.layout); }
  std::string tree_json() const { return tree_to_json(state_.round, state_.ch_graph, state_.tree); }
  std::string branches_json() const {
    return branches_to_json(state_.round, state_.layout, state_.selected_branch);
  }
  double alpha() const { return state_.alpha; }

 private:
  SimState state_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Clustered WSN simulator core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<SetupError>(m, "SetupError", PyExc_RuntimeError);
  py::register_exception<NotReady>(m, "NotReady", PyExc_RuntimeError);
  py::register_exception<TrainingDivergence>(m, "TrainingDivergence", PyExc_ArithmeticError);
  py::register_exception<AssumptionViolation>(m, "AssumptionViolation", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);

  m.def("tx_energy", [](double bits, double distance) { return tx_energy(EnergyModel{}, bits, distance); },
        py::arg("bits"), py::arg("distance"));
  m.def("rx_energy", [](double bits) { return rx_energy(EnergyModel{}, bits); }, py::arg("bits"));
  m.def("ch_threshold", &ch_threshold, py::arg("p"), py::arg("r"), py::arg("e_res"), py::arg("e_0"));
  m.def("cluster_radius", &cluster_radius, py::arg("d"), py::arg("d_max"), py::arg("d_min"),
        py::arg("alpha"));
  m.def(
      "voronoi_partition",
      [](const std::vector<std::tuple<int, double, double, double>>& sites,
         const std::vector<std::tuple<int, double, double>>& nodes, double radius_floor) {
        std::vector<VoronoiSite> s;
        for (const auto& [id, x, y, r] : sites) s.push_back({id, {x, y}, r});
        std::vector<PlacedNode> n;
        for (const auto& [id, x, y] : nodes) n.push_back({id, {x, y}});
        return voronoi_partition(s, n, radius_floor);
      },
      py::arg("sites"), py::arg("nodes"), py::arg("radius_floor") = 0.0,
      "sites: (head_id, x, y, radius); nodes: (id, x, y). Returns a site index per node.");
  m.def("heuristic", &heuristic, py::arg("e_i"), py::arg("d_ij"), py::arg("d_js"), py::arg("d_is"),
        py::arg("lam") = 1.0);
  m.def(
      "transition_probabilities",
      [](const std::vector<double>& tau, const std::vector<double>& eta, double a, double b) {
        return transition_probabilities(tau, eta, a, b);
      },
      py::arg("tau"), py::arg("eta"), py::arg("alpha_exp") = 1.0, py::arg("beta_exp") = 2.0);
  m.def(
      "run_aco",
      [](const std::vector<std::pair<double, double>>& positions, const std::vector<double>& energy,
         const std::vector<std::pair<int, int>>& edges, int n_ants, int n_iter, std::uint64_t seed) {
        ChGraph g;
        for (std::size_t k = 0; k < positions.size(); ++k) {
          g.ids.push_back(static_cast<int>(k));
          g.positions.push_back({positions[k].first, positions[k].second});
          g.energy.push_back(k < energy.size() ? energy[k] : 0.0);
        }
        g.adjacency.assign(g.ids.size(), {});
        for (const auto& [i, j] : edges) g.add_edge(i, j);
        AcoParams p;
        p.n_ants = n_ants;
        p.n_iter = n_iter;
        const AcoResult r = run_aco(g, EnergyModel{}, p, Rng(seed));
        py::dict d;
        d["next_hop"] = r.tree.next_hop;
        d["path_cost"] = r.tree.path_cost;
        d["cost_trace"] = r.cost_trace;
        return d;
      },
      py::arg("positions"), py::arg("energy"), py::arg("edges"), py::arg("n_ants") = 10,
      py::arg("n_iter") = 100, py::arg("seed") = 1,
      "Last position is the sink. Returns the routing tree and per-iteration cost trace.");
  m.def("link_cost", &link_cost, py::arg("n_c"), py::arg("d_c"), py::arg("l_qi"), py::arg("e_res"),
        py::arg("mu") = 0.5);
  m.def(
      "least_cost_routes",
      [](const std::vector<std::vector<double>>& cost, int head) {
        const RouteTable t = all_pairs_routes(make_cluster_graph(static_cast<int>(cost.size()), head, cost));
        return std::make_pair(t.next, t.cost);
      },
      py::arg("cost"), py::arg("head"),
      "Directed cost matrix (inf = no link). Returns (next, cost) toward the head.");
  m.def(
      "monitoring_dispatch",
      [](double reading, double low, double high) {
        return std::string(to_string(monitoring_dispatch(reading, Margin{low, high})));
      },
      py::arg("reading"), py::arg("low"), py::arg("high"));

  m.def("default_config", [] { return config_to_json(ScenarioConfig{}); });
  m.def("validate_config", [](const std::string& json) { return config_to_json(config_from_json(json)); },
        py::arg("json"));
  m.def(
      "run_simulation",
      [](const std::string& json, const py::kwargs& kw) {
        const RunResult r = run_simulation(config_of(json, kw));
        py::list series;
        for (const auto& row : r.series) series.append(metrics_dict(row));
        py::dict d;
        d["series"] = series;
        d["summary"] = summary_dict(r.summary);
        std::ostringstream csv;
        write_metrics_csv(csv, r.series);
        d["csv"] = csv.str();
        return d;
      },
      py::arg("config_json") = "");

  py::class_<Simulation>(m, "Simulation")
      .def(py::init([](const std::string& json, const py::kwargs& kw) { return Simulation(config_of(json, kw)); }),
           py::arg("config_json") = "")
      .def("step", &Simulation::step)
      .def_property_readonly("dead", &Simulation::dead)
      .def_property_readonly("round", &Simulation::round)
      .def_property_readonly("packets", &Simulation::packets)
      .def_property_readonly("total_energy", &Simulation::total_energy)
      .def_property_readonly("alpha", &Simulation::alpha)
      .def("residual_energy", &Simulation::residual_energy)
      .def("positions", &Simulation::positions)
      .def("layout_json", &Simulation::layout_json)
      .def("tree_json", &Simulation::tree_json)
      .def("branches_json", &Simulation::branches_json);

  py::enum_<VisibleKind>(m, "VisibleKind")
      .value("GAUSSIAN", VisibleKind::Gaussian)
      .value("BERNOULLI", VisibleKind::Bernoulli);

  py::class_<RbmLayerParams>(m, "RbmLayer")
      .def(py::init([](const Mat& W, const Vec& a, const Vec& b, const Vec& sigma2, VisibleKind kind) {
             RbmLayerParams p{W, a, b, sigma2, kind};
             p.validate();
             return p;
           }),
           py::arg("W"), py::arg("a"), py::arg("b"), py::arg("sigma2"),
           py::arg("visible") = VisibleKind::Gaussian)
      .def_readwrite("W", &RbmLayerParams::W)
      .def_readwrite("a", &RbmLayerParams::a)
      .def_readwrite("b", &RbmLayerParams::b)
      .def_readwrite("sigma2", &RbmLayerParams::sigma2)
      .def("energy", [](const RbmLayerParams& p, const Vec& v, const Vec& h) { return rbm_energy(v, h, p); })
      .def("p_h_given_v", [](const RbmLayerParams& p, const Vec& v) { return p_h_given_v(v, p); })
      .def("log_likelihood", [](const RbmLayerParams& p, const Mat& batch) { return log_likelihood(batch, p); })
      .def("log_likelihood_grad",
           [](const RbmLayerParams& p, const Mat& batch) { return log_likelihood_grad(batch, p); });

  py::class_<DbnStack>(m, "Dbn")
      .def_readonly("layer_sizes", &DbnStack::layer_sizes)
      .def_readonly("trained", &DbnStack::trained)
      .def("features", py::overload_cast<const Mat&>(&DbnStack::features, py::const_))
      .def("class_probabilities", &DbnStack::class_probabilities)
      .def("save", py::overload_cast<const DbnStack&, const std::string&>(&save_checkpoint))
      .def_static("load", py::overload_cast<const std::string&>(&load_checkpoint));
  m.def(
      "train_dbn",
      [](const Mat& data, const std::vector<int>& sizes, double lr, int epochs, std::uint64_t seed) {
        return train_dbn(data, sizes, CdConfig{lr, 1, 32, epochs}, seed);
      },
      py::arg("data"), py::arg("layer_sizes"), py::arg("lr") = 0.05, py::arg("epochs") = 20,
      py::arg("seed") = 1);
  m.def(
      "fine_tune",
      [](const DbnStack& dbn, const Mat& data, const std::vector<int>& labels, double lr, int epochs) {
        return fine_tune(dbn, data, labels, lr, epochs);
      },
      py::arg("dbn"), py::arg("data"), py::arg("labels"), py::arg("lr") = 2.0, py::arg("epochs") = 300);

  py::class_<CfTree>(m, "CfTree")
      .def(py::init<int, double, int>(), py::arg("dim"), py::arg("threshold"), py::arg("branching") = 8)
      .def("insert", &CfTree::insert, py::arg("point"), py::arg("label") = -1)
      .def_property_readonly("leaf_count", &CfTree::leaf_count)
      .def("centroids",
           [](const CfTree& t) {
             std::vector<Vec> out;
             for (const auto& leaf : t.leaves()) out.push_back(leaf.cf.centroid());
             return out;
           })
      .def("classify", [](const CfTree& t, const Vec& x) {
        const EventDecision d = nearest_leaf(t.leaves(), x);
        return std::make_pair(d.label, d.confidence);
      });
  m.def(
      "classify_event",
      [](const DbnStack& dbn, const CfTree& tree, const Vec& reading) {
        const EventDecision d = classify_event(dbn, tree, reading);
        return std::make_pair(d.label, d.confidence);
      },
      py::arg("dbn"), py::arg("tree"), py::arg("reading"));
  m.def(
      "event_benchmark",
      [](int n, int sensors, std::uint64_t seed) {
        EventBenchmark b = make_event_benchmark(n, sensors, seed);
        return std::make_pair(b.readings, b.labels);
      },
      py::arg("n_readings") = 5000, py::arg("n_sensors") = 8, py::arg("seed") = 7);
  m.def(
      "evaluate_pipelines",
      [](int n, std::vector<int> hidden, std::uint64_t bench_seed, std::uint64_t split_seed) {
        PipelineConfig cfg;
        cfg.hidden = std::move(hidden);
        const PipelineResult r = evaluate_pipelines(make_event_benchmark(n, 8, bench_seed), cfg, split_seed);
        py::dict d;
        d["dbn_error"] = r.dbn_error;
        d["birch_error"] = r.birch_error;
        d["dbn_leaves"] = r.dbn_leaves;
        d["birch_leaves"] = r.birch_leaves;
        return d;
      },
      py::arg("n_readings") = 5000, py::arg("hidden") = std::vector<int>{12, 12, 12},
      py::arg("bench_seed") = 7, py::arg("split_seed") = 1);
}
