#include "vgnn/io.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace vgnn {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) throw SchemaError(path + ": expected array of rows");
  if (j.empty()) return Matrix(0, 0);
  const size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) throw SchemaError(path + ": rows must be non-empty arrays");
  Matrix m(j.size(), cols);
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols)
      throw SchemaError(path + "[" + std::to_string(i) + "]: ragged row");
    for (size_t c = 0; c < cols; ++c) {
      if (!j[i][c].is_number())
        throw SchemaError(path + "[" + std::to_string(i) + "][" +
                          std::to_string(c) + "]: expected number");
      m(i, c) = j[i][c].get<double>();
    }
  }
  return m;
}

std::vector<int> ints_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) throw SchemaError(path + ": expected array of integers");
  std::vector<int> out;
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number_integer())
      throw SchemaError(path + "[" + std::to_string(i) + "]: expected integer");
    out.push_back(j[i].get<int>());
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

json load_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
  return j;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_dataset_json(const Dataset& ds, const std::string& path) {
  json j;
  j["mesh"]["coords"] = matrix_to_json(ds.mesh.coords);
  json els = json::array();
  for (const auto& el : ds.mesh.elements) els.push_back({el[0], el[1], el[2], el[3]});
  j["mesh"]["elements"] = std::move(els);
  j["mesh"]["gamma_u"] = ds.mesh.gamma_u;
  j["mesh"]["gamma_t"] = ds.mesh.gamma_t;
  json sims = json::array();
  for (const auto& sim : ds.sims) {
    json s;
    s["u"] = matrix_to_json(sim.u);
    s["y"] = matrix_to_json(sim.y);
    s["meta"] = sim.meta;
    sims.push_back(std::move(s));
  }
  j["simulations"] = std::move(sims);
  write_text(path, j.dump(1));
}

Dataset read_dataset_json(const std::string& path) {
  json j = load_json(path);
  if (!j.contains("mesh")) throw SchemaError("mesh: missing");
  if (!j.contains("simulations") || !j["simulations"].is_array())
    throw SchemaError("simulations: missing or not an array");
  Dataset ds;
  const json& m = j["mesh"];
  if (!m.contains("coords")) throw SchemaError("mesh.coords: missing");
  ds.mesh.coords = matrix_from_json(m["coords"], "mesh.coords");
  if (!m.contains("elements") || !m["elements"].is_array())
    throw SchemaError("mesh.elements: missing or not an array");
  for (size_t e = 0; e < m["elements"].size(); ++e) {
    std::vector<int> el =
        ints_from_json(m["elements"][e], "mesh.elements[" + std::to_string(e) + "]");
    if (el.size() != 4)
      throw SchemaError("mesh.elements[" + std::to_string(e) + "]: expected 4 nodes");
    ds.mesh.elements.push_back({el[0], el[1], el[2], el[3]});
  }
  ds.mesh.gamma_u = ints_from_json(m.value("gamma_u", json::array()), "mesh.gamma_u");
  ds.mesh.gamma_t = ints_from_json(m.value("gamma_t", json::array()), "mesh.gamma_t");

  const int n = ds.mesh.n_nodes();
  for (size_t s = 0; s < j["simulations"].size(); ++s) {
    const json& js = j["simulations"][s];
    const std::string base = "simulations[" + std::to_string(s) + "]";
    if (!js.contains("u")) throw SchemaError(base + ".u: missing");
    if (!js.contains("y")) throw SchemaError(base + ".y: missing");
    Simulation sim;
    sim.u = matrix_from_json(js["u"], base + ".u");
    sim.y = matrix_from_json(js["y"], base + ".y");
    if (sim.u.rows() != n) throw SchemaError(base + ".u: row count != node count");
    if (sim.y.rows() != n) throw SchemaError(base + ".y: row count != node count");
    if (js.contains("meta")) {
      if (!js["meta"].is_object()) throw SchemaError(base + ".meta: expected object");
      for (auto it = js["meta"].begin(); it != js["meta"].end(); ++it) {
        if (!it.value().is_number())
          throw SchemaError(base + ".meta." + it.key() + ": expected number");
        sim.meta[it.key()] = it.value().get<double>();
      }
    }
    ds.sims.push_back(std::move(sim));
  }
  // validate element connectivity against the node count
  build_graph(ds.mesh);
  return ds;
}

void write_checkpoint_json(const ModelState& state, const std::string& path) {
  json j;
  j["format"] = "vgnn-checkpoint";
  j["version"] = 1;
  const ModelConfig& c = state.cfg;
  j["config"] = {{"latent_dim", c.latent_dim},
                 {"message_passes", c.message_passes},
                 {"node_in", c.node_in},
                 {"edge_in", c.edge_in},
                 {"out_dim", c.out_dim},
                 {"decoder_trunk_layers", c.decoder_trunk_layers},
                 {"prior_mode", c.prior_mode == PriorMode::kMixture ? "mixture" : "paper-literal"},
                 {"share_processor_weights", c.share_processor_weights},
                 {"sigma_floor", c.sigma_floor},
                 {"pi_w", state.prior.pi_w}};
  json params = json::object();
  const_cast<ModelState&>(state).for_each_param(
      [&](const std::string& name, Matrix& m) {
        params[name] = {{"shape", {m.rows(), m.cols()}},
                        {"values", matrix_to_json(m)}};
      });
  j["params"] = std::move(params);
  write_text(path, j.dump(1));
}

ModelState read_checkpoint_json(const std::string& path) {
  json j = load_json(path);
  if (j.value("format", "") != "vgnn-checkpoint")
    throw SchemaError("format: not a vgnn checkpoint");
  if (!j.contains("config")) throw SchemaError("config: missing");
  const json& c = j["config"];
  ModelConfig cfg;
  try {
    cfg.latent_dim = c.at("latent_dim").get<int>();
    cfg.message_passes = c.at("message_passes").get<int>();
    cfg.node_in = c.at("node_in").get<int>();
    cfg.edge_in = c.at("edge_in").get<int>();
    cfg.out_dim = c.at("out_dim").get<int>();
    cfg.decoder_trunk_layers = c.at("decoder_trunk_layers").get<int>();
    cfg.prior_mode = c.at("prior_mode").get<std::string>() == "paper-literal"
                         ? PriorMode::kPaperLiteral
                         : PriorMode::kMixture;
    cfg.share_processor_weights = c.at("share_processor_weights").get<bool>();
    cfg.sigma_floor = c.at("sigma_floor").get<double>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("config: ") + e.what());
  }
  Rng rng(0);
  ModelState state = make_model(cfg, rng);
  state.prior.pi_w = c.value("pi_w", 0.5);
  if (!j.contains("params") || !j["params"].is_object())
    throw SchemaError("params: missing or not an object");
  const json& params = j["params"];
  state.for_each_param([&](const std::string& name, Matrix& m) {
    if (!params.contains(name)) throw SchemaError("params." + name + ": missing");
    Matrix v = matrix_from_json(params[name]["values"], "params." + name + ".values");
    if (v.rows() != m.rows() || v.cols() != m.cols())
      throw SchemaError("params." + name + ": shape " + shape_str(v) +
                        " does not match model " + shape_str(m));
    m = std::move(v);
  });
  return state;
}

void write_loss_csv(const std::vector<EpochRecord>& history, const std::string& path) {
  std::ostringstream out;
  out << "epoch,total,nll,kl,lr\n";
  for (const auto& r : history)
    out << r.epoch << "," << fmt_double(r.total) << "," << fmt_double(r.nll) << ","
        << fmt_double(r.kl) << "," << fmt_double(r.lr) << "\n";
  write_text(path, out.str());
}

void write_prediction_csv(const Mesh& mesh, const Matrix& truth,
                          const PredictiveField& field, const std::string& path) {
  const int d = mesh.dim();
  const int t = static_cast<int>(field.mean.cols());
  std::ostringstream out;
  out << "id";
  for (int k = 0; k < d; ++k) out << "," << (k == 0 ? "x" : k == 1 ? "y" : "z");
  for (int k = 0; k < t; ++k) out << ",truth" << k;
  for (int k = 0; k < t; ++k) out << ",mean" << k;
  for (int k = 0; k < t; ++k) out << ",s_a" << k;
  for (int k = 0; k < t; ++k) out << ",s_e" << k;
  for (int k = 0; k < t; ++k) out << ",lower" << k;
  for (int k = 0; k < t; ++k) out << ",upper" << k;
  out << "\n";
  for (int i = 0; i < mesh.n_nodes(); ++i) {
    out << i;
    for (int k = 0; k < d; ++k) out << "," << fmt_double(mesh.coords(i, k));
    for (int k = 0; k < t; ++k) out << "," << fmt_double(truth(i, k));
    for (int k = 0; k < t; ++k) out << "," << fmt_double(field.mean(i, k));
    for (int k = 0; k < t; ++k) out << "," << fmt_double(field.s_a(i, k));
    for (int k = 0; k < t; ++k) out << "," << fmt_double(field.s_e(i, k));
    for (int k = 0; k < t; ++k) out << "," << fmt_double(field.lower(i, k));
    for (int k = 0; k < t; ++k) out << "," << fmt_double(field.upper(i, k));
    out << "\n";
  }
  write_text(path, out.str());
}

void write_metric_json(const MetricReport& report, const std::string& path) {
  json j;
  j["rrmse_per_sim"] = report.rrmse_per_sim;
  j["rrmse_mean"] = report.rrmse_mean;
  j["rrmse_median"] = report.rrmse_median;
  j["coverage_z2"] = report.coverage_z2;
  write_text(path, j.dump(1));
}

}  // namespace vgnn
