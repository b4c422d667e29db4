#include "dct/serialization.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace dct {

using nlohmann::json;

namespace {

constexpr const char* kCausalForestFormat = "dct-causal-forest";
constexpr const char* kRegressionForestFormat = "dct-regression-forest";
constexpr const char* kTreeFormat = "dct-estimated-tree";

void check_header(const json& j, const char* format) {
  if (!j.is_object() || !j.contains("format") || j.at("format") != format) {
    throw SchemaError(std::string("expected a '") + format + "' document");
  }
  const int version = j.at("version").get<int>();
  if (version != kSchemaVersion) {
    throw SchemaError(std::string(format) + ": unsupported schema version " + std::to_string(version) +
                      " (this build reads version " + std::to_string(kSchemaVersion) + ")");
  }
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("invalid JSON: ") + e.what());
  }
}

// Compact node encoding for forests: [feature, threshold, left, right, value, row_count].
json compact_nodes(const RegressionTree& tree) {
  json nodes = json::array();
  for (const auto& n : tree.nodes()) {
    nodes.push_back(json::array({n.feature, n.threshold, n.left, n.right, n.value, n.row_count}));
  }
  return nodes;
}

RegressionTree compact_tree(const json& nodes, std::size_t num_features) {
  std::vector<TreeNode> out;
  for (const auto& a : nodes) {
    TreeNode n;
    n.feature = a.at(0).get<int>();
    n.threshold = a.at(1).get<double>();
    n.left = a.at(2).get<int>();
    n.right = a.at(3).get<int>();
    n.value = a.at(4).get<double>();
    n.row_count = a.at(5).get<std::size_t>();
    out.push_back(n);
  }
  return RegressionTree(num_features, std::move(out));
}

json forest_json(const RegressionForest& f) {
  json trees = json::array();
  for (const auto& t : f.trees) trees.push_back({{"subsample", t.subsample}, {"nodes", compact_nodes(t.tree)}});
  return {
      {"format", kRegressionForestFormat},
      {"version", kSchemaVersion},
      {"target", f.target_name},
      {"params",
       {{"num_trees", f.params.num_trees},
        {"subsample_fraction", f.params.subsample_fraction},
        {"mtry", f.params.mtry},
        {"min_leaf", f.params.min_leaf},
        {"max_depth", f.params.max_depth},
        {"seed", f.params.seed}}},
      {"fingerprint", {{"n", f.fingerprint.n}, {"p", f.fingerprint.p}, {"hash", f.fingerprint.hash}}},
      {"training_mean", f.training_mean},
      {"constant_target", f.constant_target},
      {"trees", trees},
  };
}

RegressionForest forest_from(const json& j) {
  check_header(j, kRegressionForestFormat);
  RegressionForest f;
  f.target_name = j.at("target").get<std::string>();
  const json& p = j.at("params");
  f.params.num_trees = p.at("num_trees").get<std::size_t>();
  f.params.subsample_fraction = p.at("subsample_fraction").get<double>();
  f.params.mtry = p.at("mtry").get<std::size_t>();
  f.params.min_leaf = p.at("min_leaf").get<std::size_t>();
  f.params.max_depth = p.at("max_depth").get<int>();
  f.params.seed = p.at("seed").get<std::uint64_t>();
  const json& fp = j.at("fingerprint");
  f.fingerprint = {fp.at("n").get<std::size_t>(), fp.at("p").get<std::size_t>(), fp.at("hash").get<std::uint64_t>()};
  f.training_mean = j.at("training_mean").get<double>();
  f.constant_target = j.at("constant_target").get<bool>();
  for (const auto& t : j.at("trees")) {
    f.trees.push_back({compact_tree(t.at("nodes"), f.fingerprint.p), t.at("subsample").get<std::vector<std::size_t>>()});
  }
  return f;
}

// Missing fields, wrong types and invalid tree structures all surface as SchemaError.
template <typename F>
auto guarded(F&& read) {
  try {
    return read();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed document: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("malformed document: ") + e.what());
  }
}

}  // namespace

std::string to_json(const RegressionForest& forest) { return forest_json(forest).dump(); }

RegressionForest regression_forest_from_json(const std::string& text) {
  return guarded([&] { return forest_from(parse(text)); });
}

std::string to_json(const CausalForestDocument& doc) {
  const CausalForest& f = doc.forest;
  json trees = json::array();
  for (const auto& t : f.trees) {
    trees.push_back({{"fit_rows", t.fit_rows},
                     {"est_rows", t.est_rows},
                     {"degenerate", t.degenerate},
                     {"nodes", compact_nodes(t.tree)}});
  }
  json j = {
      {"format", kCausalForestFormat},
      {"version", kSchemaVersion},
      {"feature_names", doc.feature_names},
      {"params",
       {{"num_trees", f.params.num_trees},
        {"subsample_fraction", f.params.subsample_fraction},
        {"honest_fraction", f.params.honest_fraction},
        {"mtry", f.params.mtry},
        {"min_leaf_treated", f.params.min_leaf_treated},
        {"min_leaf_control", f.params.min_leaf_control},
        {"max_depth", f.params.max_depth},
        {"seed", f.params.seed},
        {"nuisance_trees", f.params.nuisance_trees}}},
      {"fingerprint", {{"n", f.fingerprint.n}, {"p", f.fingerprint.p}, {"hash", f.fingerprint.hash}}},
      {"degenerate_trees", f.degenerate_trees},
      {"mean_root_value", f.mean_root_value},
      {"trees", trees},
  };
  if (doc.split) j["split"] = {{"seed", doc.split->seed}, {"rows", doc.split->rows}};
  if (f.nuisances) {
    j["nuisances"] = {{"m_hat", forest_json(f.nuisances->m_hat)},
                      {"e_hat", forest_json(f.nuisances->e_hat)},
                      {"mu0_hat", forest_json(f.nuisances->mu0_hat)},
                      {"mu1_hat", forest_json(f.nuisances->mu1_hat)}};
  }
  return j.dump();
}

CausalForestDocument causal_forest_from_json(const std::string& text) {
  return guarded([&] {
    const json j = parse(text);
    check_header(j, kCausalForestFormat);
    CausalForestDocument doc;
    doc.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    CausalForest& f = doc.forest;
    const json& p = j.at("params");
    f.params.num_trees = p.at("num_trees").get<std::size_t>();
    f.params.subsample_fraction = p.at("subsample_fraction").get<double>();
    f.params.honest_fraction = p.at("honest_fraction").get<double>();
    f.params.mtry = p.at("mtry").get<std::size_t>();
    f.params.min_leaf_treated = p.at("min_leaf_treated").get<std::size_t>();
    f.params.min_leaf_control = p.at("min_leaf_control").get<std::size_t>();
    f.params.max_depth = p.at("max_depth").get<int>();
    f.params.seed = p.at("seed").get<std::uint64_t>();
    f.params.nuisance_trees = p.at("nuisance_trees").get<std::size_t>();
    const json& fp = j.at("fingerprint");
    f.fingerprint = {fp.at("n").get<std::size_t>(), fp.at("p").get<std::size_t>(), fp.at("hash").get<std::uint64_t>()};
    f.degenerate_trees = j.at("degenerate_trees").get<std::size_t>();
    f.mean_root_value = j.at("mean_root_value").get<double>();
    for (const auto& t : j.at("trees")) {
      CausalTree ct;
      ct.tree = compact_tree(t.at("nodes"), f.fingerprint.p);
      ct.fit_rows = t.at("fit_rows").get<std::vector<std::size_t>>();
      ct.est_rows = t.at("est_rows").get<std::vector<std::size_t>>();
      ct.degenerate = t.at("degenerate").get<bool>();
      f.trees.push_back(std::move(ct));
    }
    if (j.contains("split")) {
      const json& sp = j.at("split");
      doc.split = SplitRecord{sp.at("seed").get<std::uint64_t>(), sp.at("rows").get<std::size_t>()};
    }
    if (j.contains("nuisances")) {
      const json& nu = j.at("nuisances");
      f.nuisances = std::make_shared<const NuisanceModels>(NuisanceModels{
          forest_from(nu.at("m_hat")), forest_from(nu.at("e_hat")), forest_from(nu.at("mu0_hat")),
          forest_from(nu.at("mu1_hat"))});
    }
    return doc;
  });
}

std::string to_json(const TreeDocument& doc) {
  const auto& nodes = doc.tree.structure.nodes();
  if (doc.tree.estimates.size() != nodes.size()) {
    throw std::invalid_argument("to_json: estimate count does not match node count");
  }
  json out_nodes = json::array();
  for (std::size_t id = 0; id < nodes.size(); ++id) {
    const TreeNode& n = nodes[id];
    const LeafEstimate& e = doc.tree.estimates[id];
    json node = {{"id", id}, {"row_count", n.row_count}, {"value", n.value}};
    if (!n.is_leaf()) {
      node["feature"] = n.feature;
      node["threshold"] = n.threshold;
      node["left"] = n.left;
      node["right"] = n.right;
    }
    node["estimate"] = {{"tau_hat", e.tau_hat},
                        {"se", e.se},
                        {"n", e.n_node},
                        {"n_treated", e.n_treated},
                        {"n_control", e.n_control},
                        {"significant_95", e.significant_95},
                        {"available", e.available},
                        {"se_available", e.se_available}};
    out_nodes.push_back(std::move(node));
  }
  json j = {{"format", kTreeFormat},
            {"version", kSchemaVersion},
            {"feature_names", doc.feature_names},
            {"metadata", doc.metadata},
            {"nodes", out_nodes}};
  return j.dump(2) + "\n";
}

TreeDocument tree_document_from_json(const std::string& text) {
  return guarded([&] {
    const json j = parse(text);
    check_header(j, kTreeFormat);
    TreeDocument doc;
    doc.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    doc.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
    std::vector<TreeNode> nodes;
    std::vector<LeafEstimate> estimates;
    for (const auto& jn : j.at("nodes")) {
      if (jn.at("id").get<std::size_t>() != nodes.size()) throw SchemaError("tree nodes must be listed in id order");
      TreeNode n;
      n.row_count = jn.at("row_count").get<std::size_t>();
      n.value = jn.at("value").get<double>();
      if (jn.contains("feature")) {
        n.feature = jn.at("feature").get<int>();
        n.threshold = jn.at("threshold").get<double>();
        n.left = jn.at("left").get<int>();
        n.right = jn.at("right").get<int>();
      }
      nodes.push_back(n);
      const json& je = jn.at("estimate");
      LeafEstimate e;
      e.tau_hat = je.at("tau_hat").get<double>();
      e.se = je.at("se").get<double>();
      e.n_node = je.at("n").get<std::size_t>();
      e.n_treated = je.at("n_treated").get<std::size_t>();
      e.n_control = je.at("n_control").get<std::size_t>();
      e.significant_95 = je.at("significant_95").get<bool>();
      e.available = je.at("available").get<bool>();
      e.se_available = je.at("se_available").get<bool>();
      estimates.push_back(e);
    }
    RegressionTree structure(doc.feature_names.size(), nodes);
    if (structure.nodes() != nodes) throw SchemaError("tree nodes must be stored in preorder");
    if (structure.size() == 0) throw SchemaError("tree has no nodes");
    doc.tree = {std::move(structure), std::move(estimates)};
    return doc;
  });
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

}  // namespace dct
