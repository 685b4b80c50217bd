#include "edgeml/boost/portable.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "edgeml/common/error.hpp"

namespace edgeml::boost {

using nlohmann::json;

namespace {

[[noreturn]] void unsupported(const std::string& what) { fail(ErrorKind::UnsupportedFormat, what); }

template <class T>
json optional_to_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

json tree_to_json(const RegressionTree& tree) {
  json nodes = json::array();
  for (const auto& n : tree.nodes) {
    nodes.push_back({{"f", optional_to_json(n.feature)},
                     {"t", optional_to_json(n.threshold)},
                     {"l", optional_to_json(n.left)},
                     {"r", optional_to_json(n.right)},
                     {"v", optional_to_json(n.leaf_value)}});
  }
  return {{"nodes", std::move(nodes)}};
}

template <class T>
std::optional<T> optional_field(const json& node, const char* key) {
  auto it = node.find(key);
  if (it == node.end() || it->is_null()) return std::nullopt;
  if constexpr (std::is_same_v<T, int>) {
    if (!it->is_number_integer()) unsupported(std::string("node field '") + key + "' must be an integer or null");
  } else {
    if (!it->is_number()) unsupported(std::string("node field '") + key + "' must be a number or null");
  }
  return it->get<T>();
}

RegressionTree tree_from_json(const json& j, std::size_t feature_count) {
  if (!j.is_object() || !j.contains("nodes") || !j["nodes"].is_array()) unsupported("learner must be {\"nodes\": [...]}");
  RegressionTree tree;
  for (const auto& n : j["nodes"]) {
    if (!n.is_object()) unsupported("tree node must be an object");
    TreeNode node;
    node.feature = optional_field<int>(n, "f");
    node.threshold = optional_field<double>(n, "t");
    node.left = optional_field<int>(n, "l");
    node.right = optional_field<int>(n, "r");
    node.leaf_value = optional_field<double>(n, "v");
    tree.nodes.push_back(node);
  }
  tree.validate(feature_count);
  return tree;
}

json metadata_to_json(const ModelMetadata& m) {
  return {{"name", m.name},
          {"version", m.version},
          {"dataset_id", m.dataset_id},
          {"run_id", m.run_id},
          {"parent_version", optional_to_json(m.parent_version)},
          {"trained_at", m.trained_at}};
}

ModelMetadata metadata_from_json(const json& j) {
  if (!j.is_object()) unsupported("metadata must be an object");
  ModelMetadata m;
  m.name = j.value("name", std::string{});
  m.version = j.value("version", std::int64_t{1});
  m.dataset_id = j.value("dataset_id", std::string{});
  m.run_id = j.value("run_id", std::string{});
  if (auto it = j.find("parent_version"); it != j.end() && !it->is_null()) m.parent_version = it->get<std::int64_t>();
  m.trained_at = j.value("trained_at", std::string{});
  return m;
}

const json& require(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) unsupported(std::string("document lacks '") + key + "'");
  return *it;
}

}  // namespace

std::string_view PortableModel::model_type() const {
  return std::holds_alternative<AdaBoostR2Model>(body) ? "adaboost_r2" : "linear";
}

const std::vector<std::string>& PortableModel::feature_names() const {
  return std::visit([](const auto& m) -> const std::vector<std::string>& { return m.feature_names; }, body);
}

double PortableModel::predict(std::span<const double> row) const {
  return std::visit([&](const auto& m) { return m.predict(row); }, body);
}

std::vector<double> PortableModel::bind(const FeatureMap& features) const {
  const auto& names = feature_names();
  std::vector<double> row;
  row.reserve(names.size());
  for (const auto& name : names) {
    auto it = features.find(name);
    if (it == features.end()) fail(ErrorKind::Schema, "missing feature '" + name + "'");
    row.push_back(it->second);
  }
  return row;
}

double PortableModel::predict(const FeatureMap& features) const { return predict(bind(features)); }

json to_document(const PortableModel& model) {
  json doc;
  doc["format_version"] = model.format_version;
  doc["model_type"] = model.model_type();
  doc["feature_names"] = model.feature_names();
  json meta = metadata_to_json(model.metadata);
  if (const auto* ab = std::get_if<AdaBoostR2Model>(&model.body)) {
    doc["loss"] = to_string(ab->loss);
    json learners = json::array();
    for (const auto& t : ab->learners) learners.push_back(tree_to_json(t));
    doc["learners"] = std::move(learners);
    doc["log_weights"] = ab->log_weights;
    if (ab->fallback) meta["flags"] = {"fallback"};
  } else {
    const auto& lin = std::get<LinearModel>(model.body);
    doc["coefficients"] = lin.coefficients;
    doc["intercept"] = lin.intercept;
    if (lin.degenerate) meta["flags"] = {"degenerate"};
  }
  doc["metadata"] = std::move(meta);
  return doc;
}

std::string serialize(const PortableModel& model) { return to_document(model).dump(); }

PortableModel from_document(const json& doc) {
  if (!doc.is_object()) unsupported("model document must be a JSON object");
  PortableModel out;
  try {
    const json& fv = require(doc, "format_version");
    if (!fv.is_number_integer() || fv.get<int>() != kFormatVersion) unsupported("unsupported format_version " + fv.dump());
    out.format_version = kFormatVersion;
    const json& type = require(doc, "model_type");
    const std::string model_type = type.is_string() ? type.get<std::string>() : type.dump();
    auto names = require(doc, "feature_names").get<std::vector<std::string>>();
    const json meta = doc.contains("metadata") ? doc["metadata"] : json::object();
    out.metadata = metadata_from_json(meta);
    std::vector<std::string> flags = meta.value("flags", std::vector<std::string>{});
    auto flagged = [&](std::string_view f) { return std::find(flags.begin(), flags.end(), f) != flags.end(); };

    if (model_type == "adaboost_r2") {
      AdaBoostR2Model m;
      m.feature_names = std::move(names);
      m.loss = parse_loss(require(doc, "loss").get<std::string>());
      for (const auto& l : require(doc, "learners")) m.learners.push_back(tree_from_json(l, m.feature_names.size()));
      m.log_weights = require(doc, "log_weights").get<std::vector<double>>();
      if (m.learners.empty() || m.learners.size() != m.log_weights.size())
        unsupported("learners and log_weights must be non-empty and of equal length");
      for (double w : m.log_weights)
        if (!(w > 0.0) || !std::isfinite(w)) unsupported("log_weights must be finite and > 0");
      m.fallback = flagged("fallback");
      out.body = std::move(m);
    } else if (model_type == "linear") {
      LinearModel m;
      m.feature_names = std::move(names);
      m.coefficients = require(doc, "coefficients").get<std::vector<double>>();
      m.intercept = require(doc, "intercept").get<double>();
      if (m.coefficients.size() != m.feature_names.size()) unsupported("coefficients and feature_names differ in length");
      m.degenerate = flagged("degenerate");
      out.body = std::move(m);
    } else {
      unsupported("unsupported model_type " + type.dump());
    }
  } catch (const json::exception& e) {
    unsupported(std::string("malformed model document: ") + e.what());
  }
  return out;
}

PortableModel parse(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    unsupported(std::string("model document is not valid JSON: ") + e.what());
  }
  return from_document(doc);
}

}  // namespace edgeml::boost
