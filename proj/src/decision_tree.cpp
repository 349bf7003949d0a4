// Copyright 2026 The shgw Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "shgw/decision_tree.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <map>
#include <numeric>

#include "json.hpp"

namespace shgw {

namespace {

using Counts = std::vector<std::size_t>;

double gini(const Counts& counts, std::size_t n) {
  if (n == 0) return 0;
  double sum_sq = 0;
  for (auto c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(n);
    sum_sq += p * p;
  }
  return 1.0 - sum_sq;
}

struct Split {
  int feature = -1;
  double threshold = 0;
  double impurity = 0;
};

class Builder {
 public:
  Builder(std::vector<std::array<double, SessionFeatures::kCount>> x, std::vector<int> y,
          std::size_t classes, const TreeParams& params)
      : x_(std::move(x)), y_(std::move(y)), classes_(classes), params_(params) {}

  DecisionTreeModel build(std::vector<std::string> labels) {
    std::vector<std::size_t> all(y_.size());
    std::iota(all.begin(), all.end(), 0);
    DecisionTreeModel model;
    model.class_labels = std::move(labels);
    grow(model, all, 0);
    return model;
  }

 private:
  Counts count(const std::vector<std::size_t>& idx) const {
    Counts c(classes_, 0);
    for (auto i : idx) ++c[static_cast<std::size_t>(y_[i])];
    return c;
  }

  std::optional<Split> best_split(const std::vector<std::size_t>& idx, double parent) const {
    const std::size_t n = idx.size();
    std::optional<Split> best;
    std::vector<std::size_t> order = idx;
    for (std::size_t f = 0; f < SessionFeatures::kCount; ++f) {
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x_[a][f] < x_[b][f] || (x_[a][f] == x_[b][f] && a < b);
      });
      Counts left(classes_, 0);
      Counts right = count(idx);
      for (std::size_t k = 0; k + 1 < n; ++k) {
        const std::size_t i = order[k];
        ++left[static_cast<std::size_t>(y_[i])];
        --right[static_cast<std::size_t>(y_[i])];
        const double lo = x_[i][f];
        const double hi = x_[order[k + 1]][f];
        if (!(lo < hi)) continue;
        const std::size_t nl = k + 1, nr = n - nl;
        if (nl < params_.min_leaf || nr < params_.min_leaf) continue;
        const double threshold = lo + (hi - lo) / 2;
        if (!(threshold < hi)) continue;
        const double impurity = (static_cast<double>(nl) * gini(left, nl) +
                                 static_cast<double>(nr) * gini(right, nr)) /
                                static_cast<double>(n);
        if (!best || impurity < best->impurity) best = Split{static_cast<int>(f), threshold, impurity};
      }
    }
    if (best && best->impurity < parent - 1e-12) return best;
    return std::nullopt;
  }

  int grow(DecisionTreeModel& model, const std::vector<std::size_t>& idx, std::size_t depth) {
    const int id = static_cast<int>(model.nodes.size());
    model.nodes.emplace_back();
    const Counts c = count(idx);
    const auto majority = static_cast<std::size_t>(
        std::distance(c.begin(), std::max_element(c.begin(), c.end())));
    {
      TreeNode& leaf = model.nodes[static_cast<std::size_t>(id)];
      leaf.label = static_cast<int>(majority);
      leaf.confidence = static_cast<double>(c[majority]) / static_cast<double>(idx.size());
    }
    const double parent = gini(c, idx.size());
    if (depth >= params_.max_depth || parent == 0 || idx.size() < 2 * params_.min_leaf) return id;
    const auto split = best_split(idx, parent);
    if (!split) return id;

    std::vector<std::size_t> left, right;
    for (auto i : idx) {
      (x_[i][static_cast<std::size_t>(split->feature)] <= split->threshold ? left : right).push_back(i);
    }
    const int l = grow(model, left, depth + 1);
    const int r = grow(model, right, depth + 1);
    TreeNode& node = model.nodes[static_cast<std::size_t>(id)];
    node.feature = split->feature;
    node.threshold = split->threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  std::vector<std::array<double, SessionFeatures::kCount>> x_;
  std::vector<int> y_;
  std::size_t classes_;
  TreeParams params_;
};

}  // namespace

DecisionTreeModel train_encrypted_model(std::span<const TrainingSample> corpus,
                                        const TreeParams& params) {
  std::map<std::string, std::size_t> per_class;
  for (const auto& s : corpus) ++per_class[s.label];
  if (per_class.size() < 2) {
    throw TreeError(TreeError::Code::InsufficientData, "training needs at least two classes");
  }
  for (const auto& [label, n] : per_class) {
    if (n < params.min_per_class) {
      throw TreeError(TreeError::Code::InsufficientData,
                      "class '" + label + "' has " + std::to_string(n) + " samples");
    }
  }

  std::vector<std::string> labels;
  std::map<std::string, int> label_index;
  for (const auto& [label, n] : per_class) {
    label_index[label] = static_cast<int>(labels.size());
    labels.push_back(label);
  }
  std::vector<std::array<double, SessionFeatures::kCount>> x;
  std::vector<int> y;
  x.reserve(corpus.size());
  y.reserve(corpus.size());
  for (const auto& s : corpus) {
    x.push_back(s.features.as_array());
    y.push_back(label_index[s.label]);
  }
  // Identical feature vectors admit no split; grow() then yields one leaf.
  Builder builder(std::move(x), std::move(y), labels.size(), params);
  return builder.build(std::move(labels));
}

Prediction classify_encrypted(const SessionFeatures& f, const DecisionTreeModel& model) {
  const auto v = f.as_array();
  std::size_t i = 0;
  for (std::size_t steps = 0; steps <= model.nodes.size(); ++steps) {
    if (i >= model.nodes.size()) break;
    const TreeNode& node = model.nodes[i];
    if (node.is_leaf()) {
      if (node.label < 0 || static_cast<std::size_t>(node.label) >= model.class_labels.size()) break;
      return {model.class_labels[static_cast<std::size_t>(node.label)], node.confidence};
    }
    if (static_cast<std::size_t>(node.feature) >= SessionFeatures::kCount) break;
    const int next = v[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
    if (next < 0) break;
    i = static_cast<std::size_t>(next);
  }
  throw TreeError(TreeError::Code::InvalidModel, "malformed tree reached during traversal");
}

void DecisionTreeModel::validate() const {
  auto fail = [](const std::string& why) { throw TreeError(TreeError::Code::InvalidModel, why); };
  if (nodes.empty()) fail("model has no nodes");
  if (class_labels.empty()) fail("model has no class labels");
  std::vector<int> parents(nodes.size(), 0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const TreeNode& n = nodes[i];
    if (n.is_leaf()) {
      if (n.label < 0 || static_cast<std::size_t>(n.label) >= class_labels.size())
        fail("leaf " + std::to_string(i) + " has invalid label");
      continue;
    }
    if (static_cast<std::size_t>(n.feature) >= SessionFeatures::kCount)
      fail("node " + std::to_string(i) + " has invalid feature index");
    for (int child : {n.left, n.right}) {
      // Children always follow their parent, which rules out cycles.
      if (child <= static_cast<int>(i) || static_cast<std::size_t>(child) >= nodes.size())
        fail("node " + std::to_string(i) + " has invalid child");
      ++parents[static_cast<std::size_t>(child)];
    }
  }
  if (parents[0] != 0) fail("root has a parent");
  for (std::size_t i = 1; i < nodes.size(); ++i)
    if (parents[i] != 1) fail("node " + std::to_string(i) + " is unreachable or shared");
}

std::size_t DecisionTreeModel::depth() const {
  std::function<std::size_t(std::size_t)> walk = [&](std::size_t i) -> std::size_t {
    const TreeNode& n = nodes.at(i);
    if (n.is_leaf()) return 0;
    return 1 + std::max(walk(static_cast<std::size_t>(n.left)), walk(static_cast<std::size_t>(n.right)));
  };
  return nodes.empty() ? 0 : walk(0);
}

std::string DecisionTreeModel::to_json() const {
  nlohmann::ordered_json j;
  j["class_labels"] = class_labels;
  j["feature_names"] = SessionFeatures::names();
  auto& arr = j["nodes"] = nlohmann::ordered_json::array();
  for (const auto& n : nodes) {
    nlohmann::ordered_json node;
    if (n.is_leaf()) {
      node["label"] = n.label;
      node["confidence"] = n.confidence;
    } else {
      node["feature"] = n.feature;
      node["threshold"] = n.threshold;
      node["left"] = n.left;
      node["right"] = n.right;
      node["label"] = n.label;
      node["confidence"] = n.confidence;
    }
    arr.push_back(std::move(node));
  }
  return j.dump(2);
}

DecisionTreeModel DecisionTreeModel::from_json(std::string_view text) {
  DecisionTreeModel m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.class_labels = j.at("class_labels").get<std::vector<std::string>>();
    for (const auto& node : j.at("nodes")) {
      TreeNode n;
      n.label = node.value("label", -1);
      n.confidence = node.value("confidence", 0.0);
      if (node.contains("feature")) {
        n.feature = node.at("feature").get<int>();
        n.threshold = node.at("threshold").get<double>();
        n.left = node.at("left").get<int>();
        n.right = node.at("right").get<int>();
      }
      m.nodes.push_back(n);
    }
  } catch (const nlohmann::json::exception& e) {
    throw TreeError(TreeError::Code::InvalidModel, std::string("bad model file: ") + e.what());
  }
  m.validate();
  return m;
}

}  // namespace shgw
