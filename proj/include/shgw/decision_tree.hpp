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

#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "shgw/flow.hpp"

namespace shgw {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0;
  int left = -1;
  int right = -1;
  int label = -1;
  double confidence = 0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

/// Binary tree over SessionFeatures. Node 0 is the root; `value <= threshold`
/// descends left.
struct DecisionTreeModel {
  std::vector<TreeNode> nodes;
  std::vector<std::string> class_labels;

  /// Throws TreeError when the node graph is not a valid tree.
  void validate() const;
  std::size_t depth() const;

  std::string to_json() const;
  static DecisionTreeModel from_json(std::string_view text);

  bool operator==(const DecisionTreeModel&) const = default;
};

class TreeError : public std::runtime_error {
 public:
  enum class Code { InsufficientData, InvalidModel };
  TreeError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

struct TrainingSample {
  SessionFeatures features;
  std::string label;
};

struct TreeParams {
  std::size_t max_depth = 6;
  std::size_t min_leaf = 5;
  std::size_t min_per_class = 20;
};

/// Greedy CART on Gini impurity. Candidate thresholds are midpoints between
/// sorted distinct feature values; equal-impurity splits resolve to the lowest
/// feature index, then the smallest threshold.
DecisionTreeModel train_encrypted_model(std::span<const TrainingSample> corpus,
                                        const TreeParams& params = {});

struct Prediction {
  std::string label;
  double confidence = 0;
};

Prediction classify_encrypted(const SessionFeatures& f, const DecisionTreeModel& model);

}  // namespace shgw
